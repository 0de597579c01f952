#pragma once

#include <string>
#include <vector>

#include "paseg/imagecore.hpp"

namespace paseg {

// 2|P & R| / (|P| + |R|); 1 when both masks are empty.
double dice(const BinaryMask& pred, const BinaryMask& ref);

// |P & R| / |P | R|; 1 when both masks are empty.
double iou(const BinaryMask& pred, const BinaryMask& ref);

// Unweighted mean of per-image foreground IoU.
double mean_iou(const std::vector<double>& per_image_iou);

struct GridIndex {
    int x, y;
};

// Boundary pixels: set pixels with at least one unset 4-neighbor or lying
// on the image edge.
std::vector<GridIndex> boundary_pixels(const BinaryMask& mask);

// Symmetric Hausdorff distance between boundary pixel sets, scaled by
// spacing (defaults to pixels). If either mask is empty the image diagonal
// is returned as a penalty.
double hausdorff(const BinaryMask& pred, const BinaryMask& ref, double spacing = 1.0);

struct EvalRow {
    std::string id;
    double iou = 0.0;
    double dsc = 0.0;
    double hd = 0.0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    double mean_iou = 0.0;
    double mean_dsc = 0.0;
    double mean_hd = 0.0;
    int count = 0;
};

EvalReport make_eval_report(std::vector<EvalRow> rows);

// One row per image plus a trailing summary row.
void write_eval_csv(const std::string& path, const EvalReport& report);

}  // namespace paseg
