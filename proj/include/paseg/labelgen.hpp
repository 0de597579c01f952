#pragma once

#include <optional>
#include <vector>

#include "paseg/imagecore.hpp"

namespace paseg {

// The four masks derived from one annotation:
//   box_mask   - filled minimum bounding rectangle of the points
//   fg_mask    - filled quadrilateral (pure foreground)
//   bg_mask    - complement of the box (pure background)
//   mixed_mask - box minus quadrilateral (fg/bg mixture, unlabeled)
struct MultiLevelLabels {
    BinaryMask box_mask;
    BinaryMask fg_mask;
    BinaryMask bg_mask;
    BinaryMask mixed_mask;
};

// Per-image pixel precision of the pure labels against a reference mask.
// A field is absent when the corresponding label region is empty.
struct PrecisionReport {
    std::optional<double> fg_precision;
    std::optional<double> bg_precision;
};

MultiLevelLabels generate_labels(const FourPointAnnotation& annotation, int width, int height);

// |label AND reference| / |label|; absent when the label has no set pixel.
std::optional<double> mask_precision(const BinaryMask& label, const BinaryMask& reference);

PrecisionReport label_precision(const MultiLevelLabels& labels, const BinaryMask& reference);

// Corpus audit over (labels, reference) pairs: unweighted mean of per-image
// precisions for the pure labels and for the box treated as a foreground
// label. Images whose label region is empty are skipped for that entry.
struct LabelAudit {
    double pure_fg_mean = 0.0;
    double pure_bg_mean = 0.0;
    double box_fg_mean = 0.0;
    double box_bg_mean = 0.0;
    int images = 0;
};

class LabelAuditAccumulator {
public:
    void add(const MultiLevelLabels& labels, const BinaryMask& reference);
    LabelAudit finish() const;

private:
    double pure_fg_sum_ = 0.0, pure_bg_sum_ = 0.0, box_fg_sum_ = 0.0, box_bg_sum_ = 0.0;
    int pure_fg_n_ = 0, pure_bg_n_ = 0, box_fg_n_ = 0, box_bg_n_ = 0;
    int images_ = 0;
};

}  // namespace paseg
