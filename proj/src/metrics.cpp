#include "paseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace paseg {

namespace {

void require_same_dims(const BinaryMask& a, const BinaryMask& b) {
    if (a.width() != b.width() || a.height() != b.height())
        throw DimensionMismatchError("mask dimensions differ");
}

}  // namespace

double dice(const BinaryMask& pred, const BinaryMask& ref) {
    require_same_dims(pred, ref);
    int64_t inter = 0, np = 0, nr = 0;
    for (int y = 0; y < pred.height(); ++y) {
        for (int x = 0; x < pred.width(); ++x) {
            const bool p = pred.at(x, y), r = ref.at(x, y);
            inter += (p && r);
            np += p;
            nr += r;
        }
    }
    if (np + nr == 0) return 1.0;
    return 2.0 * double(inter) / double(np + nr);
}

double iou(const BinaryMask& pred, const BinaryMask& ref) {
    require_same_dims(pred, ref);
    int64_t inter = 0, uni = 0;
    for (int y = 0; y < pred.height(); ++y) {
        for (int x = 0; x < pred.width(); ++x) {
            const bool p = pred.at(x, y), r = ref.at(x, y);
            inter += (p && r);
            uni += (p || r);
        }
    }
    if (uni == 0) return 1.0;
    return double(inter) / double(uni);
}

double mean_iou(const std::vector<double>& per_image_iou) {
    if (per_image_iou.empty()) throw EmptyInputError("mean_iou over an empty corpus");
    double s = 0.0;
    for (double v : per_image_iou) s += v;
    return s / double(per_image_iou.size());
}

std::vector<GridIndex> boundary_pixels(const BinaryMask& mask) {
    std::vector<GridIndex> out;
    const int w = mask.width(), h = mask.height();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask.at(x, y)) continue;
            const bool edge = (x == 0 || y == 0 || x == w - 1 || y == h - 1);
            if (edge || !mask.at(x - 1, y) || !mask.at(x + 1, y) || !mask.at(x, y - 1) ||
                !mask.at(x, y + 1)) {
                out.push_back({x, y});
            }
        }
    }
    return out;
}

namespace {

double directed_max_min(const std::vector<GridIndex>& from, const std::vector<GridIndex>& to) {
    double worst = 0.0;
    for (const GridIndex& p : from) {
        double best = std::numeric_limits<double>::max();
        for (const GridIndex& q : to) {
            const double dx = double(p.x - q.x), dy = double(p.y - q.y);
            best = std::min(best, dx * dx + dy * dy);
            if (best == 0.0) break;
        }
        worst = std::max(worst, best);
    }
    return std::sqrt(worst);
}

}  // namespace

double hausdorff(const BinaryMask& pred, const BinaryMask& ref, double spacing) {
    require_same_dims(pred, ref);
    const auto bp = boundary_pixels(pred);
    const auto br = boundary_pixels(ref);
    if (bp.empty() || br.empty()) {
        const double diag =
            std::sqrt(double(pred.width()) * pred.width() + double(pred.height()) * pred.height());
        return diag * spacing;
    }
    return std::max(directed_max_min(bp, br), directed_max_min(br, bp)) * spacing;
}

EvalReport make_eval_report(std::vector<EvalRow> rows) {
    EvalReport rep;
    rep.rows = std::move(rows);
    rep.count = int(rep.rows.size());
    for (const EvalRow& r : rep.rows) {
        rep.mean_iou += r.iou;
        rep.mean_dsc += r.dsc;
        rep.mean_hd += r.hd;
    }
    if (rep.count > 0) {
        rep.mean_iou /= rep.count;
        rep.mean_dsc /= rep.count;
        rep.mean_hd /= rep.count;
    }
    return rep;
}

void write_eval_csv(const std::string& path, const EvalReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "id,miou,dsc,hd\n";
    char buf[256];
    for (const EvalRow& r : report.rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f\n", r.id.c_str(), r.iou, r.dsc, r.hd);
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), "mean,%.6f,%.6f,%.6f\n", report.mean_iou, report.mean_dsc,
                  report.mean_hd);
    out << buf;
}

}  // namespace paseg
