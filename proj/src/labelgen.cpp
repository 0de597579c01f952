#include "paseg/labelgen.hpp"

namespace paseg {

MultiLevelLabels generate_labels(const FourPointAnnotation& annotation, int width, int height) {
    if (!annotation.in_bounds(width, height))
        throw OutOfBoundsError("annotation outside label dimensions");
    BinaryMask box = box_to_mask(min_bounding_box(annotation), width, height);
    BinaryMask fg = rasterize_polygon(annotation, width, height);
    BinaryMask bg = mask_not(box);
    BinaryMask mixed = mask_minus(box, fg);
    return MultiLevelLabels{std::move(box), std::move(fg), std::move(bg), std::move(mixed)};
}

std::optional<double> mask_precision(const BinaryMask& label, const BinaryMask& reference) {
    if (label.width() != reference.width() || label.height() != reference.height())
        throw DimensionMismatchError("label/reference dimensions differ");
    int64_t total = 0, hits = 0;
    for (int y = 0; y < label.height(); ++y) {
        for (int x = 0; x < label.width(); ++x) {
            if (!label.at(x, y)) continue;
            ++total;
            if (reference.at(x, y)) ++hits;
        }
    }
    if (total == 0) return std::nullopt;
    return double(hits) / double(total);
}

PrecisionReport label_precision(const MultiLevelLabels& labels, const BinaryMask& reference) {
    PrecisionReport report;
    report.fg_precision = mask_precision(labels.fg_mask, reference);
    report.bg_precision = mask_precision(labels.bg_mask, mask_not(reference));
    return report;
}

void LabelAuditAccumulator::add(const MultiLevelLabels& labels, const BinaryMask& reference) {
    const BinaryMask not_ref = mask_not(reference);
    if (auto p = mask_precision(labels.fg_mask, reference)) {
        pure_fg_sum_ += *p;
        ++pure_fg_n_;
    }
    if (auto p = mask_precision(labels.bg_mask, not_ref)) {
        pure_bg_sum_ += *p;
        ++pure_bg_n_;
    }
    if (auto p = mask_precision(labels.box_mask, reference)) {
        box_fg_sum_ += *p;
        ++box_fg_n_;
    }
    if (auto p = mask_precision(labels.bg_mask, not_ref)) {
        box_bg_sum_ += *p;
        ++box_bg_n_;
    }
    ++images_;
}

LabelAudit LabelAuditAccumulator::finish() const {
    LabelAudit a;
    a.images = images_;
    if (pure_fg_n_ > 0) a.pure_fg_mean = pure_fg_sum_ / pure_fg_n_;
    if (pure_bg_n_ > 0) a.pure_bg_mean = pure_bg_sum_ / pure_bg_n_;
    if (box_fg_n_ > 0) a.box_fg_mean = box_fg_sum_ / box_fg_n_;
    if (box_bg_n_ > 0) a.box_bg_mean = box_bg_sum_ / box_bg_n_;
    return a;
}

}  // namespace paseg
