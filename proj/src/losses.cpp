#include "paseg/losses.hpp"

#include <algorithm>
#include <random>

namespace paseg {

void ContrastiveConfig::validate() const {
    if (!(tau > 0.0)) throw InvalidParamError("tau must be positive");
    if (n_anchors < 1 || n_pos < 1 || n_neg < 1)
        throw InvalidParamError("contrastive sample counts must be >= 1");
    if (scale != 1 && scale != 3) throw InvalidParamError("contrastive scale must be 1 or 3");
}

std::vector<double> soft_bounding_box(const std::vector<double>& field, int width, int height) {
    if (field.size() != static_cast<size_t>(width) * height)
        throw DimensionMismatchError("field size does not match width*height");
    std::vector<double> row_max(static_cast<size_t>(height), 0.0);
    std::vector<double> col_max(static_cast<size_t>(width), 0.0);
    for (int y = 0; y < height; ++y) {
        double best = field[size_t(y) * width];
        for (int x = 1; x < width; ++x) best = std::max(best, field[size_t(y) * width + x]);
        row_max[size_t(y)] = best;
    }
    for (int x = 0; x < width; ++x) {
        double best = field[size_t(x)];
        for (int y = 1; y < height; ++y) best = std::max(best, field[size_t(y) * width + x]);
        col_max[size_t(x)] = best;
    }
    std::vector<double> box(field.size());
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            box[size_t(y) * width + x] = row_max[size_t(y)] * col_max[size_t(x)];
    return box;
}

namespace {

void check_batch(const Tape& tape, int seg_or_proj, size_t batch,
                 const std::vector<BinaryMask>& masks) {
    const Tensor& t = tape.val(seg_or_proj);
    if (t.ndim() != 4) throw ShapeError("loss expects a (B,C,H,W) tensor");
    if (static_cast<size_t>(t.dim(0)) != batch)
        throw DimensionMismatchError("batch size does not match label count");
    for (const BinaryMask& m : masks)
        if (m.height() != t.dim(2) || m.width() != t.dim(3))
            throw DimensionMismatchError("label dimensions do not match network output");
}

}  // namespace

int alignment_loss(Tape& tape, int seg_prob, const std::vector<BinaryMask>& box_labels,
                   double eps) {
    check_batch(tape, seg_prob, box_labels.size(), box_labels);
    std::vector<int> per_image;
    for (size_t b = 0; b < box_labels.size(); ++b) {
        const int plane = tape.slice_plane(seg_prob, int(b), 0);
        const int box = tape.soft_box(plane);
        per_image.push_back(tape.soft_dice_loss(box, box_labels[b], eps));
    }
    return tape.mean_scalars(per_image);
}

int box_dice_loss(Tape& tape, int seg_prob, const std::vector<BinaryMask>& box_labels,
                  double eps) {
    check_batch(tape, seg_prob, box_labels.size(), box_labels);
    std::vector<int> per_image;
    for (size_t b = 0; b < box_labels.size(); ++b) {
        const int plane = tape.slice_plane(seg_prob, int(b), 0);
        per_image.push_back(tape.soft_dice_loss(plane, box_labels[b], eps));
    }
    return tape.mean_scalars(per_image);
}

namespace {

// Eligible sampling locations in scan order (image, row, column). For
// scale 3 the full 3x3 window must lie inside the region.
std::vector<SampleLoc> eligible_locations(const std::vector<MultiLevelLabels>& labels,
                                          bool foreground, int scale) {
    std::vector<SampleLoc> out;
    for (size_t b = 0; b < labels.size(); ++b) {
        const BinaryMask& region = foreground ? labels[b].fg_mask : labels[b].bg_mask;
        const int w = region.width(), h = region.height();
        if (scale == 1) {
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    if (region.at(x, y)) out.push_back({int(b), x, y});
        } else {
            for (int y = 1; y < h - 1; ++y)
                for (int x = 1; x < w - 1; ++x) {
                    bool pure = true;
                    for (int j = -1; j <= 1 && pure; ++j)
                        for (int i = -1; i <= 1 && pure; ++i) pure = region.at(x + i, y + j);
                    if (pure) out.push_back({int(b), x, y});
                }
        }
    }
    return out;
}

int embed(Tape& tape, int proj, const SampleLoc& loc, int scale) {
    if (scale == 1) return tape.gather_vec(proj, loc.image, loc.x, loc.y);
    return tape.l2norm_vec(tape.gather_patch_mean(proj, loc.image, loc.x, loc.y));
}

}  // namespace

SampleSet sample_embeddings(Tape& tape, int proj, const std::vector<MultiLevelLabels>& labels,
                            const ContrastiveConfig& config, uint64_t seed) {
    config.validate();
    if (labels.empty()) throw EmptyInputError("sample_embeddings needs a nonempty batch");
    const Tensor& pt = tape.val(proj);
    if (pt.ndim() != 4 || static_cast<size_t>(pt.dim(0)) != labels.size())
        throw DimensionMismatchError("projection batch does not match label count");

    std::vector<SampleLoc> fg = eligible_locations(labels, true, config.scale);
    std::vector<SampleLoc> bg = eligible_locations(labels, false, config.scale);
    if (fg.empty()) throw InsufficientSamplesError("foreground");
    if (bg.empty()) throw InsufficientSamplesError("background");

    std::mt19937_64 rng(seed);
    std::shuffle(fg.begin(), fg.end(), rng);
    std::shuffle(bg.begin(), bg.end(), rng);

    // Anchors and positives are disjoint prefixes of the foreground pool;
    // when the pool is short, split it proportionally to the requested
    // counts while keeping at least one of each.
    const int64_t fg_n = int64_t(fg.size());
    int64_t na, np;
    if (fg_n >= int64_t(config.n_anchors) + config.n_pos) {
        na = config.n_anchors;
        np = config.n_pos;
    } else if (fg_n >= 2) {
        na = std::max<int64_t>(
            1, fg_n * config.n_anchors / int64_t(config.n_anchors + config.n_pos));
        np = fg_n - na;
    } else {
        throw InsufficientSamplesError("positive");
    }
    const int64_t nn = std::min<int64_t>(config.n_neg, int64_t(bg.size()));

    SampleSet set;
    set.scale = config.scale;
    for (int64_t i = 0; i < na; ++i) {
        set.anchor_locs.push_back(fg[size_t(i)]);
        set.anchors.push_back(embed(tape, proj, fg[size_t(i)], config.scale));
    }
    for (int64_t i = 0; i < np; ++i) {
        set.positive_locs.push_back(fg[size_t(na + i)]);
        set.positives.push_back(embed(tape, proj, fg[size_t(na + i)], config.scale));
    }
    for (int64_t i = 0; i < nn; ++i) {
        set.negative_locs.push_back(bg[size_t(i)]);
        set.negatives.push_back(embed(tape, proj, bg[size_t(i)], config.scale));
    }
    return set;
}

int contrastive_loss(Tape& tape, const SampleSet& samples, double tau) {
    return tape.infonce(samples.anchors, samples.positives, samples.negatives, tau);
}

TotalLossResult total_loss(Tape& tape, int seg_prob, int proj,
                           const std::vector<MultiLevelLabels>& labels, const LossConfig& config,
                           uint64_t sample_seed) {
    std::vector<BinaryMask> boxes;
    boxes.reserve(labels.size());
    for (const MultiLevelLabels& l : labels) boxes.push_back(l.box_mask);

    TotalLossResult result;
    const int la = alignment_loss(tape, seg_prob, boxes, config.dice_eps);
    result.la = tape.val(la).data[0];
    int total = la;

    try {
        const SampleSet s1 =
            sample_embeddings(tape, proj, labels, config.pixel, sample_seed ^ 0x9e3779b97f4a7c15ull);
        const int lc1 = contrastive_loss(tape, s1, config.pixel.tau);
        result.lc1 = tape.val(lc1).data[0];
        result.n1_anchors = int(s1.anchors.size());
        result.n1_pos = int(s1.positives.size());
        result.n1_neg = int(s1.negatives.size());
        total = tape.add(total, lc1);
    } catch (const InsufficientSamplesError&) {
        result.skip_lc1 = true;
    }

    try {
        const SampleSet s3 =
            sample_embeddings(tape, proj, labels, config.patch, sample_seed ^ 0xc2b2ae3d27d4eb4full);
        const int lc3 = contrastive_loss(tape, s3, config.patch.tau);
        result.lc3 = tape.val(lc3).data[0];
        result.n3_anchors = int(s3.anchors.size());
        result.n3_pos = int(s3.positives.size());
        result.n3_neg = int(s3.negatives.size());
        total = tape.add(total, lc3);
    } catch (const InsufficientSamplesError&) {
        result.skip_lc3 = true;
    }

    result.loss_id = total;
    return result;
}

}  // namespace paseg
