#pragma once

#include <cstdint>
#include <vector>

#include "paseg/labelgen.hpp"
#include "paseg/tape.hpp"

namespace paseg {

// Sampling parameters of one contrastive term. scale 1 draws pixel
// embeddings, scale 3 draws re-normalized 3x3 patch means; counts are upper
// bounds, clamped to the eligible locations found in the batch.
struct ContrastiveConfig {
    double tau = 0.1;
    int n_anchors = 64;
    int n_pos = 64;
    int n_neg = 256;
    int scale = 1;

    void validate() const;
    static ContrastiveConfig pixel_defaults() { return ContrastiveConfig{0.1, 64, 64, 256, 1}; }
    static ContrastiveConfig patch_defaults() { return ContrastiveConfig{0.1, 16, 16, 64, 3}; }
};

struct SampleLoc {
    int image, x, y;
};
inline bool operator==(const SampleLoc& a, const SampleLoc& b) {
    return a.image == b.image && a.x == b.x && a.y == b.y;
}

// Anchor/positive embeddings come from pure-foreground locations, negatives
// from pure background, drawn across the whole batch. Ids reference tape
// nodes of shape (D).
struct SampleSet {
    std::vector<int> anchors, positives, negatives;
    std::vector<SampleLoc> anchor_locs, positive_locs, negative_locs;
    int scale = 1;
};

// Plain (non-tape) profile outer product: B(x,y) = max_x'(p(x',y)) * max_y'(p(x,y')).
std::vector<double> soft_bounding_box(const std::vector<double>& field, int width, int height);

// Mean over the batch of 1 - SoftDice(soft bounding box of seg_prob, box label).
int alignment_loss(Tape& tape, int seg_prob, const std::vector<BinaryMask>& box_labels,
                   double eps = 1e-6);

// Mean over the batch of 1 - SoftDice(seg_prob, box label): the naive
// box-supervised baseline objective.
int box_dice_loss(Tape& tape, int seg_prob, const std::vector<BinaryMask>& box_labels,
                  double eps = 1e-6);

// Uniform shuffled draw without replacement per category; anchors and
// positives are disjoint prefixes of the foreground pool. Throws
// InsufficientSamplesError when a category has no eligible location.
SampleSet sample_embeddings(Tape& tape, int proj, const std::vector<MultiLevelLabels>& labels,
                            const ContrastiveConfig& config, uint64_t seed);

int contrastive_loss(Tape& tape, const SampleSet& samples, double tau);

struct LossConfig {
    ContrastiveConfig pixel = ContrastiveConfig::pixel_defaults();
    ContrastiveConfig patch = ContrastiveConfig::patch_defaults();
    double dice_eps = 1e-6;
};

// L_all = L_a + L_c^1 + L_c^3 with unit weights. A contrastive term whose
// sampling found no eligible locations contributes zero and is flagged.
struct TotalLossResult {
    int loss_id = -1;
    double la = 0.0, lc1 = 0.0, lc3 = 0.0;
    bool skip_lc1 = false, skip_lc3 = false;
    int n1_anchors = 0, n1_pos = 0, n1_neg = 0;
    int n3_anchors = 0, n3_pos = 0, n3_neg = 0;
};

TotalLossResult total_loss(Tape& tape, int seg_prob, int proj,
                           const std::vector<MultiLevelLabels>& labels, const LossConfig& config,
                           uint64_t sample_seed);

}  // namespace paseg
