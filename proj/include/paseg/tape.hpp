#pragma once

#include <functional>
#include <vector>

#include "paseg/imagecore.hpp"
#include "paseg/tensor.hpp"

namespace paseg {

// Define-by-run reverse-mode tape. Every op records its output value plus a
// closure that scatters upstream gradients to its inputs; nodes are created
// in topological order, so one reverse sweep from the loss node produces
// gradients for every touched leaf. A tape is single-consumer: it supports
// exactly one backward pass.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    int leaf(Tensor value);

    const Tensor& val(int id) const { return nodes_[static_cast<size_t>(id)].value; }
    // Gradient accumulated for a node; zeros when backward never reached it.
    const Tensor& grad(int id);
    int size() const { return static_cast<int>(nodes_.size()); }

    void backward(int loss_id);

    // --- network ops -------------------------------------------------
    // x (B,C,H,W), w (O,C,k,k) with k in {1,3}, bias (O); same-size output.
    int conv2d(int x, int w, int bias);
    int relu(int x);
    int sigmoid(int x);
    int avgpool2(int x);
    int upsample_nearest2(int x);
    int concat_channels(int a, int b);
    // Per-pixel L2 normalization across channels of a (B,C,H,W) tensor.
    int l2norm_channels(int x);

    // --- loss building blocks ----------------------------------------
    int slice_plane(int x, int b, int c);  // (B,C,H,W) -> (H,W)
    // Outer product of row/column max profiles of a (H,W) field; gradient
    // flows to the first argmax element of each profile entry.
    int soft_box(int p);
    // 1 - (2*sum(a.*y)+eps)/(sum(a)+sum(y)+eps) against a fixed mask.
    int soft_dice_loss(int a, const BinaryMask& y, double eps);
    int gather_vec(int x, int b, int px, int py);            // (B,D,H,W) -> (D)
    int gather_patch_mean(int x, int b, int cx, int cy);     // 3x3 window mean -> (D)
    int l2norm_vec(int v);
    // InfoNCE over unit embeddings; averages over anchor-positive pairs,
    // each pair normalized against the full negative pool.
    int infonce(const std::vector<int>& anchors, const std::vector<int>& positives,
                const std::vector<int>& negatives, double tau);

    // --- scalar plumbing ----------------------------------------------
    int add(int a, int b);
    int scale(int a, double k);
    int sum_scalars(const std::vector<int>& ids);
    int mean_scalars(const std::vector<int>& ids);
    int dot_const(int x, Tensor weights);  // sum(x .* weights) -> scalar

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void()> back;
        bool touched = false;
    };

    std::vector<Node> nodes_;
    bool consumed_ = false;

    int push(Tensor value, std::function<void()> back);
    Tensor& grad_mut(int id);
    const Tensor& check4d(int id, const char* what) const;
};

}  // namespace paseg
