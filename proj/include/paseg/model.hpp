#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "paseg/tape.hpp"
#include "paseg/tensor.hpp"

namespace paseg {

// Three-level encoder-decoder (8/16/32 channels, 3x3 convs + ReLU, 2x
// average-pool downsampling, nearest-neighbor upsampling with skip
// concatenation) over a 2-channel input (image + prior), plus a sigmoid
// segmentation head and an L2-normalized 16-channel projection head.
struct ModelParams {
    static constexpr int kInputChannels = 2;
    static constexpr int kProjDim = 16;

    Tensor enc1_w, enc1_b;  // 2  -> 8
    Tensor enc2_w, enc2_b;  // 8  -> 16
    Tensor enc3_w, enc3_b;  // 16 -> 32
    Tensor dec2_w, dec2_b;  // 32+16 -> 16
    Tensor dec1_w, dec1_b;  // 16+8  -> 8
    Tensor seg_w, seg_b;    // 8 -> 1, 1x1
    Tensor proj_w, proj_b;  // 8 -> 16, 1x1

    template <typename F>
    void for_each(F&& f) {
        f("enc1.w", enc1_w); f("enc1.b", enc1_b);
        f("enc2.w", enc2_w); f("enc2.b", enc2_b);
        f("enc3.w", enc3_w); f("enc3.b", enc3_b);
        f("dec2.w", dec2_w); f("dec2.b", dec2_b);
        f("dec1.w", dec1_w); f("dec1.b", dec1_b);
        f("seg.w", seg_w);   f("seg.b", seg_b);
        f("proj.w", proj_w); f("proj.b", proj_b);
    }
    template <typename F>
    void for_each(F&& f) const {
        const_cast<ModelParams*>(this)->for_each(
            [&](const char* name, Tensor& t) { f(name, static_cast<const Tensor&>(t)); });
    }

    int64_t parameter_count() const;
};

// Deterministic fan-in-scaled uniform initialization; identical seeds give
// bit-identical parameters.
ModelParams init_params(uint64_t seed);

// Leaf ids of the parameters on a tape, in for_each order.
struct ParamVars {
    std::vector<int> ids;
};
ParamVars register_params(Tape& tape, const ModelParams& params);

struct TracedOutputs {
    int seg_prob;  // (B,1,H,W), values in (0,1)
    int proj;      // (B,16,H,W), per-pixel unit norm
};

// Records the full forward pass on the tape. The input must be (B,2,H,W)
// with H and W divisible by 4.
TracedOutputs forward_traced(Tape& tape, int input, const ParamVars& vars);

struct NetworkOutputs {
    Tensor seg_prob;
    Tensor proj;
};

// Convenience inference path; accepts (2,H,W) or (B,2,H,W).
NetworkOutputs forward(const Tensor& input, const ModelParams& params);

// Parameter gradients after backward, in for_each order.
std::vector<Tensor> collect_gradients(Tape& tape, const ParamVars& vars);

// --- optimizer ---------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    int64_t step = 0;
};

AdamState init_adam(const ModelParams& params);
void adam_step(ModelParams& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamConfig& config);

// --- checkpoint container ----------------------------------------------

struct Checkpoint {
    uint64_t seed = 0;
    int32_t epoch = 0;
    std::string config_echo;
    ModelParams params;
    std::optional<AdamState> adam;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace paseg
