#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "paseg/losses.hpp"
#include "paseg/manifest.hpp"
#include "paseg/metrics.hpp"
#include "paseg/model.hpp"
#include "paseg/phantom.hpp"
#include "paseg/priorgen.hpp"

namespace paseg {

// Ablation strategies. The letters select which constraints supervise the
// network; the naive box-Dice baseline objective is active only when no
// alignment/contrastive term is (A and B), and B/F/G/H feed the fused prior
// as the second input channel.
enum class Preset { A, B, C, D, E, F, G, H };

Preset preset_from_string(const std::string& s);
char preset_char(Preset p);
bool preset_uses_prior(Preset p);
bool preset_uses_alignment(Preset p);
bool preset_uses_contrastive(Preset p);
bool preset_uses_box_dice(Preset p);

struct TrainConfig {
    Preset preset = Preset::H;
    uint64_t seed = 1;
    int epochs = 30;
    int batch_size = 8;
    double lr = 1e-3;
    double threshold = 0.5;
    PriorConfig prior;
    ContrastiveConfig pixel_cl = ContrastiveConfig::pixel_defaults();
    ContrastiveConfig patch_cl = ContrastiveConfig::patch_defaults();
    PhantomConfig phantom;
    int n_train = 200;
    int n_test = 50;
    std::string manifest;  // when set, loads records instead of synthesizing
    std::string out_dir = "out";
    bool save_epoch_checkpoints = true;

    void validate() const;
};

// key = value text, one entry per line; `#` starts a comment.
TrainConfig parse_config_text(const std::string& text);
TrainConfig load_train_config(const std::string& path);
// Semantic configuration only (no filesystem paths): embedded in
// checkpoints and byte-stable across runs.
std::string config_echo(const TrainConfig& cfg);

struct Dataset {
    std::vector<SampleRecord> train;
    std::vector<SampleRecord> test;
};

// Synthetic: n_train + n_test phantoms with per-record seeds derived as
// corpus_seed XOR record index. Manifest: 80/20 split by record index.
Dataset prepare_dataset(const TrainConfig& cfg);

// (2,H,W): channel 0 is the image, channel 1 the fused prior for DS presets
// and zeros otherwise. Never reads the ground-truth mask.
Tensor build_inputs(const SampleRecord& rec, Preset preset, const PriorConfig& prior_cfg);

struct TrainResult {
    std::string checkpoint_path;
    std::string log_path;
    EvalReport final_eval;
};

TrainResult train(const TrainConfig& cfg);
// Shared-data entry used by the ablation suite.
TrainResult train_on(const TrainConfig& cfg, const Dataset& ds);

using Predictor = std::function<Tensor(const SampleRecord&)>;  // (1,H,W) probabilities

EvalReport evaluate(const std::string& checkpoint_path, const std::vector<SampleRecord>& records,
                    double threshold = 0.5, const std::string& csv_path = "");
EvalReport evaluate_with_predictor(const Predictor& predict,
                                   const std::vector<SampleRecord>& records, double threshold,
                                   const std::string& csv_path = "");

// Prior from the points, forward pass, threshold; the mask is written to
// out_mask_path (PNG or PGM by extension).
BinaryMask infer(const std::string& image_path, const std::vector<Point>& raw_points,
                 const std::string& checkpoint_path, const std::string& out_mask_path,
                 const std::string& out_prob_path = "");

struct AblationRow {
    Preset preset = Preset::A;
    std::vector<double> dsc;
    std::vector<double> hd;
    double mean_dsc = 0.0;
    double mean_hd = 0.0;
    bool failed = false;
};

// Runs all eight presets over n_seeds seeds with shared per-seed data and
// prints a strategy table plus the expected ordering checks.
std::vector<AblationRow> ablation_suite(const TrainConfig& base, int n_seeds, std::ostream& table);

uint64_t mix_seed(uint64_t a, uint64_t b);

}  // namespace paseg
