#include "paseg/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "paseg/imageio.hpp"

namespace paseg {

namespace fs = std::filesystem;

uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t x = a + 0x9e3779b97f4a7c15ull * (b + 1);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

Preset preset_from_string(const std::string& s) {
    if (s.size() == 1 && s[0] >= 'A' && s[0] <= 'H') return Preset(s[0] - 'A');
    if (s.size() == 1 && s[0] >= 'a' && s[0] <= 'h') return Preset(s[0] - 'a');
    throw ConfigError("preset must be a letter A..H, got '" + s + "'");
}

char preset_char(Preset p) { return char('A' + int(p)); }

bool preset_uses_prior(Preset p) {
    return p == Preset::B || p == Preset::F || p == Preset::G || p == Preset::H;
}
bool preset_uses_alignment(Preset p) {
    return p == Preset::C || p == Preset::E || p == Preset::F || p == Preset::H;
}
bool preset_uses_contrastive(Preset p) {
    return p == Preset::D || p == Preset::E || p == Preset::G || p == Preset::H;
}
bool preset_uses_box_dice(Preset p) { return p == Preset::A || p == Preset::B; }

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (preset_uses_contrastive(preset) && batch_size < 2)
        throw ConfigError("contrastive presets need batch_size >= 2 for cross-batch sampling");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0,1)");
    if (!(prior.sigma > 0.0) || !(prior.theta > 0.0))
        throw ConfigError("prior sigma and theta must be positive");
    pixel_cl.validate();
    patch_cl.validate();
    if (manifest.empty()) {
        phantom.validate();
        if (n_train < 1 || n_test < 0) throw ConfigError("synthetic counts must be positive");
    }
}

// ---------------------------------------------------------------- config

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

TrainConfig parse_config_text(const std::string& text) {
    TrainConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "preset") cfg.preset = preset_from_string(value);
            else if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "epochs") cfg.epochs = std::stoi(value);
            else if (key == "batch_size") cfg.batch_size = std::stoi(value);
            else if (key == "lr") cfg.lr = std::stod(value);
            else if (key == "threshold") cfg.threshold = std::stod(value);
            else if (key == "sigma") cfg.prior.sigma = std::stod(value);
            else if (key == "theta") cfg.prior.theta = std::stod(value);
            else if (key == "aggregation")
                cfg.prior.aggregation = (value == "mean") ? PriorConfig::Aggregation::Mean
                                                          : PriorConfig::Aggregation::Max;
            else if (key == "pixel_tau") cfg.pixel_cl.tau = std::stod(value);
            else if (key == "pixel_anchors") cfg.pixel_cl.n_anchors = std::stoi(value);
            else if (key == "pixel_pos") cfg.pixel_cl.n_pos = std::stoi(value);
            else if (key == "pixel_neg") cfg.pixel_cl.n_neg = std::stoi(value);
            else if (key == "patch_tau") cfg.patch_cl.tau = std::stod(value);
            else if (key == "patch_anchors") cfg.patch_cl.n_anchors = std::stoi(value);
            else if (key == "patch_pos") cfg.patch_cl.n_pos = std::stoi(value);
            else if (key == "patch_neg") cfg.patch_cl.n_neg = std::stoi(value);
            else if (key == "image_size") cfg.phantom.image_size = std::stoi(value);
            else if (key == "radius_min") cfg.phantom.radius_min = std::stod(value);
            else if (key == "radius_max") cfg.phantom.radius_max = std::stod(value);
            else if (key == "perturb_amplitude") cfg.phantom.perturb_amplitude = std::stod(value);
            else if (key == "nodule_mean") cfg.phantom.nodule_mean = std::stod(value);
            else if (key == "background_mean") cfg.phantom.background_mean = std::stod(value);
            else if (key == "speckle_strength") cfg.phantom.speckle_strength = std::stod(value);
            else if (key == "blur_radius") cfg.phantom.blur_radius = std::stod(value);
            else if (key == "jitter_std") cfg.phantom.jitter_std = std::stod(value);
            else if (key == "n_train") cfg.n_train = std::stoi(value);
            else if (key == "n_test") cfg.n_test = std::stoi(value);
            else if (key == "manifest") cfg.manifest = value;
            else if (key == "out_dir") cfg.out_dir = value;
            else if (key == "save_epoch_checkpoints")
                cfg.save_epoch_checkpoints = (value == "1" || value == "true");
            else
                throw ConfigError("unknown config key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw ConfigError("config line " + std::to_string(line_no) + ": bad value for " + key);
        } catch (const std::out_of_range&) {
            throw ConfigError("config line " + std::to_string(line_no) + ": value out of range");
        }
    }
    return cfg;
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingFileError("cannot open config " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

std::string config_echo(const TrainConfig& cfg) {
    std::ostringstream out;
    out << "preset = " << preset_char(cfg.preset) << "\n";
    out << "seed = " << cfg.seed << "\n";
    out << "epochs = " << cfg.epochs << "\n";
    out << "batch_size = " << cfg.batch_size << "\n";
    out << "lr = " << fmt_double(cfg.lr) << "\n";
    out << "threshold = " << fmt_double(cfg.threshold) << "\n";
    out << "sigma = " << fmt_double(cfg.prior.sigma) << "\n";
    out << "theta = " << fmt_double(cfg.prior.theta) << "\n";
    out << "aggregation = "
        << (cfg.prior.aggregation == PriorConfig::Aggregation::Mean ? "mean" : "max") << "\n";
    out << "pixel_tau = " << fmt_double(cfg.pixel_cl.tau) << "\n";
    out << "pixel_anchors = " << cfg.pixel_cl.n_anchors << "\n";
    out << "pixel_pos = " << cfg.pixel_cl.n_pos << "\n";
    out << "pixel_neg = " << cfg.pixel_cl.n_neg << "\n";
    out << "patch_tau = " << fmt_double(cfg.patch_cl.tau) << "\n";
    out << "patch_anchors = " << cfg.patch_cl.n_anchors << "\n";
    out << "patch_pos = " << cfg.patch_cl.n_pos << "\n";
    out << "patch_neg = " << cfg.patch_cl.n_neg << "\n";
    out << "image_size = " << cfg.phantom.image_size << "\n";
    out << "radius_min = " << fmt_double(cfg.phantom.radius_min) << "\n";
    out << "radius_max = " << fmt_double(cfg.phantom.radius_max) << "\n";
    out << "perturb_amplitude = " << fmt_double(cfg.phantom.perturb_amplitude) << "\n";
    out << "nodule_mean = " << fmt_double(cfg.phantom.nodule_mean) << "\n";
    out << "background_mean = " << fmt_double(cfg.phantom.background_mean) << "\n";
    out << "speckle_strength = " << fmt_double(cfg.phantom.speckle_strength) << "\n";
    out << "blur_radius = " << fmt_double(cfg.phantom.blur_radius) << "\n";
    out << "jitter_std = " << fmt_double(cfg.phantom.jitter_std) << "\n";
    out << "n_train = " << cfg.n_train << "\n";
    out << "n_test = " << cfg.n_test << "\n";
    return out.str();
}

// ---------------------------------------------------------------- data

Dataset prepare_dataset(const TrainConfig& cfg) {
    Dataset ds;
    if (!cfg.manifest.empty()) {
        std::vector<SampleRecord> all = load_manifest(cfg.manifest);
        if (all.empty()) throw DataError("manifest contains no records");
        const size_t n_train = std::max<size_t>(1, all.size() * 8 / 10);
        for (size_t i = 0; i < all.size(); ++i)
            (i < n_train ? ds.train : ds.test).push_back(std::move(all[i]));
        return ds;
    }
    for (int i = 0; i < cfg.n_train + cfg.n_test; ++i) {
        SampleRecord rec = synth_phantom(cfg.seed ^ uint64_t(i), cfg.phantom);
        rec.id = "phantom-" + std::to_string(i);
        (i < cfg.n_train ? ds.train : ds.test).push_back(std::move(rec));
    }
    return ds;
}

Tensor build_inputs(const SampleRecord& rec, Preset preset, const PriorConfig& prior_cfg) {
    const int w = rec.image.width(), h = rec.image.height();
    Tensor input({2, h, w}, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) input.data[size_t(y) * w + x] = rec.image.at(x, y);
    if (preset_uses_prior(preset)) {
        const PriorMap prior = fusion_prior(rec.image, rec.annotation, prior_cfg);
        double* ch1 = input.data.data() + size_t(h) * w;
        for (size_t i = 0; i < prior.values().size(); ++i) ch1[i] = prior.values()[i];
    }
    return input;
}

// ---------------------------------------------------------------- eval

namespace {

void check_uniform_dims(const std::vector<SampleRecord>& records) {
    if (records.empty()) return;
    const int w = records[0].image.width(), h = records[0].image.height();
    if (w % 4 != 0 || h % 4 != 0)
        throw DataError("image dimensions must be divisible by 4, got " + std::to_string(w) + "x" +
                        std::to_string(h));
    for (const SampleRecord& r : records)
        if (r.image.width() != w || r.image.height() != h)
            throw DataError("all records in a dataset must share the same dimensions");
}

BinaryMask threshold_mask(const Tensor& probs, double threshold, int w, int h) {
    BinaryMask m(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            m.set(x, y, probs.data[size_t(y) * w + x] >= threshold);
    return m;
}

// Batched forward over precomputed inputs; returns one probability plane
// per record.
std::vector<Tensor> predict_probs(const ModelParams& params, const std::vector<Tensor>& inputs,
                                  int batch_size) {
    std::vector<Tensor> probs;
    probs.reserve(inputs.size());
    for (size_t start = 0; start < inputs.size(); start += size_t(batch_size)) {
        const size_t n = std::min(size_t(batch_size), inputs.size() - start);
        const int h = inputs[start].dim(1), w = inputs[start].dim(2);
        Tensor batch({int(n), 2, h, w});
        for (size_t b = 0; b < n; ++b)
            std::copy(inputs[start + b].data.begin(), inputs[start + b].data.end(),
                      batch.data.begin() + int64_t(b) * inputs[start + b].size());
        const NetworkOutputs out = forward(batch, params);
        for (size_t b = 0; b < n; ++b) {
            Tensor plane({1, h, w});
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) plane.data[size_t(y) * w + x] = out.seg_prob.at4(int(b), 0, y, x);
            probs.push_back(std::move(plane));
        }
    }
    return probs;
}

EvalReport eval_records(const ModelParams& params, const TrainConfig& cfg,
                        const std::vector<SampleRecord>& records, const std::string& csv_path) {
    check_uniform_dims(records);
    std::vector<Tensor> inputs;
    inputs.reserve(records.size());
    for (const SampleRecord& r : records) inputs.push_back(build_inputs(r, cfg.preset, cfg.prior));
    const std::vector<Tensor> probs = predict_probs(params, inputs, cfg.batch_size);

    std::vector<EvalRow> rows;
    for (size_t i = 0; i < records.size(); ++i) {
        const SampleRecord& r = records[i];
        if (!r.gt_mask) throw MissingGroundTruthError("record " + r.id + " has no ground truth");
        const BinaryMask pred =
            threshold_mask(probs[i], cfg.threshold, r.image.width(), r.image.height());
        const double spacing = r.spacing_mm.value_or(1.0);
        rows.push_back({r.id, iou(pred, *r.gt_mask), dice(pred, *r.gt_mask),
                        hausdorff(pred, *r.gt_mask, spacing)});
    }
    EvalReport rep = make_eval_report(std::move(rows));
    if (!csv_path.empty()) write_eval_csv(csv_path, rep);
    return rep;
}

}  // namespace

EvalReport evaluate_with_predictor(const Predictor& predict,
                                   const std::vector<SampleRecord>& records, double threshold,
                                   const std::string& csv_path) {
    std::vector<EvalRow> rows;
    for (const SampleRecord& r : records) {
        if (!r.gt_mask) throw MissingGroundTruthError("record " + r.id + " has no ground truth");
        const Tensor probs = predict(r);
        const BinaryMask pred = threshold_mask(probs, threshold, r.image.width(), r.image.height());
        const double spacing = r.spacing_mm.value_or(1.0);
        rows.push_back({r.id, iou(pred, *r.gt_mask), dice(pred, *r.gt_mask),
                        hausdorff(pred, *r.gt_mask, spacing)});
    }
    EvalReport rep = make_eval_report(std::move(rows));
    if (!csv_path.empty()) write_eval_csv(csv_path, rep);
    return rep;
}

EvalReport evaluate(const std::string& checkpoint_path, const std::vector<SampleRecord>& records,
                    double threshold, const std::string& csv_path) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    TrainConfig cfg = parse_config_text(ckpt.config_echo);
    cfg.threshold = threshold;
    return eval_records(ckpt.params, cfg, records, csv_path);
}

// ---------------------------------------------------------------- train

namespace {

struct StepLog {
    int64_t iter = 0;
    int epoch = 0;
    int batch = 0;
    double ldice = 0.0, la = 0.0, lc1 = 0.0, lc3 = 0.0, lall = 0.0;
    int n1a = 0, n1p = 0, n1n = 0, n3a = 0, n3p = 0, n3n = 0;
    bool skip1 = false, skip3 = false;
};

std::string step_line(const StepLog& s) {
    std::ostringstream out;
    out << "iter=" << s.iter << " epoch=" << s.epoch << " batch=" << s.batch
        << " ldice=" << fmt_double(s.ldice) << " la=" << fmt_double(s.la)
        << " lc1=" << fmt_double(s.lc1) << " lc3=" << fmt_double(s.lc3)
        << " lall=" << fmt_double(s.lall) << " n1a=" << s.n1a << " n1p=" << s.n1p
        << " n1n=" << s.n1n << " n3a=" << s.n3a << " n3p=" << s.n3p << " n3n=" << s.n3n
        << " skip1=" << (s.skip1 ? 1 : 0) << " skip3=" << (s.skip3 ? 1 : 0);
    return out.str();
}

}  // namespace

TrainResult train(const TrainConfig& cfg) { return train_on(cfg, prepare_dataset(cfg)); }

TrainResult train_on(const TrainConfig& cfg, const Dataset& ds) {
    cfg.validate();
    if (ds.train.empty()) throw DataError("training set is empty");
    check_uniform_dims(ds.train);
    check_uniform_dims(ds.test);

    fs::create_directories(cfg.out_dir);
    fs::create_directories(fs::path(cfg.out_dir) / "checkpoints");
    const std::string log_path = (fs::path(cfg.out_dir) / "train_log.txt").string();
    std::ofstream log(log_path, std::ios::binary);
    if (!log) throw IoError("cannot write " + log_path);
    {
        std::istringstream echo(config_echo(cfg));
        std::string line;
        while (std::getline(echo, line)) log << "# " << line << "\n";
    }

    const int h = ds.train[0].image.height(), w = ds.train[0].image.width();

    std::vector<Tensor> train_inputs;
    std::vector<MultiLevelLabels> train_labels;
    std::vector<BinaryMask> train_boxes;
    train_inputs.reserve(ds.train.size());
    for (const SampleRecord& rec : ds.train) {
        train_inputs.push_back(build_inputs(rec, cfg.preset, cfg.prior));
        train_labels.push_back(generate_labels(rec.annotation, w, h));
        train_boxes.push_back(train_labels.back().box_mask);
    }
    std::vector<Tensor> test_inputs;
    for (const SampleRecord& rec : ds.test)
        test_inputs.push_back(build_inputs(rec, cfg.preset, cfg.prior));
    const bool test_has_gt =
        !ds.test.empty() &&
        std::all_of(ds.test.begin(), ds.test.end(),
                    [](const SampleRecord& r) { return r.gt_mask.has_value(); });

    ModelParams params = init_params(cfg.seed);
    AdamState adam = init_adam(params);
    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    const LossConfig loss_cfg{cfg.pixel_cl, cfg.patch_cl, 1e-6};

    std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 0xA11CEull));
    std::vector<size_t> order(ds.train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    int64_t iter = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        int batch_index = 0;
        for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
            const size_t n = std::min(size_t(cfg.batch_size), order.size() - start);
            Tensor batch({int(n), 2, h, w});
            std::vector<MultiLevelLabels> labels;
            std::vector<BinaryMask> boxes;
            for (size_t b = 0; b < n; ++b) {
                const size_t idx = order[start + b];
                std::copy(train_inputs[idx].data.begin(), train_inputs[idx].data.end(),
                          batch.data.begin() + int64_t(b) * train_inputs[idx].size());
                labels.push_back(train_labels[idx]);
                boxes.push_back(train_boxes[idx]);
            }

            Tape tape;
            const ParamVars vars = register_params(tape, params);
            const TracedOutputs out = forward_traced(tape, tape.leaf(std::move(batch)), vars);

            StepLog s;
            s.iter = iter;
            s.epoch = epoch;
            s.batch = batch_index;
            const uint64_t sample_seed = mix_seed(cfg.seed, uint64_t(iter) * 2654435761ull + 17);

            int loss_id = -1;
            if (preset_uses_box_dice(cfg.preset)) {
                loss_id = box_dice_loss(tape, out.seg_prob, boxes, loss_cfg.dice_eps);
                s.ldice = tape.val(loss_id).data[0];
            } else if (preset_uses_alignment(cfg.preset) && preset_uses_contrastive(cfg.preset)) {
                const TotalLossResult r =
                    total_loss(tape, out.seg_prob, out.proj, labels, loss_cfg, sample_seed);
                loss_id = r.loss_id;
                s.la = r.la;
                s.lc1 = r.lc1;
                s.lc3 = r.lc3;
                s.skip1 = r.skip_lc1;
                s.skip3 = r.skip_lc3;
                s.n1a = r.n1_anchors;
                s.n1p = r.n1_pos;
                s.n1n = r.n1_neg;
                s.n3a = r.n3_anchors;
                s.n3p = r.n3_pos;
                s.n3n = r.n3_neg;
            } else if (preset_uses_alignment(cfg.preset)) {
                loss_id = alignment_loss(tape, out.seg_prob, boxes, loss_cfg.dice_eps);
                s.la = tape.val(loss_id).data[0];
            } else {  // contrastive only (D, G)
                try {
                    const SampleSet s1 = sample_embeddings(tape, out.proj, labels, cfg.pixel_cl,
                                                           sample_seed ^ 0x9e3779b97f4a7c15ull);
                    loss_id = contrastive_loss(tape, s1, cfg.pixel_cl.tau);
                    s.lc1 = tape.val(loss_id).data[0];
                    s.n1a = int(s1.anchors.size());
                    s.n1p = int(s1.positives.size());
                    s.n1n = int(s1.negatives.size());
                } catch (const InsufficientSamplesError&) {
                    s.skip1 = true;
                }
                try {
                    const SampleSet s3 = sample_embeddings(tape, out.proj, labels, cfg.patch_cl,
                                                           sample_seed ^ 0xc2b2ae3d27d4eb4full);
                    const int lc3 = contrastive_loss(tape, s3, cfg.patch_cl.tau);
                    s.lc3 = tape.val(lc3).data[0];
                    s.n3a = int(s3.anchors.size());
                    s.n3p = int(s3.positives.size());
                    s.n3n = int(s3.negatives.size());
                    loss_id = (loss_id < 0) ? lc3 : tape.add(loss_id, lc3);
                } catch (const InsufficientSamplesError&) {
                    s.skip3 = true;
                }
            }

            if (loss_id < 0) {
                // every term skipped: nothing to optimize this step
                s.lall = 0.0;
                log << step_line(s) << " skipped_step=1\n";
                ++iter;
                ++batch_index;
                continue;
            }
            s.lall = tape.val(loss_id).data[0];

            try {
                tape.backward(loss_id);
            } catch (const NonFiniteError&) {
                log << step_line(s) << " error=nonfinite\n";
                log.flush();
                throw NonFiniteError("non-finite loss at iteration " + std::to_string(iter));
            }
            std::vector<Tensor> grads = collect_gradients(tape, vars);
            for (const Tensor& g : grads)
                if (!g.all_finite()) {
                    log << step_line(s) << " error=nonfinite_grad\n";
                    log.flush();
                    throw NonFiniteError("non-finite gradient at iteration " + std::to_string(iter));
                }
            adam_step(params, grads, adam, adam_cfg);

            log << step_line(s) << "\n";
            ++iter;
            ++batch_index;
        }

        if (test_has_gt) {
            const EvalReport val = eval_records(params, cfg, ds.test, "");
            log << "epoch=" << epoch << " val_dsc=" << fmt_double(val.mean_dsc)
                << " val_hd=" << fmt_double(val.mean_hd) << "\n";
        } else {
            log << "epoch=" << epoch << " val_skipped=1\n";
        }

        if (cfg.save_epoch_checkpoints) {
            char name[64];
            std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", epoch);
            Checkpoint ckpt{cfg.seed, epoch, config_echo(cfg), params, adam};
            save_checkpoint((fs::path(cfg.out_dir) / "checkpoints" / name).string(), ckpt);
        }
    }

    const std::string final_path = (fs::path(cfg.out_dir) / "final.ckpt").string();
    save_checkpoint(final_path, Checkpoint{cfg.seed, cfg.epochs, config_echo(cfg), params, adam});

    TrainResult result;
    result.checkpoint_path = final_path;
    result.log_path = log_path;
    if (test_has_gt) {
        result.final_eval =
            eval_records(params, cfg, ds.test, (fs::path(cfg.out_dir) / "eval.csv").string());
    }
    return result;
}

// ---------------------------------------------------------------- infer

BinaryMask infer(const std::string& image_path, const std::vector<Point>& raw_points,
                 const std::string& checkpoint_path, const std::string& out_mask_path,
                 const std::string& out_prob_path) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const TrainConfig cfg = parse_config_text(ckpt.config_echo);

    const ImageGrid image = image_from_gray(read_gray8(image_path));
    if (image.width() % 4 != 0 || image.height() % 4 != 0)
        throw ShapeError("input image dimensions must be divisible by 4");
    const FourPointAnnotation ann = canonicalize_points(raw_points);
    if (!ann.in_bounds(image.width(), image.height()))
        throw OutOfBoundsError("annotation points outside the image");

    SampleRecord rec{"infer", image, ann, std::nullopt, std::nullopt};
    const Tensor input = build_inputs(rec, cfg.preset, cfg.prior);
    const NetworkOutputs out = forward(input, ckpt.params);

    const int w = image.width(), h = image.height();
    BinaryMask mask(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            mask.set(x, y, out.seg_prob.data[size_t(y) * w + x] >= cfg.threshold);

    if (!out_mask_path.empty()) write_gray8(out_mask_path, gray_from_mask(mask));
    if (!out_prob_path.empty()) {
        GrayImage8 g{w, h, {}};
        g.pixels.resize(size_t(w) * h);
        for (size_t i = 0; i < g.pixels.size(); ++i)
            g.pixels[i] = uint8_t(std::lround(out.seg_prob.data[i] * 255.0));
        write_gray8(out_prob_path, g);
    }
    return mask;
}

// ---------------------------------------------------------------- ablation

std::vector<AblationRow> ablation_suite(const TrainConfig& base, int n_seeds,
                                        std::ostream& table) {
    if (n_seeds < 1) throw ConfigError("ablation needs at least one seed");
    std::vector<AblationRow> rows(8);
    for (int p = 0; p < 8; ++p) rows[size_t(p)].preset = Preset(p);

    for (int s = 0; s < n_seeds; ++s) {
        TrainConfig data_cfg = base;
        data_cfg.seed = base.seed + uint64_t(s);
        const Dataset ds = prepare_dataset(data_cfg);
        for (int p = 0; p < 8; ++p) {
            TrainConfig cfg = base;
            cfg.preset = Preset(p);
            cfg.seed = base.seed + uint64_t(s);
            cfg.save_epoch_checkpoints = false;
            cfg.out_dir = (fs::path(base.out_dir) /
                           (std::string("ablate_") + preset_char(cfg.preset) + "_s" +
                            std::to_string(s)))
                              .string();
            try {
                const TrainResult r = train_on(cfg, ds);
                rows[size_t(p)].dsc.push_back(r.final_eval.mean_dsc);
                rows[size_t(p)].hd.push_back(r.final_eval.mean_hd);
            } catch (const std::exception& e) {
                rows[size_t(p)].failed = true;
                table << "# preset " << preset_char(Preset(p)) << " seed " << cfg.seed
                      << " failed: " << e.what() << "\n";
            }
        }
    }

    static const char* kStrategy[8] = {"baseline", "+DS",     "+La",     "+Lc",
                                       "+La+Lc",   "+DS+La",  "+DS+Lc",  "+DS+La+Lc"};
    table << "preset  strategy    mean_DSC  mean_HD  (over " << n_seeds << " seeds)\n";
    for (auto& row : rows) {
        double sd = 0.0, sh = 0.0;
        for (double v : row.dsc) sd += v;
        for (double v : row.hd) sh += v;
        if (!row.dsc.empty()) {
            row.mean_dsc = sd / double(row.dsc.size());
            row.mean_hd = sh / double(row.hd.size());
        }
        char line[160];
        std::snprintf(line, sizeof(line), "%c       %-10s  %8.4f  %7.2f%s\n",
                      preset_char(row.preset), kStrategy[int(row.preset)], row.mean_dsc,
                      row.mean_hd, row.failed ? "  [FAILED]" : "");
        table << line;
    }

    auto dsc = [&](Preset p) { return rows[size_t(int(p))].mean_dsc; };
    auto hd = [&](Preset p) { return rows[size_t(int(p))].mean_hd; };
    table << "ordering DSC(H) > DSC(A): " << (dsc(Preset::H) > dsc(Preset::A) ? "yes" : "NO")
          << "\n";
    table << "ordering DSC(F) > DSC(C): " << (dsc(Preset::F) > dsc(Preset::C) ? "yes" : "NO")
          << "\n";
    table << "ordering DSC(B) > DSC(A): " << (dsc(Preset::B) > dsc(Preset::A) ? "yes" : "NO")
          << "\n";
    table << "ordering HD(E) < HD(D):   " << (hd(Preset::E) < hd(Preset::D) ? "yes" : "NO")
          << "\n";
    table << "ordering DSC(H) >= DSC(F) >= DSC(C): "
          << ((dsc(Preset::H) >= dsc(Preset::F) && dsc(Preset::F) >= dsc(Preset::C)) ? "yes"
                                                                                     : "NO")
          << "\n";
    table << "ordering DSC(H) >= DSC(B): " << (dsc(Preset::H) >= dsc(Preset::B) ? "yes" : "NO")
          << "\n";
    bool h_min_hd = true;
    for (int p = 0; p < 8; ++p)
        if (p != int(Preset::H) && !rows[size_t(p)].hd.empty())
            h_min_hd = h_min_hd && hd(Preset::H) <= rows[size_t(p)].mean_hd;
    table << "ordering HD(H) is column minimum: " << (h_min_hd ? "yes" : "NO") << "\n";
    return rows;
}

}  // namespace paseg
