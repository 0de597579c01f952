// paseg: weakly-supervised nodule segmentation from four-point annotations.
//
// Subcommands: synth, gen-labels, prior, audit-labels, train, eval, infer,
// ablate. Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "paseg/imageio.hpp"
#include "paseg/pipeline.hpp"

namespace fs = std::filesystem;
using namespace paseg;

namespace {

struct GlobalOpts {
    std::string config;
    uint64_t seed = 0;
    bool seed_set = false;
    std::string out;
};

TrainConfig resolve_config(const GlobalOpts& g) {
    TrainConfig cfg;
    if (!g.config.empty()) cfg = load_train_config(g.config);
    if (g.seed_set) cfg.seed = g.seed;
    if (!g.out.empty()) cfg.out_dir = g.out;
    return cfg;
}

std::vector<Point> parse_points_arg(const std::string& arg) {
    std::vector<double> values;
    std::string token;
    std::istringstream in(arg);
    while (std::getline(in, token, ',')) {
        try {
            values.push_back(std::stod(token));
        } catch (const std::exception&) {
            throw ConfigError("--points expects 8 comma-separated numbers");
        }
    }
    if (values.size() != 8) throw ConfigError("--points expects exactly 8 numbers (x1,y1,...,x4,y4)");
    std::vector<Point> pts;
    for (size_t i = 0; i < 8; i += 2) pts.push_back(Point{values[i], values[i + 1]});
    return pts;
}

int cmd_synth(const TrainConfig& cfg, int count, bool png) {
    TrainConfig c = cfg;
    c.n_train = count;
    c.n_test = 0;
    const Dataset ds = prepare_dataset(c);
    const std::string manifest = write_dataset(c.out_dir, ds.train, png);
    std::printf("wrote %zu records to %s\n", ds.train.size(), manifest.c_str());
    return 0;
}

int cmd_gen_labels(const std::string& manifest, const std::string& out_dir) {
    const std::vector<SampleRecord> records = load_manifest(manifest);
    fs::create_directories(out_dir);
    for (const SampleRecord& rec : records) {
        const MultiLevelLabels labels =
            generate_labels(rec.annotation, rec.image.width(), rec.image.height());
        write_gray8((fs::path(out_dir) / (rec.id + "_box.pgm")).string(),
                    gray_from_mask(labels.box_mask));
        write_gray8((fs::path(out_dir) / (rec.id + "_fg.pgm")).string(),
                    gray_from_mask(labels.fg_mask));
        write_gray8((fs::path(out_dir) / (rec.id + "_bg.pgm")).string(),
                    gray_from_mask(labels.bg_mask));
        write_gray8((fs::path(out_dir) / (rec.id + "_mixed.pgm")).string(),
                    gray_from_mask(labels.mixed_mask));
    }
    std::printf("wrote labels for %zu records to %s\n", records.size(), out_dir.c_str());
    return 0;
}

int cmd_prior(const TrainConfig& cfg, const std::string& manifest, bool preview) {
    const std::vector<SampleRecord> records = load_manifest(manifest);
    fs::create_directories(cfg.out_dir);
    for (const SampleRecord& rec : records) {
        const PriorMap prior = fusion_prior(rec.image, rec.annotation, cfg.prior);
        save_prior_cache((fs::path(cfg.out_dir) / (rec.id + ".dsp")).string(), prior);
        if (preview) {
            GrayImage8 g{prior.width(), prior.height(), {}};
            g.pixels.resize(size_t(prior.width()) * prior.height());
            for (size_t i = 0; i < g.pixels.size(); ++i)
                g.pixels[i] = uint8_t(std::lround(prior.values()[i] * 255.0));
            write_gray8((fs::path(cfg.out_dir) / (rec.id + "_prior.pgm")).string(), g);
        }
    }
    std::printf("wrote %zu prior maps to %s (sigma=%g theta=%g)\n", records.size(),
                cfg.out_dir.c_str(), cfg.prior.sigma, cfg.prior.theta);
    return 0;
}

int cmd_audit_labels(const std::string& manifest, const std::string& csv) {
    const std::vector<SampleRecord> records = load_manifest(manifest);
    LabelAuditAccumulator acc;
    int skipped = 0;
    for (const SampleRecord& rec : records) {
        if (!rec.gt_mask) {
            ++skipped;
            continue;
        }
        acc.add(generate_labels(rec.annotation, rec.image.width(), rec.image.height()),
                *rec.gt_mask);
    }
    const LabelAudit audit = acc.finish();
    if (audit.images == 0) throw DataError("no records with ground-truth masks to audit");

    std::printf("label precision over %d images%s\n", audit.images,
                skipped ? (" (" + std::to_string(skipped) + " without masks skipped)").c_str()
                        : "");
    std::printf("%-16s %12s %12s\n", "labels", "foreground", "background");
    std::printf("%-16s %11.2f%% %11.2f%%\n", "pure f/b labels", 100.0 * audit.pure_fg_mean,
                100.0 * audit.pure_bg_mean);
    std::printf("%-16s %11.2f%% %11.2f%%\n", "box labels", 100.0 * audit.box_fg_mean,
                100.0 * audit.box_bg_mean);
    if (!csv.empty()) {
        std::ofstream out(csv, std::ios::binary);
        if (!out) throw IoError("cannot write " + csv);
        out << "labels,foreground,background\n";
        char buf[128];
        std::snprintf(buf, sizeof(buf), "pure,%.6f,%.6f\n", audit.pure_fg_mean,
                      audit.pure_bg_mean);
        out << buf;
        std::snprintf(buf, sizeof(buf), "box,%.6f,%.6f\n", audit.box_fg_mean, audit.box_bg_mean);
        out << buf;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"weakly-supervised ultrasound nodule segmentation from four-point annotations"};
    app.require_subcommand(1);
    app.fallthrough();  // allow global --config/--seed/--out after the subcommand

    GlobalOpts g;
    app.add_option("--config", g.config, "key = value config file")->expected(1);
    auto* seed_opt = app.add_option("--seed", g.seed, "override the config seed");
    app.add_option("--out", g.out, "override the output directory");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic phantom dataset");
    int synth_count = 64;
    bool synth_png = false;
    synth->add_option("--count", synth_count, "number of phantoms");
    synth->add_flag("--png", synth_png, "write PNG instead of PGM");

    // gen-labels
    auto* gen = app.add_subcommand("gen-labels", "write multi-level label masks for a manifest");
    std::string gen_manifest;
    gen->add_option("--manifest", gen_manifest, "JSON-lines manifest")->required();

    // prior
    auto* prior = app.add_subcommand("prior", "compute fused distance/similarity prior caches");
    std::string prior_manifest;
    bool prior_preview = false;
    double prior_sigma = -1.0, prior_theta = -1.0;
    prior->add_option("--manifest", prior_manifest, "JSON-lines manifest")->required();
    prior->add_option("--sigma", prior_sigma, "distance kernel spread");
    prior->add_option("--theta", prior_theta, "similarity spread");
    prior->add_flag("--preview", prior_preview, "also write 8-bit previews");

    // audit-labels
    auto* audit = app.add_subcommand("audit-labels", "pixel precision of generated labels");
    std::string audit_manifest, audit_csv;
    audit->add_option("--manifest", audit_manifest, "manifest with ground-truth masks")->required();
    audit->add_option("--csv", audit_csv, "also write the table as CSV");

    // train
    auto* tr = app.add_subcommand("train", "train a model");
    std::string tr_preset;
    tr->add_option("--preset", tr_preset, "strategy A..H (overrides config)");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint against a manifest");
    std::string ev_ckpt, ev_manifest, ev_csv;
    double ev_threshold = 0.5;
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
    ev->add_option("--manifest", ev_manifest, "manifest with ground-truth masks")->required();
    ev->add_option("--threshold", ev_threshold, "binarization threshold");
    ev->add_option("--csv", ev_csv, "report path (default <out>/eval.csv)");

    // infer
    auto* in = app.add_subcommand("infer", "segment one image from four points");
    std::string in_ckpt, in_image, in_points, in_mask, in_prob;
    in->add_option("--checkpoint", in_ckpt, "checkpoint file")->required();
    in->add_option("--image", in_image, "grayscale PGM/PNG image")->required();
    in->add_option("--points", in_points, "x1,y1,x2,y2,x3,y3,x4,y4")->required();
    in->add_option("--mask", in_mask, "output mask path (.png or .pgm)")->required();
    in->add_option("--prob", in_prob, "optional probability map path");

    // ablate
    auto* ab = app.add_subcommand("ablate", "run the A..H strategy grid");
    int ab_seeds = 3;
    ab->add_option("--seeds", ab_seeds, "number of seeds per preset");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // CLI11 prints help text itself for -h; everything else is usage error
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        g.seed_set = seed_opt->count() > 0;
        TrainConfig cfg = resolve_config(g);

        if (synth->parsed()) return cmd_synth(cfg, synth_count, synth_png);
        if (gen->parsed()) return cmd_gen_labels(gen_manifest, cfg.out_dir);
        if (prior->parsed()) {
            if (prior_sigma > 0.0) cfg.prior.sigma = prior_sigma;
            if (prior_theta > 0.0) cfg.prior.theta = prior_theta;
            return cmd_prior(cfg, prior_manifest, prior_preview);
        }
        if (audit->parsed()) return cmd_audit_labels(audit_manifest, audit_csv);
        if (tr->parsed()) {
            if (!tr_preset.empty()) cfg.preset = preset_from_string(tr_preset);
            const TrainResult r = train(cfg);
            std::printf("checkpoint: %s\n", r.checkpoint_path.c_str());
            std::printf("log:        %s\n", r.log_path.c_str());
            if (r.final_eval.count > 0)
                std::printf("test mIoU %.4f  DSC %.4f  HD %.2f over %d images\n",
                            r.final_eval.mean_iou, r.final_eval.mean_dsc, r.final_eval.mean_hd,
                            r.final_eval.count);
            return 0;
        }
        if (ev->parsed()) {
            const std::vector<SampleRecord> records = load_manifest(ev_manifest);
            const std::string csv =
                ev_csv.empty() ? (fs::path(cfg.out_dir) / "eval.csv").string() : ev_csv;
            fs::create_directories(fs::path(csv).parent_path().empty()
                                       ? fs::path(".")
                                       : fs::path(csv).parent_path());
            const EvalReport rep = evaluate(ev_ckpt, records, ev_threshold, csv);
            std::printf("mIoU %.4f  DSC %.4f  HD %.2f over %d images -> %s\n", rep.mean_iou,
                        rep.mean_dsc, rep.mean_hd, rep.count, csv.c_str());
            return 0;
        }
        if (in->parsed()) {
            infer(in_image, parse_points_arg(in_points), in_ckpt, in_mask, in_prob);
            std::printf("wrote %s\n", in_mask.c_str());
            return 0;
        }
        if (ab->parsed()) {
            fs::create_directories(cfg.out_dir);
            const std::string table_path = (fs::path(cfg.out_dir) / "ablation.txt").string();
            std::ofstream table(table_path, std::ios::binary);
            std::ostringstream buffer;
            ablation_suite(cfg, ab_seeds, buffer);
            std::fputs(buffer.str().c_str(), stdout);
            table << buffer.str();
            std::printf("table written to %s\n", table_path.c_str());
            return 0;
        }
        std::fprintf(stderr, "no subcommand selected\n");
        return 1;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
