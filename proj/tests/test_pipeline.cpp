#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "paseg/imageio.hpp"
#include "paseg/pipeline.hpp"

using namespace paseg;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

TrainConfig tiny_config(const std::string& out_dir) {
    TrainConfig cfg;
    cfg.preset = Preset::H;
    cfg.seed = 5;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.n_train = 8;
    cfg.n_test = 4;
    cfg.phantom.image_size = 32;
    cfg.phantom.radius_min = 5;
    cfg.phantom.radius_max = 8;
    cfg.out_dir = out_dir;
    cfg.save_epoch_checkpoints = false;
    return cfg;
}

}  // namespace

TEST_CASE("preset term activation table") {
    CHECK_FALSE(preset_uses_prior(Preset::A));
    CHECK(preset_uses_prior(Preset::B));
    CHECK(preset_uses_prior(Preset::F));
    CHECK(preset_uses_prior(Preset::G));
    CHECK(preset_uses_prior(Preset::H));
    CHECK(preset_uses_box_dice(Preset::A));
    CHECK(preset_uses_box_dice(Preset::B));
    CHECK_FALSE(preset_uses_box_dice(Preset::H));
    CHECK(preset_uses_alignment(Preset::C));
    CHECK(preset_uses_alignment(Preset::E));
    CHECK(preset_uses_alignment(Preset::F));
    CHECK(preset_uses_alignment(Preset::H));
    CHECK(preset_uses_contrastive(Preset::D));
    CHECK(preset_uses_contrastive(Preset::E));
    CHECK(preset_uses_contrastive(Preset::G));
    CHECK(preset_uses_contrastive(Preset::H));
    CHECK(preset_from_string("h") == Preset::H);
    CHECK_THROWS_AS(preset_from_string("X"), ConfigError);
}

TEST_CASE("build_inputs fills the prior channel only for DS presets") {
    PhantomConfig pc;
    const SampleRecord rec = synth_phantom(11, pc);
    const PriorConfig prior;

    const Tensor with_prior = build_inputs(rec, Preset::H, prior);
    const Tensor without = build_inputs(rec, Preset::A, prior);
    REQUIRE(with_prior.shape == std::vector<int>{2, 64, 64});
    REQUIRE(without.shape == std::vector<int>{2, 64, 64});

    // channel 0 is the image in both cases
    for (int i = 0; i < 64 * 64; ++i) {
        CHECK(with_prior.data[size_t(i)] == without.data[size_t(i)]);
    }
    // prior channel peaks at exactly 1 at annotated pixels, zeros otherwise
    double mx = 0.0;
    for (int i = 0; i < 64 * 64; ++i) {
        CHECK(without.data[size_t(64 * 64 + i)] == 0.0);
        mx = std::max(mx, with_prior.data[size_t(64 * 64 + i)]);
    }
    CHECK(mx == 1.0);
}

TEST_CASE("build_inputs is identical with and without ground truth") {
    PhantomConfig pc;
    SampleRecord rec = synth_phantom(12, pc);
    SampleRecord no_gt = rec;
    no_gt.gt_mask.reset();
    const Tensor a = build_inputs(rec, Preset::H, PriorConfig{});
    const Tensor b = build_inputs(no_gt, Preset::H, PriorConfig{});
    CHECK(a.data == b.data);
}

TEST_CASE("config file round trip") {
    TrainConfig cfg;
    cfg.preset = Preset::F;
    cfg.seed = 99;
    cfg.epochs = 7;
    cfg.batch_size = 4;
    cfg.lr = 0.005;
    cfg.prior.sigma = 0.31;
    cfg.pixel_cl.n_neg = 123;
    cfg.phantom.radius_max = 15.5;
    const TrainConfig back = parse_config_text(config_echo(cfg));
    CHECK(back.preset == Preset::F);
    CHECK(back.seed == 99);
    CHECK(back.epochs == 7);
    CHECK(back.batch_size == 4);
    CHECK(back.lr == cfg.lr);
    CHECK(back.prior.sigma == cfg.prior.sigma);
    CHECK(back.pixel_cl.n_neg == 123);
    CHECK(back.phantom.radius_max == cfg.phantom.radius_max);

    CHECK_THROWS_AS(parse_config_text("nonsense_key = 3\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("epochs\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("epochs = abc\n"), ConfigError);
}

TEST_CASE("config validation catches contrastive batch constraint") {
    TrainConfig cfg = tiny_config("/tmp/paseg_unused");
    cfg.batch_size = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.preset = Preset::A;  // no contrastive term: batch 1 is fine
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("synthetic dataset split and per-record seeds") {
    TrainConfig cfg = tiny_config("/tmp/paseg_unused");
    const Dataset ds = prepare_dataset(cfg);
    CHECK(ds.train.size() == 8);
    CHECK(ds.test.size() == 4);
    // deterministic regeneration
    const Dataset ds2 = prepare_dataset(cfg);
    CHECK(ds.train[3].image.values() == ds2.train[3].image.values());
    // records differ from each other
    CHECK(ds.train[0].image.values() != ds.train[1].image.values());
}

TEST_CASE("training is byte-deterministic and evaluation is consistent") {
    const fs::path base = fs::temp_directory_path() / "paseg_train_det";
    fs::remove_all(base);

    TrainConfig cfg1 = tiny_config((base / "run1").string());
    TrainConfig cfg2 = tiny_config((base / "run2").string());
    const TrainResult r1 = train(cfg1);
    const TrainResult r2 = train(cfg2);

    CHECK(slurp(r1.checkpoint_path) == slurp(r2.checkpoint_path));
    CHECK(slurp(r1.log_path) == slurp(r2.log_path));
    CHECK(slurp((fs::path(cfg1.out_dir) / "eval.csv").string()) ==
          slurp((fs::path(cfg2.out_dir) / "eval.csv").string()));

    // evaluate() reproduces the training-side final evaluation
    const Dataset ds = prepare_dataset(cfg1);
    const EvalReport rep = evaluate(r1.checkpoint_path, ds.test, cfg1.threshold);
    CHECK(rep.count == int(ds.test.size()));
    CHECK(rep.mean_dsc == doctest::Approx(r1.final_eval.mean_dsc).epsilon(1e-12));

    fs::remove_all(base);
}

TEST_CASE("evaluate_with_predictor honors oracle and all-background stubs") {
    TrainConfig cfg = tiny_config("/tmp/paseg_unused");
    const Dataset ds = prepare_dataset(cfg);

    // oracle stub: probabilities equal to the ground truth
    const Predictor oracle = [](const SampleRecord& rec) {
        Tensor probs({1, rec.image.height(), rec.image.width()});
        for (int y = 0; y < rec.image.height(); ++y)
            for (int x = 0; x < rec.image.width(); ++x)
                probs.data[size_t(y) * rec.image.width() + x] = rec.gt_mask->at(x, y) ? 1.0 : 0.0;
        return probs;
    };
    const EvalReport perfect = evaluate_with_predictor(oracle, ds.test, 0.5, "");
    CHECK(perfect.mean_dsc == 1.0);
    CHECK(perfect.mean_iou == 1.0);
    CHECK(perfect.mean_hd == 0.0);

    // all-background prediction: zero dice, diagonal penalty
    const Predictor none = [](const SampleRecord& rec) {
        return Tensor({1, rec.image.height(), rec.image.width()}, 0.0);
    };
    const EvalReport empty = evaluate_with_predictor(none, ds.test, 0.5, "");
    CHECK(empty.mean_dsc == 0.0);
    CHECK(empty.mean_hd ==
          doctest::Approx(std::sqrt(2.0) * cfg.phantom.image_size).epsilon(1e-12));

    // CSV row count: records + summary (+ header)
    const fs::path csv = fs::temp_directory_path() / "paseg_eval_rows.csv";
    evaluate_with_predictor(oracle, ds.test, 0.5, csv.string());
    std::ifstream in(csv);
    int lines = 0;
    std::string line;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == int(ds.test.size()) + 2);
    fs::remove(csv);

    // missing ground truth is an error
    std::vector<SampleRecord> no_gt = {ds.test[0]};
    no_gt[0].gt_mask.reset();
    CHECK_THROWS_AS(evaluate_with_predictor(oracle, no_gt, 0.5, ""), MissingGroundTruthError);
}

TEST_CASE("infer is byte-deterministic and validates bounds") {
    const fs::path base = fs::temp_directory_path() / "paseg_infer_test";
    fs::remove_all(base);
    fs::create_directories(base);

    TrainConfig cfg = tiny_config((base / "train").string());
    cfg.epochs = 1;
    const TrainResult r = train(cfg);

    // write one phantom image to disk
    const SampleRecord rec = synth_phantom(321, cfg.phantom);
    const std::string img_path = (base / "img.pgm").string();
    write_gray8(img_path, gray_from_image(rec.image));
    std::vector<Point> pts(rec.annotation.points().begin(), rec.annotation.points().end());

    const std::string m1 = (base / "mask1.pgm").string();
    const std::string m2 = (base / "mask2.png").string();
    const BinaryMask a = infer(img_path, pts, r.checkpoint_path, m1);
    const BinaryMask b = infer(img_path, pts, r.checkpoint_path, m2);
    CHECK(a == b);
    CHECK(a.width() == rec.image.width());
    CHECK(a.height() == rec.image.height());
    // mask written in both formats decodes identically
    CHECK(mask_from_gray(read_gray8(m1)) == a);
    CHECK(mask_from_gray(read_gray8(m2)) == a);

    // repeated runs produce identical bytes
    const std::string m3 = (base / "mask3.pgm").string();
    infer(img_path, pts, r.checkpoint_path, m3);
    CHECK(slurp(m1) == slurp(m3));

    CHECK_THROWS_AS(infer(img_path, {{999, 10}, {2, 1}, {5, 5}, {1, 2}}, r.checkpoint_path,
                          (base / "bad.pgm").string()),
                    OutOfBoundsError);
    CHECK_THROWS_AS(infer(img_path, pts, (base / "missing.ckpt").string(),
                          (base / "bad.pgm").string()),
                    CheckpointError);
    fs::remove_all(base);
}

TEST_CASE("training skips contrastive terms when a whole batch lacks pure regions") {
    // full-image annotations leave no pure background anywhere
    const fs::path base = fs::temp_directory_path() / "paseg_skip_test";
    fs::remove_all(base);
    TrainConfig cfg = tiny_config((base / "run").string());
    cfg.preset = Preset::H;
    cfg.epochs = 1;

    Dataset ds = prepare_dataset(cfg);
    for (SampleRecord& rec : ds.train) {
        const int s = rec.image.width();
        rec.annotation = canonicalize_points(
            {{0, 0}, {double(s - 1), 0}, {double(s - 1), double(s - 1)}, {0, double(s - 1)}});
    }
    const TrainResult r = train_on(cfg, ds);
    const std::string log = slurp(r.log_path);
    CHECK(log.find("skip1=1") != std::string::npos);
    CHECK(log.find("skip3=1") != std::string::npos);
    fs::remove_all(base);
}
