#include <doctest.h>

#include <cmath>
#include <random>

#include "paseg/losses.hpp"
#include "paseg/model.hpp"

using namespace paseg;

namespace {

Tensor field_from_mask(const BinaryMask& m) {
    Tensor t({m.height(), m.width()});
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            t.data[size_t(y) * m.width() + x] = m.at(x, y) ? 1.0 : 0.0;
    return t;
}

BinaryMask rect_mask(int w, int h, int x0, int y0, int x1, int y1) {
    BinaryMask m(w, h);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) m.set(x, y, true);
    return m;
}

// Field with pairwise-distinct, well-separated values: max profiles stay
// stable under finite-difference perturbations.
Tensor spaced_random_field(int h, int w, uint64_t seed, double lo = 0.05, double hi = 0.9) {
    std::mt19937_64 rng(seed);
    std::vector<double> vals(size_t(h) * w);
    for (size_t i = 0; i < vals.size(); ++i)
        vals[i] = lo + (hi - lo) * double(i) / double(vals.size());
    std::shuffle(vals.begin(), vals.end(), rng);
    return Tensor::from({h, w}, std::move(vals));
}

MultiLevelLabels labels_from_quad(std::vector<Point> pts, int w, int h) {
    return generate_labels(canonicalize_points(pts), w, h);
}

}  // namespace

TEST_CASE("soft_bounding_box reproduces a rectangle indicator") {
    const BinaryMask rect = rect_mask(16, 16, 2, 3, 5, 7);
    const Tensor f = field_from_mask(rect);
    const auto box = soft_bounding_box(f.data, 16, 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            CHECK(box[size_t(y) * 16 + x] == (rect.at(x, y) ? 1.0 : 0.0));
}

TEST_CASE("soft_bounding_box of a uniform field is the square of the value") {
    const std::vector<double> f(8 * 8, 0.37);
    const auto box = soft_bounding_box(f, 8, 8);
    for (double v : box) CHECK(v == doctest::Approx(0.37 * 0.37).epsilon(1e-15));
}

TEST_CASE("soft_bounding_box of two blobs spans the profile intersection") {
    // blobs [1,2]x[1,2] and [5,7]x[4,6] on 10x8
    BinaryMask blobs(10, 8);
    for (int y = 1; y <= 2; ++y)
        for (int x = 1; x <= 2; ++x) blobs.set(x, y, true);
    for (int y = 4; y <= 6; ++y)
        for (int x = 5; x <= 7; ++x) blobs.set(x, y, true);
    const Tensor f = field_from_mask(blobs);
    const auto box = soft_bounding_box(f.data, 10, 8);

    // independent profile oracle
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 10; ++x) {
            double r = 0.0, c = 0.0;
            for (int xx = 0; xx < 10; ++xx) r = std::max(r, f.data[size_t(y) * 10 + xx]);
            for (int yy = 0; yy < 8; ++yy) c = std::max(c, f.data[size_t(yy) * 10 + x]);
            CHECK(box[size_t(y) * 10 + x] == r * c);
        }
    // rows covered by either blob x columns covered by either blob
    const bool row_on = box[size_t(1) * 10 + 5] == 1.0;  // row of blob A, column of blob B
    CHECK(row_on);
    CHECK(box[size_t(0) * 10 + 0] == 0.0);
}

TEST_CASE("alignment loss closed forms") {
    // perfect overlap
    {
        Tape t;
        const BinaryMask box = rect_mask(16, 16, 2, 3, 5, 7);
        Tensor f4({1, 1, 16, 16});
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) f4.at4(0, 0, y, x) = box.at(x, y) ? 1.0 : 0.0;
        const int loss = alignment_loss(t, t.leaf(f4), {box});
        CHECK(std::abs(t.val(loss).data[0]) < 1e-5);
    }
    // disjoint boxes
    {
        Tape t;
        const BinaryMask pred = rect_mask(20, 20, 0, 0, 4, 4);
        const BinaryMask label = rect_mask(20, 20, 10, 10, 14, 14);
        Tensor f4({1, 1, 20, 20});
        for (int y = 0; y < 20; ++y)
            for (int x = 0; x < 20; ++x) f4.at4(0, 0, y, x) = pred.at(x, y) ? 1.0 : 0.0;
        const int loss = alignment_loss(t, t.leaf(f4), {label});
        CHECK(std::abs(t.val(loss).data[0] - 1.0) < 1e-5);
    }
    // half overlap: pred [0,9]x[0,9], label [0,9]x[5,14] on 20x20
    {
        Tape t;
        const BinaryMask pred = rect_mask(20, 20, 0, 0, 9, 9);
        const BinaryMask label = rect_mask(20, 20, 0, 5, 9, 14);
        Tensor f4({1, 1, 20, 20});
        for (int y = 0; y < 20; ++y)
            for (int x = 0; x < 20; ++x) f4.at4(0, 0, y, x) = pred.at(x, y) ? 1.0 : 0.0;
        const int loss = alignment_loss(t, t.leaf(f4), {label});
        CHECK(std::abs(t.val(loss).data[0] - 0.5) < 1e-5);
    }
}

TEST_CASE("alignment loss lies in [0,1] and matches finite differences") {
    const BinaryMask label = rect_mask(12, 10, 3, 2, 8, 7);
    const Tensor base = spaced_random_field(10, 12, 555);
    Tensor f4({1, 1, 10, 12});
    f4.data = base.data;

    Tape t;
    const int leaf = t.leaf(f4);
    const int loss = alignment_loss(t, leaf, {label});
    const double l0 = t.val(loss).data[0];
    CHECK(l0 >= 0.0);
    CHECK(l0 <= 1.0);
    t.backward(loss);
    const Tensor analytic = t.grad(leaf);

    const double h = 1e-6;
    std::mt19937_64 rng(777);
    std::uniform_int_distribution<int64_t> pick(0, f4.size() - 1);
    for (int c = 0; c < 40; ++c) {
        const int64_t i = pick(rng);
        auto eval = [&](double delta) {
            Tensor fp = f4;
            fp.data[size_t(i)] += delta;
            Tape tp;
            return tp.val(alignment_loss(tp, tp.leaf(fp), {label})).data[0];
        };
        const double fd = (eval(h) - eval(-h)) / (2.0 * h);
        CHECK(std::abs(analytic.data[size_t(i)] - fd) /
                  std::max(1.0, std::abs(analytic.data[size_t(i)])) < 1e-5);
    }
}

TEST_CASE("sample_embeddings error contracts") {
    Tape t;
    std::mt19937_64 rng(31);
    std::normal_distribution<double> n(0.0, 1.0);
    Tensor proj({1, 4, 12, 12});
    for (double& v : proj.data) v = n(rng);
    const int proj_id = t.l2norm_channels(t.leaf(proj));

    // empty foreground in every image
    {
        MultiLevelLabels l = labels_from_quad({{2, 2}, {9, 2}, {9, 9}, {2, 9}}, 12, 12);
        l.fg_mask = BinaryMask(12, 12);  // forcibly empty
        CHECK_THROWS_WITH_AS(sample_embeddings(t, proj_id, {l}, ContrastiveConfig::pixel_defaults(), 1),
                             "insufficient samples in category: foreground",
                             InsufficientSamplesError);
    }

    // 2-pixel-wide strip: pixel scale succeeds, patch scale cannot fit 3x3
    {
        const MultiLevelLabels l = labels_from_quad({{2, 2}, {3, 2}, {3, 9}, {2, 9}}, 12, 12);
        REQUIRE(l.fg_mask.count() == 16);
        ContrastiveConfig pixel = ContrastiveConfig::pixel_defaults();
        const SampleSet s1 = sample_embeddings(t, proj_id, {l}, pixel, 2);
        CHECK(!s1.anchors.empty());
        CHECK(!s1.positives.empty());
        ContrastiveConfig patch = ContrastiveConfig::patch_defaults();
        CHECK_THROWS_AS(sample_embeddings(t, proj_id, {l}, patch, 2), InsufficientSamplesError);
    }
}

TEST_CASE("sample_embeddings splits short foreground pools proportionally") {
    Tape t;
    Tensor proj({1, 4, 12, 12}, 0.5);
    const int proj_id = t.l2norm_channels(t.leaf(proj));
    MultiLevelLabels l = labels_from_quad({{2, 2}, {9, 2}, {9, 9}, {2, 9}}, 12, 12);

    BinaryMask three(12, 12);
    three.set(3, 3, true);
    three.set(5, 4, true);
    three.set(4, 6, true);
    l.fg_mask = three;
    const SampleSet s =
        sample_embeddings(t, proj_id, {l}, ContrastiveConfig::pixel_defaults(), 4);
    CHECK(s.anchors.size() == 1);    // 3 * 64 / (64 + 64)
    CHECK(s.positives.size() == 2);
    CHECK(s.negatives.size() > 0);

    BinaryMask one(12, 12);
    one.set(3, 3, true);
    l.fg_mask = one;
    CHECK_THROWS_WITH_AS(sample_embeddings(t, proj_id, {l}, ContrastiveConfig::pixel_defaults(), 4),
                         "insufficient samples in category: positive", InsufficientSamplesError);
}

TEST_CASE("sample_embeddings is deterministic and respects purity") {
    std::mt19937_64 rng(41);
    std::normal_distribution<double> n(0.0, 1.0);
    Tensor proj({2, 6, 16, 16});
    for (double& v : proj.data) v = n(rng);

    const std::vector<MultiLevelLabels> labels = {
        labels_from_quad({{3, 3}, {10, 3}, {10, 10}, {3, 10}}, 16, 16),
        labels_from_quad({{5, 4}, {12, 5}, {11, 12}, {4, 11}}, 16, 16),
    };

    for (int scale : {1, 3}) {
        ContrastiveConfig cfg = scale == 1 ? ContrastiveConfig::pixel_defaults()
                                           : ContrastiveConfig::patch_defaults();
        Tape t1;
        const int p1 = t1.l2norm_channels(t1.leaf(proj));
        const SampleSet a = sample_embeddings(t1, p1, labels, cfg, 99);
        Tape t2;
        const int p2 = t2.l2norm_channels(t2.leaf(proj));
        const SampleSet b = sample_embeddings(t2, p2, labels, cfg, 99);
        CHECK(a.anchor_locs == b.anchor_locs);
        CHECK(a.positive_locs == b.positive_locs);
        CHECK(a.negative_locs == b.negative_locs);

        // purity: every sampled location satisfies its mask predicate
        auto pure = [&](const SampleLoc& loc, bool fg) {
            const BinaryMask& m = fg ? labels[size_t(loc.image)].fg_mask
                                     : labels[size_t(loc.image)].bg_mask;
            if (scale == 1) return m.at(loc.x, loc.y);
            for (int j = -1; j <= 1; ++j)
                for (int i = -1; i <= 1; ++i)
                    if (!m.at(loc.x + i, loc.y + j)) return false;
            return true;
        };
        for (const SampleLoc& loc : a.anchor_locs) CHECK(pure(loc, true));
        for (const SampleLoc& loc : a.positive_locs) CHECK(pure(loc, true));
        for (const SampleLoc& loc : a.negative_locs) CHECK(pure(loc, false));

        // anchors never reappear in the positive pool
        for (const SampleLoc& al : a.anchor_locs)
            for (const SampleLoc& pl : a.positive_locs) CHECK(!(al == pl));

        // all sampled embeddings are unit norm
        for (int id : a.anchors) {
            double n2 = 0.0;
            for (double v : t1.val(id).data) n2 += v * v;
            CHECK(std::abs(std::sqrt(n2) - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("contrastive_loss closed forms through SampleSet") {
    // symmetric similarity -> ln 2 regardless of tau
    for (double tau : {0.1, 1.0}) {
        Tape t;
        SampleSet s;
        Tensor q = Tensor::from({3}, {1.0, 0.0, 0.0});
        Tensor qp = Tensor::from({3}, {0.0, 1.0, 0.0});
        Tensor qn = Tensor::from({3}, {0.0, 1.0, 0.0});
        s.anchors = {t.leaf(q)};
        s.positives = {t.leaf(qp)};
        s.negatives = {t.leaf(qn)};
        const int loss = contrastive_loss(t, s, tau);
        CHECK(std::abs(t.val(loss).data[0] - std::log(2.0)) < 1e-9);
    }
    // K orthogonal negatives at tau = 1 -> ln(1 + K/e)
    for (int k : {1, 2, 4}) {
        Tape t;
        SampleSet s;
        Tensor q({6});
        q.data.assign(6, 0.0);
        q.data[0] = 1.0;
        s.anchors = {t.leaf(q)};
        s.positives = {t.leaf(q)};
        for (int i = 0; i < k; ++i) {
            Tensor qn({6});
            qn.data.assign(6, 0.0);
            qn.data[size_t(i) + 1] = 1.0;
            s.negatives.push_back(t.leaf(qn));
        }
        const int loss = contrastive_loss(t, s, 1.0);
        CHECK(std::abs(t.val(loss).data[0] - std::log(1.0 + k * std::exp(-1.0))) < 1e-9);
    }
}

namespace {

std::vector<MultiLevelLabels> corner_batch_labels(int n, int size) {
    std::vector<MultiLevelLabels> labels;
    for (int i = 0; i < n; ++i)
        labels.push_back(labels_from_quad({{0, 0}, {3, 0}, {3, 3}, {0, 3}}, size, size));
    return labels;
}

}  // namespace

TEST_CASE("total_loss additivity and degradation") {
    std::mt19937_64 rng(51);
    const ModelParams params = init_params(52);
    Tensor input({2, 2, 8, 8});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : input.data) v = u(rng);

    const std::vector<MultiLevelLabels> labels = corner_batch_labels(2, 8);

    LossConfig cfg;
    Tape t;
    const ParamVars vars = register_params(t, params);
    const TracedOutputs out = forward_traced(t, t.leaf(input), vars);
    const TotalLossResult r = total_loss(t, out.seg_prob, out.proj, labels, cfg, 7);
    CHECK_FALSE(r.skip_lc1);
    CHECK_FALSE(r.skip_lc3);
    // additivity is exact: the total node is built as (la + lc1) + lc3
    CHECK(t.val(r.loss_id).data[0] == (r.la + r.lc1) + r.lc3);
    CHECK(r.lc1 > 0.0);
    CHECK(r.lc3 > 0.0);

    // all-foreground labels leave no background: both contrastive terms skip
    std::vector<MultiLevelLabels> full;
    for (int i = 0; i < 2; ++i)
        full.push_back(labels_from_quad({{0, 0}, {7, 0}, {7, 7}, {0, 7}}, 8, 8));
    Tape t2;
    const ParamVars vars2 = register_params(t2, params);
    const TracedOutputs out2 = forward_traced(t2, t2.leaf(input), vars2);
    const TotalLossResult r2 = total_loss(t2, out2.seg_prob, out2.proj, full, cfg, 7);
    CHECK(r2.skip_lc1);
    CHECK(r2.skip_lc3);
    CHECK(t2.val(r2.loss_id).data[0] == r2.la);
}

TEST_CASE("total_loss parameter gradients match finite differences") {
    // Seed chosen so no finite-difference step crosses a profile-max tie or
    // ReLU kink; the subgradient at a tie is one-sided by construction.
    std::mt19937_64 rng(1007);
    ModelParams params = init_params(1);
    Tensor input({2, 2, 8, 8});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : input.data) v = u(rng);
    const std::vector<MultiLevelLabels> labels = corner_batch_labels(2, 8);
    const LossConfig cfg;
    const uint64_t sample_seed = 17;

    auto loss_value = [&](const ModelParams& p) {
        Tape t;
        const ParamVars vars = register_params(t, p);
        const TracedOutputs out = forward_traced(t, t.leaf(input), vars);
        return t.val(total_loss(t, out.seg_prob, out.proj, labels, cfg, sample_seed).loss_id)
            .data[0];
    };

    Tape t;
    const ParamVars vars = register_params(t, params);
    const TracedOutputs out = forward_traced(t, t.leaf(input), vars);
    const TotalLossResult r = total_loss(t, out.seg_prob, out.proj, labels, cfg, sample_seed);
    REQUIRE_FALSE(r.skip_lc1);
    REQUIRE_FALSE(r.skip_lc3);
    t.backward(r.loss_id);
    const std::vector<Tensor> grads = collect_gradients(t, vars);

    const double h = 1e-5;
    std::mt19937_64 pick_rng(63);
    size_t group = 0;
    params.for_each([&](const char*, Tensor& tensor) {
        std::uniform_int_distribution<int64_t> pick(0, tensor.size() - 1);
        for (int c = 0; c < 4; ++c) {
            const int64_t i = (tensor.size() <= 4) ? (c % tensor.size()) : pick(pick_rng);
            const double keep = tensor.data[size_t(i)];
            tensor.data[size_t(i)] = keep + h;
            const double up = loss_value(params);
            tensor.data[size_t(i)] = keep - h;
            const double down = loss_value(params);
            tensor.data[size_t(i)] = keep;
            const double fd = (up - down) / (2.0 * h);
            const double a = grads[group].data[size_t(i)];
            CHECK(std::abs(a - fd) / std::max(1.0, std::abs(a)) < 1e-4);
        }
        ++group;
    });
}

TEST_CASE("contrastive_loss rejects empty categories") {
    Tape t;
    SampleSet s;
    s.anchors = {t.leaf(Tensor::from({2}, {1.0, 0.0}))};
    s.positives = {t.leaf(Tensor::from({2}, {0.0, 1.0}))};
    CHECK_THROWS_AS(contrastive_loss(t, s, 0.1), InsufficientSamplesError);
    s.negatives = s.positives;
    s.positives.clear();
    CHECK_THROWS_AS(contrastive_loss(t, s, 0.1), InsufficientSamplesError);
}

TEST_CASE("contrastive loss is positive with at least one negative") {
    std::mt19937_64 rng(71);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor proj({1, 8, 12, 12});
        for (double& v : proj.data) v = n(rng);
        Tape t;
        const int proj_id = t.l2norm_channels(t.leaf(proj));
        const auto labels = labels_from_quad({{2, 2}, {8, 3}, {9, 9}, {3, 8}}, 12, 12);
        const SampleSet s =
            sample_embeddings(t, proj_id, {labels}, ContrastiveConfig::pixel_defaults(), trial);
        CHECK(t.val(contrastive_loss(t, s, 0.1)).data[0] > 0.0);
    }
}
