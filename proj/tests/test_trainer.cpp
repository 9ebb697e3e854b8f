// Loss functions, their gradients, and the iterated-learning loop.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "lta/dataset.hpp"
#include "lta/nets.hpp"
#include "lta/tensor_io.hpp"
#include "lta/trainer.hpp"

#include "helpers.hpp"

using namespace lta;
using testutil::TempDir;

namespace {

constexpr double kLn2 = 0.6931471805599453;

ILConfig tiny_il_config() {
    ILConfig cfg;
    cfg.generations = 2;
    cfg.imitation_epochs = 2;
    cfg.interaction_epochs = 3;
    cfg.lambda = 0.5f;
    cfg.lr = 0.5f;
    cfg.batch_size = 16;
    cfg.seed = 5;
    cfg.sparse_channels = 8;
    cfg.hidden = 8;
    return cfg;
}

// 3-class (4,4,2) dataset: two head classes x 20, one tail class x 5.
DatasetManifest tiny_dataset(const TempDir& dir, uint64_t seed) {
    SynthConfig s;
    s.head_classes = 2;
    s.tail_classes = 1;
    s.head_count = 20;
    s.tail_count = 5;
    s.test_per_class = 2;
    s.dims = {4, 4, 2};
    return synth_longtail(s, seed, dir.path());
}

void load_train_split(const DatasetManifest& m, std::vector<Tensor>& latents,
                      std::vector<LabelVector>& labels) {
    for (size_t i : m.split_indices(Split::train)) {
        latents.push_back(read_tensor(m.tensor_path(m.records[i])));
        labels.push_back(m.records[i].labels);
    }
}

}  // namespace

TEST_CASE("il config validation names the offending field") {
    CHECK_NOTHROW(ILConfig{}.validate());
    auto expect_field = [](ILConfig cfg, const char* field) {
        try {
            cfg.validate();
            FAIL_CHECK("expected ConfigError for " << field);
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find(field) != std::string::npos);
        }
    };
    ILConfig c;
    c.generations = 0;
    expect_field(c, "generations");
    c = {};
    c.imitation_epochs = 0;
    expect_field(c, "imitation_epochs");
    c = {};
    c.interaction_epochs = -1;
    expect_field(c, "interaction_epochs");
    c = {};
    c.lambda = 1.5f;
    expect_field(c, "lambda");
    c = {};
    c.lr = 0.0f;
    expect_field(c, "lr");
    c = {};
    c.batch_size = 0;
    expect_field(c, "batch_size");
    c = {};
    c.sparse_channels = 1;
    expect_field(c, "sparse_channels");
    c = {};
    c.hidden = 0;
    expect_field(c, "hidden");
}

TEST_CASE("binary cross-entropy hits its closed-form values") {
    // Uninformative prediction p = 1/2: -(y ln 1/2 + (1-y) ln 1/2) = ln 2.
    const Tensor p({1, 1, 2}, {0.5f, 0.5f});
    const Tensor y({1, 1, 2}, {1.f, 0.f});
    CHECK(imitation_loss(p, y) == doctest::Approx(kLn2).epsilon(1e-6));

    // Perfect prediction: only the 1e-7 clamp keeps it from exactly zero.
    CHECK(imitation_loss(y, y) <= 1e-5f);

    // Symmetric under permuting prediction and target channels together.
    const Tensor p2({1, 1, 2}, {0.5f, 0.5f});
    const Tensor ps({1, 1, 3}, {0.7f, 0.2f, 0.1f});
    const Tensor ys({1, 1, 3}, {1.f, 0.f, 0.f});
    const Tensor ps_perm({1, 1, 3}, {0.1f, 0.7f, 0.2f});
    const Tensor ys_perm({1, 1, 3}, {0.f, 1.f, 0.f});
    CHECK(imitation_loss(ps, ys) == doctest::Approx(imitation_loss(ps_perm, ys_perm)).epsilon(1e-7));

    CHECK_THROWS_AS(imitation_loss(p, ps), ShapeError);
}

TEST_CASE("reconstruction loss is the mean squared error") {
    const Tensor a({1, 1, 2}, {0.f, 2.f});
    const Tensor b({1, 1, 2}, {1.f, 0.f});
    // ((1-0)^2 + (0-2)^2) / 2 = 5/2.
    CHECK(reconstruction_loss(a, b) == doctest::Approx(2.5).epsilon(1e-7));
    CHECK(reconstruction_loss(a, a) == 0.0f);
    const Tensor c({1, 1, 2}, {1.f, 3.f});
    CHECK(reconstruction_loss(a, c) == doctest::Approx(1.0).epsilon(1e-7));
    CHECK_THROWS_AS(reconstruction_loss(a, Tensor({1, 1, 3})), ShapeError);
}

TEST_CASE("classification loss matches binary cross-entropy on the labels") {
    const std::vector<uint8_t> y{1, 0};
    const std::vector<float> s{0.9f, 0.1f};
    CHECK(classification_loss(y, s) == doctest::Approx(-std::log(0.9)).epsilon(1e-6));

    const std::vector<float> half{0.5f, 0.5f};
    CHECK(classification_loss(y, half) == doctest::Approx(kLn2).epsilon(1e-6));

    // Permutation applied to labels and scores together leaves it unchanged.
    const std::vector<uint8_t> yp{0, 1};
    const std::vector<float> sp{0.1f, 0.9f};
    CHECK(classification_loss(y, s) == classification_loss(yp, sp));

    CHECK_THROWS_AS(classification_loss(y, std::vector<float>{0.5f}), ShapeError);
}

TEST_CASE("interaction objective blends the two losses") {
    CHECK(interaction_objective(0.5f, 2.0f, 4.0f) == doctest::Approx(3.0).epsilon(1e-7));
    CHECK(interaction_objective(0.0f, 2.0f, 4.0f) == 4.0f);
    CHECK(interaction_objective(1.0f, 2.0f, 4.0f) == 2.0f);
    // Same expression, same floats.
    const float lam = 0.3f, lr = 1.7f, lc = 0.9f;
    CHECK(interaction_objective(lam, lr, lc) == lam * lr + (1.0f - lam) * lc);
    CHECK_THROWS_AS(interaction_objective(1.5f, 1.0f, 1.0f), ConfigError);
    CHECK_THROWS_AS(interaction_objective(-0.1f, 1.0f, 1.0f), ConfigError);
}

TEST_CASE("analytic loss gradients match central finite differences") {
    // Double precision, h = 1e-6: FD truncation ~h^2 and roundoff ~1e-10
    // both clear the 1e-8 gate.
    const double h = 1e-6;

    SUBCASE("binary cross-entropy") {
        const size_t n = 6;
        std::vector<double> p{0.2, 0.5, 0.9, 0.35, 0.6, 0.75};
        const std::vector<double> y{1, 0, 1, 0, 1, 0};
        std::vector<double> grad(n);
        bce_mean_grad<double>(p.data(), y.data(), n, grad.data());
        for (size_t i = 0; i < n; ++i) {
            const double keep = p[i];
            p[i] = keep + h;
            const double lp = bce_mean_grad<double>(p.data(), y.data(), n, nullptr);
            p[i] = keep - h;
            const double lm = bce_mean_grad<double>(p.data(), y.data(), n, nullptr);
            p[i] = keep;
            CHECK(std::abs((lp - lm) / (2 * h) - grad[i]) <= 1e-8);
        }
    }

    SUBCASE("mean squared error") {
        const size_t n = 5;
        const std::vector<double> a{0.1, -0.4, 0.7, 1.2, -0.9};
        std::vector<double> b{0.3, 0.2, -0.5, 1.0, 0.4};
        std::vector<double> grad(n);
        mse_grad<double>(a.data(), b.data(), n, grad.data());
        for (size_t i = 0; i < n; ++i) {
            const double keep = b[i];
            b[i] = keep + h;
            const double lp = mse_grad<double>(a.data(), b.data(), n, nullptr);
            b[i] = keep - h;
            const double lm = mse_grad<double>(a.data(), b.data(), n, nullptr);
            b[i] = keep;
            CHECK(std::abs((lp - lm) / (2 * h) - grad[i]) <= 1e-8);
        }
    }
}

namespace {

// Checks every parameter of `net` against a central finite difference of
// `loss`, which must recompute the full forward pass from current weights.
// Analytic gradients are read from the net's grad buffers as-is.
template <typename Net, typename LossFn>
void check_param_gradients(Net& net, LossFn loss, const char* what) {
    const double h = 1e-6;
    int checked = 0, failed = 0;
    double worst = 0.0;
    net.for_each_param([&](const char* name, std::vector<double>& w, std::vector<double>& g,
                           std::vector<uint32_t>) {
        (void)name;
        for (size_t i = 0; i < w.size(); ++i) {
            const double keep = w[i];
            w[i] = keep + h;
            const double lp = loss();
            w[i] = keep - h;
            const double lm = loss();
            w[i] = keep;
            const double fd = (lp - lm) / (2 * h);
            const double rel =
                std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-6});
            worst = std::max(worst, rel);
            ++checked;
            if (rel > 1e-3) ++failed;
        }
    });
    INFO(what << ": " << checked << " params, worst rel err " << worst);
    CHECK(failed == 0);
    CHECK(worst <= 1e-3);
}

TensorD random_tensor_d(std::vector<uint32_t> shape, Rng& rng) {
    TensorD t(std::move(shape));
    for (double& v : t.vec()) v = rng.uniform(-1.0, 1.0);
    return t;
}

}  // namespace

TEST_CASE("network gradients match finite differences through each loss") {
    // Tiny double networks: latent (2, 2, 2), sparse channels 3, hidden 3,
    // two classes. Seed picked away from ReLU kinks so the FD is smooth.
    Rng rng(1234);
    auto student = StudentNet<double>::make(2, 3, 3, rng);
    auto decoder = DecoderNet<double>::make(3, 3, 2, rng);
    auto classifier = ClassifierNet<double>::make(3, 3, 2, rng);
    const TensorD z = random_tensor_d({2, 2, 2}, rng);
    const size_t nsparse = 2 * 2 * 3;
    const size_t nlat = 2 * 2 * 2;

    SUBCASE("imitation loss through the student") {
        // Fixed one-hot target per coordinate.
        TensorD target({2, 2, 3});
        const int picks[4] = {0, 2, 1, 1};
        for (int i = 0; i < 4; ++i) target[static_cast<size_t>(i * 3 + picks[i])] = 1.0;

        auto loss = [&]() {
            StudentNet<double>::Cache cc;
            student.forward(z, cc);
            return static_cast<double>(
                bce_mean_grad<double>(cc.probs.data(), target.data(), nsparse, nullptr));
        };
        StudentNet<double>::Cache cc;
        student.zero_grad();
        student.forward(z, cc);
        std::vector<double> dprobs(nsparse);
        bce_mean_grad<double>(cc.probs.data(), target.data(), nsparse, dprobs.data());
        student.backward(cc, dprobs);
        check_param_gradients(student, loss, "L_I/student");
    }

    SUBCASE("reconstruction loss through student and decoder") {
        auto loss = [&]() {
            StudentNet<double>::Cache sc;
            DecoderNet<double>::Cache dc;
            student.forward(z, sc);
            TensorD probs({2, 2, 3});
            std::copy(sc.probs.begin(), sc.probs.end(), probs.data());
            decoder.forward(probs, dc);
            return static_cast<double>(
                mse_grad<double>(z.data(), dc.out.data(), nlat, nullptr));
        };
        StudentNet<double>::Cache sc;
        DecoderNet<double>::Cache dc;
        student.zero_grad();
        decoder.zero_grad();
        student.forward(z, sc);
        TensorD probs({2, 2, 3});
        std::copy(sc.probs.begin(), sc.probs.end(), probs.data());
        decoder.forward(probs, dc);
        std::vector<double> dout(nlat);
        mse_grad<double>(z.data(), dc.out.data(), nlat, dout.data());
        std::vector<double> dprobs(nsparse, 0.0);
        decoder.backward(dc, dout, dprobs);
        student.backward(sc, dprobs);
        check_param_gradients(student, loss, "L_R/student");
        check_param_gradients(decoder, loss, "L_R/decoder");
    }

    SUBCASE("classification loss through student and classifier") {
        const std::vector<double> y{1.0, 0.0};
        const int K = 2;
        auto loss = [&]() {
            StudentNet<double>::Cache sc;
            ClassifierNet<double>::Cache cc;
            student.forward(z, sc);
            TensorD probs({2, 2, 3});
            std::copy(sc.probs.begin(), sc.probs.end(), probs.data());
            classifier.forward(probs, cc);
            return static_cast<double>(
                bce_mean_grad<double>(cc.scores.data(), y.data(), size_t(K), nullptr));
        };
        StudentNet<double>::Cache sc;
        ClassifierNet<double>::Cache cc;
        student.zero_grad();
        classifier.zero_grad();
        student.forward(z, sc);
        TensorD probs({2, 2, 3});
        std::copy(sc.probs.begin(), sc.probs.end(), probs.data());
        classifier.forward(probs, cc);
        // The fused logit gradient (score - target)/K is exactly the chain
        // rule for unclamped mean BCE through the sigmoid.
        std::vector<double> dlogits(static_cast<size_t>(K));
        for (int k = 0; k < K; ++k)
            dlogits[size_t(k)] = (cc.scores[size_t(k)] - y[size_t(k)]) / K;
        std::vector<double> dprobs(nsparse, 0.0);
        classifier.backward_from_logits(cc, dlogits, &dprobs);
        student.backward(sc, dprobs);
        check_param_gradients(student, loss, "L_C/student");
        check_param_gradients(classifier, loss, "L_C/classifier");
    }
}

TEST_CASE("iterated learning produces the expected training history") {
    TempDir dir("il-history");
    const DatasetManifest m = tiny_dataset(dir, 21);
    const ILConfig cfg = tiny_il_config();
    const CheckpointSet out = run_il(cfg, m);

    REQUIRE(out.students.size() == 2);
    REQUIRE(out.decoders.size() == 2);
    REQUIRE(out.classifiers.size() == 2);

    // Generation 0 has no teacher, so no imitation rows: 3 interaction rows,
    // then generation 1 adds 2 imitation + 3 interaction.
    REQUIRE(out.history.size() == 3 + 2 + 3);
    const char* expect_phase[8] = {"interaction", "interaction", "interaction", "imitation",
                                   "imitation",   "interaction", "interaction", "interaction"};
    const int expect_gen[8] = {0, 0, 0, 1, 1, 1, 1, 1};
    const int expect_epoch[8] = {0, 1, 2, 0, 1, 0, 1, 2};
    for (int i = 0; i < 8; ++i) {
        const LossRecord& r = out.history[static_cast<size_t>(i)];
        CHECK(r.phase == expect_phase[i]);
        CHECK(r.generation == expect_gen[i]);
        CHECK(r.epoch == expect_epoch[i]);
        if (r.phase == std::string("imitation")) {
            CHECK(std::isfinite(r.imitation));
            CHECK(std::isnan(r.reconstruction));
            CHECK(std::isnan(r.classification));
            CHECK(std::isnan(r.combined));
        } else {
            CHECK(std::isnan(r.imitation));
            CHECK(std::isfinite(r.reconstruction));
            CHECK(std::isfinite(r.classification));
            CHECK(std::abs(r.combined - (cfg.lambda * r.reconstruction +
                                         (1.0 - cfg.lambda) * r.classification)) <= 1e-15);
        }
    }

    SUBCASE("a single generation never imitates") {
        ILConfig one = cfg;
        one.generations = 1;
        const CheckpointSet o1 = run_il(one, m);
        CHECK(o1.history.size() == 3);
        for (const LossRecord& r : o1.history) CHECK(r.phase == "interaction");
    }

    SUBCASE("training is deterministic") {
        const CheckpointSet again = run_il(cfg, m);
        REQUIRE(again.history.size() == out.history.size());
        for (size_t i = 0; i < out.history.size(); ++i) {
            const LossRecord& a = out.history[i];
            const LossRecord& b = again.history[i];
            auto close = [](double x, double y) {
                return (std::isnan(x) && std::isnan(y)) || std::abs(x - y) <= 1e-6;
            };
            CHECK(close(a.imitation, b.imitation));
            CHECK(close(a.reconstruction, b.reconstruction));
            CHECK(close(a.combined, b.combined));
        }
        CHECK(again.students[1].c1.w == out.students[1].c1.w);
    }
}

TEST_CASE("the teacher and earlier checkpoints stay frozen across generations") {
    TempDir dir("il-frozen");
    const DatasetManifest m = tiny_dataset(dir, 22);
    std::vector<Tensor> latents;
    std::vector<LabelVector> labels;
    load_train_split(m, latents, labels);
    const ILConfig cfg = tiny_il_config();

    CheckpointSet out;
    run_generation(out, latents, labels, cfg, 0);
    REQUIRE(out.students.size() == 1);
    const std::vector<float> s0_w = out.students[0].c1.w;
    const std::vector<float> d0_w = out.decoders[0].c1.w;
    const std::vector<float> c0_w = out.classifiers[0].head.w;

    run_generation(out, latents, labels, cfg, 1);
    REQUIRE(out.students.size() == 2);
    // Generation 0's snapshots are untouched by generation 1's training.
    CHECK(out.students[0].c1.w == s0_w);
    CHECK(out.decoders[0].c1.w == d0_w);
    CHECK(out.classifiers[0].head.w == c0_w);
    // The persistent decoder kept training, the fresh student differs too.
    CHECK(out.decoders[1].c1.w != d0_w);
    CHECK(out.students[1].c1.w != s0_w);

    CheckpointSet empty;
    CHECK_THROWS_AS(run_generation(empty, {}, {}, cfg, 0), TrainingError);
}

TEST_CASE("divergent training aborts instead of emitting non-finite losses") {
    TempDir dir("il-diverge");
    const DatasetManifest m = tiny_dataset(dir, 23);
    ILConfig cfg = tiny_il_config();
    cfg.generations = 1;
    cfg.interaction_epochs = 3;
    cfg.lr = 1e12f;  // one step blows the weights up, the next batch is non-finite
    cfg.batch_size = 8;
    CHECK_THROWS_AS(run_il(cfg, m), TrainingError);
}

TEST_CASE("loss history roundtrips through CSV") {
    TempDir dir("loss-csv");
    std::vector<LossRecord> h;
    LossRecord a;
    a.generation = 0;
    a.epoch = 0;
    a.phase = "interaction";
    a.reconstruction = 0.125;
    a.classification = 0.6931471805599453;
    a.combined = 0.40907359027997266;
    h.push_back(a);
    LossRecord b;
    b.generation = 1;
    b.epoch = 3;
    b.phase = "imitation";
    b.imitation = 1.0e-17;  // exercises full %.17g roundtrip
    h.push_back(b);

    const auto file = dir / "loss.csv";
    write_loss_csv(h, file);

    // Fixed header, one row per record, NaN as empty cell.
    const std::string text = testutil::read_text(file);
    CHECK(text.rfind("generation,epoch,phase,imitation,reconstruction,classification,combined\n",
                     0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 3);

    const auto back = read_loss_csv(file);
    REQUIRE(back.size() == 2);
    CHECK(back[0].generation == 0);
    CHECK(back[0].phase == "interaction");
    CHECK(std::isnan(back[0].imitation));
    CHECK(back[0].reconstruction == a.reconstruction);
    CHECK(back[0].classification == a.classification);
    CHECK(back[0].combined == a.combined);
    CHECK(back[1].generation == 1);
    CHECK(back[1].epoch == 3);
    CHECK(back[1].phase == "imitation");
    CHECK(back[1].imitation == b.imitation);
    CHECK(std::isnan(back[1].reconstruction));
    CHECK(std::isnan(back[1].combined));
}
