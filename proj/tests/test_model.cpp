#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "cegdro/model.hpp"
#include "oracles.hpp"

using namespace cegdro;

namespace {

Batch random_batch(int n, int dim, std::uint64_t seed, int n_classes = 2) {
    Batch b;
    b.features = Matrix(n, dim);
    auto rng = make_rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::uniform_int_distribution<int> label(0, n_classes - 1);
    for (auto& v : b.features.data) {
        v = dist(rng);
    }
    for (int i = 0; i < n; ++i) {
        b.labels.push_back(label(rng));
        b.group_ids.push_back(0);
        b.indices.push_back(i);
    }
    return b;
}

}  // namespace

TEST_CASE("init is deterministic and shaped correctly") {
    const Model a = init_model(ModelKind::linear, 20, 0, 2, 77);
    const Model b = init_model(ModelKind::linear, 20, 0, 2, 77);
    CHECK(a.params.w1 == b.params.w1);
    CHECK(a.params.b1 == b.params.b1);

    const Model m = init_model(ModelKind::mlp1, 20, 16, 2, 77);
    CHECK(m.params.w1.rows == 16);
    CHECK(m.params.w1.cols == 20);
    CHECK(m.params.w2.rows == 2);
    CHECK(m.params.w2.cols == 16);
    CHECK(m.params.b1.size() == 16);
    CHECK(m.params.b2.size() == 2);
    for (double v : m.params.b1) {
        CHECK(v == 0.0);
    }
    for (double v : m.params.b2) {
        CHECK(v == 0.0);
    }

    const Model m2 = init_model(ModelKind::mlp1, 20, 16, 2, 78);
    CHECK_FALSE(m.params.w1 == m2.params.w1);
}

TEST_CASE("init rejects nonpositive dims") {
    CHECK_THROWS_AS(init_model(ModelKind::linear, 0, 0, 2, 1), std::invalid_argument);
    CHECK_THROWS_AS(init_model(ModelKind::mlp1, 4, 0, 2, 1), std::invalid_argument);
    CHECK_THROWS_AS(init_model(ModelKind::mlp1, 4, 3, 0, 1), std::invalid_argument);
}

TEST_CASE("zero model maps to zero logits and ln 2 loss") {
    Model m = init_model(ModelKind::linear, 6, 0, 2, 3);
    std::fill(m.params.w1.data.begin(), m.params.w1.data.end(), 0.0);
    const Batch b = random_batch(5, 6, 11);
    const Matrix logits = forward(m, b.features);
    for (double v : logits.data) {
        CHECK(v == 0.0);
    }
    for (double l : loss_per_sample(m, b)) {
        CHECK_THAT(l, Catch::Matchers::WithinAbs(std::log(2.0), 1e-15));
    }
}

TEST_CASE("linear forward is Wx + b") {
    Model m = init_model(ModelKind::linear, 3, 0, 2, 5);
    m.params.b1 = {0.25, -1.5};
    Batch b = random_batch(4, 3, 21);
    const Matrix logits = forward(m, b.features);
    for (int i = 0; i < 4; ++i) {
        for (int c = 0; c < 2; ++c) {
            double want = m.params.b1[c];
            for (int d = 0; d < 3; ++d) {
                want += m.params.w1(c, d) * b.features(i, d);
            }
            CHECK_THAT(logits(i, c), Catch::Matchers::WithinRel(want, 1e-14));
        }
    }
}

TEST_CASE("forward rejects mismatched feature width") {
    const Model m = init_model(ModelKind::linear, 3, 0, 2, 5);
    const Batch b = random_batch(2, 4, 9);
    CHECK_THROWS_AS(forward(m, b.features), std::invalid_argument);
}

TEST_CASE("mlp1 forward matches an independent evaluation") {
    const Model m = init_model(ModelKind::mlp1, 4, 3, 2, 99);
    const Batch b = random_batch(3, 4, 31);
    const Matrix logits = forward(m, b.features);
    // reference: long double, accumulation over samples in transposed order
    for (int i = 0; i < 3; ++i) {
        long double h[3];
        for (int j = 0; j < 3; ++j) {
            long double s = m.params.b1[j];
            for (int d = 0; d < 4; ++d) {
                s += static_cast<long double>(m.params.w1(j, d)) * b.features(i, d);
            }
            h[j] = std::tanh(s);
        }
        for (int c = 0; c < 2; ++c) {
            long double z = m.params.b2[c];
            for (int j = 0; j < 3; ++j) {
                z += static_cast<long double>(m.params.w2(c, j)) * h[j];
            }
            CHECK_THAT(logits(i, c),
                       Catch::Matchers::WithinAbs(static_cast<double>(z), 1e-12));
        }
    }
}

TEST_CASE("extreme logits lose no precision") {
    // logits (10, -10), label 0: direct evaluation of the stabilized formula
    Model m = init_model(ModelKind::linear, 1, 0, 2, 1);
    m.params.w1(0, 0) = 10.0;
    m.params.w1(1, 0) = -10.0;
    m.params.b1 = {0.0, 0.0};
    Batch b;
    b.features = Matrix(1, 1);
    b.features(0, 0) = 1.0;
    b.labels = {0};
    b.group_ids = {0};
    b.indices = {0};
    const double loss = loss_per_sample(m, b)[0];
    const double expected = std::log1p(std::exp(-20.0));  // 2.0611536e-9
    CHECK_THAT(loss, Catch::Matchers::WithinRel(expected, 1e-6));
    CHECK(loss > 0.0);

    // no overflow for |logit| up to 1e4
    m.params.w1(0, 0) = 1.0e4;
    m.params.w1(1, 0) = -1.0e4;
    CHECK(std::isfinite(loss_per_sample(m, b)[0]));
}

TEST_CASE("loss is invariant to shifting both logits") {
    Model m = init_model(ModelKind::linear, 5, 0, 2, 17);
    const Batch b = random_batch(6, 5, 41);
    const auto base = loss_per_sample(m, b);
    Model shifted = m;
    shifted.params.b1[0] += 7.5;
    shifted.params.b1[1] += 7.5;
    const auto moved = loss_per_sample(shifted, b);
    for (std::size_t i = 0; i < base.size(); ++i) {
        CHECK_THAT(moved[i], Catch::Matchers::WithinAbs(base[i], 1e-12));
        CHECK(base[i] >= 0.0);
    }
}

TEST_CASE("zero sample weights give a zero gradient") {
    const Model m = init_model(ModelKind::mlp1, 4, 3, 2, 7);
    const Batch b = random_batch(5, 4, 51);
    const Gradients g = grad(m, b, std::vector<double>(5, 0.0));
    for (double v : g.w1.data) {
        CHECK(v == 0.0);
    }
    for (double v : g.w2.data) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("grad rejects mismatched weight lengths") {
    const Model m = init_model(ModelKind::linear, 4, 0, 2, 7);
    const Batch b = random_batch(5, 4, 51);
    CHECK_THROWS_AS(grad(m, b, std::vector<double>(4, 1.0)), std::invalid_argument);
}

TEST_CASE("doubling sample weights doubles the gradient exactly") {
    const Model m = init_model(ModelKind::mlp1, 6, 4, 2, 13);
    const Batch b = random_batch(8, 6, 61);
    std::vector<double> w(8, 0.35);
    const Gradients g1 = grad(m, b, w);
    for (double& v : w) {
        v *= 2.0;
    }
    const Gradients g2 = grad(m, b, w);
    for (std::size_t i = 0; i < g1.w1.data.size(); ++i) {
        CHECK(g2.w1.data[i] == 2.0 * g1.w1.data[i]);
    }
    for (std::size_t i = 0; i < g1.w2.data.size(); ++i) {
        CHECK(g2.w2.data[i] == 2.0 * g1.w2.data[i]);
    }
    for (std::size_t i = 0; i < g1.b1.size(); ++i) {
        CHECK(g2.b1[i] == 2.0 * g1.b1[i]);
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    const double eps = 1e-5;
    for (const ModelKind kind : {ModelKind::linear, ModelKind::mlp1}) {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const Model m = init_model(kind, 10, 6, 2, seed);
            const Batch b = random_batch(8, 10, seed * 101);
            std::vector<double> w(8);
            auto rng = make_rng(seed * 31 + 7);
            std::uniform_real_distribution<double> u(0.1, 1.5);
            for (double& v : w) {
                v = u(rng);
            }
            const Gradients analytic = grad(m, b, w);
            const Gradients fd = oracle::finite_difference_grad(m, b, w, eps);
            const double err = oracle::grad_check_error(analytic, fd);
            INFO("kind=" << to_string(kind) << " seed=" << seed << " err=" << err);
            CHECK(err < 1e-5);
        }
    }
}

TEST_CASE("model json round-trips bit-exactly") {
    for (const ModelKind kind : {ModelKind::linear, ModelKind::mlp1}) {
        const Model m = init_model(kind, 9, 5, 2, 2024);
        const auto j = model_to_json(m);
        const Model back = model_from_json(nlohmann::json::parse(j.dump()));
        CHECK(back.kind == m.kind);
        CHECK(back.input_dim == m.input_dim);
        CHECK(back.hidden_dim == m.hidden_dim);
        CHECK(back.n_classes == m.n_classes);
        CHECK(back.params.w1 == m.params.w1);
        CHECK(back.params.b1 == m.params.b1);
        CHECK(back.params.w2 == m.params.w2);
        CHECK(back.params.b2 == m.params.b2);
    }
}

TEST_CASE("prediction breaks ties toward the lower class id") {
    Model m = init_model(ModelKind::linear, 2, 0, 2, 4);
    std::fill(m.params.w1.data.begin(), m.params.w1.data.end(), 0.0);
    Batch b = random_batch(3, 2, 77);
    const auto pred = predict(m, b.features);
    for (int p : pred) {
        CHECK(p == 0);
    }
}
