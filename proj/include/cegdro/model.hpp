#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cegdro/matrix.hpp"
#include "cegdro/rng.hpp"

namespace cegdro {

enum class ModelKind { linear, mlp1 };

inline std::string to_string(ModelKind k) { return k == ModelKind::linear ? "linear" : "mlp1"; }

inline ModelKind model_kind_from_string(const std::string& s) {
    if (s == "linear") return ModelKind::linear;
    if (s == "mlp1") return ModelKind::mlp1;
    throw std::invalid_argument("unknown model kind: " + s);
}

// Parameters of either classifier. linear uses only (w1, b1) as the output
// layer; mlp1 uses w1/b1 for the tanh hidden layer and w2/b2 for the output.
struct ParamSet {
    Matrix w1;
    std::vector<double> b1;
    Matrix w2;
    std::vector<double> b2;
};

using Gradients = ParamSet;

struct Model {
    ModelKind kind = ModelKind::linear;
    int input_dim = 0;
    int hidden_dim = 0;  // mlp1 only
    int n_classes = 0;
    ParamSet params;
};

// Samples drawn from a dataset for one optimization step. group_ids hold the
// ids of whatever partition the caller trains against (4 ground-truth groups
// or the 2-way B/C split). indices point back into the source dataset; the
// balanced sampler may repeat an index when one side is smaller than half the
// batch.
struct Batch {
    Matrix features;
    std::vector<int> labels;
    std::vector<int> group_ids;
    std::vector<int> indices;

    int n() const { return static_cast<int>(labels.size()); }
};

namespace detail {

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
    Matrix m(rows, cols);
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : m.data) {
        v = dist(rng);
    }
    return m;
}

}  // namespace detail

// Weights ~ N(0, 1/sqrt(fan_in)), biases zero.
inline Model init_model(ModelKind kind, int input_dim, int hidden_dim, int n_classes,
                        std::uint64_t seed) {
    if (input_dim < 1 || n_classes < 1 || (kind == ModelKind::mlp1 && hidden_dim < 1)) {
        throw std::invalid_argument("init_model: dims must be >= 1");
    }
    Model m;
    m.kind = kind;
    m.input_dim = input_dim;
    m.hidden_dim = kind == ModelKind::mlp1 ? hidden_dim : 0;
    m.n_classes = n_classes;
    auto rng = make_rng(seed);
    if (kind == ModelKind::linear) {
        m.params.w1 = detail::gaussian_matrix(n_classes, input_dim, 1.0 / std::sqrt(input_dim), rng);
        m.params.b1.assign(n_classes, 0.0);
    } else {
        m.params.w1 = detail::gaussian_matrix(hidden_dim, input_dim, 1.0 / std::sqrt(input_dim), rng);
        m.params.b1.assign(hidden_dim, 0.0);
        m.params.w2 = detail::gaussian_matrix(n_classes, hidden_dim, 1.0 / std::sqrt(hidden_dim), rng);
        m.params.b2.assign(n_classes, 0.0);
    }
    return m;
}

inline Gradients zero_gradients(const Model& m) {
    Gradients g;
    g.w1 = Matrix(m.params.w1.rows, m.params.w1.cols);
    g.b1.assign(m.params.b1.size(), 0.0);
    g.w2 = Matrix(m.params.w2.rows, m.params.w2.cols);
    g.b2.assign(m.params.b2.size(), 0.0);
    return g;
}

namespace detail {

// h = tanh(W1 x + b1) for one row
inline void hidden_activations(const Model& m, const double* x, double* h) {
    for (int j = 0; j < m.hidden_dim; ++j) {
        const double* w = m.params.w1.row(j);
        double s = m.params.b1[j];
        for (int d = 0; d < m.input_dim; ++d) {
            s += w[d] * x[d];
        }
        h[j] = std::tanh(s);
    }
}

inline void output_logits(const Matrix& w, const std::vector<double>& b, const double* in, int in_dim,
                          double* z) {
    for (std::size_t c = 0; c < w.rows; ++c) {
        const double* wc = w.row(c);
        double s = b[c];
        for (int d = 0; d < in_dim; ++d) {
            s += wc[d] * in[d];
        }
        z[c] = s;
    }
}

// max-subtracted softmax; safe for |logit| up to ~1e308, well past the 1e4
// the contract asks for
inline void softmax_row(const double* z, int k, double* p) {
    double zmax = z[0];
    for (int c = 1; c < k; ++c) {
        zmax = std::max(zmax, z[c]);
    }
    double denom = 0.0;
    for (int c = 0; c < k; ++c) {
        p[c] = std::exp(z[c] - zmax);
        denom += p[c];
    }
    for (int c = 0; c < k; ++c) {
        p[c] /= denom;
    }
}

inline double xent_from_logits(const double* z, int k, int label) {
    double zmax = z[0];
    for (int c = 1; c < k; ++c) {
        zmax = std::max(zmax, z[c]);
    }
    double denom = 0.0;
    for (int c = 0; c < k; ++c) {
        denom += std::exp(z[c] - zmax);
    }
    return std::log(denom) - (z[label] - zmax);
}

}  // namespace detail

inline Matrix forward(const Model& m, const Matrix& features) {
    if (static_cast<int>(features.cols) != m.input_dim) {
        throw std::invalid_argument("forward: feature width != input_dim");
    }
    Matrix logits(features.rows, static_cast<std::size_t>(m.n_classes));
    std::vector<double> h(std::max(m.hidden_dim, 1));
    for (std::size_t i = 0; i < features.rows; ++i) {
        const double* x = features.row(i);
        if (m.kind == ModelKind::linear) {
            detail::output_logits(m.params.w1, m.params.b1, x, m.input_dim, logits.row(i));
        } else {
            detail::hidden_activations(m, x, h.data());
            detail::output_logits(m.params.w2, m.params.b2, h.data(), m.hidden_dim, logits.row(i));
        }
    }
    return logits;
}

// argmax logit, ties toward the lower class id
inline std::vector<int> predict(const Model& m, const Matrix& features) {
    const Matrix logits = forward(m, features);
    std::vector<int> pred(logits.rows);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const double* z = logits.row(i);
        int best = 0;
        for (int c = 1; c < m.n_classes; ++c) {
            if (z[c] > z[best]) {
                best = c;
            }
        }
        pred[i] = best;
    }
    return pred;
}

inline std::vector<double> softmax_xent(const Matrix& logits, const std::vector<int>& labels) {
    std::vector<double> loss(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        loss[i] = detail::xent_from_logits(logits.row(i), static_cast<int>(logits.cols), labels[i]);
    }
    return loss;
}

inline std::vector<double> loss_per_sample(const Model& m, const Batch& batch) {
    if (batch.n() == 0) {
        throw std::invalid_argument("loss_per_sample: empty batch");
    }
    return softmax_xent(forward(m, batch.features), batch.labels);
}

// Exact gradient of sum_i sample_weights[i] * loss_i.
inline Gradients grad(const Model& m, const Batch& batch, const std::vector<double>& sample_weights) {
    if (static_cast<int>(sample_weights.size()) != batch.n()) {
        throw std::invalid_argument("grad: sample_weights length != batch size");
    }
    Gradients g = zero_gradients(m);
    const int k = m.n_classes;
    std::vector<double> z(k), p(k);
    std::vector<double> h(std::max(m.hidden_dim, 1));
    std::vector<double> delta_hidden(std::max(m.hidden_dim, 1));

    for (int i = 0; i < batch.n(); ++i) {
        const double w = sample_weights[i];
        const double* x = batch.features.row(i);
        const int y = batch.labels[i];

        if (m.kind == ModelKind::linear) {
            detail::output_logits(m.params.w1, m.params.b1, x, m.input_dim, z.data());
            detail::softmax_row(z.data(), k, p.data());
            for (int c = 0; c < k; ++c) {
                const double d_out = w * (p[c] - (c == y ? 1.0 : 0.0));
                g.b1[c] += d_out;
                double* gw = g.w1.row(c);
                for (int d = 0; d < m.input_dim; ++d) {
                    gw[d] += d_out * x[d];
                }
            }
        } else {
            detail::hidden_activations(m, x, h.data());
            detail::output_logits(m.params.w2, m.params.b2, h.data(), m.hidden_dim, z.data());
            detail::softmax_row(z.data(), k, p.data());
            std::fill(delta_hidden.begin(), delta_hidden.end(), 0.0);
            for (int c = 0; c < k; ++c) {
                const double d_out = w * (p[c] - (c == y ? 1.0 : 0.0));
                g.b2[c] += d_out;
                double* gw2 = g.w2.row(c);
                const double* w2c = m.params.w2.row(c);
                for (int j = 0; j < m.hidden_dim; ++j) {
                    gw2[j] += d_out * h[j];
                    delta_hidden[j] += d_out * w2c[j];
                }
            }
            for (int j = 0; j < m.hidden_dim; ++j) {
                const double d_hid = delta_hidden[j] * (1.0 - h[j] * h[j]);
                g.b1[j] += d_hid;
                double* gw1 = g.w1.row(j);
                for (int d = 0; d < m.input_dim; ++d) {
                    gw1[d] += d_hid * x[d];
                }
            }
        }
    }
    return g;
}

// ---- serialization (nlohmann emits shortest round-trip doubles, so the
//      JSON form restores parameters bit-exactly) ----

inline nlohmann::json model_to_json(const Model& m) {
    nlohmann::json j;
    j["kind"] = to_string(m.kind);
    j["input_dim"] = m.input_dim;
    j["hidden_dim"] = m.hidden_dim;
    j["n_classes"] = m.n_classes;
    j["shapes"] = {{"w1", {m.params.w1.rows, m.params.w1.cols}},
                   {"b1", m.params.b1.size()},
                   {"w2", {m.params.w2.rows, m.params.w2.cols}},
                   {"b2", m.params.b2.size()}};
    j["w1"] = m.params.w1.data;
    j["b1"] = m.params.b1;
    j["w2"] = m.params.w2.data;
    j["b2"] = m.params.b2;
    return j;
}

inline Model model_from_json(const nlohmann::json& j) {
    Model m;
    m.kind = model_kind_from_string(j.at("kind").get<std::string>());
    m.input_dim = j.at("input_dim").get<int>();
    m.hidden_dim = j.at("hidden_dim").get<int>();
    m.n_classes = j.at("n_classes").get<int>();
    const auto& shapes = j.at("shapes");
    m.params.w1 = Matrix(shapes.at("w1")[0].get<std::size_t>(), shapes.at("w1")[1].get<std::size_t>());
    m.params.w1.data = j.at("w1").get<std::vector<double>>();
    m.params.b1 = j.at("b1").get<std::vector<double>>();
    m.params.w2 = Matrix(shapes.at("w2")[0].get<std::size_t>(), shapes.at("w2")[1].get<std::size_t>());
    m.params.w2.data = j.at("w2").get<std::vector<double>>();
    m.params.b2 = j.at("b2").get<std::vector<double>>();
    if (m.params.w1.data.size() != m.params.w1.rows * m.params.w1.cols ||
        m.params.w2.data.size() != m.params.w2.rows * m.params.w2.cols) {
        throw std::runtime_error("model json: shape manifest disagrees with payload");
    }
    return m;
}

}  // namespace cegdro
