#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cegdro/io.hpp"
#include "cegdro/matrix.hpp"
#include "cegdro/rng.hpp"

namespace cegdro {

// Synthetic subpopulation-shift data: two classes, one binary spurious
// attribute. The spurious coordinates carry more signal per unit noise than
// the core ones, so a model that chases the easy direction first latches onto
// the attribute, which only agrees with the label on a rho-fraction of the
// training split. Validation and test are group-balanced.
struct DataConfig {
    int n_train = 4000;
    int n_val = 2000;
    int n_test = 2000;
    double rho = 0.95;  // P(attribute == label) in the train split, in (0.5, 1]
    double mu_core = 1.0;
    double sigma_core = 1.5;
    double mu_spur = 2.0;
    double sigma_spur = 0.5;
    int d_core = 5;
    int d_spur = 5;
    int d_noise = 10;
    std::uint64_t seed = 1337;

    int feature_dim() const { return d_core + d_spur + d_noise; }

    void validate() const {
        if (n_train < 1 || n_val < 1 || n_test < 1) {
            throw std::invalid_argument("DataConfig: split sizes must be >= 1");
        }
        if (!(rho > 0.5) || !(rho <= 1.0)) {
            throw std::invalid_argument("DataConfig: rho must lie in (0.5, 1.0]");
        }
        if (!(sigma_core > 0.0) || !(sigma_spur > 0.0)) {
            throw std::invalid_argument("DataConfig: sigmas must be positive");
        }
        if (d_core < 1 || d_spur < 1 || d_noise < 0) {
            throw std::invalid_argument("DataConfig: need d_core >= 1, d_spur >= 1, d_noise >= 0");
        }
    }
};

constexpr int kNumGroups = 4;

inline int group_of(int label, int attribute) { return 2 * label + attribute; }

struct Dataset {
    Matrix features;                  // n x d
    std::vector<int> labels;          // in {0,1}
    std::vector<int> attributes;      // in {0,1}
    std::vector<int> group_ids;       // 2*label + attribute

    int n() const { return static_cast<int>(labels.size()); }
    int dim() const { return static_cast<int>(features.cols); }
};

// Index partition into bias-confirming (attribute == label) and
// bias-conflicting (attribute != label) samples.
struct Split {
    std::vector<int> bias_confirming;   // D_B
    std::vector<int> bias_conflicting;  // D_C
};

namespace detail {

inline Dataset make_split(int n, double attr_match_prob, const DataConfig& cfg, std::mt19937_64& rng) {
    // Stratified exact-count construction: class counts within 1 of half,
    // per class exactly lround(p * n_class) samples with attribute == label.
    const int n0 = (n + 1) / 2;
    const int n1 = n - n0;

    std::vector<std::pair<int, int>> rows;  // (label, attribute)
    rows.reserve(n);
    for (int label = 0; label < 2; ++label) {
        const int n_class = label == 0 ? n0 : n1;
        const int n_match = static_cast<int>(std::lround(attr_match_prob * n_class));
        for (int i = 0; i < n_class; ++i) {
            const int attr = i < n_match ? label : 1 - label;
            rows.emplace_back(label, attr);
        }
    }
    std::shuffle(rows.begin(), rows.end(), rng);

    const int d = cfg.feature_dim();
    Dataset ds;
    ds.features = Matrix(static_cast<std::size_t>(n), static_cast<std::size_t>(d));
    ds.labels.resize(n);
    ds.attributes.resize(n);
    ds.group_ids.resize(n);

    std::normal_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
        const auto [label, attr] = rows[i];
        const double sign_y = label == 1 ? 1.0 : -1.0;
        const double sign_a = attr == 1 ? 1.0 : -1.0;
        double* row = ds.features.row(i);
        int j = 0;
        for (int k = 0; k < cfg.d_core; ++k, ++j) {
            row[j] = sign_y * cfg.mu_core + cfg.sigma_core * unit(rng);
        }
        for (int k = 0; k < cfg.d_spur; ++k, ++j) {
            row[j] = sign_a * cfg.mu_spur + cfg.sigma_spur * unit(rng);
        }
        for (int k = 0; k < cfg.d_noise; ++k, ++j) {
            row[j] = unit(rng);
        }
        ds.labels[i] = label;
        ds.attributes[i] = attr;
        ds.group_ids[i] = group_of(label, attr);
    }
    return ds;
}

}  // namespace detail

struct GeneratedData {
    Dataset train;
    Dataset val;
    Dataset test;
};

// Seed-deterministic: identical config -> bit-identical datasets. Each split
// draws from its own stream, so changing one split size leaves the others
// untouched.
inline GeneratedData generate(const DataConfig& cfg) {
    cfg.validate();
    GeneratedData out;
    {
        auto rng = make_rng(mix_seed(cfg.seed, {seed_tag::train_split}));
        out.train = detail::make_split(cfg.n_train, cfg.rho, cfg, rng);
    }
    {
        auto rng = make_rng(mix_seed(cfg.seed, {seed_tag::val_split}));
        out.val = detail::make_split(cfg.n_val, 0.5, cfg, rng);
    }
    {
        auto rng = make_rng(mix_seed(cfg.seed, {seed_tag::test_split}));
        out.test = detail::make_split(cfg.n_test, 0.5, cfg, rng);
    }
    return out;
}

inline Split ground_truth_split(const Dataset& train) {
    Split s;
    for (int i = 0; i < train.n(); ++i) {
        if (train.attributes[i] == train.labels[i]) {
            s.bias_confirming.push_back(i);
        } else {
            s.bias_conflicting.push_back(i);
        }
    }
    if (s.bias_conflicting.empty()) {
        throw std::runtime_error(
            "ground_truth_split: no bias-conflicting samples; curriculum undefined");
    }
    return s;
}

// ---- columnar CSV (sample_id, label, attribute, group, f0..f{d-1}) ----

inline std::string dataset_csv(const Dataset& ds) {
    std::string s = "sample_id,label,attribute,group";
    for (int j = 0; j < ds.dim(); ++j) {
        s += ",f" + std::to_string(j);
    }
    s += "\n";
    for (int i = 0; i < ds.n(); ++i) {
        s += std::to_string(i);
        s += ',';
        s += std::to_string(ds.labels[i]);
        s += ',';
        s += std::to_string(ds.attributes[i]);
        s += ',';
        s += std::to_string(ds.group_ids[i]);
        const double* row = ds.features.row(i);
        for (int j = 0; j < ds.dim(); ++j) {
            s += ',';
            s += fmt_double(row[j]);
        }
        s += '\n';
    }
    return s;
}

inline Dataset dataset_from_csv(const std::string& text) {
    std::stringstream ss(text);
    std::string line;
    if (!std::getline(ss, line)) {
        throw std::runtime_error("dataset csv: empty input");
    }
    const auto header = split_csv_line(line);
    if (header.size() < 5 || header[0] != "sample_id") {
        throw std::runtime_error("dataset csv: unexpected header");
    }
    const int d = static_cast<int>(header.size()) - 4;
    std::vector<std::vector<double>> feat_rows;
    Dataset ds;
    while (std::getline(ss, line)) {
        if (line.empty()) {
            continue;
        }
        const auto f = split_csv_line(line);
        if (static_cast<int>(f.size()) != d + 4) {
            throw std::runtime_error("dataset csv: ragged row");
        }
        ds.labels.push_back(std::stoi(f[1]));
        ds.attributes.push_back(std::stoi(f[2]));
        ds.group_ids.push_back(std::stoi(f[3]));
        std::vector<double> row(d);
        for (int j = 0; j < d; ++j) {
            row[j] = parse_double(f[4 + j]);
        }
        feat_rows.push_back(std::move(row));
    }
    const int n = static_cast<int>(feat_rows.size());
    ds.features = Matrix(n, d);
    for (int i = 0; i < n; ++i) {
        std::copy(feat_rows[i].begin(), feat_rows[i].end(), ds.features.row(i));
    }
    return ds;
}

}  // namespace cegdro
