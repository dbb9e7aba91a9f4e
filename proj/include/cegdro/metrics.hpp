#pragma once

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "cegdro/dataset.hpp"
#include "cegdro/io.hpp"
#include "cegdro/model.hpp"

namespace cegdro {

// Group-wise evaluation against the ground-truth groups. Groups absent from
// the dataset are excluded from the worst-group minimum and flagged.
struct GroupMetrics {
    std::vector<double> per_group_accuracy;
    std::vector<double> per_group_loss;
    std::vector<int> per_group_count;
    double average_accuracy = 0.0;
    double worst_group_accuracy = 0.0;
    std::vector<int> empty_groups;
};

inline GroupMetrics evaluate(const Model& m, const Dataset& ds, int n_groups = kNumGroups) {
    if (ds.n() == 0) {
        throw std::invalid_argument("evaluate: empty dataset");
    }
    const Matrix logits = forward(m, ds.features);
    const auto losses = softmax_xent(logits, ds.labels);

    GroupMetrics out;
    out.per_group_accuracy.assign(n_groups, 0.0);
    out.per_group_loss.assign(n_groups, 0.0);
    out.per_group_count.assign(n_groups, 0);

    std::vector<int> correct(n_groups, 0);
    int total_correct = 0;
    for (int i = 0; i < ds.n(); ++i) {
        const double* z = logits.row(i);
        int pred = 0;
        for (int c = 1; c < m.n_classes; ++c) {
            if (z[c] > z[pred]) {
                pred = c;
            }
        }
        const int g = ds.group_ids[i];
        out.per_group_count[g] += 1;
        out.per_group_loss[g] += losses[i];
        if (pred == ds.labels[i]) {
            correct[g] += 1;
            total_correct += 1;
        }
    }

    double worst = std::numeric_limits<double>::infinity();
    for (int g = 0; g < n_groups; ++g) {
        if (out.per_group_count[g] == 0) {
            out.empty_groups.push_back(g);
            continue;
        }
        out.per_group_accuracy[g] = static_cast<double>(correct[g]) / out.per_group_count[g];
        out.per_group_loss[g] /= out.per_group_count[g];
        worst = std::min(worst, out.per_group_accuracy[g]);
    }
    if (static_cast<int>(out.empty_groups.size()) == n_groups) {
        throw std::runtime_error("evaluate: every group is empty");
    }
    out.worst_group_accuracy = worst;
    out.average_accuracy = static_cast<double>(total_correct) / ds.n();
    return out;
}

inline double worst_group_objective(const std::vector<double>& per_group_losses) {
    if (per_group_losses.empty()) {
        throw std::invalid_argument("worst_group_objective: empty input");
    }
    return *std::max_element(per_group_losses.begin(), per_group_losses.end());
}

// argmax of validation worst-group accuracy; ties by higher average accuracy,
// then lowest index
inline std::size_t select_best_index(const std::vector<GroupMetrics>& candidates) {
    if (candidates.empty()) {
        throw std::invalid_argument("select_best: no candidates");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const auto& c = candidates[i];
        const auto& b = candidates[best];
        if (c.worst_group_accuracy > b.worst_group_accuracy ||
            (c.worst_group_accuracy == b.worst_group_accuracy &&
             c.average_accuracy > b.average_accuracy)) {
            best = i;
        }
    }
    return best;
}

template <typename Hyperparams>
const Hyperparams& select_best(const std::vector<std::pair<Hyperparams, GroupMetrics>>& candidates) {
    std::vector<GroupMetrics> metrics;
    metrics.reserve(candidates.size());
    for (const auto& [hp, gm] : candidates) {
        metrics.push_back(gm);
    }
    return candidates[select_best_index(metrics)].first;
}

// ---- one-row CSV form: method, seed, split, acc_avg, acc_worst, acc_g*, loss_g* ----

inline std::string metrics_csv_header(int n_groups = kNumGroups) {
    std::string s = "method,seed,split,acc_avg,acc_worst";
    for (int g = 0; g < n_groups; ++g) {
        s += ",acc_g" + std::to_string(g);
    }
    for (int g = 0; g < n_groups; ++g) {
        s += ",loss_g" + std::to_string(g);
    }
    return s;
}

inline std::string metrics_csv_row(const std::string& method, std::uint64_t seed,
                                   const std::string& split, const GroupMetrics& gm) {
    std::string s = method + "," + std::to_string(seed) + "," + split;
    s += "," + fmt_double(gm.average_accuracy);
    s += "," + fmt_double(gm.worst_group_accuracy);
    for (double a : gm.per_group_accuracy) {
        s += "," + fmt_double(a);
    }
    for (double l : gm.per_group_loss) {
        s += "," + fmt_double(l);
    }
    return s;
}

}  // namespace cegdro
