#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cegdro/dataset.hpp"
#include "cegdro/io.hpp"
#include "cegdro/model.hpp"
#include "cegdro/rng.hpp"

namespace cegdro {

// Multiplicative-weights state over the active group partition. q lives on
// the simplex; eta scales the exponent of the update.
struct GroupWeights {
    std::vector<double> q;
    double eta = 0.0;

    static GroupWeights uniform(int n_groups, double eta) {
        if (n_groups < 1) {
            throw std::invalid_argument("GroupWeights: need at least one group");
        }
        GroupWeights w;
        w.q.assign(n_groups, 1.0 / n_groups);
        w.eta = eta;
        return w;
    }
};

struct TrainConfig {
    double learning_rate = 0.02;
    int batch_size = 32;
    double eta = 0.1;
    double weight_decay = 0.0;
    int max_steps = 3000;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(learning_rate >= 0.0)) {
            throw std::invalid_argument("TrainConfig: learning_rate must be >= 0");
        }
        if (batch_size < 2) {
            throw std::invalid_argument("TrainConfig: batch_size must be >= 2");
        }
        if (!(eta >= 0.0)) {
            throw std::invalid_argument("TrainConfig: eta must be >= 0");
        }
        if (!(weight_decay >= 0.0)) {
            throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
        }
        if (max_steps < 1) {
            throw std::invalid_argument("TrainConfig: max_steps must be >= 1");
        }
    }
};

// Which group id each dataset index trains under. Ground-truth four groups
// when available, the two-way {B, C} split otherwise.
struct GroupPartition {
    int n_groups = 0;
    std::vector<int> group_of;

    static GroupPartition ground_truth(const Dataset& ds) {
        GroupPartition p;
        p.n_groups = kNumGroups;
        p.group_of = ds.group_ids;
        return p;
    }

    static GroupPartition bias_split(const Split& split, int n_total) {
        GroupPartition p;
        p.n_groups = 2;
        p.group_of.assign(n_total, 0);
        for (int i : split.bias_conflicting) {
            p.group_of[i] = 1;
        }
        return p;
    }

    static GroupPartition single(int n_total) {
        GroupPartition p;
        p.n_groups = 1;
        p.group_of.assign(n_total, 0);
        return p;
    }
};

struct StepRecord {
    int step = 0;                    // 1-based within the run
    std::vector<double> group_loss;  // per partition group; NaN when absent from the batch
    std::vector<double> q;           // snapshot after the multiplicative update
    double batch_loss = 0.0;         // sum_g q_g * mean_loss_g
};

struct PhaseRecord {
    std::string name;  // "warmup" | "stage" | "final" | "erm" | "groupdro"
    int stage = 0;     // 1-based for curriculum stages, 0 otherwise
    int epochs = 0;
    int steps = 0;
};

struct TrainLog {
    std::vector<StepRecord> steps;
    std::vector<PhaseRecord> phases;

    int groupdro_epochs() const {
        int n = 0;
        for (const auto& p : phases) {
            if (p.name == "stage" || p.name == "final" || p.name == "groupdro") {
                n += p.epochs;
            }
        }
        return n;
    }
};

// ---- multiplicative-weights update: q_g <- q_g * exp(eta * mean_loss_g), then renormalize ----

inline GroupWeights groupdro_update(const GroupWeights& weights,
                                    const std::vector<std::pair<int, double>>& group_losses) {
    GroupWeights out = weights;
    for (const auto& [g, loss] : group_losses) {
        if (g < 0 || g >= static_cast<int>(out.q.size())) {
            throw std::invalid_argument("groupdro_update: group id out of range");
        }
        if (!std::isfinite(loss) || loss < 0.0) {
            throw std::invalid_argument("groupdro_update: mean loss must be finite and >= 0");
        }
        out.q[g] *= std::exp(weights.eta * loss);
    }
    const double denom = std::accumulate(out.q.begin(), out.q.end(), 0.0);
    if (!std::isfinite(denom) || denom <= 0.0) {
        throw std::runtime_error("groupdro_update: normalization denominator is zero or non-finite");
    }
    for (double& v : out.q) {
        v /= denom;
    }
    return out;
}

namespace detail {

inline void sgd_step(ParamSet& p, const Gradients& g, double lr, double weight_decay) {
    auto apply = [&](std::vector<double>& param, const std::vector<double>& grad_v) {
        for (std::size_t i = 0; i < param.size(); ++i) {
            param[i] = param[i] - lr * grad_v[i] - lr * weight_decay * param[i];
        }
    };
    apply(p.w1.data, g.w1.data);
    apply(p.b1, g.b1);
    apply(p.w2.data, g.w2.data);
    apply(p.b2, g.b2);
}

struct BatchGroupStats {
    std::vector<int> count;
    std::vector<double> mean_loss;                     // NaN where count == 0
    std::vector<std::pair<int, double>> present;       // ascending group id
};

inline BatchGroupStats batch_group_stats(const Batch& batch, const std::vector<double>& losses,
                                         int n_groups, int step_index) {
    BatchGroupStats s;
    s.count.assign(n_groups, 0);
    s.mean_loss.assign(n_groups, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> sum(n_groups, 0.0);
    for (int i = 0; i < batch.n(); ++i) {
        const double l = losses[i];
        if (!std::isfinite(l)) {
            throw std::runtime_error("non-finite loss at step " + std::to_string(step_index));
        }
        const int g = batch.group_ids[i];
        s.count[g] += 1;
        sum[g] += l;
    }
    for (int g = 0; g < n_groups; ++g) {
        if (s.count[g] > 0) {
            s.mean_loss[g] = sum[g] / s.count[g];
            s.present.emplace_back(g, s.mean_loss[g]);
        }
    }
    return s;
}

}  // namespace detail

// One online GroupDRO step: per-group batch means, multiplicative-weights update, then a
// descent step on sum_g q_g * mean_loss_g using the updated weights.
inline StepRecord groupdro_step(Model& model, GroupWeights& weights, const Batch& batch,
                                const TrainConfig& cfg, int step_index = 1) {
    if (batch.n() == 0) {
        throw std::invalid_argument("groupdro_step: empty batch");
    }
    const int n_groups = static_cast<int>(weights.q.size());
    const auto losses = loss_per_sample(model, batch);
    const auto stats = detail::batch_group_stats(batch, losses, n_groups, step_index);

    weights = groupdro_update(weights, stats.present);

    std::vector<double> sample_weights(batch.n());
    for (int i = 0; i < batch.n(); ++i) {
        const int g = batch.group_ids[i];
        sample_weights[i] = weights.q[g] / stats.count[g];
    }
    const Gradients g = grad(model, batch, sample_weights);
    detail::sgd_step(model.params, g, cfg.learning_rate, cfg.weight_decay);

    StepRecord rec;
    rec.step = step_index;
    rec.group_loss = stats.mean_loss;
    rec.q = weights.q;
    rec.batch_loss = 0.0;
    for (const auto& [gid, mean] : stats.present) {
        rec.batch_loss += weights.q[gid] * mean;
    }
    return rec;
}

// Group-balanced ERM step: fixed per-group weight 1/n_groups, no q state.
// GroupDRO with eta = 0 matches this step for step.
inline StepRecord balanced_erm_step(Model& model, int n_groups, const Batch& batch,
                                    const TrainConfig& cfg, int step_index = 1) {
    if (batch.n() == 0) {
        throw std::invalid_argument("balanced_erm_step: empty batch");
    }
    const auto losses = loss_per_sample(model, batch);
    const auto stats = detail::batch_group_stats(batch, losses, n_groups, step_index);

    const double uniform_q = 1.0 / n_groups;
    std::vector<double> sample_weights(batch.n());
    for (int i = 0; i < batch.n(); ++i) {
        sample_weights[i] = uniform_q / stats.count[batch.group_ids[i]];
    }
    const Gradients g = grad(model, batch, sample_weights);
    detail::sgd_step(model.params, g, cfg.learning_rate, cfg.weight_decay);

    StepRecord rec;
    rec.step = step_index;
    rec.group_loss = stats.mean_loss;
    rec.q.assign(n_groups, uniform_q);
    rec.batch_loss = 0.0;
    for (const auto& [gid, mean] : stats.present) {
        rec.batch_loss += uniform_q * mean;
    }
    return rec;
}

// ---- batch streams ----

struct BatchStream {
    virtual std::vector<std::vector<int>> next_epoch() = 0;
    virtual ~BatchStream() = default;
};

// Seeded shuffle each epoch, consecutive chunks; final short chunk kept.
class ShuffleStream : public BatchStream {
  public:
    ShuffleStream(std::vector<int> indices, int batch_size, std::uint64_t seed)
        : indices_(std::move(indices)), batch_size_(batch_size), rng_(make_rng(seed)) {
        if (indices_.empty()) {
            throw std::invalid_argument("ShuffleStream: empty index set");
        }
        if (batch_size_ < 1) {
            throw std::invalid_argument("ShuffleStream: batch_size must be >= 1");
        }
    }

    std::vector<std::vector<int>> next_epoch() override {
        std::shuffle(indices_.begin(), indices_.end(), rng_);
        std::vector<std::vector<int>> batches;
        for (std::size_t start = 0; start < indices_.size(); start += batch_size_) {
            const std::size_t end = std::min(indices_.size(), start + batch_size_);
            batches.emplace_back(indices_.begin() + start, indices_.begin() + end);
        }
        return batches;
    }

  private:
    std::vector<int> indices_;
    std::size_t batch_size_;
    std::mt19937_64 rng_;
};

// Every batch carries batch_size/2 indices from each side. One epoch covers
// the larger set once; the smaller set cycles, reshuffled at each pass. A
// batch lists its B half first, then its C half.
class BalancedSampler : public BatchStream {
  public:
    BalancedSampler(std::vector<int> bias_confirming, std::vector<int> bias_conflicting,
                    int batch_size, std::uint64_t seed)
        : b_(std::move(bias_confirming)),
          c_(std::move(bias_conflicting)),
          half_(batch_size / 2),
          rng_(make_rng(seed)) {
        if (batch_size < 2 || batch_size % 2 != 0) {
            throw std::invalid_argument("BalancedSampler: batch_size must be even and >= 2");
        }
        if (b_.empty() || c_.empty()) {
            throw std::invalid_argument("BalancedSampler: both index sets must be nonempty");
        }
    }

    int batches_per_epoch() const {
        const std::size_t larger = std::max(b_.size(), c_.size());
        return static_cast<int>((larger + half_ - 1) / half_);
    }

    std::vector<std::vector<int>> next_epoch() override {
        CyclingDraw from_b(b_, rng_);
        CyclingDraw from_c(c_, rng_);
        const int n_batches = batches_per_epoch();
        std::vector<std::vector<int>> batches(n_batches);
        for (auto& batch : batches) {
            batch.reserve(2 * half_);
            for (std::size_t i = 0; i < half_; ++i) {
                batch.push_back(from_b.next());
            }
            for (std::size_t i = 0; i < half_; ++i) {
                batch.push_back(from_c.next());
            }
        }
        return batches;
    }

  private:
    struct CyclingDraw {
        std::vector<int> order;
        std::size_t pos = 0;
        std::mt19937_64& rng;

        CyclingDraw(const std::vector<int>& src, std::mt19937_64& r) : order(src), rng(r) {
            std::shuffle(order.begin(), order.end(), rng);
        }
        int next() {
            if (pos == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                pos = 0;
            }
            return order[pos++];
        }
    };

    std::vector<int> b_;
    std::vector<int> c_;
    std::size_t half_;
    std::mt19937_64 rng_;
};

// Spec-shaped convenience: one epoch of balanced index batches.
inline std::vector<std::vector<int>> balanced_batches(const std::vector<int>& bias_confirming,
                                                      const std::vector<int>& bias_conflicting,
                                                      int batch_size, std::uint64_t seed) {
    BalancedSampler sampler(bias_confirming, bias_conflicting, batch_size, seed);
    return sampler.next_epoch();
}

inline Batch make_batch(const Dataset& ds, const std::vector<int>& indices,
                        const GroupPartition& part) {
    Batch b;
    b.features = Matrix(indices.size(), ds.features.cols);
    b.labels.resize(indices.size());
    b.group_ids.resize(indices.size());
    b.indices = indices;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int src = indices[i];
        std::copy(ds.features.row(src), ds.features.row(src) + ds.features.cols,
                  b.features.row(i));
        b.labels[i] = ds.labels[src];
        b.group_ids[i] = part.group_of[src];
    }
    return b;
}

// ---- training drivers ----

// Runs `epochs` epochs of steps from `stream`. weights == nullptr trains the
// group-balanced ERM step instead of GroupDRO. step_budget <= 0 means
// unlimited; otherwise the phase stops once the global step counter hits it.
// Returns the updated global step counter.
inline int run_training_phase(Model& model, GroupWeights* weights, const Dataset& data,
                              const GroupPartition& part, BatchStream& stream,
                              const TrainConfig& cfg, int epochs, const std::string& phase_name,
                              int stage, TrainLog* log, int step_counter, int step_budget) {
    const int phase_start = step_counter;
    int epochs_run = 0;
    for (int e = 0; e < epochs; ++e) {
        if (step_budget > 0 && step_counter >= step_budget) {
            break;
        }
        bool truncated = false;
        for (const auto& idx : stream.next_epoch()) {
            if (step_budget > 0 && step_counter >= step_budget) {
                truncated = true;
                break;
            }
            const Batch batch = make_batch(data, idx, part);
            ++step_counter;
            StepRecord rec = weights != nullptr
                                 ? groupdro_step(model, *weights, batch, cfg, step_counter)
                                 : balanced_erm_step(model, part.n_groups, batch, cfg, step_counter);
            if (log != nullptr) {
                log->steps.push_back(std::move(rec));
            }
        }
        if (!truncated) {
            ++epochs_run;
        }
    }
    if (log != nullptr) {
        log->phases.push_back({phase_name, stage, epochs_run, step_counter - phase_start});
    }
    return step_counter;
}

// Plain minibatch SGD on mean cross-entropy. Stops early at cfg.max_steps.
// Returns the number of steps taken.
inline int train_erm(Model& model, const Dataset& train, const TrainConfig& cfg, int epochs,
                     TrainLog* log = nullptr) {
    cfg.validate();
    if (epochs < 1) {
        throw std::invalid_argument("train_erm: epochs must be >= 1");
    }
    std::vector<int> all(train.n());
    std::iota(all.begin(), all.end(), 0);
    ShuffleStream stream(all, cfg.batch_size, mix_seed(cfg.seed, {seed_tag::erm_shuffle}));
    const GroupPartition part = GroupPartition::single(train.n());
    return run_training_phase(model, nullptr, train, part, stream, cfg, epochs, "erm", 0, log, 0,
                              cfg.max_steps);
}

// GroupDRO over plain shuffled minibatches. Stops early at cfg.max_steps.
inline int train_groupdro(Model& model, GroupWeights& weights, const Dataset& train,
                          const GroupPartition& part, const TrainConfig& cfg, int epochs,
                          TrainLog* log = nullptr) {
    cfg.validate();
    if (epochs < 1) {
        throw std::invalid_argument("train_groupdro: epochs must be >= 1");
    }
    std::vector<int> all(train.n());
    std::iota(all.begin(), all.end(), 0);
    ShuffleStream stream(all, cfg.batch_size, mix_seed(cfg.seed, {seed_tag::erm_shuffle}));
    return run_training_phase(model, &weights, train, part, stream, cfg, epochs, "groupdro", 0,
                              log, 0, cfg.max_steps);
}

// Same batches as train_groupdro under the same seed; fixed uniform weights.
inline int train_balanced_erm(Model& model, const Dataset& train, const GroupPartition& part,
                              const TrainConfig& cfg, int epochs, TrainLog* log = nullptr) {
    cfg.validate();
    if (epochs < 1) {
        throw std::invalid_argument("train_balanced_erm: epochs must be >= 1");
    }
    std::vector<int> all(train.n());
    std::iota(all.begin(), all.end(), 0);
    ShuffleStream stream(all, cfg.batch_size, mix_seed(cfg.seed, {seed_tag::erm_shuffle}));
    return run_training_phase(model, nullptr, train, part, stream, cfg, epochs, "erm", 0, log, 0,
                              cfg.max_steps);
}

// ---- fixed step-log schema: step, loss_g0.., q_g0.. ----

inline std::string steplog_csv_header(int n_groups) {
    std::string s = "step";
    for (int g = 0; g < n_groups; ++g) {
        s += ",loss_g" + std::to_string(g);
    }
    for (int g = 0; g < n_groups; ++g) {
        s += ",q_g" + std::to_string(g);
    }
    return s;
}

inline std::string steplog_csv(const TrainLog& log, int n_groups) {
    std::string s = steplog_csv_header(n_groups) + "\n";
    for (const auto& rec : log.steps) {
        s += std::to_string(rec.step);
        for (int g = 0; g < n_groups; ++g) {
            s += ',';
            s += std::isnan(rec.group_loss[g]) ? "nan" : fmt_double(rec.group_loss[g]);
        }
        for (int g = 0; g < n_groups; ++g) {
            s += ',';
            s += fmt_double(rec.q[g]);
        }
        s += '\n';
    }
    return s;
}

}  // namespace cegdro
