#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cegdro/dataset.hpp"
#include "cegdro/dro.hpp"
#include "cegdro/metrics.hpp"
#include "cegdro/model.hpp"
#include "cegdro/rng.hpp"

namespace cegdro {

struct ArchConfig {
    ModelKind kind = ModelKind::mlp1;
    int input_dim = 0;  // 0: take the dataset's feature width
    int hidden_dim = 16;
    int n_classes = 2;

    int resolve_input_dim(const Dataset& ds) const { return input_dim > 0 ? input_dim : ds.dim(); }
};

// Stage ladder: K = round(1/R) stages, stage k releases N_k = floor(|D_C|*k/K)
// samples per side. The integer form of the P <- P + R loop; identical for
// R = 1/K and free of float accumulation drift.
struct CurriculumSchedule {
    double rate = 0.2;      // R
    int stage_epochs = 8;   // E_s
    int final_epochs = 11;  // E_f

    int n_stages() const { return static_cast<int>(std::lround(1.0 / rate)); }
    double stage_fraction(int k) const { return static_cast<double>(k) / n_stages(); }

    void validate() const {
        if (!(rate > 0.0) || !(rate <= 1.0)) {
            throw std::invalid_argument("CurriculumSchedule: rate must lie in (0, 1]");
        }
        if (stage_epochs < 1) {
            throw std::invalid_argument("CurriculumSchedule: stage_epochs must be >= 1");
        }
        if (final_epochs < 0) {
            throw std::invalid_argument("CurriculumSchedule: final_epochs must be >= 0");
        }
    }
};

// floor(|D_C| * k / K) in exact integer arithmetic
inline int stage_sample_count(int dc_size, int k, int n_stages) {
    return static_cast<int>((static_cast<long long>(dc_size) * k) / n_stages);
}

// I: D_B positions by warmup loss descending; J: D_C positions ascending.
// Ties break by ascending original dataset index.
struct SortedOrder {
    std::vector<int> hardest_first_b;  // I
    std::vector<int> easiest_first_c;  // J
};

struct WarmupResult {
    Model model;                       // M'
    std::vector<double> train_losses;  // per-sample, evaluated once post-training
    int steps = 0;
};

// Warmup pass: a fresh model of the target architecture, trained by ERM for
// exactly one epoch. Used only to score difficulty (and optionally to
// discover the split); its parameters are never copied into the main model.
inline WarmupResult warmup_erm(const ArchConfig& arch, const Dataset& train,
                               const TrainConfig& cfg) {
    if (train.n() == 0) {
        throw std::invalid_argument("warmup_erm: empty training set");
    }
    TrainConfig wcfg = cfg;
    wcfg.seed = mix_seed(cfg.seed, {seed_tag::warmup_shuffle});
    wcfg.max_steps = (train.n() + cfg.batch_size - 1) / cfg.batch_size;  // exactly one epoch

    WarmupResult out;
    out.model = init_model(arch.kind, arch.resolve_input_dim(train), arch.hidden_dim,
                           arch.n_classes, mix_seed(cfg.seed, {seed_tag::warmup_init}));
    out.steps = train_erm(out.model, train, wcfg, 1);
    out.train_losses = softmax_xent(forward(out.model, train.features), train.labels);
    return out;
}

// Misclassified-by-M' heuristic: wrong predictions form D_C.
inline Split discover_split(const Model& m_prime, const Dataset& train) {
    const auto pred = predict(m_prime, train.features);
    Split s;
    for (int i = 0; i < train.n(); ++i) {
        if (pred[i] == train.labels[i]) {
            s.bias_confirming.push_back(i);
        } else {
            s.bias_conflicting.push_back(i);
        }
    }
    if (s.bias_conflicting.empty()) {
        throw std::runtime_error("discover_split: no misclassified samples; D_C is empty");
    }
    if (s.bias_confirming.empty()) {
        throw std::runtime_error("discover_split: every sample misclassified; D_B is empty");
    }
    return s;
}

namespace detail {

// positions of `ids` ordered by (loss key, ascending dataset index)
inline std::vector<int> sorted_positions(const std::vector<int>& ids,
                                         const std::vector<double>& losses, bool descending) {
    std::vector<int> pos(ids.size());
    std::iota(pos.begin(), pos.end(), 0);
    std::sort(pos.begin(), pos.end(), [&](int a, int b) {
        const double la = losses[ids[a]];
        const double lb = losses[ids[b]];
        if (la != lb) {
            return descending ? la > lb : la < lb;
        }
        return ids[a] < ids[b];
    });
    return pos;
}

}  // namespace detail

inline SortedOrder sort_orders(const std::vector<double>& warmup_losses, const Split& split) {
    SortedOrder o;
    o.hardest_first_b = detail::sorted_positions(split.bias_confirming, warmup_losses, true);
    o.easiest_first_c = detail::sorted_positions(split.bias_conflicting, warmup_losses, false);
    return o;
}

// Pooled ordering for the standard curriculum: every training index,
// ascending by warmup loss, ties by ascending index.
inline std::vector<int> pooled_easiest_order(const std::vector<double>& warmup_losses, int n) {
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    const auto pos = detail::sorted_positions(all, warmup_losses, false);
    std::vector<int> out;
    out.reserve(pos.size());
    for (int p : pos) {
        out.push_back(all[p]);
    }
    return out;
}

struct StageSides {
    std::vector<int> b;  // dataset indices, hardest-first within the stage
    std::vector<int> c;  // dataset indices, easiest-first within the stage
};

inline StageSides stage_sides(const Split& split, const SortedOrder& order, int k,
                              const CurriculumSchedule& schedule) {
    const int n_stages = schedule.n_stages();
    if (k < 1 || k > n_stages) {
        throw std::invalid_argument("stage_sides: stage index out of range");
    }
    const int dc = static_cast<int>(split.bias_conflicting.size());
    const int n = stage_sample_count(dc, k, n_stages);
    if (n == 0) {
        throw std::runtime_error("stage subset empty: rate " + fmt_double(schedule.rate) +
                                 " too small for |D_C| = " + std::to_string(dc) +
                                 "; minimum viable rate is " + fmt_double(1.0 / dc));
    }
    if (n > static_cast<int>(split.bias_confirming.size())) {
        throw std::runtime_error("stage subset needs " + std::to_string(n) +
                                 " bias-confirming samples but only " +
                                 std::to_string(split.bias_confirming.size()) + " exist");
    }
    StageSides s;
    s.b.reserve(n);
    s.c.reserve(n);
    for (int i = 0; i < n; ++i) {
        s.b.push_back(split.bias_confirming[order.hardest_first_b[i]]);
        s.c.push_back(split.bias_conflicting[order.easiest_first_c[i]]);
    }
    return s;
}

// Stage subset S: first N_k of D_B under I plus first N_k of D_C under J.
inline std::vector<int> stage_subset(const Split& split, const SortedOrder& order, int k,
                                     const CurriculumSchedule& schedule) {
    StageSides s = stage_sides(split, order, k, schedule);
    std::vector<int> all = std::move(s.b);
    all.insert(all.end(), s.c.begin(), s.c.end());
    return all;
}

enum class SplitSource { ground_truth, discovered };
enum class CurriculumVariant { cegdro, easy_first_b, standard_curriculum };

inline std::string to_string(SplitSource s) {
    return s == SplitSource::ground_truth ? "ground_truth" : "discovered";
}

inline SplitSource split_source_from_string(const std::string& s) {
    if (s == "ground_truth") return SplitSource::ground_truth;
    if (s == "discovered") return SplitSource::discovered;
    throw std::invalid_argument("unknown split source: " + s);
}

struct StagePhaseInfo {
    int stage = 0;  // 0 for the final phase
    double fraction = 0.0;
    int n_per_side = 0;    // 0 for pooled (standard curriculum) stages
    int subset_size = 0;
    int epochs = 0;
    int steps = 0;
    std::vector<double> final_group_loss;
    double val_worst_group_accuracy = 0.0;
};

struct RunManifest {
    std::string method;
    std::uint64_t seed = 0;
    std::string split_source;
    int n_bias_confirming = 0;
    int n_bias_conflicting = 0;
    double rate = 0.0;
    int n_stages = 0;
    int stage_epochs = 0;
    int final_epochs = 0;
    int warmup_steps = 0;
    std::vector<StagePhaseInfo> stages;
    StagePhaseInfo final_phase;
    int total_steps = 0;  // warmup + stages + final
    std::uint64_t warmup_param_hash = 0;
    std::uint64_t initial_param_hash = 0;
    std::string step_log;  // q-trajectory CSV filename, filled by the harness
};

struct CurriculumResult {
    Model model;
    TrainLog log;
    RunManifest manifest;
};

inline std::uint64_t param_hash(const ParamSet& p) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const std::vector<double>& v) {
        for (double x : v) {
            std::uint64_t bits;
            static_assert(sizeof(bits) == sizeof(x));
            std::memcpy(&bits, &x, sizeof(bits));
            h ^= bits;
            h *= 0x100000001b3ULL;
        }
    };
    mix(p.w1.data);
    mix(p.b1);
    mix(p.w2.data);
    mix(p.b2);
    return h;
}

// The full staged procedure plus the two ablation variants: warmup scoring,
// split, difficulty orders, K stages, then the final full-data phase. The
// trained model is freshly initialized; the warmup model only scores
// difficulty.
inline CurriculumResult run_variant(CurriculumVariant variant, const ArchConfig& arch,
                                    const Dataset& train, const Dataset& val, SplitSource source,
                                    const CurriculumSchedule& schedule, const TrainConfig& cfg) {
    schedule.validate();
    cfg.validate();

    const WarmupResult warmup = warmup_erm(arch, train, cfg);

    const Split split = source == SplitSource::ground_truth ? ground_truth_split(train)
                                                            : discover_split(warmup.model, train);
    if (split.bias_confirming.size() < split.bias_conflicting.size()) {
        throw std::runtime_error("curriculum: |D_B| < |D_C|; the staged selection needs at least "
                                 "as many bias-confirming as bias-conflicting samples");
    }

    const GroupPartition part = source == SplitSource::ground_truth
                                    ? GroupPartition::ground_truth(train)
                                    : GroupPartition::bias_split(split, train.n());

    SortedOrder order;
    std::vector<int> pooled_easiest;  // standard curriculum only
    if (variant == CurriculumVariant::standard_curriculum) {
        pooled_easiest = pooled_easiest_order(warmup.train_losses, train.n());
    } else {
        order = sort_orders(warmup.train_losses, split);
        if (variant == CurriculumVariant::easy_first_b) {
            order.hardest_first_b =
                detail::sorted_positions(split.bias_confirming, warmup.train_losses, false);
        }
    }

    Model model = init_model(arch.kind, arch.resolve_input_dim(train), arch.hidden_dim,
                             arch.n_classes, mix_seed(cfg.seed, {seed_tag::model_init}));
    GroupWeights weights = GroupWeights::uniform(part.n_groups, cfg.eta);

    CurriculumResult out;
    out.manifest.seed = cfg.seed;
    out.manifest.split_source = to_string(source);
    out.manifest.n_bias_confirming = static_cast<int>(split.bias_confirming.size());
    out.manifest.n_bias_conflicting = static_cast<int>(split.bias_conflicting.size());
    out.manifest.rate = schedule.rate;
    out.manifest.n_stages = schedule.n_stages();
    out.manifest.stage_epochs = schedule.stage_epochs;
    out.manifest.final_epochs = schedule.final_epochs;
    out.manifest.warmup_steps = warmup.steps;
    out.manifest.warmup_param_hash = param_hash(warmup.model.params);
    out.manifest.initial_param_hash = param_hash(model.params);
    out.log.phases.push_back({"warmup", 0, 1, warmup.steps});

    const int n_stages = schedule.n_stages();
    int step = 0;
    for (int k = 1; k <= n_stages; ++k) {
        StagePhaseInfo info;
        info.stage = k;
        info.fraction = schedule.stage_fraction(k);
        const int steps_before = step;

        if (variant == CurriculumVariant::standard_curriculum) {
            const int n_sub = static_cast<int>(
                (static_cast<long long>(train.n()) * k) / n_stages);
            if (n_sub == 0) {
                throw std::runtime_error("standard curriculum: empty stage subset");
            }
            std::vector<int> subset(pooled_easiest.begin(), pooled_easiest.begin() + n_sub);
            info.subset_size = n_sub;
            ShuffleStream stream(std::move(subset), cfg.batch_size,
                                 mix_seed(cfg.seed, {seed_tag::stage_sampler, static_cast<std::uint64_t>(k)}));
            step = run_training_phase(model, &weights, train, part, stream, cfg,
                                      schedule.stage_epochs, "stage", k, &out.log, step, 0);
        } else {
            StageSides sides = stage_sides(split, order, k, schedule);
            info.n_per_side = static_cast<int>(sides.b.size());
            info.subset_size = 2 * info.n_per_side;
            BalancedSampler stream(std::move(sides.b), std::move(sides.c), cfg.batch_size,
                                   mix_seed(cfg.seed, {seed_tag::stage_sampler, static_cast<std::uint64_t>(k)}));
            step = run_training_phase(model, &weights, train, part, stream, cfg,
                                      schedule.stage_epochs, "stage", k, &out.log, step, 0);
        }

        info.epochs = schedule.stage_epochs;
        info.steps = step - steps_before;
        if (!out.log.steps.empty()) {
            info.final_group_loss = out.log.steps.back().group_loss;
        }
        info.val_worst_group_accuracy = evaluate(model, val).worst_group_accuracy;
        out.manifest.stages.push_back(std::move(info));
    }

    // final phase: the whole training set
    {
        StagePhaseInfo info;
        info.stage = 0;
        info.fraction = 1.0;
        info.subset_size = train.n();
        const int steps_before = step;
        if (variant == CurriculumVariant::standard_curriculum) {
            std::vector<int> all(train.n());
            std::iota(all.begin(), all.end(), 0);
            ShuffleStream stream(std::move(all), cfg.batch_size,
                                 mix_seed(cfg.seed, {seed_tag::final_sampler}));
            step = run_training_phase(model, &weights, train, part, stream, cfg,
                                      schedule.final_epochs, "final", 0, &out.log, step, 0);
        } else {
            BalancedSampler stream(split.bias_confirming, split.bias_conflicting, cfg.batch_size,
                                   mix_seed(cfg.seed, {seed_tag::final_sampler}));
            step = run_training_phase(model, &weights, train, part, stream, cfg,
                                      schedule.final_epochs, "final", 0, &out.log, step, 0);
        }
        info.epochs = schedule.final_epochs;
        info.steps = step - steps_before;
        if (!out.log.steps.empty()) {
            info.final_group_loss = out.log.steps.back().group_loss;
        }
        info.val_worst_group_accuracy = evaluate(model, val).worst_group_accuracy;
        out.manifest.final_phase = std::move(info);
    }

    out.manifest.total_steps = warmup.steps + step;
    out.model = std::move(model);
    return out;
}

inline CurriculumResult run_cegdro(const ArchConfig& arch, const Dataset& train, const Dataset& val,
                                   SplitSource source, const CurriculumSchedule& schedule,
                                   const TrainConfig& cfg) {
    return run_variant(CurriculumVariant::cegdro, arch, train, val, source, schedule, cfg);
}

inline nlohmann::json manifest_to_json(const RunManifest& m) {
    nlohmann::json j;
    j["method"] = m.method;
    j["seed"] = m.seed;
    j["split_source"] = m.split_source;
    j["split"] = {{"n_bias_confirming", m.n_bias_confirming},
                  {"n_bias_conflicting", m.n_bias_conflicting}};
    j["schedule"] = {{"rate", m.rate},
                     {"n_stages", m.n_stages},
                     {"stage_epochs", m.stage_epochs},
                     {"final_epochs", m.final_epochs}};
    j["warmup"] = {{"epochs", 1}, {"steps", m.warmup_steps}};
    auto phase_json = [](const StagePhaseInfo& p) {
        nlohmann::json pj;
        pj["stage"] = p.stage;
        pj["fraction"] = p.fraction;
        pj["n_per_side"] = p.n_per_side;
        pj["subset_size"] = p.subset_size;
        pj["epochs"] = p.epochs;
        pj["steps"] = p.steps;
        pj["final_group_loss"] = p.final_group_loss;
        pj["val_worst_group_accuracy"] = p.val_worst_group_accuracy;
        return pj;
    };
    j["stages"] = nlohmann::json::array();
    for (const auto& s : m.stages) {
        j["stages"].push_back(phase_json(s));
    }
    j["final_phase"] = phase_json(m.final_phase);
    j["total_steps"] = m.total_steps;
    j["warmup_param_hash"] = m.warmup_param_hash;
    j["initial_param_hash"] = m.initial_param_hash;
    j["step_log"] = m.step_log;
    return j;
}

}  // namespace cegdro
