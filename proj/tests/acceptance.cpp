// Acceptance suite: runs every criterion at its stated tolerance and prints
// one pass/fail line per criterion. Exit code is the number of failures.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cegdro/cegdro.hpp"
#include "oracles.hpp"

using namespace cegdro;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double now_seconds() {
    using clock = std::chrono::steady_clock;
    static const auto start = clock::now();
    return std::chrono::duration<double>(clock::now() - start).count();
}

std::string fmt(double v, int prec = 3) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

// ---- shared experiment state (default config, budget-matched arms) ----

int expected_dc(const DataConfig& d) {
    const int n0 = (d.n_train + 1) / 2;
    const int n1 = d.n_train - n0;
    const int m0 = static_cast<int>(std::lround(d.rho * n0));
    const int m1 = static_cast<int>(std::lround(d.rho * n1));
    return (n0 - m0) + (n1 - m1);
}

ExperimentConfig acceptance_config() {
    ExperimentConfig cfg;  // default data/arch/schedule/grid
    cfg.n_selection_runs = 8;
    cfg.n_report_runs = 5;
    cfg.root_seed = 20240613;
    // identical step budget across arms: flat methods stop exactly at the
    // curriculum's planned step count
    cfg.train.max_steps = planned_curriculum_steps(cfg.schedule, cfg.data.n_train,
                                                   expected_dc(cfg.data), cfg.train.batch_size);
    return cfg;
}

const GeneratedData& shared_data() {
    static const GeneratedData data = generate(acceptance_config().data);
    return data;
}

const MethodResult& tuned(Method m) {
    static std::map<Method, MethodResult> cache;
    auto it = cache.find(m);
    if (it == cache.end()) {
        const ExperimentConfig cfg = acceptance_config();
        it = cache.emplace(m, run_method_experiment(m, cfg, shared_data(), nullptr)).first;
    }
    return it->second;
}

std::string row_summary(const MethodResult& r) {
    std::string s = to_string(r.method) + " lr=" + fmt_double(r.chosen.learning_rate);
    if (r.method != Method::erm) {
        s += " eta=" + fmt_double(r.chosen.eta);
    }
    s += " avg=" + fmt(r.mean_avg * 100, 1) + "±" + fmt(r.sd_avg * 100, 1);
    s += " worst=" + fmt(r.mean_worst * 100, 1) + "±" + fmt(r.sd_worst * 100, 1);
    return s;
}

// ---- criterion 1: gradients vs central finite differences ----

Outcome criterion_gradients() {
    const double t0 = now_seconds();
    double worst_err = 0.0;
    for (const ModelKind kind : {ModelKind::linear, ModelKind::mlp1}) {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const Model m = init_model(kind, 12, 7, 2, seed);
            Batch b;
            b.features = Matrix(8, 12);
            auto rng = make_rng(seed * 977);
            std::normal_distribution<double> dist(0.0, 1.0);
            std::uniform_real_distribution<double> u(0.1, 1.5);
            for (auto& v : b.features.data) {
                v = dist(rng);
            }
            std::vector<double> w(8);
            for (int i = 0; i < 8; ++i) {
                b.labels.push_back(static_cast<int>(rng() % 2));
                b.group_ids.push_back(0);
                b.indices.push_back(i);
                w[i] = u(rng);
            }
            const Gradients analytic = grad(m, b, w);
            const Gradients fd = oracle::finite_difference_grad(m, b, w, 1e-5);
            worst_err = std::max(worst_err, oracle::grad_check_error(analytic, fd));
        }
    }
    const double dt = now_seconds() - t0;
    return {worst_err < 1e-5 && dt < 5.0,
            "max rel err " + fmt_double(worst_err) + " (< 1e-5), " + fmt(dt, 2) + "s (< 5s)"};
}

// ---- criterion 2: multiplicative-weights oracle and simplex stability ----

Outcome criterion_eq2_oracle() {
    const double t0 = now_seconds();
    auto rng = make_rng(77777);
    std::uniform_real_distribution<double> loss_dist(0.0, 5.0);
    std::uniform_real_distribution<double> eta_dist(0.0, 2.0);
    std::uniform_real_distribution<double> mass(0.01, 1.0);
    double worst_diff = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int k = 2 + static_cast<int>(rng() % 5);
        GroupWeights w;
        w.q.resize(k);
        double total = 0.0;
        for (double& v : w.q) {
            v = mass(rng);
            total += v;
        }
        for (double& v : w.q) {
            v /= total;
        }
        w.eta = eta_dist(rng);
        std::vector<std::pair<int, double>> losses;
        for (int g = 0; g < k; ++g) {
            if (rng() % 3 != 0) {
                losses.emplace_back(g, loss_dist(rng));
            }
        }
        const auto got = groupdro_update(w, losses);
        const auto want = oracle::mwu_reference(w.q, w.eta, losses);
        for (int g = 0; g < k; ++g) {
            worst_diff = std::max(worst_diff, std::abs(got.q[g] - want[g]));
        }
    }

    GroupWeights chain = GroupWeights::uniform(4, 0.3);
    double worst_sum_err = 0.0;
    bool nonneg = true;
    std::uniform_real_distribution<double> chain_loss(0.0, 3.0);
    for (int step = 0; step < 10000; ++step) {
        std::vector<std::pair<int, double>> losses;
        for (int g = 0; g < 4; ++g) {
            if (rng() % 2 == 0) {
                losses.emplace_back(g, chain_loss(rng));
            }
        }
        chain = groupdro_update(chain, losses);
        double sum = 0.0;
        for (double v : chain.q) {
            nonneg = nonneg && v >= 0.0;
            sum += v;
        }
        worst_sum_err = std::max(worst_sum_err, std::abs(sum - 1.0));
    }
    const double dt = now_seconds() - t0;
    return {worst_diff < 1e-12 && worst_sum_err < 1e-9 && nonneg && dt < 5.0,
            "oracle diff " + fmt_double(worst_diff) + " (< 1e-12), simplex err " +
                fmt_double(worst_sum_err) + " (< 1e-9) over 1e4 updates, " + fmt(dt, 2) +
                "s (< 5s)"};
}

// ---- criterion 3: eta = 0 reduction to group-balanced ERM ----

Outcome criterion_eta_zero() {
    DataConfig dcfg;
    dcfg.n_train = 640;
    dcfg.n_val = 80;
    dcfg.n_test = 80;
    dcfg.seed = 5;
    const auto data = generate(dcfg);
    const GroupPartition part = GroupPartition::ground_truth(data.train);

    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.eta = 0.0;
    cfg.weight_decay = 0.001;
    cfg.seed = 99;

    Model a = init_model(ModelKind::mlp1, data.train.dim(), 16, 2, 17);
    Model b = a;
    GroupWeights w = GroupWeights::uniform(part.n_groups, 0.0);

    std::vector<int> all(data.train.n());
    std::iota(all.begin(), all.end(), 0);
    ShuffleStream stream_a(all, cfg.batch_size, mix_seed(cfg.seed, {seed_tag::erm_shuffle}));
    ShuffleStream stream_b(all, cfg.batch_size, mix_seed(cfg.seed, {seed_tag::erm_shuffle}));

    double worst_diff = 0.0;
    int steps = 0;
    while (steps < 100) {
        const auto batches_a = stream_a.next_epoch();
        const auto batches_b = stream_b.next_epoch();
        for (std::size_t i = 0; i < batches_a.size() && steps < 100; ++i, ++steps) {
            const Batch ba = make_batch(data.train, batches_a[i], part);
            const Batch bb = make_batch(data.train, batches_b[i], part);
            groupdro_step(a, w, ba, cfg, steps + 1);
            balanced_erm_step(b, part.n_groups, bb, cfg, steps + 1);
            for (std::size_t j = 0; j < a.params.w1.data.size(); ++j) {
                worst_diff = std::max(worst_diff,
                                      std::abs(a.params.w1.data[j] - b.params.w1.data[j]));
            }
            for (std::size_t j = 0; j < a.params.w2.data.size(); ++j) {
                worst_diff = std::max(worst_diff,
                                      std::abs(a.params.w2.data[j] - b.params.w2.data[j]));
            }
        }
    }
    return {worst_diff < 1e-12,
            "max per-step parameter diff " + fmt_double(worst_diff) + " over 100 steps (< 1e-12)"};
}

// ---- criterion 4: stage-ladder mechanics vs brute force ----

Outcome criterion_mechanics() {
    const double t0 = now_seconds();
    DataConfig dcfg;
    dcfg.n_train = 200;
    dcfg.n_val = 80;
    dcfg.n_test = 80;
    dcfg.seed = 44;
    const auto data = generate(dcfg);

    ArchConfig arch;
    arch.hidden_dim = 8;
    TrainConfig cfg;
    cfg.seed = 9;
    CurriculumSchedule schedule;  // R=0.2, K=5
    schedule.stage_epochs = 8;
    schedule.final_epochs = 11;

    const WarmupResult wu = warmup_erm(arch, data.train, cfg);
    const Split split = ground_truth_split(data.train);
    const SortedOrder order = sort_orders(wu.train_losses, split);
    const int dc = static_cast<int>(split.bias_conflicting.size());

    bool subsets_ok = true;
    std::set<int> prev;
    for (int k = 1; k <= 5; ++k) {
        // independent oracle: full sort with the tie-break, prefix selection
        auto sort_ids = [&](std::vector<int> ids, bool desc) {
            std::stable_sort(ids.begin(), ids.end(), [&](int x, int y) {
                if (wu.train_losses[x] != wu.train_losses[y]) {
                    return desc ? wu.train_losses[x] > wu.train_losses[y]
                                : wu.train_losses[x] < wu.train_losses[y];
                }
                return x < y;
            });
            return ids;
        };
        const auto b_sorted = sort_ids(split.bias_confirming, true);
        const auto c_sorted = sort_ids(split.bias_conflicting, false);
        const int n_k = static_cast<int>(static_cast<long long>(dc) * k / 5);
        std::set<int> want(b_sorted.begin(), b_sorted.begin() + n_k);
        want.insert(c_sorted.begin(), c_sorted.begin() + n_k);

        const auto got_vec = stage_subset(split, order, k, schedule);
        const std::set<int> got(got_vec.begin(), got_vec.end());
        int n_b = 0, n_c = 0;
        const std::set<int> c_set(split.bias_conflicting.begin(), split.bias_conflicting.end());
        for (int idx : got_vec) {
            (c_set.count(idx) ? n_c : n_b) += 1;
        }
        subsets_ok = subsets_ok && got == want && n_b == n_c && n_b == n_k &&
                     static_cast<int>(got_vec.size()) == 2 * n_k &&
                     std::includes(got.begin(), got.end(), prev.begin(), prev.end());
        prev = got;
    }

    const CurriculumResult res =
        run_cegdro(arch, data.train, data.val, SplitSource::ground_truth, schedule, cfg);
    const bool epochs_ok = res.log.groupdro_epochs() == 5 * 8 + 11;
    const double dt = now_seconds() - t0;
    return {subsets_ok && epochs_ok && dt < 10.0,
            std::string("subsets ") + (subsets_ok ? "match oracle" : "MISMATCH") + ", epochs " +
                std::to_string(res.log.groupdro_epochs()) + " == 5*8+11, " + fmt(dt, 2) +
                "s (< 10s)"};
}

// ---- criteria 5-9: directional experiment checks ----

Outcome criterion_erm_gap() {
    const double t0 = now_seconds();
    const MethodResult& erm = tuned(Method::erm);
    int wide = 0, total = 0;
    std::string gaps;
    for (const auto& rr : erm.report_runs) {
        if (!rr.ok) {
            continue;
        }
        ++total;
        const double gap =
            rr.test_metrics.average_accuracy - rr.test_metrics.worst_group_accuracy;
        wide += gap >= 0.15 ? 1 : 0;
        gaps += (gaps.empty() ? "" : ",") + fmt(gap * 100, 1);
    }
    const double dt = now_seconds() - t0;
    return {total == 5 && wide >= 4 && dt < 120.0,
            "avg-worst gap [" + gaps + "] pts; >= 15 in " + std::to_string(wide) + "/5 seeds, " +
                fmt(dt, 1) + "s (< 120s)"};
}

Outcome criterion_groupdro_gain() {
    const double t0 = now_seconds();
    const MethodResult& erm = tuned(Method::erm);
    const MethodResult& gdro = tuned(Method::groupdro);
    const double diff = gdro.mean_worst - erm.mean_worst;
    const double dt = now_seconds() - t0;
    return {diff >= 0.05 && dt < 600.0,
            row_summary(gdro) + " vs " + row_summary(erm) + "; diff " + fmt(diff * 100, 1) +
                " pts (>= 5), " + fmt(dt, 1) + "s (< 600s)"};
}

Outcome criterion_cegdro_noninferior() {
    const double t0 = now_seconds();
    const MethodResult& gdro = tuned(Method::groupdro);
    const MethodResult& ce = tuned(Method::cegdro);
    const double diff = ce.mean_worst - gdro.mean_worst;
    const bool mean_ok = diff >= -0.005;
    const bool sd_ok = ce.sd_worst <= gdro.sd_worst;
    // identical total step budget across the two arms
    const int budget = acceptance_config().train.max_steps;
    bool budget_ok = true;
    for (const auto& rr : ce.report_runs) {
        budget_ok = budget_ok && rr.ok && rr.manifest.total_steps == budget;
    }
    for (const auto& rr : gdro.report_runs) {
        budget_ok = budget_ok && rr.ok && rr.manifest.total_steps == budget;
    }
    const double dt = now_seconds() - t0;
    return {mean_ok && sd_ok && budget_ok && dt < 900.0,
            row_summary(ce) + " vs " + row_summary(gdro) + "; mean diff " + fmt(diff * 100, 2) +
                " pts (>= -0.5), sd " + fmt(ce.sd_worst * 100, 2) + " <= " +
                fmt(gdro.sd_worst * 100, 2) + ", both arms at exactly " +
                std::to_string(budget) + " steps" + (budget_ok ? "" : " (BUDGET MISMATCH)") +
                ", " + fmt(dt, 1) + "s (< 900s)"};
}

Outcome criterion_sc_collapse() {
    const double t0 = now_seconds();
    const MethodResult& ce = tuned(Method::cegdro);
    const MethodResult& sc = tuned(Method::groupdro_sc);
    const double diff = ce.mean_worst - sc.mean_worst;
    const double dt = now_seconds() - t0;
    return {diff >= 0.05 && dt < 900.0,
            row_summary(sc) + " vs " + row_summary(ce) + "; CeGDRO ahead by " +
                fmt(diff * 100, 1) + " pts (>= 5), " + fmt(dt, 1) + "s (< 900s)"};
}

Outcome criterion_variant_order() {
    const MethodResult& ce = tuned(Method::cegdro);
    const MethodResult& ef = tuned(Method::cegdro_ef);
    const double diff = ce.mean_worst - ef.mean_worst;
    return {diff >= -0.01, row_summary(ce) + " vs " + row_summary(ef) + "; diff " +
                               fmt(diff * 100, 2) + " pts (>= -1.0)"};
}

// ---- criterion 10: byte-identical sweep outputs ----

Outcome criterion_determinism() {
    const fs::path tmp = fs::temp_directory_path() / "cegdro_acceptance_determinism";
    fs::remove_all(tmp);
    ExperimentConfig cfg;
    cfg.data.n_train = 400;
    cfg.data.n_val = 160;
    cfg.data.n_test = 160;
    cfg.data.seed = 7;
    cfg.arch.hidden_dim = 8;
    cfg.train.max_steps = 150;
    cfg.schedule.stage_epochs = 2;
    cfg.schedule.final_epochs = 2;
    cfg.n_selection_runs = 2;
    cfg.n_report_runs = 2;
    cfg.grid.learning_rates = {0.1, 0.03};
    cfg.grid.etas = {0.1};
    const std::vector<Method> methods{Method::erm, Method::groupdro, Method::cegdro};

    cfg.output_dir = (tmp / "a").string();
    write_experiment(cfg, methods);
    cfg.output_dir = (tmp / "b").string();
    write_experiment(cfg, methods);

    bool all_equal = true;
    std::string checked;
    for (const std::string name : {"results.csv", "selection.csv", "table.csv", "table.txt"}) {
        const bool same = read_file(tmp / "a" / name) == read_file(tmp / "b" / name);
        all_equal = all_equal && same;
        checked += (checked.empty() ? "" : ",") + name + (same ? "" : "(DIFFERS)");
    }
    // step logs too
    for (const auto& entry : fs::directory_iterator(tmp / "a" / "runs")) {
        const auto twin = tmp / "b" / "runs" / entry.path().filename();
        all_equal = all_equal && fs::exists(twin) && read_file(entry.path()) == read_file(twin);
    }
    fs::remove_all(tmp);
    return {all_equal, "repeated sweep: " + checked + ", runs/ compared byte for byte"};
}

// ---- criterion 11: table formatting ----

Outcome criterion_table_format() {
    const std::string cell = format_mean_sd(0.848, 0.006);
    MethodResult row;
    row.method = Method::cegdro;
    row.mean_avg = 0.903;
    row.sd_avg = 0.002;
    row.mean_worst = 0.848;
    row.sd_worst = 0.006;
    row.n_ok = 3;
    const std::string table = emit_table_text({row});
    const bool ok = cell == "84.8±0.6" && table.find("84.8±0.6") != std::string::npos &&
                    format_mean_sd(0.5, 0.0) == "50.0±0.0";
    return {ok, "0.848/0.006 -> \"" + cell + "\", table row carries it verbatim"};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient correctness vs finite differences", criterion_gradients},
        {"multiplicative-weights update oracle", criterion_eq2_oracle},
        {"eta=0 reduction to group-balanced ERM", criterion_eta_zero},
        {"curriculum mechanics vs brute force", criterion_mechanics},
        {"ERM worst-vs-average gap", criterion_erm_gap},
        {"GroupDRO improvement over ERM", criterion_groupdro_gain},
        {"CeGDRO non-inferiority and stability", criterion_cegdro_noninferior},
        {"standard-curriculum degradation", criterion_sc_collapse},
        {"CeGDRO vs easy-first variant ordering", criterion_variant_order},
        {"sweep determinism (byte-identical CSVs)", criterion_determinism},
        {"table formatting", criterion_table_format},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const double t0 = now_seconds();
        Outcome out;
        try {
            out = criteria[i].second();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        const double dt = now_seconds() - t0;
        std::printf("[%s] criterion %zu: %s — %s (%.1fs)\n", out.pass ? "PASS" : "FAIL", i + 1,
                    criteria[i].first.c_str(), out.detail.c_str(), dt);
        std::fflush(stdout);
        failures += out.pass ? 0 : 1;
    }
    if (failures == 0) {
        std::printf("all %zu acceptance criteria passed\n", criteria.size());
    } else {
        std::printf("%d acceptance criteria FAILED\n", failures);
    }
    return failures;
}
