#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "cegdro/curriculum.hpp"
#include "cegdro/dataset.hpp"
#include "cegdro/dro.hpp"
#include "cegdro/io.hpp"
#include "cegdro/metrics.hpp"
#include "cegdro/model.hpp"
#include "cegdro/rng.hpp"

namespace cegdro {

enum class Method { erm, groupdro, cegdro, cegdro_ef, groupdro_sc };

inline const std::vector<Method>& all_methods() {
    static const std::vector<Method> m = {Method::erm, Method::groupdro, Method::cegdro,
                                          Method::cegdro_ef, Method::groupdro_sc};
    return m;
}

inline std::string to_string(Method m) {
    switch (m) {
        case Method::erm: return "erm";
        case Method::groupdro: return "groupdro";
        case Method::cegdro: return "cegdro";
        case Method::cegdro_ef: return "cegdro_ef";
        case Method::groupdro_sc: return "groupdro_sc";
    }
    throw std::logic_error("bad method");
}

inline std::string display_name(Method m) {
    switch (m) {
        case Method::erm: return "ERM";
        case Method::groupdro: return "GroupDRO";
        case Method::cegdro: return "CeGDRO";
        case Method::cegdro_ef: return "CeGDRO - EF";
        case Method::groupdro_sc: return "GroupDRO + SC";
    }
    throw std::logic_error("bad method");
}

inline Method method_from_string(const std::string& s) {
    for (Method m : all_methods()) {
        if (to_string(m) == s) {
            return m;
        }
    }
    throw std::invalid_argument("unknown method: " + s);
}

inline bool is_curricular(Method m) {
    return m == Method::cegdro || m == Method::cegdro_ef || m == Method::groupdro_sc;
}

struct SweepGrid {
    std::vector<double> learning_rates{0.1, 0.03, 0.01};
    std::vector<double> etas{0.01, 0.1, 1.0};
};

struct ExperimentConfig {
    DataConfig data;
    ArchConfig arch;
    Method method = Method::cegdro;
    TrainConfig train;
    CurriculumSchedule schedule;
    SplitSource split_source = SplitSource::ground_truth;
    int n_selection_runs = 8;
    int n_report_runs = 3;
    std::uint64_t root_seed = 20240613;
    std::string output_dir = "out";
    SweepGrid grid;

    void validate() const {
        data.validate();
        train.validate();
        schedule.validate();
        if (n_selection_runs < 1 || n_report_runs < 1) {
            throw std::invalid_argument("ExperimentConfig: run counts must be >= 1");
        }
        if (grid.learning_rates.empty() || grid.etas.empty()) {
            throw std::invalid_argument("ExperimentConfig: sweep grid must be nonempty");
        }
    }
};

// ---- flat key-value config file (dotted section prefixes) ----

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) {
        return "";
    }
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::string cur;
    std::stringstream ss(s);
    while (std::getline(ss, cur, ',')) {
        cur = trim(cur);
        if (!cur.empty()) {
            out.push_back(parse_double(cur));
        }
    }
    return out;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const std::string& text) {
    ExperimentConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') {
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": expected key = value");
        }
        const std::string key = detail::trim(t.substr(0, eq));
        const std::string val = detail::trim(t.substr(eq + 1));
        try {
            if (key == "data.n_train") cfg.data.n_train = std::stoi(val);
            else if (key == "data.n_val") cfg.data.n_val = std::stoi(val);
            else if (key == "data.n_test") cfg.data.n_test = std::stoi(val);
            else if (key == "data.rho") cfg.data.rho = parse_double(val);
            else if (key == "data.mu_core") cfg.data.mu_core = parse_double(val);
            else if (key == "data.sigma_core") cfg.data.sigma_core = parse_double(val);
            else if (key == "data.mu_spur") cfg.data.mu_spur = parse_double(val);
            else if (key == "data.sigma_spur") cfg.data.sigma_spur = parse_double(val);
            else if (key == "data.d_core") cfg.data.d_core = std::stoi(val);
            else if (key == "data.d_spur") cfg.data.d_spur = std::stoi(val);
            else if (key == "data.d_noise") cfg.data.d_noise = std::stoi(val);
            else if (key == "data.seed") cfg.data.seed = std::stoull(val);
            else if (key == "model.kind") cfg.arch.kind = model_kind_from_string(val);
            else if (key == "model.hidden_dim") cfg.arch.hidden_dim = std::stoi(val);
            else if (key == "train.learning_rate") cfg.train.learning_rate = parse_double(val);
            else if (key == "train.batch_size") cfg.train.batch_size = std::stoi(val);
            else if (key == "train.eta") cfg.train.eta = parse_double(val);
            else if (key == "train.weight_decay") cfg.train.weight_decay = parse_double(val);
            else if (key == "train.max_steps") cfg.train.max_steps = std::stoi(val);
            else if (key == "train.seed") cfg.train.seed = std::stoull(val);
            else if (key == "schedule.rate") cfg.schedule.rate = parse_double(val);
            else if (key == "schedule.stage_epochs") cfg.schedule.stage_epochs = std::stoi(val);
            else if (key == "schedule.final_epochs") cfg.schedule.final_epochs = std::stoi(val);
            else if (key == "experiment.method") cfg.method = method_from_string(val);
            else if (key == "experiment.split_source") cfg.split_source = split_source_from_string(val);
            else if (key == "experiment.n_selection_runs") cfg.n_selection_runs = std::stoi(val);
            else if (key == "experiment.n_report_runs") cfg.n_report_runs = std::stoi(val);
            else if (key == "experiment.root_seed") cfg.root_seed = std::stoull(val);
            else if (key == "experiment.output_dir") cfg.output_dir = val;
            else if (key == "sweep.learning_rates") cfg.grid.learning_rates = detail::parse_double_list(val);
            else if (key == "sweep.etas") cfg.grid.etas = detail::parse_double_list(val);
            else throw std::invalid_argument("unknown key");
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("config line " + std::to_string(line_no) + " ('" + key +
                                        "'): " + e.what());
        }
    }
    return cfg;
}

inline std::string experiment_config_text(const ExperimentConfig& c) {
    std::string s;
    auto kv = [&s](const std::string& k, const std::string& v) { s += k + " = " + v + "\n"; };
    kv("data.n_train", std::to_string(c.data.n_train));
    kv("data.n_val", std::to_string(c.data.n_val));
    kv("data.n_test", std::to_string(c.data.n_test));
    kv("data.rho", fmt_double(c.data.rho));
    kv("data.mu_core", fmt_double(c.data.mu_core));
    kv("data.sigma_core", fmt_double(c.data.sigma_core));
    kv("data.mu_spur", fmt_double(c.data.mu_spur));
    kv("data.sigma_spur", fmt_double(c.data.sigma_spur));
    kv("data.d_core", std::to_string(c.data.d_core));
    kv("data.d_spur", std::to_string(c.data.d_spur));
    kv("data.d_noise", std::to_string(c.data.d_noise));
    kv("data.seed", std::to_string(c.data.seed));
    kv("model.kind", to_string(c.arch.kind));
    kv("model.hidden_dim", std::to_string(c.arch.hidden_dim));
    kv("train.learning_rate", fmt_double(c.train.learning_rate));
    kv("train.batch_size", std::to_string(c.train.batch_size));
    kv("train.eta", fmt_double(c.train.eta));
    kv("train.weight_decay", fmt_double(c.train.weight_decay));
    kv("train.max_steps", std::to_string(c.train.max_steps));
    kv("train.seed", std::to_string(c.train.seed));
    kv("schedule.rate", fmt_double(c.schedule.rate));
    kv("schedule.stage_epochs", std::to_string(c.schedule.stage_epochs));
    kv("schedule.final_epochs", std::to_string(c.schedule.final_epochs));
    kv("experiment.method", to_string(c.method));
    kv("experiment.split_source", to_string(c.split_source));
    kv("experiment.n_selection_runs", std::to_string(c.n_selection_runs));
    kv("experiment.n_report_runs", std::to_string(c.n_report_runs));
    kv("experiment.root_seed", std::to_string(c.root_seed));
    kv("experiment.output_dir", c.output_dir);
    std::string lrs, etas;
    for (double v : c.grid.learning_rates) {
        lrs += (lrs.empty() ? "" : ",") + fmt_double(v);
    }
    for (double v : c.grid.etas) {
        etas += (etas.empty() ? "" : ",") + fmt_double(v);
    }
    kv("sweep.learning_rates", lrs);
    kv("sweep.etas", etas);
    return s;
}

// ---- step budget planning ----

inline int steps_per_plain_epoch(int n, int batch_size) {
    return (n + batch_size - 1) / batch_size;
}

inline int steps_per_balanced_epoch(int larger_side, int batch_size) {
    const int half = batch_size / 2;
    return (larger_side + half - 1) / half;
}

// Steps a curriculum run takes: warmup epoch + K stages of E_s balanced
// epochs + E_f balanced epochs over the full split.
inline int planned_curriculum_steps(const CurriculumSchedule& s, int n_train, int dc_size,
                                    int batch_size) {
    const int n_stages = s.n_stages();
    int total = steps_per_plain_epoch(n_train, batch_size);
    for (int k = 1; k <= n_stages; ++k) {
        const int n_k = stage_sample_count(dc_size, k, n_stages);
        total += s.stage_epochs * steps_per_balanced_epoch(n_k, batch_size);
    }
    const int larger = std::max(n_train - dc_size, dc_size);
    total += s.final_epochs * steps_per_balanced_epoch(larger, batch_size);
    return total;
}

inline int planned_standard_curriculum_steps(const CurriculumSchedule& s, int n_train,
                                             int batch_size) {
    const int n_stages = s.n_stages();
    int total = steps_per_plain_epoch(n_train, batch_size);
    for (int k = 1; k <= n_stages; ++k) {
        const int n_sub = static_cast<int>((static_cast<long long>(n_train) * k) / n_stages);
        total += s.stage_epochs * steps_per_plain_epoch(n_sub, batch_size);
    }
    total += s.final_epochs * steps_per_plain_epoch(n_train, batch_size);
    return total;
}

// ---- single seeded runs ----

struct SingleRunResult {
    Method method = Method::erm;
    std::uint64_t seed = 0;
    Model model;
    GroupMetrics val_metrics;
    GroupMetrics test_metrics;
    TrainLog log;
    RunManifest manifest;
    int n_log_groups = 1;  // width of the step-log schema
    int total_steps = 0;
};

inline SingleRunResult run_single(Method method, const GeneratedData& data, const ArchConfig& arch,
                                  const TrainConfig& train_cfg, const CurriculumSchedule& schedule,
                                  SplitSource split_source) {
    train_cfg.validate();
    SingleRunResult out;
    out.method = method;
    out.seed = train_cfg.seed;

    if (method == Method::erm || method == Method::groupdro) {
        Model model = init_model(arch.kind, arch.resolve_input_dim(data.train), arch.hidden_dim,
                                 arch.n_classes,
                                 mix_seed(train_cfg.seed, {seed_tag::model_init}));
        const int per_epoch = steps_per_plain_epoch(data.train.n(), train_cfg.batch_size);
        const int epochs = (train_cfg.max_steps + per_epoch - 1) / per_epoch;
        if (method == Method::erm) {
            out.total_steps = train_erm(model, data.train, train_cfg, epochs, &out.log);
            out.n_log_groups = 1;
        } else {
            const GroupPartition part = GroupPartition::ground_truth(data.train);
            GroupWeights weights = GroupWeights::uniform(part.n_groups, train_cfg.eta);
            out.total_steps =
                train_groupdro(model, weights, data.train, part, train_cfg, epochs, &out.log);
            out.n_log_groups = part.n_groups;
        }
        out.model = std::move(model);
        out.manifest.total_steps = out.total_steps;
    } else {
        const CurriculumVariant variant = method == Method::cegdro ? CurriculumVariant::cegdro
                                          : method == Method::cegdro_ef
                                              ? CurriculumVariant::easy_first_b
                                              : CurriculumVariant::standard_curriculum;
        CurriculumResult res = run_variant(variant, arch, data.train, data.val, split_source,
                                           schedule, train_cfg);
        out.model = std::move(res.model);
        out.log = std::move(res.log);
        out.manifest = std::move(res.manifest);
        out.total_steps = out.manifest.total_steps;
        out.n_log_groups = split_source == SplitSource::ground_truth ? kNumGroups : 2;
    }

    out.manifest.method = to_string(method);
    out.manifest.seed = train_cfg.seed;
    out.val_metrics = evaluate(out.model, data.val);
    out.test_metrics = evaluate(out.model, data.test);
    return out;
}

// ---- sweep protocol ----

struct HyperPoint {
    double learning_rate = 0.0;
    double eta = 0.0;
    double rate = 0.0;  // 0 when not curricular
};

struct SelectionRecord {
    Method method = Method::erm;
    HyperPoint point;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    GroupMetrics val_metrics;
    bool chosen = false;
};

struct ReportRun {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    GroupMetrics val_metrics;
    GroupMetrics test_metrics;
    TrainLog log;
    RunManifest manifest;
    int n_log_groups = 1;
};

struct MethodResult {
    Method method = Method::erm;
    HyperPoint chosen;
    std::vector<ReportRun> report_runs;
    int n_ok = 0;
    double mean_avg = 0.0, sd_avg = 0.0;
    double mean_worst = 0.0, sd_worst = 0.0;
};

struct ExperimentResult {
    std::vector<MethodResult> rows;
    std::vector<SelectionRecord> selection;
};

namespace detail {

template <typename F>
void parallel_for(std::size_t n, F&& fn) {
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t n_threads = std::min<std::size_t>(hw, n);
    if (n_threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    workers.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) {
        workers.emplace_back([&]() {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                fn(i);
            }
        });
    }
    for (auto& w : workers) {
        w.join();
    }
}

inline std::pair<double, double> mean_sd(const std::vector<double>& xs) {
    if (xs.empty()) {
        return {0.0, 0.0};
    }
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    if (xs.size() < 2) {
        return {mean, 0.0};
    }
    double ss = 0.0;
    for (double x : xs) {
        ss += (x - mean) * (x - mean);
    }
    return {mean, std::sqrt(ss / (xs.size() - 1))};
}

}  // namespace detail

inline std::vector<HyperPoint> grid_points(Method method, const ExperimentConfig& cfg) {
    std::vector<HyperPoint> points;
    const double rate = is_curricular(method) ? cfg.schedule.rate : 0.0;
    for (double lr : cfg.grid.learning_rates) {
        if (method == Method::erm) {
            points.push_back({lr, cfg.train.eta, rate});
        } else {
            for (double eta : cfg.grid.etas) {
                points.push_back({lr, eta, rate});
            }
        }
    }
    return points;
}

inline std::uint64_t selection_seed(std::uint64_t root, Method method, std::size_t point_idx,
                                    int run_idx) {
    return mix_seed(root, {seed_tag::selection_run, static_cast<std::uint64_t>(method),
                           static_cast<std::uint64_t>(point_idx),
                           static_cast<std::uint64_t>(run_idx)});
}

inline std::uint64_t report_seed(std::uint64_t root, int run_idx) {
    return mix_seed(root, {seed_tag::report_run, static_cast<std::uint64_t>(run_idx)});
}

// Full selection protocol for one method: run every (grid point, selection
// seed) pair, pick the candidate with the best validation worst-group
// accuracy, then re-run the chosen point on fresh report seeds.
inline MethodResult run_method_experiment(Method method, const ExperimentConfig& cfg,
                                          const GeneratedData& data,
                                          std::vector<SelectionRecord>* selection_out) {
    const auto points = grid_points(method, cfg);
    const std::size_t n_jobs = points.size() * cfg.n_selection_runs;
    std::vector<SelectionRecord> records(n_jobs);

    detail::parallel_for(n_jobs, [&](std::size_t job) {
        const std::size_t p = job / cfg.n_selection_runs;
        const int r = static_cast<int>(job % cfg.n_selection_runs);
        SelectionRecord& rec = records[job];
        rec.method = method;
        rec.point = points[p];
        rec.seed = selection_seed(cfg.root_seed, method, p, r);
        TrainConfig tc = cfg.train;
        tc.learning_rate = rec.point.learning_rate;
        tc.eta = rec.point.eta;
        tc.seed = rec.seed;
        try {
            const SingleRunResult run =
                run_single(method, data, cfg.arch, tc, cfg.schedule, cfg.split_source);
            rec.val_metrics = run.val_metrics;
            rec.ok = true;
        } catch (const std::exception& e) {
            rec.error = "seed " + std::to_string(rec.seed) + ": " + e.what();
        }
    });

    std::vector<GroupMetrics> ok_metrics;
    std::vector<std::size_t> ok_pos;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].ok) {
            ok_metrics.push_back(records[i].val_metrics);
            ok_pos.push_back(i);
        }
    }
    if (ok_metrics.empty()) {
        std::string detail = records.empty() ? "no grid points" : records.front().error;
        throw std::runtime_error("all selection runs failed for " + to_string(method) + ": " +
                                 detail);
    }
    const std::size_t best = ok_pos[select_best_index(ok_metrics)];
    records[best].chosen = true;

    MethodResult out;
    out.method = method;
    out.chosen = records[best].point;

    out.report_runs.resize(cfg.n_report_runs);
    detail::parallel_for(static_cast<std::size_t>(cfg.n_report_runs), [&](std::size_t j) {
        ReportRun& rr = out.report_runs[j];
        rr.seed = report_seed(cfg.root_seed, static_cast<int>(j));
        TrainConfig tc = cfg.train;
        tc.learning_rate = out.chosen.learning_rate;
        tc.eta = out.chosen.eta;
        tc.seed = rr.seed;
        try {
            SingleRunResult run =
                run_single(method, data, cfg.arch, tc, cfg.schedule, cfg.split_source);
            rr.val_metrics = run.val_metrics;
            rr.test_metrics = run.test_metrics;
            rr.log = std::move(run.log);
            rr.manifest = std::move(run.manifest);
            rr.n_log_groups = run.n_log_groups;
            rr.ok = true;
        } catch (const std::exception& e) {
            rr.error = "seed " + std::to_string(rr.seed) + ": " + e.what();
        }
    });

    std::vector<double> avgs, worsts;
    for (const auto& rr : out.report_runs) {
        if (rr.ok) {
            avgs.push_back(rr.test_metrics.average_accuracy);
            worsts.push_back(rr.test_metrics.worst_group_accuracy);
        }
    }
    out.n_ok = static_cast<int>(avgs.size());
    std::tie(out.mean_avg, out.sd_avg) = detail::mean_sd(avgs);
    std::tie(out.mean_worst, out.sd_worst) = detail::mean_sd(worsts);

    if (selection_out != nullptr) {
        selection_out->insert(selection_out->end(), records.begin(), records.end());
    }
    return out;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       const std::vector<Method>& methods) {
    cfg.validate();
    const GeneratedData data = generate(cfg.data);
    ExperimentResult result;
    for (Method m : methods) {
        result.rows.push_back(run_method_experiment(m, cfg, data, &result.selection));
    }
    return result;
}

// ---- result rendering ----

// percent with one decimal: mean 0.848, sd 0.006 -> "84.8±0.6"
inline std::string format_mean_sd(double mean, double sd) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f±%.1f", mean * 100.0, sd * 100.0);
    return buf;
}

inline std::string emit_table_text(const std::vector<MethodResult>& rows) {
    if (rows.empty()) {
        throw std::invalid_argument("emit_table: no rows");
    }
    std::size_t name_w = std::string("Method").size();
    for (const auto& r : rows) {
        name_w = std::max(name_w, display_name(r.method).size());
    }
    auto visible_width = [](const std::string& s) {
        // count UTF-8 code points (the ± sign is two bytes)
        std::size_t w = 0;
        for (unsigned char c : s) {
            w += (c & 0xc0) != 0x80 ? 1 : 0;
        }
        return w;
    };
    auto pad = [&](const std::string& s, std::size_t w) {
        const std::size_t v = visible_width(s);
        return s + std::string(w > v ? w - v : 0, ' ');
    };
    std::string s = pad("Method", name_w) + "  " + pad("Average", 12) + "Worst Gr.\n";
    for (const auto& r : rows) {
        s += pad(display_name(r.method), name_w) + "  " +
             pad(format_mean_sd(r.mean_avg, r.sd_avg), 12) +
             format_mean_sd(r.mean_worst, r.sd_worst) + "\n";
    }
    return s;
}

// full-precision CSV twin of the formatted table
inline std::string emit_table_csv(const std::vector<MethodResult>& rows) {
    std::string s =
        "method,learning_rate,eta,rate,n_report,mean_acc_avg,sd_acc_avg,mean_acc_worst,sd_acc_worst\n";
    for (const auto& r : rows) {
        s += to_string(r.method);
        s += "," + fmt_double(r.chosen.learning_rate);
        s += "," + fmt_double(r.chosen.eta);
        s += "," + fmt_double(r.chosen.rate);
        s += "," + std::to_string(r.n_ok);
        s += "," + fmt_double(r.mean_avg);
        s += "," + fmt_double(r.sd_avg);
        s += "," + fmt_double(r.mean_worst);
        s += "," + fmt_double(r.sd_worst);
        s += "\n";
    }
    return s;
}

struct RunCurve {
    std::string method;
    std::uint64_t seed = 0;
    int n_groups = 1;
    std::vector<StepRecord> steps;
};

// long-format plot CSV: one row per (step, group)
inline std::string emit_curves(const std::vector<RunCurve>& curves) {
    if (curves.empty()) {
        throw std::invalid_argument("emit_curves: no run logs");
    }
    std::string s = "method,seed,step,group,loss,q\n";
    for (const auto& c : curves) {
        for (const auto& rec : c.steps) {
            for (int g = 0; g < c.n_groups; ++g) {
                s += c.method;
                s += "," + std::to_string(c.seed);
                s += "," + std::to_string(rec.step);
                s += "," + std::to_string(g);
                s += ",";
                s += std::isnan(rec.group_loss[g]) ? "nan" : fmt_double(rec.group_loss[g]);
                s += "," + fmt_double(rec.q[g]);
                s += "\n";
            }
        }
    }
    return s;
}

// parse a fixed-schema step log back into records (for the curves tool)
inline std::pair<std::vector<StepRecord>, int> parse_steplog_csv(const std::string& text) {
    std::stringstream ss(text);
    std::string line;
    if (!std::getline(ss, line)) {
        throw std::runtime_error("step log: empty input");
    }
    const auto header = split_csv_line(line);
    if (header.size() < 3 || header[0] != "step") {
        throw std::runtime_error("step log: unexpected header");
    }
    const int n_groups = static_cast<int>((header.size() - 1) / 2);
    std::vector<StepRecord> records;
    while (std::getline(ss, line)) {
        if (line.empty()) {
            continue;
        }
        const auto f = split_csv_line(line);
        if (f.size() != header.size()) {
            throw std::runtime_error("step log: ragged row");
        }
        StepRecord rec;
        rec.step = std::stoi(f[0]);
        rec.group_loss.resize(n_groups);
        rec.q.resize(n_groups);
        for (int g = 0; g < n_groups; ++g) {
            rec.group_loss[g] = f[1 + g] == "nan" ? std::numeric_limits<double>::quiet_NaN()
                                                  : parse_double(f[1 + g]);
            rec.q[g] = parse_double(f[1 + n_groups + g]);
        }
        records.push_back(std::move(rec));
    }
    return {records, n_groups};
}

// ---- experiment output files ----

inline std::string results_csv(const std::vector<MethodResult>& rows) {
    std::string s = metrics_csv_header() + "\n";
    for (const auto& r : rows) {
        for (const auto& rr : r.report_runs) {
            if (!rr.ok) {
                continue;
            }
            s += metrics_csv_row(to_string(r.method), rr.seed, "test", rr.test_metrics) + "\n";
            s += metrics_csv_row(to_string(r.method), rr.seed, "val", rr.val_metrics) + "\n";
        }
    }
    return s;
}

inline std::string selection_csv(const std::vector<SelectionRecord>& records) {
    std::string s =
        "method,learning_rate,eta,rate,seed,status,val_acc_worst,val_acc_avg,chosen,error\n";
    for (const auto& r : records) {
        s += to_string(r.method);
        s += "," + fmt_double(r.point.learning_rate);
        s += "," + fmt_double(r.point.eta);
        s += "," + fmt_double(r.point.rate);
        s += "," + std::to_string(r.seed);
        s += r.ok ? ",ok" : ",failed";
        s += "," + (r.ok ? fmt_double(r.val_metrics.worst_group_accuracy) : std::string("nan"));
        s += "," + (r.ok ? fmt_double(r.val_metrics.average_accuracy) : std::string("nan"));
        s += r.chosen ? ",1" : ",0";
        s += "," + r.error;
        s += "\n";
    }
    return s;
}

// Writes results.csv, table.txt, table.csv, selection.csv, and per report
// run the step log (and curriculum manifest). Returns the result for reuse.
inline ExperimentResult write_experiment(const ExperimentConfig& cfg,
                                         const std::vector<Method>& methods) {
    namespace fs = std::filesystem;
    ExperimentResult result = run_experiment(cfg, methods);
    const fs::path out_dir(cfg.output_dir);

    atomic_write_file(out_dir / "results.csv", results_csv(result.rows));
    atomic_write_file(out_dir / "selection.csv", selection_csv(result.selection));
    atomic_write_file(out_dir / "table.txt", emit_table_text(result.rows));
    atomic_write_file(out_dir / "table.csv", emit_table_csv(result.rows));
    atomic_write_file(out_dir / "config.txt", experiment_config_text(cfg));

    for (auto& row : result.rows) {
        for (auto& rr : row.report_runs) {
            if (!rr.ok) {
                continue;
            }
            const std::string stem = to_string(row.method) + "-seed" + std::to_string(rr.seed);
            rr.manifest.step_log = stem + "-steps.csv";
            atomic_write_file(out_dir / "runs" / rr.manifest.step_log,
                              steplog_csv(rr.log, rr.n_log_groups));
            if (is_curricular(row.method)) {
                atomic_write_file(out_dir / "runs" / (stem + "-manifest.json"),
                                  manifest_to_json(rr.manifest).dump(2) + "\n");
            }
        }
    }
    return result;
}

}  // namespace cegdro
