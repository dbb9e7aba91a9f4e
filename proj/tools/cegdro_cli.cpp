// Command-line harness: dataset generation, single training runs, seeded
// hyperparameter sweeps with worst-group validation selection, result tables,
// and plot-ready curve CSVs.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cegdro/cegdro.hpp"

namespace fs = std::filesystem;
using namespace cegdro;

namespace {

ExperimentConfig load_config(const std::string& path) {
    return parse_experiment_config(read_file(path));
}

int cmd_generate(const std::string& config_path, const std::string& out_dir) {
    const ExperimentConfig cfg = load_config(config_path);
    cfg.data.validate();
    const GeneratedData data = generate(cfg.data);
    atomic_write_file(fs::path(out_dir) / "train.csv", dataset_csv(data.train));
    atomic_write_file(fs::path(out_dir) / "val.csv", dataset_csv(data.val));
    atomic_write_file(fs::path(out_dir) / "test.csv", dataset_csv(data.test));
    std::cout << "wrote " << out_dir << "/{train,val,test}.csv  (n=" << data.train.n() << "/"
              << data.val.n() << "/" << data.test.n() << ", d=" << data.train.dim() << ")\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& method_name, std::uint64_t seed,
              const std::string& out_dir) {
    ExperimentConfig cfg = load_config(config_path);
    if (!method_name.empty()) {
        cfg.method = method_from_string(method_name);
    }
    cfg.validate();
    TrainConfig tc = cfg.train;
    tc.seed = seed;

    const GeneratedData data = generate(cfg.data);
    SingleRunResult run = run_single(cfg.method, data, cfg.arch, tc, cfg.schedule, cfg.split_source);

    const std::string stem = to_string(cfg.method) + "-seed" + std::to_string(seed);
    run.manifest.step_log = stem + "-steps.csv";
    atomic_write_file(fs::path(out_dir) / run.manifest.step_log,
                      steplog_csv(run.log, run.n_log_groups));
    if (is_curricular(cfg.method)) {
        atomic_write_file(fs::path(out_dir) / (stem + "-manifest.json"),
                          manifest_to_json(run.manifest).dump(2) + "\n");
    }
    atomic_write_file(fs::path(out_dir) / (stem + "-model.json"),
                      model_to_json(run.model).dump() + "\n");
    std::string metrics = metrics_csv_header() + "\n";
    metrics += metrics_csv_row(to_string(cfg.method), seed, "test", run.test_metrics) + "\n";
    metrics += metrics_csv_row(to_string(cfg.method), seed, "val", run.val_metrics) + "\n";
    atomic_write_file(fs::path(out_dir) / (stem + "-metrics.csv"), metrics);

    std::cout << to_string(cfg.method) << " seed=" << seed << " steps=" << run.total_steps
              << "  test avg=" << fmt_double(run.test_metrics.average_accuracy)
              << " worst=" << fmt_double(run.test_metrics.worst_group_accuracy) << "\n";
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir,
              const std::string& methods_arg) {
    ExperimentConfig cfg = load_config(config_path);
    if (!out_dir.empty()) {
        cfg.output_dir = out_dir;
    }
    cfg.validate();

    std::vector<Method> methods;
    if (methods_arg.empty()) {
        methods = all_methods();
    } else {
        std::stringstream ss(methods_arg);
        std::string name;
        while (std::getline(ss, name, ',')) {
            methods.push_back(method_from_string(name));
        }
    }

    const ExperimentResult result = write_experiment(cfg, methods);
    std::cout << emit_table_text(result.rows);
    std::cout << "wrote " << cfg.output_dir << "/{results,selection,table}.csv, table.txt, runs/\n";
    return 0;
}

int cmd_report(const std::string& in_dir, const std::string& out_file) {
    const std::string text = read_file(fs::path(in_dir) / "results.csv");
    std::stringstream ss(text);
    std::string line;
    if (!std::getline(ss, line)) {
        throw std::runtime_error("results.csv is empty");
    }
    // aggregate test rows per method, preserving first-appearance order
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::pair<double, double>>> accs;  // (avg, worst)
    while (std::getline(ss, line)) {
        if (line.empty()) {
            continue;
        }
        const auto f = split_csv_line(line);
        if (f.size() < 5 || f[2] != "test") {
            continue;
        }
        if (accs.find(f[0]) == accs.end()) {
            order.push_back(f[0]);
        }
        accs[f[0]].emplace_back(parse_double(f[3]), parse_double(f[4]));
    }
    std::vector<MethodResult> rows;
    for (const auto& name : order) {
        MethodResult r;
        r.method = method_from_string(name);
        std::vector<double> avgs, worsts;
        for (const auto& [a, w] : accs[name]) {
            avgs.push_back(a);
            worsts.push_back(w);
        }
        r.n_ok = static_cast<int>(avgs.size());
        std::tie(r.mean_avg, r.sd_avg) = detail::mean_sd(avgs);
        std::tie(r.mean_worst, r.sd_worst) = detail::mean_sd(worsts);
        rows.push_back(r);
    }
    const std::string table = emit_table_text(rows);
    std::cout << table;
    if (!out_file.empty()) {
        atomic_write_file(out_file, table);
    }
    return 0;
}

int cmd_curves(const std::string& in_dir, const std::string& out_file) {
    std::vector<RunCurve> curves;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(in_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.size() > 10 && name.substr(name.size() - 10) == "-steps.csv") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
        const std::string name = path.filename().string();
        const auto seed_pos = name.rfind("-seed");
        if (seed_pos == std::string::npos) {
            continue;
        }
        RunCurve c;
        c.method = name.substr(0, seed_pos);
        c.seed = std::stoull(name.substr(seed_pos + 5, name.size() - 10 - (seed_pos + 5)));
        auto [records, n_groups] = parse_steplog_csv(read_file(path));
        c.steps = std::move(records);
        c.n_groups = n_groups;
        curves.push_back(std::move(c));
    }
    const std::string csv = emit_curves(curves);
    atomic_write_file(out_file, csv);
    std::cout << "wrote " << out_file << " (" << curves.size() << " runs)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"curriculum-enhanced GroupDRO lab"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", method_name, in_dir, out_file;
    std::uint64_t seed = 0;

    auto* gen = app.add_subcommand("generate", "write dataset CSVs");
    gen->add_option("--config", config_path, "experiment config file")->required();
    gen->add_option("--out", out_dir, "output directory");

    auto* train = app.add_subcommand("train", "single training run");
    train->add_option("--config", config_path, "experiment config file")->required();
    train->add_option("--method", method_name, "erm|groupdro|cegdro|cegdro_ef|groupdro_sc");
    train->add_option("--seed", seed, "run seed");
    train->add_option("--out", out_dir, "output directory");

    auto* sweep = app.add_subcommand("sweep", "selection protocol over the hyperparameter grid");
    sweep->add_option("--config", config_path, "experiment config file")->required();
    sweep->add_option("--out", out_dir, "output directory (overrides config)");
    std::string methods_arg;
    sweep->add_option("--methods", methods_arg, "comma-separated subset of methods");

    auto* report = app.add_subcommand("report", "render the result table from stored results");
    report->add_option("--in", in_dir, "directory containing results.csv")->required();
    report->add_option("--out", out_file, "also write the table here");

    auto* curves = app.add_subcommand("curves", "plot-ready long-format CSV from step logs");
    curves->add_option("--in", in_dir, "directory containing *-steps.csv")->required();
    curves->add_option("--out", out_file, "output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            return cmd_generate(config_path, out_dir);
        }
        if (train->parsed()) {
            return cmd_train(config_path, method_name, seed, out_dir);
        }
        if (sweep->parsed()) {
            return cmd_sweep(config_path, out_dir, methods_arg);
        }
        if (report->parsed()) {
            return cmd_report(in_dir, out_file);
        }
        if (curves->parsed()) {
            return cmd_curves(in_dir, out_file);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
