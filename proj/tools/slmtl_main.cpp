// Command line front end: train single runs, sweep algorithm suites, grid
// search hyperparameters, and render plots from run output directories.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "slmtl/config.hpp"
#include "slmtl/svgplot.hpp"
#include "slmtl/trainer.hpp"

namespace {

using namespace slmtl;

struct CommonFlags {
    std::optional<std::string> config_path;
    std::optional<std::string> algorithm;
    std::optional<std::string> dataset;
    std::optional<double> noise;
    std::optional<bool> noise_main_only;
    std::optional<std::string> flip;
    std::optional<double> flip_frac;
    std::optional<double> lr;
    std::optional<int> batch_size;
    std::optional<int> steps;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<int> shared_layers;
    std::optional<int> task_layers;
    std::optional<int> eval_every;
    std::optional<int> patience;
    bool taylor_check = false;
    bool log_weights = false;
    bool toy_tuned = false;
};

void add_common_flags(CLI::App* app, CommonFlags& f) {
    app->add_option("--config", f.config_path, "config file (key = value lines)");
    app->add_option("--algorithm", f.algorithm,
                    "static|random|cossim|olaux|pcgrad|cagrad|gradnorm|slgrad");
    app->add_option("--dataset", f.dataset, "toy|classify");
    app->add_option("--noise", f.noise, "toy target noise fraction");
    app->add_option("--noise-main-only", f.noise_main_only, "corrupt only the main task");
    app->add_option("--flip", f.flip, "none|uniform|background");
    app->add_option("--flip-frac", f.flip_frac, "label flip fraction");
    app->add_option("--lr", f.lr, "learning rate");
    app->add_option("--batch-size", f.batch_size, "mini-batch size");
    app->add_option("--steps", f.steps, "training steps");
    app->add_option("--seed", f.seed, "run seed");
    app->add_option("--out", f.out_dir, "output directory");
    app->add_option("--shared-layers", f.shared_layers, "number of shared layers");
    app->add_option("--task-layers", f.task_layers, "number of task-specific hidden layers");
    app->add_option("--eval-every", f.eval_every, "evaluation cadence in steps");
    app->add_option("--patience", f.patience, "early stopping patience in steps (0 = off)");
    app->add_flag("--taylor-check", f.taylor_check, "log per-step look-ahead deltas");
    app->add_flag("--log-weights", f.log_weights, "log per-step weight summaries");
    app->add_flag("--toy-tuned", f.toy_tuned, "apply the tuned toy preset for the algorithm");
}

TrainConfig build_config(const CommonFlags& f) {
    TrainConfig cfg;
    if (f.config_path) {
        cfg = load_config_file(*f.config_path);
    }
    if (f.algorithm) cfg.algorithm = *f.algorithm;
    if (f.toy_tuned) apply_toy_tuned_hyperparams(cfg);
    if (f.dataset) cfg.dataset = *f.dataset;
    if (f.noise) cfg.noise = *f.noise;
    if (f.noise_main_only) cfg.noise_main_only = *f.noise_main_only;
    if (f.flip) cfg.flip = *f.flip;
    if (f.flip_frac) cfg.flip_frac = *f.flip_frac;
    if (f.lr) cfg.lr = *f.lr;
    if (f.batch_size) cfg.batch_size = *f.batch_size;
    if (f.steps) cfg.steps = *f.steps;
    if (f.seed) cfg.seed = *f.seed;
    if (f.out_dir) cfg.out_dir = *f.out_dir;
    if (f.shared_layers) cfg.shared_layers = *f.shared_layers;
    if (f.task_layers) cfg.task_layers = *f.task_layers;
    if (f.eval_every) cfg.eval_every = *f.eval_every;
    if (f.patience) cfg.early_stop_patience = *f.patience;
    if (f.taylor_check) cfg.taylor_check = true;
    if (f.log_weights) cfg.log_weights = true;
    validate_config(cfg);
    return cfg;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

int cmd_train(const CommonFlags& flags) {
    const TrainConfig cfg = build_config(flags);
    const RunRecord rec = train(cfg);
    std::cout << "status:     " << rec.status << "\n"
              << "steps_run:  " << rec.steps_run << "\n"
              << "final_val:  " << format_g9(rec.final_val) << "\n"
              << "final_test: " << format_g9(rec.final_test) << "\n"
              << "best_val:   " << format_g9(rec.best_val) << " (step " << rec.best_val_step << ")\n";
    if (!cfg.out_dir.empty()) {
        std::cout << "outputs:    " << cfg.out_dir << "\n";
    }
    return rec.status == "ok" ? 0 : 1;
}

int cmd_suite(const CommonFlags& flags, const std::string& algorithms, const std::string& seeds_text) {
    const TrainConfig base = build_config(flags);
    std::vector<TrainConfig> configs;
    for (const std::string& name : split_list(algorithms)) {
        TrainConfig cfg = base;
        cfg.algorithm = name;
        if (flags.toy_tuned) apply_toy_tuned_hyperparams(cfg);
        validate_config(cfg);
        configs.push_back(cfg);
    }
    std::vector<std::uint64_t> seeds;
    for (const std::string& s : split_list(seeds_text)) {
        seeds.push_back(std::stoull(s));
    }
    const SuiteResult result = run_suite(configs, seeds);
    std::cout << "algorithm        setting                     mean        std        n  fail\n";
    for (const auto& e : result.entries) {
        std::printf("%-16s %-27s %-11s %-10s %2zu %4d\n", e.algorithm.c_str(), e.setting.c_str(),
                    format_g9(e.mean).c_str(), format_g9(e.stddev).c_str(), e.finals.size(), e.failures);
    }
    if (!base.out_dir.empty()) {
        std::filesystem::create_directories(base.out_dir);
        write_text_file(base.out_dir + "/summary.json", suite_to_json(result));
        std::cout << "wrote " << base.out_dir << "/summary.json\n";
    }
    return 0;
}

int cmd_grid(const CommonFlags& flags, const std::string& lr_grid, const std::string& bs_grid,
             const std::string& sl_grid, const std::string& tl_grid, const std::string& seeds_text) {
    const TrainConfig base = build_config(flags);
    GridSpec grid;
    for (const auto& s : split_list(lr_grid)) grid.lrs.push_back(std::stod(s));
    for (const auto& s : split_list(bs_grid)) grid.batch_sizes.push_back(std::stoi(s));
    for (const auto& s : split_list(sl_grid)) grid.shared_layers.push_back(std::stoi(s));
    for (const auto& s : split_list(tl_grid)) grid.task_layers.push_back(std::stoi(s));
    const GridResult result = grid_search(base, grid);
    std::cout << "trials:\n";
    for (const auto& t : result.trials) {
        std::printf("  lr=%-8g bs=%-4d sl=%-2d tl=%-2d  val=%s\n", t.lr, t.batch_size, t.shared_layers,
                    t.task_layers, format_g9(t.final_val).c_str());
    }
    std::cout << "best: lr=" << result.best.lr << " bs=" << result.best.batch_size
              << " sl=" << result.best.shared_layers << " tl=" << result.best.task_layers
              << " (val " << format_g9(result.best_val) << ")\n";

    // Re-run the selected configuration across the remaining seeds.
    std::vector<std::uint64_t> seeds;
    for (const std::string& s : split_list(seeds_text)) {
        const std::uint64_t v = std::stoull(s);
        if (v != base.seed) seeds.push_back(v);
    }
    if (!seeds.empty()) {
        const SuiteResult suite = run_suite({result.best}, seeds);
        for (const auto& e : suite.entries) {
            std::cout << "re-run over " << seeds.size() << " seeds: mean " << format_g9(e.mean)
                      << " std " << format_g9(e.stddev) << "\n";
        }
    }
    return 0;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<Vec> columns;

    int col(const std::string& name) const {
        for (size_t k = 0; k < header.size(); ++k) {
            if (header[k] == name) return static_cast<int>(k);
        }
        return -1;
    }
};

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open " + path);
    CsvTable table;
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), "empty csv: " + path);
    for (const auto& name : split_list(line)) {
        table.header.push_back(name);
    }
    table.columns.resize(table.header.size());
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_list(line);
        for (size_t k = 0; k < cells.size() && k < table.columns.size(); ++k) {
            table.columns[k].push_back(std::stod(cells[k]));
        }
    }
    return table;
}

int cmd_plot(const std::string& in_dir, std::string out_dir) {
    namespace fs = std::filesystem;
    if (out_dir.empty()) out_dir = in_dir;
    fs::create_directories(out_dir);

    const fs::path metrics = fs::path(in_dir) / "metrics.csv";
    if (fs::exists(metrics)) {
        const CsvTable t = read_csv(metrics.string());
        std::vector<PlotSeries> series;
        const Vec& steps = t.columns[t.col("step")];
        for (size_t k = 0; k < t.header.size(); ++k) {
            if (t.header[k] == "step") continue;
            series.push_back({t.header[k], steps, t.columns[k]});
        }
        PlotOptions opts{"learning curves", "step", "loss", true};
        write_text_file(out_dir + "/learning_curves.svg", render_line_chart(series, opts));
        std::cout << "wrote " << out_dir << "/learning_curves.svg\n";
    }

    const fs::path weights = fs::path(in_dir) / "weights.csv";
    if (fs::exists(weights)) {
        const CsvTable t = read_csv(weights.string());
        const Vec& steps = t.columns[t.col("step")];
        const Vec& tasks = t.columns[t.col("task")];
        const int n_tasks = tasks.empty() ? 0 : static_cast<int>(*std::max_element(tasks.begin(), tasks.end())) + 1;

        std::vector<PlotSeries> totals(n_tasks);
        std::vector<PlotSeries> split_means;
        std::vector<HistSeries> hist;
        for (int task = 0; task < n_tasks; ++task) {
            totals[task].label = "task " + std::to_string(task);
            PlotSeries clean{"task " + std::to_string(task) + " clean", {}, {}};
            PlotSeries flagged{"task " + std::to_string(task) + " noisy", {}, {}};
            HistSeries hclean{clean.label, {}};
            HistSeries hflag{flagged.label, {}};
            for (size_t r = 0; r < steps.size(); ++r) {
                if (static_cast<int>(tasks[r]) != task) continue;
                totals[task].x.push_back(steps[r]);
                totals[task].y.push_back(t.columns[t.col("total")][r]);
                clean.x.push_back(steps[r]);
                clean.y.push_back(t.columns[t.col("mean_clean")][r]);
                flagged.x.push_back(steps[r]);
                flagged.y.push_back(t.columns[t.col("mean_flagged")][r]);
                hclean.values.push_back(t.columns[t.col("mean_clean")][r]);
                hflag.values.push_back(t.columns[t.col("mean_flagged")][r]);
            }
            split_means.push_back(std::move(clean));
            split_means.push_back(std::move(flagged));
            hist.push_back(std::move(hclean));
            hist.push_back(std::move(hflag));
        }
        write_text_file(out_dir + "/task_weights.svg",
                        render_line_chart(totals, {"total task weight", "step", "weight", false}));
        write_text_file(out_dir + "/clean_vs_flagged.svg",
                        render_line_chart(split_means, {"mean sample weight", "step", "weight", false}));
        write_text_file(out_dir + "/weight_hist.svg",
                        render_histogram(hist, 40, {"sample weight distribution", "mean weight", "count", false}));
        std::cout << "wrote weight plots to " << out_dir << "\n";
    }

    const fs::path taylor = fs::path(in_dir) / "taylor.csv";
    if (fs::exists(taylor)) {
        const CsvTable t = read_csv(taylor.string());
        const Vec& steps = t.columns[t.col("step")];
        std::vector<PlotSeries> series = {
            {"exact", steps, t.columns[t.col("exact")]},
            {"approx", steps, t.columns[t.col("approx")]},
        };
        write_text_file(out_dir + "/taylor.svg",
                        render_line_chart(series, {"look-ahead delta", "step", "delta", false}));
        std::cout << "wrote " << out_dir << "/taylor.svg\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sample-level multi-task training laboratory"};
    app.require_subcommand(1);

    CommonFlags train_flags;
    CLI::App* train_cmd = app.add_subcommand("train", "run one training configuration");
    add_common_flags(train_cmd, train_flags);

    CommonFlags suite_flags;
    std::string algorithms = "static,random,cossim,olaux,pcgrad,cagrad,gradnorm,slgrad";
    std::string suite_seeds = "1,2,3";
    CLI::App* suite_cmd = app.add_subcommand("suite", "run several algorithms across seeds");
    add_common_flags(suite_cmd, suite_flags);
    suite_cmd->add_option("--algorithms", algorithms, "comma-separated algorithm list");
    suite_cmd->add_option("--seeds", suite_seeds, "comma-separated seed list");

    CommonFlags grid_flags;
    std::string lr_grid = "0.1,0.01";
    std::string bs_grid = "32,64";
    std::string sl_grid = "2,3,4";
    std::string tl_grid = "1,2,3,4";
    std::string grid_seeds = "1,2,3";
    CLI::App* grid_cmd = app.add_subcommand("grid", "hyperparameter grid search");
    add_common_flags(grid_cmd, grid_flags);
    grid_cmd->add_option("--lr-grid", lr_grid, "learning rates");
    grid_cmd->add_option("--bs-grid", bs_grid, "batch sizes");
    grid_cmd->add_option("--sl-grid", sl_grid, "shared layer counts");
    grid_cmd->add_option("--tl-grid", tl_grid, "task layer counts");
    grid_cmd->add_option("--seeds", grid_seeds, "seeds for the re-run of the selected config");

    std::string plot_in, plot_out;
    CLI::App* plot_cmd = app.add_subcommand("plot", "render plots from a run directory");
    plot_cmd->add_option("--in", plot_in, "directory with metrics.csv etc.")->required();
    plot_cmd->add_option("--out", plot_out, "output directory (defaults to --in)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) return cmd_train(train_flags);
        if (suite_cmd->parsed()) return cmd_suite(suite_flags, algorithms, suite_seeds);
        if (grid_cmd->parsed())
            return cmd_grid(grid_flags, lr_grid, bs_grid, sl_grid, tl_grid, grid_seeds);
        if (plot_cmd->parsed()) return cmd_plot(plot_in, plot_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
