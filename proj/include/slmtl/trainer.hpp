#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "slmtl/config.hpp"
#include "slmtl/datagen.hpp"
#include "slmtl/network.hpp"
#include "slmtl/weighting.hpp"

namespace slmtl {

struct EvalRow {
    int step = 0;
    Vec train_loss;  // per task, full training split
    double val_main = 0.0;
    double test_main = 0.0;
};

struct WeightSummaryRow {
    int step = 0;
    int task = 0;
    double mean_clean = 0.0;
    double mean_flagged = 0.0;
    double total = 0.0;
};

struct TaylorRow {
    int step = 0;
    double exact = 0.0;   // M(theta_next) - M(theta) on the step's validation batch
    double approx = 0.0;  // -eta * dot(grad M, update direction)
};

struct StepCounters {
    // Explicit evaluations of the meta objective at a shifted parameter
    // vector. Zero on the plain training path; diagnostics toggles are the
    // only thing that may raise it.
    long lookahead_evals = 0;
};

struct RunRecord {
    TrainConfig config;
    std::vector<EvalRow> evals;
    std::vector<WeightSummaryRow> weight_rows;
    std::vector<TaylorRow> taylor_rows;
    StepCounters counters;
    std::string status = "ok";  // "ok" | "diverged"
    int steps_run = 0;
    double final_val = std::numeric_limits<double>::quiet_NaN();
    double final_test = std::numeric_limits<double>::quiet_NaN();
    double best_val = std::numeric_limits<double>::infinity();
    int best_val_step = 0;
    double test_at_best_val = std::numeric_limits<double>::quiet_NaN();
};

/// Full training loop: per step, sample train and validation batches,
/// compute whatever gradients the weighting algorithm needs, apply the
/// weighted (or combined) update, and record metrics. Deterministic given
/// the config.
RunRecord train(const TrainConfig& cfg);

MultiTaskDataset build_dataset(const TrainConfig& cfg);
ArchSpec build_arch(const TrainConfig& cfg, const MultiTaskDataset& data);

struct TaskWeightSummary {
    double mean_clean = 0.0;
    double mean_flagged = 0.0;
    double total = 0.0;
};

std::vector<TaskWeightSummary> weight_distribution_summary(
    const Matrix& weights, const std::vector<std::vector<std::uint8_t>>& flags);

struct TaylorDeltas {
    double exact = 0.0;
    double approx = 0.0;
};

/// First-order look-ahead check for an arbitrary objective: exact change of
/// eval_m under theta - eta*g versus the linear prediction.
TaylorDeltas taylor_residual_core(const std::function<double(const Vec&)>& eval_m, const Vec& theta,
                                  const Vec& g, const Vec& grad_m, double eta);

/// Same check on a live network: the update direction is the weighted total
/// gradient of the train batch under `weights`; the objective is the main
/// task loss on `val_batch`.
TaylorDeltas taylor_residual(const MtlNetwork& net, const TaskBatch& train_batch, const Matrix& weights,
                             const TaskBatch& val_batch, const MetaObjective& meta,
                             const std::vector<LossSpec>& specs, double eta);

struct SuiteEntry {
    std::string algorithm;
    std::string setting;
    std::vector<std::uint64_t> seeds;
    Vec finals;  // final test metric per successful seed
    double mean = 0.0;
    double stddev = 0.0;  // sample std (n-1)
    int failures = 0;
};

struct SuiteResult {
    std::vector<SuiteEntry> entries;
};

/// Runs every config across every seed; failed runs are recorded and the
/// suite continues.
SuiteResult run_suite(const std::vector<TrainConfig>& configs, const std::vector<std::uint64_t>& seeds);

struct GridSpec {
    std::vector<double> lrs;
    std::vector<int> batch_sizes;
    std::vector<int> shared_layers;
    std::vector<int> task_layers;
};

struct GridTrial {
    double lr = 0.0;
    int batch_size = 0;
    int shared_layers = 0;
    int task_layers = 0;
    double final_val = 0.0;
};

struct GridResult {
    TrainConfig best;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<GridTrial> trials;
};

/// Exhaustive search on one seed, selected by final validation main-task
/// loss. Iteration order (lr, batch, shared, task) breaks ties.
GridResult grid_search(const TrainConfig& base, const GridSpec& grid);

/// Grid-searched (lr, batch size, shared/task depth) presets for the toy
/// benchmark, one per algorithm; leaves other fields untouched.
void apply_toy_tuned_hyperparams(TrainConfig& cfg);

/// %.9g
std::string format_g9(double v);

/// Writes config.txt, metrics.csv and any weights.csv / taylor.csv rows
/// into rec.config.out_dir.
void write_run_outputs(const RunRecord& rec);

std::string suite_to_json(const SuiteResult& result);
std::string suite_setting(const TrainConfig& cfg);

}  // namespace slmtl
