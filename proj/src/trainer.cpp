#include "slmtl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace slmtl {

namespace {

constexpr double kDivergenceThreshold = 1e6;

// Stream ids for the per-purpose sub-generators forked off the run seed.
enum Stream : std::uint64_t {
    kDataStream = 1,
    kInitStream = 2,
    kBatchStream = 3,
    kValBatchStream = 4,
    kWeighterStream = 5,
};

bool row_is_divergent(const EvalRow& row) {
    auto bad = [](double v) { return !std::isfinite(v) || std::abs(v) > kDivergenceThreshold; };
    for (double l : row.train_loss) {
        if (bad(l)) return true;
    }
    return bad(row.val_main) || bad(row.test_main);
}

}  // namespace

MultiTaskDataset build_dataset(const TrainConfig& cfg) {
    const std::uint64_t data_seed = Rng(cfg.seed).fork(kDataStream).seed();
    if (cfg.dataset == "toy") {
        ToySpec spec;
        spec.input_dim = cfg.input_dim;
        spec.output_dim = cfg.toy_output_dim;
        spec.n_tasks = 2;
        spec.sigma = Vec(2, cfg.sigma);
        spec.b_scale = cfg.b_scale;
        spec.eps_scale = cfg.eps_scale;
        spec.noise_scale = cfg.noise_scale;
        spec.scale_is_variance = cfg.scale_is_variance;
        spec.n_train = cfg.n_train;
        spec.n_val = cfg.n_val;
        spec.n_test = cfg.n_test;
        spec.noise_fraction = Vec(2, cfg.noise);
        if (cfg.noise_main_only) {
            for (int t = 0; t < 2; ++t) {
                if (t != cfg.main_task) spec.noise_fraction[t] = 0.0;
            }
        }
        spec.seed = data_seed;
        return generate_toy(spec);
    }
    require(cfg.dataset == "classify", "build_dataset: unknown dataset " + cfg.dataset);
    ClassifySpec spec;
    spec.input_dim = cfg.input_dim;
    spec.n_classes = cfg.n_classes;
    spec.n_tasks = cfg.class_tasks;
    spec.main_class = cfg.main_class;
    spec.center_scale = cfg.center_scale;
    spec.cluster_std = cfg.cluster_std;
    spec.flip_mode = parse_flip_mode(cfg.flip);
    spec.flip_fraction = cfg.flip_frac;
    spec.background_class = cfg.background_class;
    spec.n_train = cfg.n_train;
    spec.n_val = cfg.n_val;
    spec.n_test = cfg.n_test;
    spec.seed = data_seed;
    return generate_classify(spec);
}

ArchSpec build_arch(const TrainConfig& cfg, const MultiTaskDataset& data) {
    ArchSpec arch;
    arch.input_dim = data.train.X.cols;
    arch.shared_widths.assign(cfg.shared_layers, cfg.shared_width);
    arch.task_hidden_widths.assign(cfg.task_layers, cfg.task_width);
    for (int t = 0; t < data.n_tasks(); ++t) {
        arch.task_output_dims.push_back(data.train.Y[t].cols);
    }
    return arch;
}

std::vector<TaskWeightSummary> weight_distribution_summary(
    const Matrix& weights, const std::vector<std::vector<std::uint8_t>>& flags) {
    require(flags.size() == static_cast<size_t>(weights.rows),
            "weight_distribution_summary: flag row count mismatch");
    std::vector<TaskWeightSummary> out(weights.rows);
    for (int i = 0; i < weights.rows; ++i) {
        require(flags[i].size() == static_cast<size_t>(weights.cols),
                "weight_distribution_summary: flag column count mismatch");
        double clean_sum = 0.0, flagged_sum = 0.0;
        int clean_n = 0, flagged_n = 0;
        for (int j = 0; j < weights.cols; ++j) {
            if (flags[i][j]) {
                flagged_sum += weights(i, j);
                flagged_n += 1;
            } else {
                clean_sum += weights(i, j);
                clean_n += 1;
            }
        }
        out[i].total = clean_sum + flagged_sum;
        out[i].mean_clean = clean_n > 0 ? clean_sum / clean_n : 0.0;
        out[i].mean_flagged = flagged_n > 0 ? flagged_sum / flagged_n : 0.0;
    }
    return out;
}

TaylorDeltas taylor_residual_core(const std::function<double(const Vec&)>& eval_m, const Vec& theta,
                                  const Vec& g, const Vec& grad_m, double eta) {
    require(theta.size() == g.size() && theta.size() == grad_m.size(),
            "taylor_residual: dimension mismatch");
    const double m0 = eval_m(theta);
    const Vec shifted = axpy(-eta, g, theta);
    const double m1 = eval_m(shifted);
    TaylorDeltas d;
    d.exact = m1 - m0;
    d.approx = -eta * dot(grad_m, g);
    return d;
}

TaylorDeltas taylor_residual(const MtlNetwork& net, const TaskBatch& train_batch, const Matrix& weights,
                             const TaskBatch& val_batch, const MetaObjective& meta,
                             const std::vector<LossSpec>& specs, double eta) {
    const GradGrid grid = per_sample_task_gradients(net, train_batch, specs);
    const Vec g = weighted_total_gradient(grid, weights);
    const Vec grad_m = validation_gradient(net, val_batch, meta, specs);
    MtlNetwork probe = net;
    auto eval_m = [&](const Vec& theta) {
        unflatten(probe, theta);
        return mean_task_loss(probe, val_batch.X, val_batch.Y[meta.main_task], meta.main_task,
                              specs[meta.main_task]);
    };
    return taylor_residual_core(eval_m, flatten(net), g, grad_m, eta);
}

RunRecord train(const TrainConfig& cfg) {
    validate_config(cfg);
    RunRecord rec;
    rec.config = cfg;

    MultiTaskDataset data = build_dataset(cfg);
    const int n_tasks = data.n_tasks();
    require(cfg.main_task >= 0 && cfg.main_task < n_tasks, "train: main_task out of range");
    data.main_task = cfg.main_task;
    const std::vector<LossSpec>& specs = data.losses;

    const Rng root(cfg.seed);
    Rng init_rng = root.fork(kInitStream);
    Rng batch_rng = root.fork(kBatchStream);
    Rng val_rng = root.fork(kValBatchStream);

    MtlNetwork net = init_network(build_arch(cfg, data), init_rng);
    Vec theta = flatten(net);

    WeighterOptions opts;
    opts.olaux_horizon = cfg.olaux_horizon;
    opts.olaux_lr = cfg.olaux_lr;
    opts.gradnorm_alpha = cfg.gradnorm_alpha;
    opts.gradnorm_lr = cfg.gradnorm_lr;
    opts.cagrad_c = cfg.cagrad_c;
    opts.cagrad_iters = cfg.cagrad_iters;
    opts.slgrad_true_cosine = cfg.slgrad_true_cosine;
    WeighterState state(parse_algorithm(cfg.algorithm), opts, n_tasks, cfg.main_task,
                        root.fork(kWeighterStream));
    const AlgorithmTag tag = state.tag;
    const bool wants_taylor = cfg.taylor_check;

    auto evaluate = [&](int step_done) {
        EvalRow row;
        row.step = step_done;
        for (int t = 0; t < n_tasks; ++t) {
            row.train_loss.push_back(mean_task_loss(net, data.train.X, data.train.Y[t], t, specs[t]));
        }
        row.val_main =
            mean_task_loss(net, data.val.X, data.val.Y[cfg.main_task], cfg.main_task, specs[cfg.main_task]);
        row.test_main = mean_task_loss(net, data.test.X, data.test.Y[cfg.main_task], cfg.main_task,
                                       specs[cfg.main_task]);
        rec.evals.push_back(row);
        return !row_is_divergent(row);
    };

    if (!evaluate(0)) {
        rec.status = "diverged";
    }
    double best_val = rec.evals.front().val_main;
    int best_step = 0;
    double test_at_best = rec.evals.front().test_main;

    int steps_done = 0;
    while (steps_done < cfg.steps && rec.status == "ok") {
        const int t = steps_done;
        const TaskBatch train_batch = next_batch(data.train, cfg.batch_size, batch_rng);
        const TaskBatch val_batch = next_batch(data.val, cfg.batch_size, val_rng);

        const auto fwd = forward(net, train_batch.X);
        Vec batch_losses(n_tasks, 0.0);
        bool losses_ok = true;
        for (int i = 0; i < n_tasks; ++i) {
            batch_losses[i] = mean_batch_loss(specs[i], train_batch.Y[i], fwd.preds[i]);
            if (!std::isfinite(batch_losses[i]) || batch_losses[i] > kDivergenceThreshold) {
                losses_ok = false;
            }
        }
        if (!losses_ok) {
            rec.status = "diverged";
            break;
        }

        Vec g;
        std::optional<Matrix> weights;
        Vec val_grad;
        double m_before = 0.0;
        bool have_meta_context = false;

        // The meta objective is estimated on the sampled validation batch, or
        // on the whole clean validation split when configured; the look-ahead
        // instrumentation below must score against the same data.
        const bool full_meta = tag == AlgorithmTag::SlGrad && cfg.slgrad_full_val_grad;
        const Matrix& meta_x = full_meta ? data.val.X : val_batch.X;
        const Matrix& meta_y = full_meta ? data.val.Y[cfg.main_task] : val_batch.Y[cfg.main_task];

        if (tag == AlgorithmTag::SlGrad) {
            const auto val_fwd = forward(net, meta_x);
            const Vec scales(meta_x.rows, 1.0 / static_cast<double>(meta_x.rows));
            val_grad = task_scaled_gradient(net, val_fwd, meta_y, cfg.main_task,
                                            specs[cfg.main_task], scales);
            m_before = mean_batch_loss(specs[cfg.main_task], meta_y, val_fwd.preds[cfg.main_task]);
            have_meta_context = true;

            const GradGrid grid = per_sample_task_gradients(net, train_batch, specs, fwd);
            WeightingContext ctx;
            ctx.per_sample_grads = &grid;
            ctx.val_grad = &val_grad;
            ctx.n_tasks = n_tasks;
            ctx.n_batch = cfg.batch_size;
            auto decision = compute_step_weights(state, ctx);
            weights = std::move(decision.weights);
            g = weighted_total_gradient(grid, *weights);
            // Per-sample contributions enter the composite at the scale of the
            // uniform-weight gradient-collection pass: the normalized weights
            // replace the uniform 1/(N_T*N_B) base rather than summing raw
            // per-sample gradients. Keeps update magnitudes on the same
            // footing as the task-level algorithms at equal learning rates.
            const double context_scale = 1.0 / (static_cast<double>(n_tasks) * cfg.batch_size);
            for (double& v : g) {
                v *= context_scale;
            }
        } else {
            const Vec scales(train_batch.size(), 1.0 / static_cast<double>(train_batch.size()));
            std::vector<Vec> task_grads;
            task_grads.reserve(n_tasks);
            for (int i = 0; i < n_tasks; ++i) {
                task_grads.push_back(
                    task_scaled_gradient(net, fwd, train_batch.Y[i], i, specs[i], scales));
            }
            WeightingContext ctx;
            ctx.task_grads = &task_grads;
            ctx.task_losses = &batch_losses;
            ctx.layout = &net.layout;
            ctx.n_tasks = n_tasks;
            ctx.n_batch = cfg.batch_size;
            auto decision = compute_step_weights(state, ctx);
            if (decision.direction) {
                g = std::move(*decision.direction);
            } else {
                weights = std::move(decision.weights);
                // Constant weight per row: the weighted double sum collapses to
                // row_sum * mean task gradient.
                g.assign(net.param_count(), 0.0);
                for (int i = 0; i < n_tasks; ++i) {
                    double row_sum = 0.0;
                    for (int j = 0; j < cfg.batch_size; ++j) {
                        row_sum += (*weights)(i, j);
                    }
                    if (row_sum != 0.0) {
                        axpy_inplace(row_sum, task_grads[i], g);
                    }
                }
            }
        }

        if (wants_taylor && !have_meta_context) {
            const auto val_fwd = forward(net, meta_x);
            const Vec scales(meta_x.rows, 1.0 / static_cast<double>(meta_x.rows));
            val_grad = task_scaled_gradient(net, val_fwd, meta_y, cfg.main_task,
                                            specs[cfg.main_task], scales);
            m_before = mean_batch_loss(specs[cfg.main_task], meta_y, val_fwd.preds[cfg.main_task]);
            have_meta_context = true;
        }

        if (cfg.exact_lookahead) {
            // Ablation path: evaluate the meta objective at the hypothetical
            // update before committing it.
            MtlNetwork probe = net;
            unflatten(probe, axpy(-cfg.lr, g, theta));
            (void)mean_task_loss(probe, meta_x, meta_y, cfg.main_task, specs[cfg.main_task]);
            rec.counters.lookahead_evals += 1;
        }

        theta = sgd_step(theta, g, cfg.lr);
        unflatten(net, theta);
        steps_done = t + 1;

        if (!all_finite(theta)) {
            rec.status = "diverged";
            break;
        }

        if (wants_taylor) {
            const double m_after = mean_task_loss(net, meta_x, meta_y, cfg.main_task,
                                                  specs[cfg.main_task]);
            rec.counters.lookahead_evals += 1;
            TaylorRow row;
            row.step = t;
            row.exact = m_after - m_before;
            row.approx = -cfg.lr * dot(val_grad, g);
            rec.taylor_rows.push_back(row);
        }

        if (cfg.log_weights && weights) {
            const auto sums = weight_distribution_summary(*weights, train_batch.corrupted);
            for (int i = 0; i < n_tasks; ++i) {
                rec.weight_rows.push_back({t, i, sums[i].mean_clean, sums[i].mean_flagged, sums[i].total});
            }
        }

        if (steps_done % cfg.eval_every == 0 || steps_done == cfg.steps) {
            if (!evaluate(steps_done)) {
                rec.status = "diverged";
                break;
            }
            const EvalRow& row = rec.evals.back();
            if (row.val_main < best_val) {
                best_val = row.val_main;
                best_step = steps_done;
                test_at_best = row.test_main;
            } else if (cfg.early_stop_patience > 0 && steps_done - best_step >= cfg.early_stop_patience) {
                break;
            }
        }
    }

    rec.steps_run = steps_done;
    rec.final_val = rec.evals.back().val_main;
    rec.final_test = rec.evals.back().test_main;
    rec.best_val = best_val;
    rec.best_val_step = best_step;
    rec.test_at_best_val = test_at_best;

    if (!cfg.out_dir.empty()) {
        write_run_outputs(rec);
    }
    return rec;
}

void apply_toy_tuned_hyperparams(TrainConfig& cfg) {
    struct Preset {
        AlgorithmTag tag;
        double lr;
        int batch_size;
        int shared_layers;
        int task_layers;
    };
    static const Preset presets[] = {
        {AlgorithmTag::OlAux, 0.1, 64, 2, 2},   {AlgorithmTag::PcGrad, 0.1, 32, 3, 3},
        {AlgorithmTag::CaGrad, 0.1, 64, 2, 2},  {AlgorithmTag::CosSim, 0.01, 64, 3, 4},
        {AlgorithmTag::Static, 0.01, 32, 4, 4}, {AlgorithmTag::GradNorm, 0.1, 32, 2, 2},
        {AlgorithmTag::Random, 0.01, 64, 3, 4}, {AlgorithmTag::SlGrad, 0.1, 32, 3, 4},
    };
    const AlgorithmTag tag = parse_algorithm(cfg.algorithm);
    for (const Preset& p : presets) {
        if (p.tag == tag) {
            cfg.lr = p.lr;
            cfg.batch_size = p.batch_size;
            cfg.shared_layers = p.shared_layers;
            cfg.task_layers = p.task_layers;
            return;
        }
    }
}

std::string format_g9(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

void write_run_outputs(const RunRecord& rec) {
    namespace fs = std::filesystem;
    const fs::path dir(rec.config.out_dir);
    fs::create_directories(dir);

    {
        std::ofstream out(dir / "config.txt");
        require(out.good(), "cannot write config.txt");
        out << serialize_config(rec.config);
    }
    {
        std::ofstream out(dir / "metrics.csv");
        require(out.good(), "cannot write metrics.csv");
        out << "step";
        const int n_tasks = rec.evals.empty() ? 0 : static_cast<int>(rec.evals.front().train_loss.size());
        for (int t = 0; t < n_tasks; ++t) {
            out << ",train_loss_task_" << t;
        }
        out << ",val_main,test_main\n";
        for (const auto& row : rec.evals) {
            out << row.step;
            for (double l : row.train_loss) {
                out << "," << format_g9(l);
            }
            out << "," << format_g9(row.val_main) << "," << format_g9(row.test_main) << "\n";
        }
    }
    if (!rec.weight_rows.empty()) {
        std::ofstream out(dir / "weights.csv");
        require(out.good(), "cannot write weights.csv");
        out << "step,task,mean_clean,mean_flagged,total\n";
        for (const auto& row : rec.weight_rows) {
            out << row.step << "," << row.task << "," << format_g9(row.mean_clean) << ","
                << format_g9(row.mean_flagged) << "," << format_g9(row.total) << "\n";
        }
    }
    if (!rec.taylor_rows.empty()) {
        std::ofstream out(dir / "taylor.csv");
        require(out.good(), "cannot write taylor.csv");
        out << "step,exact,approx,residual\n";
        for (const auto& row : rec.taylor_rows) {
            out << row.step << "," << format_g9(row.exact) << "," << format_g9(row.approx) << ","
                << format_g9(std::abs(row.exact - row.approx)) << "\n";
        }
    }
}

std::string suite_setting(const TrainConfig& cfg) {
    std::ostringstream out;
    if (cfg.dataset == "toy") {
        out << "toy noise=" << format_g9(cfg.noise);
        if (cfg.noise_main_only) {
            out << " main-only";
        }
    } else {
        out << "classify flip=" << cfg.flip << " frac=" << format_g9(cfg.flip_frac);
    }
    return out.str();
}

SuiteResult run_suite(const std::vector<TrainConfig>& configs, const std::vector<std::uint64_t>& seeds) {
    require(!configs.empty() && !seeds.empty(), "run_suite: need at least one config and one seed");
    SuiteResult result;
    for (const TrainConfig& base : configs) {
        SuiteEntry entry;
        entry.algorithm = base.algorithm;
        entry.setting = suite_setting(base);
        entry.seeds = seeds;
        for (std::uint64_t seed : seeds) {
            TrainConfig cfg = base;
            cfg.seed = seed;
            if (!base.out_dir.empty()) {
                cfg.out_dir = base.out_dir + "/" + base.algorithm + "_seed" + std::to_string(seed);
            }
            try {
                const RunRecord rec = train(cfg);
                if (rec.status == "ok") {
                    entry.finals.push_back(rec.final_test);
                } else {
                    entry.failures += 1;
                }
            } catch (const std::exception&) {
                entry.failures += 1;
            }
        }
        const int n = static_cast<int>(entry.finals.size());
        if (n > 0) {
            double mean = 0.0;
            for (double v : entry.finals) {
                mean += v;
            }
            mean /= n;
            bool all_same = true;
            for (double v : entry.finals) {
                if (v != entry.finals.front()) all_same = false;
            }
            double var = 0.0;
            for (double v : entry.finals) {
                var += (v - mean) * (v - mean);
            }
            entry.mean = mean;
            entry.stddev = (n > 1 && !all_same) ? std::sqrt(var / (n - 1)) : 0.0;
        }
        result.entries.push_back(std::move(entry));
    }
    return result;
}

std::string suite_to_json(const SuiteResult& result) {
    nlohmann::json root = nlohmann::json::array();
    for (const auto& e : result.entries) {
        nlohmann::json item;
        item["algorithm"] = e.algorithm;
        item["setting"] = e.setting;
        item["seeds"] = e.seeds;
        item["finals"] = e.finals;
        item["mean"] = e.mean;
        item["std"] = e.stddev;
        item["failures"] = e.failures;
        root.push_back(item);
    }
    return root.dump(2);
}

GridResult grid_search(const TrainConfig& base, const GridSpec& grid) {
    require(!grid.lrs.empty() && !grid.batch_sizes.empty() && !grid.shared_layers.empty() &&
                !grid.task_layers.empty(),
            "grid_search: empty grid");
    GridResult result;
    result.best = base;
    bool first = true;
    for (double lr : grid.lrs) {
        for (int bs : grid.batch_sizes) {
            for (int sl : grid.shared_layers) {
                for (int tl : grid.task_layers) {
                    TrainConfig cfg = base;
                    cfg.lr = lr;
                    cfg.batch_size = bs;
                    cfg.shared_layers = sl;
                    cfg.task_layers = tl;
                    cfg.out_dir.clear();
                    double score = std::numeric_limits<double>::infinity();
                    try {
                        const RunRecord rec = train(cfg);
                        if (rec.status == "ok") {
                            score = rec.final_val;
                        }
                    } catch (const std::exception&) {
                        // treated as a failed trial
                    }
                    result.trials.push_back({lr, bs, sl, tl, score});
                    if (first || score < result.best_val) {
                        result.best_val = score;
                        result.best = cfg;
                        result.best.out_dir = base.out_dir;
                        first = false;
                    }
                }
            }
        }
    }
    return result;
}

}  // namespace slmtl
