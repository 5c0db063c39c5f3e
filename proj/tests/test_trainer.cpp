#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "slmtl/trainer.hpp"

using namespace slmtl;

namespace {

TrainConfig quick_toy(const std::string& algorithm, int steps = 200) {
    TrainConfig cfg;
    cfg.algorithm = algorithm;
    cfg.dataset = "toy";
    cfg.steps = steps;
    cfg.eval_every = 50;
    cfg.batch_size = 16;
    cfg.toy_output_dim = 5;
    cfg.n_train = 200;
    cfg.n_val = 64;
    cfg.n_test = 64;
    cfg.shared_layers = 2;
    cfg.shared_width = 16;
    cfg.task_layers = 1;
    cfg.task_width = 8;
    cfg.lr = 0.05;
    cfg.seed = 3;
    cfg.early_stop_patience = 0;
    return cfg;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

TEST_CASE("train: static weighting reduces the training loss on clean data") {
    TrainConfig cfg = quick_toy("static", 2000);
    cfg.lr = 0.01;
    const RunRecord rec = train(cfg);
    REQUIRE(rec.status == "ok");
    REQUIRE(rec.evals.size() >= 2);
    CHECK(rec.evals.back().train_loss[0] < rec.evals.front().train_loss[0]);
    CHECK(rec.evals.back().train_loss[1] < rec.evals.front().train_loss[1]);
    CHECK(rec.counters.lookahead_evals == 0);
}

TEST_CASE("train: every algorithm runs a short toy problem") {
    for (const char* name :
         {"static", "random", "cossim", "olaux", "pcgrad", "cagrad", "gradnorm", "slgrad"}) {
        TrainConfig cfg = quick_toy(name, 60);
        const RunRecord rec = train(cfg);
        REQUIRE(rec.status == "ok");
        CHECK(rec.steps_run == 60);
        CHECK(std::isfinite(rec.final_val));
        CHECK(std::isfinite(rec.final_test));
    }
}

TEST_CASE("train: identical configs give identical records and files") {
    TrainConfig cfg = quick_toy("slgrad", 120);
    cfg.noise = 0.4;
    cfg.log_weights = true;

    const RunRecord a = train(cfg);
    const RunRecord b = train(cfg);
    REQUIRE(a.evals.size() == b.evals.size());
    for (size_t k = 0; k < a.evals.size(); ++k) {
        CHECK(a.evals[k].val_main == b.evals[k].val_main);
        CHECK(a.evals[k].test_main == b.evals[k].test_main);
        CHECK(a.evals[k].train_loss == b.evals[k].train_loss);
    }
    REQUIRE(a.weight_rows.size() == b.weight_rows.size());
    for (size_t k = 0; k < a.weight_rows.size(); ++k) {
        CHECK(a.weight_rows[k].total == b.weight_rows[k].total);
        CHECK(a.weight_rows[k].mean_clean == b.weight_rows[k].mean_clean);
    }

    namespace fs = std::filesystem;
    const fs::path dir1 = fs::temp_directory_path() / "slmtl_det_1";
    const fs::path dir2 = fs::temp_directory_path() / "slmtl_det_2";
    fs::remove_all(dir1);
    fs::remove_all(dir2);
    TrainConfig c1 = cfg;
    c1.out_dir = dir1.string();
    TrainConfig c2 = cfg;
    c2.out_dir = dir2.string();
    train(c1);
    train(c2);
    CHECK(slurp(dir1 / "metrics.csv") == slurp(dir2 / "metrics.csv"));
    CHECK(slurp(dir1 / "weights.csv") == slurp(dir2 / "weights.csv"));
    fs::remove_all(dir1);
    fs::remove_all(dir2);
}

TEST_CASE("train: broadcast weighting path matches the per-sample route") {
    // On a fixed state, the trainer's row-sum shortcut for constant-per-task
    // weights must equal the full double sum over the gradient grid.
    TrainConfig cfg = quick_toy("static", 10);
    const MultiTaskDataset data = build_dataset(cfg);
    Rng init(5);
    const MtlNetwork net = init_network(build_arch(cfg, data), init);
    Rng batch_rng(6);
    const TaskBatch batch = next_batch(data.train, 8, batch_rng);

    const auto grid = per_sample_task_gradients(net, batch, data.losses);
    const Matrix w = static_weights(2, 8);
    const Vec full = weighted_total_gradient(grid, w);

    const auto fwd = forward(net, batch.X);
    const Vec scales(8, 1.0 / 8.0);
    Vec shortcut(net.param_count(), 0.0);
    for (int i = 0; i < 2; ++i) {
        const Vec mean_grad = task_scaled_gradient(net, fwd, batch.Y[i], i, data.losses[i], scales);
        double row_sum = 0.0;
        for (int j = 0; j < 8; ++j) row_sum += w(i, j);
        axpy_inplace(row_sum, mean_grad, shortcut);
    }
    for (size_t k = 0; k < full.size(); ++k) {
        CHECK(full[k] == doctest::Approx(shortcut[k]).epsilon(1e-12));
    }
}

TEST_CASE("taylor_residual_core: quadratic probe closed form") {
    // M(theta) = |theta|^2 and L = |theta|^2: residual is exactly eta^2 |2 theta|^2
    Rng rng(8);
    Vec theta(10);
    for (double& v : theta) v = rng.normal();
    Vec g(theta.size());
    for (size_t k = 0; k < theta.size(); ++k) g[k] = 2.0 * theta[k];

    auto eval_m = [](const Vec& p) { return dot(p, p); };
    for (double eta : {0.1, 0.01}) {
        const TaylorDeltas d = taylor_residual_core(eval_m, theta, g, g, eta);
        const double residual = std::abs(d.exact - d.approx);
        const double expected = eta * eta * dot(g, g);
        CHECK(std::abs(residual - expected) / expected < 1e-10);
    }
    const TaylorDeltas zero = taylor_residual_core(eval_m, theta, g, g, 0.0);
    CHECK(zero.exact == 0.0);
    CHECK(zero.approx == 0.0);
}

TEST_CASE("taylor_residual: zero step and zero weights give zero deltas") {
    TrainConfig cfg = quick_toy("slgrad", 10);
    cfg.noise = 0.4;
    const MultiTaskDataset data = build_dataset(cfg);
    Rng init(5);
    const MtlNetwork net = init_network(build_arch(cfg, data), init);
    Rng batch_rng(7);
    const TaskBatch tb = next_batch(data.train, 8, batch_rng);
    const TaskBatch vb = next_batch(data.val, 8, batch_rng);
    const MetaObjective meta{0};

    const Matrix zero_w(2, 8);
    const TaylorDeltas z = taylor_residual(net, tb, zero_w, vb, meta, data.losses, 0.05);
    CHECK(z.exact == 0.0);
    CHECK(z.approx == 0.0);

    const Matrix some_w = static_weights(2, 8);
    const TaylorDeltas d0 = taylor_residual(net, tb, some_w, vb, meta, data.losses, 0.0);
    CHECK(d0.exact == 0.0);
    CHECK(d0.approx == 0.0);

    // small eta: exact and approx agree to second order
    const TaylorDeltas d = taylor_residual(net, tb, some_w, vb, meta, data.losses, 1e-4);
    CHECK(std::abs(d.exact - d.approx) < 1e-6 * std::max(1.0, std::abs(d.exact)));
}

TEST_CASE("weight_distribution_summary: partitions and totals") {
    Matrix w(2, 4, 0.125);
    std::vector<std::vector<std::uint8_t>> flags{{0, 1, 0, 1}, {1, 1, 0, 0}};
    const auto s = weight_distribution_summary(w, flags);
    CHECK(s[0].mean_clean == doctest::Approx(0.125));
    CHECK(s[0].mean_flagged == doctest::Approx(0.125));
    CHECK(s[0].total + s[1].total == doctest::Approx(1.0));

    Matrix w2(1, 4);
    w2(0, 0) = 0.6;
    w2(0, 2) = 0.4;
    const std::vector<std::vector<std::uint8_t>> flags2{{0, 1, 0, 1}};
    const auto s2 = weight_distribution_summary(w2, flags2);
    CHECK(s2[0].mean_flagged == 0.0);
    CHECK(s2[0].mean_clean == doctest::Approx(0.5));
    CHECK(s2[0].total == doctest::Approx(1.0));
}

TEST_CASE("train: look-ahead evaluations happen only behind the toggles") {
    TrainConfig cfg = quick_toy("slgrad", 40);
    const RunRecord plain = train(cfg);
    CHECK(plain.counters.lookahead_evals == 0);
    CHECK(plain.taylor_rows.empty());

    TrainConfig with_taylor = cfg;
    with_taylor.taylor_check = true;
    const RunRecord instrumented = train(with_taylor);
    CHECK(instrumented.counters.lookahead_evals == 40);
    CHECK(instrumented.taylor_rows.size() == 40);

    // the diagnostics do not perturb the trajectory
    REQUIRE(plain.evals.size() == instrumented.evals.size());
    for (size_t k = 0; k < plain.evals.size(); ++k) {
        CHECK(plain.evals[k].val_main == instrumented.evals[k].val_main);
    }

    TrainConfig with_lookahead = cfg;
    with_lookahead.exact_lookahead = true;
    const RunRecord ablation = train(with_lookahead);
    CHECK(ablation.counters.lookahead_evals == 40);
    for (size_t k = 0; k < plain.evals.size(); ++k) {
        CHECK(plain.evals[k].val_main == ablation.evals[k].val_main);
    }
}

TEST_CASE("train: divergence is detected and reported") {
    TrainConfig cfg = quick_toy("static", 400);
    cfg.lr = 1e4;
    cfg.eval_every = 10;
    const RunRecord rec = train(cfg);
    CHECK(rec.status == "diverged");
    CHECK(rec.steps_run < 400);
}

TEST_CASE("run_suite: statistics and failure accounting") {
    const TrainConfig cfg = quick_toy("static", 60);
    const SuiteResult res = run_suite({cfg}, {1, 2, 3});
    REQUIRE(res.entries.size() == 1);
    const SuiteEntry& e = res.entries[0];
    REQUIRE(e.finals.size() == 3);
    double mean = (e.finals[0] + e.finals[1] + e.finals[2]) / 3.0;
    double var = 0.0;
    for (double v : e.finals) var += (v - mean) * (v - mean);
    CHECK(e.mean == doctest::Approx(mean));
    CHECK(e.stddev == doctest::Approx(std::sqrt(var / 2.0)));

    const SuiteResult same = run_suite({cfg}, {7, 7, 7});
    CHECK(same.entries[0].stddev == 0.0);

    TrainConfig bad = quick_toy("static", 50);
    bad.lr = 1e4;
    bad.eval_every = 10;
    const SuiteResult failed = run_suite({bad}, {1, 2});
    CHECK(failed.entries[0].failures == 2);
    CHECK(failed.entries[0].finals.empty());

    const std::string json = suite_to_json(res);
    CHECK(json.find("\"algorithm\"") != std::string::npos);
    CHECK(json.find("static") != std::string::npos);
}

TEST_CASE("grid_search: singleton grid and determinism") {
    const TrainConfig base = quick_toy("static", 40);
    GridSpec grid;
    grid.lrs = {base.lr};
    grid.batch_sizes = {base.batch_size};
    grid.shared_layers = {base.shared_layers};
    grid.task_layers = {base.task_layers};
    const GridResult r1 = grid_search(base, grid);
    CHECK(r1.trials.size() == 1);
    CHECK(r1.best.lr == base.lr);
    CHECK(r1.best.batch_size == base.batch_size);

    const GridResult r2 = grid_search(base, grid);
    CHECK(r1.best_val == r2.best_val);
}

TEST_CASE("grid_search: a working learning rate beats a dormant one") {
    TrainConfig base = quick_toy("slgrad", 150);
    base.noise = 0.4;
    GridSpec grid;
    grid.lrs = {0.1, 1e-6};
    grid.batch_sizes = {16};
    grid.shared_layers = {2};
    grid.task_layers = {1};
    const GridResult r = grid_search(base, grid);
    CHECK(r.best.lr == 0.1);
    CHECK(r.trials.size() == 2);
    CHECK(r.trials[0].final_val < r.trials[1].final_val);
}

TEST_CASE("train: early stopping halts after a patience window") {
    TrainConfig cfg = quick_toy("static", 4000);
    cfg.lr = 0.05;
    cfg.early_stop_patience = 200;
    cfg.noise = 0.6;  // noisy targets make validation stall early
    const RunRecord rec = train(cfg);
    REQUIRE(rec.status == "ok");
    CHECK(rec.steps_run < 4000);
    CHECK(rec.best_val_step <= rec.steps_run);
    CHECK(rec.best_val <= rec.final_val + 1e-12);
}

TEST_CASE("toy-tuned presets cover all algorithms") {
    TrainConfig cfg;
    cfg.algorithm = "slgrad";
    apply_toy_tuned_hyperparams(cfg);
    CHECK(cfg.lr == 0.1);
    CHECK(cfg.batch_size == 32);
    CHECK(cfg.shared_layers == 3);
    CHECK(cfg.task_layers == 4);

    cfg.algorithm = "static";
    apply_toy_tuned_hyperparams(cfg);
    CHECK(cfg.lr == 0.01);
    CHECK(cfg.shared_layers == 4);
}
