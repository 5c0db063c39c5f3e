#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slmtl/network.hpp"
#include "slmtl/tensor.hpp"

namespace slmtl {

enum class AlgorithmTag { Static, Random, CosSim, OlAux, PcGrad, CaGrad, GradNorm, SlGrad };

AlgorithmTag parse_algorithm(const std::string& name);
std::string algorithm_name(AlgorithmTag tag);

/// True for algorithms that consume the per-sample gradient grid.
bool needs_per_sample_grads(AlgorithmTag tag);
/// True for algorithms that return a combined update direction instead of a
/// sample weight matrix.
bool returns_direction(AlgorithmTag tag);

struct WeighterOptions {
    int olaux_horizon = 5;
    double olaux_lr = 1e-3;
    double gradnorm_alpha = 1.5;
    double gradnorm_lr = 0.025;
    double cagrad_c = 0.4;
    int cagrad_iters = 20;
    // Cosine-normalized alignment scores by default; false switches to the
    // raw inner products, which let large-gradient samples dominate the
    // weight mass (kept for ablation).
    bool slgrad_true_cosine = true;
};

/// Algorithm-owned persistent state. SLGrad, CosSim, PCGrad, CAGrad and
/// Static are stateless across steps; OL-AUX, GradNorm and Random mutate
/// their fields and must be owned by a single trainer.
struct WeighterState {
    AlgorithmTag tag = AlgorithmTag::Static;
    WeighterOptions opts;
    int n_tasks = 0;
    int main_task = 0;
    Rng rng{0};

    Vec olaux_weights;  // auxiliary entries; main task weight is pinned at 1
    Vec olaux_acc;
    int olaux_counter = 0;

    Vec gradnorm_weights;         // per task, kept summing to n_tasks
    Vec gradnorm_initial_losses;  // captured on the first step

    WeighterState(AlgorithmTag t, const WeighterOptions& o, int tasks, int main, Rng generator);
};

/// Raw meta-alignment scores: entry (i,j) is the plain inner product of the
/// per-sample training gradient with the validation gradient.
Matrix slgrad_raw_scores(const GradGrid& grads, const Vec& val_grad, bool true_cosine = false);

/// max(score, 0) / sum of positives. All-nonpositive scores produce the
/// all-zero matrix, which makes the parameter update a no-op for that step.
Matrix slgrad_normalize(const Matrix& scores);

Matrix static_weights(int n_tasks, int n_batch);

/// Softmax of i.i.d. standard normals over tasks, uniform within a task.
Matrix random_weights(WeighterState& state, int n_tasks, int n_batch);

/// Main task always included; auxiliary task i included iff
/// dot(task_grad_i, main_grad) > 0 (strict).
Matrix cossim_task_mask(const std::vector<Vec>& task_grads, const Vec& main_grad, int main_task,
                        int n_batch);

/// Accumulates alignment dots and applies a clamped ascent step on the
/// auxiliary weights every `horizon` calls.
Matrix olaux_update(WeighterState& state, const std::vector<Vec>& task_grads, const Vec& main_grad,
                    double eta_w, int horizon, int n_batch);

/// One conflict projection: gi minus its negative component along gj.
/// Returns gi unchanged when there is no conflict or gj is zero.
Vec pcgrad_project(const Vec& gi, const Vec& gj);

/// Projects every task gradient against the others in random order and
/// returns the mean of the projected gradients.
Vec pcgrad_combine(const std::vector<Vec>& task_grads, Rng& rng);

struct CagradSolution {
    Vec lambda;         // simplex point
    double dual_value;  // g_w . g0 + c*|g0|*|g_w| at lambda
};

/// Inner simplex problem, solved by projected gradient descent with
/// backtracking, fixed iteration budget.
CagradSolution cagrad_solve(const std::vector<Vec>& task_grads, double c, int iters);

/// g0 + (c*|g0|/|g_w|) * g_w with g_w from cagrad_solve.
Vec cagrad_combine(const std::vector<Vec>& task_grads, double c, int iters);

/// One GradNorm weight update from trunk gradient norms and loss ratios;
/// returns the per-task weights renormalized to sum to n_tasks.
Vec gradnorm_step(WeighterState& state, const Vec& trunk_grad_norms, const Vec& task_losses,
                  const Vec& initial_losses, double alpha, double eta_w);

/// Task weights spread uniformly over samples and scaled so the matrix sums
/// to 1 (all-zero weights give the all-zero matrix).
Matrix broadcast_task_weights(const Vec& task_weights, int n_batch);

/// Entries non-negative and either all zero or summing to 1.
bool is_valid_weight_matrix(const Matrix& w, double tol = 1e-9);

struct WeightingContext {
    const GradGrid* per_sample_grads = nullptr;
    const Vec* val_grad = nullptr;
    const std::vector<Vec>* task_grads = nullptr;
    const Vec* task_losses = nullptr;
    const NetworkLayout* layout = nullptr;
    int n_tasks = 0;
    int n_batch = 0;
};

struct WeightingDecision {
    std::optional<Matrix> weights;
    std::optional<Vec> direction;
};

/// Uniform dispatch so the trainer stays algorithm-agnostic. Missing context
/// fields for the selected algorithm are a fatal error.
WeightingDecision compute_step_weights(WeighterState& state, const WeightingContext& ctx);

}  // namespace slmtl
