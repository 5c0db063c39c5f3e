#include "slmtl/weighting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace slmtl {

AlgorithmTag parse_algorithm(const std::string& name) {
    if (name == "static") return AlgorithmTag::Static;
    if (name == "random") return AlgorithmTag::Random;
    if (name == "cossim") return AlgorithmTag::CosSim;
    if (name == "olaux") return AlgorithmTag::OlAux;
    if (name == "pcgrad") return AlgorithmTag::PcGrad;
    if (name == "cagrad") return AlgorithmTag::CaGrad;
    if (name == "gradnorm") return AlgorithmTag::GradNorm;
    if (name == "slgrad") return AlgorithmTag::SlGrad;
    require(false, "unknown weighting algorithm: " + name);
    return AlgorithmTag::Static;
}

std::string algorithm_name(AlgorithmTag tag) {
    switch (tag) {
        case AlgorithmTag::Static: return "static";
        case AlgorithmTag::Random: return "random";
        case AlgorithmTag::CosSim: return "cossim";
        case AlgorithmTag::OlAux: return "olaux";
        case AlgorithmTag::PcGrad: return "pcgrad";
        case AlgorithmTag::CaGrad: return "cagrad";
        case AlgorithmTag::GradNorm: return "gradnorm";
        case AlgorithmTag::SlGrad: return "slgrad";
    }
    return "static";
}

bool needs_per_sample_grads(AlgorithmTag tag) {
    return tag == AlgorithmTag::SlGrad;
}

bool returns_direction(AlgorithmTag tag) {
    return tag == AlgorithmTag::PcGrad || tag == AlgorithmTag::CaGrad;
}

WeighterState::WeighterState(AlgorithmTag t, const WeighterOptions& o, int tasks, int main,
                             Rng generator)
    : tag(t), opts(o), n_tasks(tasks), main_task(main), rng(generator) {
    require(tasks >= 1, "weighter: need at least one task");
    require(main >= 0 && main < tasks, "weighter: main task out of range");
    olaux_weights.assign(tasks, 1.0);
    olaux_acc.assign(tasks, 0.0);
    gradnorm_weights.assign(tasks, 1.0);
}

Matrix slgrad_raw_scores(const GradGrid& grads, const Vec& val_grad, bool true_cosine) {
    require(val_grad.size() == grads.params(), "slgrad_raw_scores: gradient length mismatch");
    Matrix scores(grads.n_tasks(), grads.n_batch());
    const double val_norm = norm2(val_grad);
    for (int i = 0; i < grads.n_tasks(); ++i) {
        for (int j = 0; j < grads.n_batch(); ++j) {
            double s = dot(grads.at(i, j), std::span<const double>(val_grad));
            if (true_cosine) {
                const double gn = norm2(grads.at(i, j));
                s = (gn > 0.0 && val_norm > 0.0) ? s / (gn * val_norm) : 0.0;
            }
            scores(i, j) = s;
        }
    }
    return scores;
}

Matrix slgrad_normalize(const Matrix& scores) {
    require(scores.all_finite(), "slgrad_normalize: non-finite scores");
    double denom = 0.0;
    for (double s : scores.data) {
        denom += std::max(s, 0.0);
    }
    Matrix w(scores.rows, scores.cols);
    if (denom <= 0.0) {
        return w;  // no helpful sample this step
    }
    for (size_t k = 0; k < scores.data.size(); ++k) {
        w.data[k] = std::max(scores.data[k], 0.0) / denom;
    }
    return w;
}

Matrix static_weights(int n_tasks, int n_batch) {
    require(n_tasks >= 1 && n_batch >= 1, "static_weights: counts must be positive");
    return Matrix(n_tasks, n_batch, 1.0 / (static_cast<double>(n_tasks) * n_batch));
}

Matrix random_weights(WeighterState& state, int n_tasks, int n_batch) {
    require(n_tasks >= 1 && n_batch >= 1, "random_weights: counts must be positive");
    Vec z(n_tasks);
    for (double& v : z) {
        v = state.rng.normal();
    }
    const double m = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (double v : z) {
        denom += std::exp(v - m);
    }
    Matrix w(n_tasks, n_batch);
    for (int i = 0; i < n_tasks; ++i) {
        const double wi = std::exp(z[i] - m) / denom / static_cast<double>(n_batch);
        for (int j = 0; j < n_batch; ++j) {
            w(i, j) = wi;
        }
    }
    return w;
}

Matrix broadcast_task_weights(const Vec& task_weights, int n_batch) {
    double total = 0.0;
    for (double v : task_weights) {
        require(v >= 0.0, "broadcast_task_weights: negative task weight");
        total += v;
    }
    Matrix w(static_cast<int>(task_weights.size()), n_batch);
    if (total <= 0.0) {
        return w;
    }
    for (size_t i = 0; i < task_weights.size(); ++i) {
        const double wi = task_weights[i] / (total * static_cast<double>(n_batch));
        for (int j = 0; j < n_batch; ++j) {
            w(static_cast<int>(i), j) = wi;
        }
    }
    return w;
}

Matrix cossim_task_mask(const std::vector<Vec>& task_grads, const Vec& main_grad, int main_task,
                        int n_batch) {
    const int n_tasks = static_cast<int>(task_grads.size());
    require(main_task >= 0 && main_task < n_tasks, "cossim: main task out of range");
    Vec t(n_tasks, 0.0);
    for (int i = 0; i < n_tasks; ++i) {
        if (i == main_task) {
            t[i] = 1.0;
        } else {
            t[i] = dot(task_grads[i], main_grad) > 0.0 ? 1.0 : 0.0;
        }
    }
    return broadcast_task_weights(t, n_batch);
}

Matrix olaux_update(WeighterState& state, const std::vector<Vec>& task_grads, const Vec& main_grad,
                    double eta_w, int horizon, int n_batch) {
    const int n_tasks = static_cast<int>(task_grads.size());
    require(n_tasks == state.n_tasks, "olaux: task count mismatch");
    require(horizon >= 1, "olaux: horizon must be >= 1");
    for (int i = 0; i < n_tasks; ++i) {
        if (i == state.main_task) continue;
        state.olaux_acc[i] += dot(task_grads[i], main_grad);
    }
    state.olaux_counter += 1;
    if (state.olaux_counter >= horizon) {
        for (int i = 0; i < n_tasks; ++i) {
            if (i == state.main_task) continue;
            state.olaux_weights[i] =
                std::max(state.olaux_weights[i] + eta_w * state.olaux_acc[i] / horizon, 0.0);
            state.olaux_acc[i] = 0.0;
        }
        state.olaux_counter = 0;
    }
    Vec t = state.olaux_weights;
    t[state.main_task] = 1.0;
    return broadcast_task_weights(t, n_batch);
}

Vec pcgrad_project(const Vec& gi, const Vec& gj) {
    const double d = dot(gi, gj);
    if (d >= 0.0) {
        return gi;
    }
    const double nj = dot(gj, gj);
    if (nj == 0.0) {
        return gi;
    }
    return axpy(-d / nj, gj, gi);
}

Vec pcgrad_combine(const std::vector<Vec>& task_grads, Rng& rng) {
    const int n_tasks = static_cast<int>(task_grads.size());
    require(n_tasks >= 2, "pcgrad: need at least two tasks");
    const size_t p = task_grads[0].size();
    Vec combined(p, 0.0);
    std::vector<int> order(n_tasks);
    for (int i = 0; i < n_tasks; ++i) {
        Vec pc = task_grads[i];
        std::iota(order.begin(), order.end(), 0);
        // Fisher-Yates with the pinned generator keeps shuffles reproducible.
        for (int k = n_tasks - 1; k > 0; --k) {
            const int r = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(k) + 1));
            std::swap(order[k], order[r]);
        }
        for (int j : order) {
            if (j == i) continue;
            pc = pcgrad_project(pc, task_grads[j]);
        }
        axpy_inplace(1.0 / n_tasks, pc, combined);
    }
    return combined;
}

namespace {

// Euclidean projection onto the probability simplex.
Vec project_simplex(const Vec& v) {
    const int n = static_cast<int>(v.size());
    Vec u = v;
    std::sort(u.begin(), u.end(), std::greater<double>());
    double css = 0.0;
    double tau = 0.0;
    int rho = 0;
    for (int k = 0; k < n; ++k) {
        css += u[k];
        const double t = (css - 1.0) / (k + 1);
        if (u[k] - t > 0.0) {
            rho = k + 1;
            tau = t;
        }
    }
    (void)rho;
    Vec out(v.size());
    for (size_t k = 0; k < v.size(); ++k) {
        out[k] = std::max(v[k] - tau, 0.0);
    }
    return out;
}

}  // namespace

CagradSolution cagrad_solve(const std::vector<Vec>& task_grads, double c, int iters) {
    const int n = static_cast<int>(task_grads.size());
    require(n >= 1, "cagrad: need at least one task");
    require(c >= 0.0, "cagrad: c must be non-negative");
    require(iters >= 1, "cagrad: iteration count must be >= 1");

    Matrix gram(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            const double g = dot(task_grads[i], task_grads[j]);
            gram(i, j) = g;
            gram(j, i) = g;
        }
    }
    // b_i = g_i . g0 with g0 the mean gradient; |g0|^2 = mean of b.
    Vec b(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) {
            s += gram(i, j);
        }
        b[i] = s / n;
    }
    double g0_sq = 0.0;
    for (double v : b) {
        g0_sq += v;
    }
    g0_sq = std::max(g0_sq / n, 0.0);
    const double phi = c * std::sqrt(g0_sq);

    auto objective = [&](const Vec& lam) {
        double lin = 0.0;
        double quad = 0.0;
        for (int i = 0; i < n; ++i) {
            lin += lam[i] * b[i];
            for (int j = 0; j < n; ++j) {
                quad += lam[i] * gram(i, j) * lam[j];
            }
        }
        return lin + phi * std::sqrt(std::max(quad, 0.0));
    };

    Vec lam(n, 1.0 / n);
    double f = objective(lam);
    for (int it = 0; it < iters; ++it) {
        Vec grad(n, 0.0);
        double quad = 0.0;
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) {
                s += gram(i, j) * lam[j];
            }
            grad[i] = s;
            quad += lam[i] * s;
        }
        const double gw_norm = std::sqrt(std::max(quad, 1e-30));
        for (int i = 0; i < n; ++i) {
            grad[i] = b[i] + phi * grad[i] / gw_norm;
        }
        // Backtrack until the step is a descent step.
        double alpha = 1.0;
        bool moved = false;
        for (int bt = 0; bt < 40; ++bt) {
            Vec cand(n);
            for (int i = 0; i < n; ++i) {
                cand[i] = lam[i] - alpha * grad[i];
            }
            cand = project_simplex(cand);
            const double fc = objective(cand);
            if (fc <= f) {
                lam = std::move(cand);
                f = fc;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!moved) {
            break;
        }
    }
    return {lam, f};
}

Vec cagrad_combine(const std::vector<Vec>& task_grads, double c, int iters) {
    const int n = static_cast<int>(task_grads.size());
    require(n >= 1, "cagrad: need at least one task");
    const size_t p = task_grads[0].size();
    Vec g0(p, 0.0);
    for (const Vec& g : task_grads) {
        axpy_inplace(1.0 / n, g, g0);
    }
    const double g0_norm = norm2(g0);
    if (g0_norm == 0.0) {
        bool any = false;
        for (const Vec& g : task_grads) {
            if (norm2(g) > 0.0) any = true;
        }
        if (!any) {
            return Vec(p, 0.0);
        }
    }
    const auto sol = cagrad_solve(task_grads, c, iters);
    Vec gw(p, 0.0);
    for (int i = 0; i < n; ++i) {
        axpy_inplace(sol.lambda[i], task_grads[i], gw);
    }
    const double gw_norm = norm2(gw);
    if (gw_norm < 1e-15) {
        return g0;
    }
    Vec d = g0;
    axpy_inplace(c * g0_norm / gw_norm, gw, d);
    return d;
}

Vec gradnorm_step(WeighterState& state, const Vec& trunk_grad_norms, const Vec& task_losses,
                  const Vec& initial_losses, double alpha, double eta_w) {
    const int n = static_cast<int>(trunk_grad_norms.size());
    require(n == state.n_tasks, "gradnorm: task count mismatch");
    require(task_losses.size() == static_cast<size_t>(n) && initial_losses.size() == static_cast<size_t>(n),
            "gradnorm: loss vector length mismatch");
    for (double l0 : initial_losses) {
        require(l0 != 0.0, "gradnorm: zero initial loss");
    }

    Vec& w = state.gradnorm_weights;
    Vec g(n);
    double g_bar = 0.0;
    for (int i = 0; i < n; ++i) {
        g[i] = w[i] * trunk_grad_norms[i];
        g_bar += g[i];
    }
    g_bar /= n;

    Vec ratio(n);
    double r_bar = 0.0;
    for (int i = 0; i < n; ++i) {
        ratio[i] = task_losses[i] / initial_losses[i];
        r_bar += ratio[i];
    }
    r_bar /= n;
    require(r_bar != 0.0, "gradnorm: degenerate loss ratios");

    for (int i = 0; i < n; ++i) {
        const double target = g_bar * std::pow(ratio[i] / r_bar, alpha);
        const double diff = g[i] - target;
        const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        w[i] = std::max(w[i] - eta_w * sign * trunk_grad_norms[i], 1e-8);
    }
    double total = 0.0;
    for (double v : w) {
        total += v;
    }
    for (double& v : w) {
        v *= static_cast<double>(n) / total;
    }
    return w;
}

bool is_valid_weight_matrix(const Matrix& w, double tol) {
    bool all_zero = true;
    double total = 0.0;
    for (double v : w.data) {
        if (!std::isfinite(v) || v < 0.0) {
            return false;
        }
        if (v != 0.0) {
            all_zero = false;
        }
        total += v;
    }
    return all_zero || std::abs(total - 1.0) <= tol;
}

WeightingDecision compute_step_weights(WeighterState& state, const WeightingContext& ctx) {
    WeightingDecision out;
    switch (state.tag) {
        case AlgorithmTag::Static:
            out.weights = static_weights(ctx.n_tasks, ctx.n_batch);
            break;
        case AlgorithmTag::Random:
            out.weights = random_weights(state, ctx.n_tasks, ctx.n_batch);
            break;
        case AlgorithmTag::SlGrad: {
            require(ctx.per_sample_grads != nullptr && ctx.val_grad != nullptr,
                    "slgrad: per-sample gradients and validation gradient required");
            const Matrix scores =
                slgrad_raw_scores(*ctx.per_sample_grads, *ctx.val_grad, state.opts.slgrad_true_cosine);
            out.weights = slgrad_normalize(scores);
            break;
        }
        case AlgorithmTag::CosSim:
            require(ctx.task_grads != nullptr, "cossim: task gradients required");
            out.weights = cossim_task_mask(*ctx.task_grads, (*ctx.task_grads)[state.main_task],
                                           state.main_task, ctx.n_batch);
            break;
        case AlgorithmTag::OlAux:
            require(ctx.task_grads != nullptr, "olaux: task gradients required");
            out.weights = olaux_update(state, *ctx.task_grads, (*ctx.task_grads)[state.main_task],
                                       state.opts.olaux_lr, state.opts.olaux_horizon, ctx.n_batch);
            break;
        case AlgorithmTag::GradNorm: {
            require(ctx.task_grads != nullptr && ctx.task_losses != nullptr && ctx.layout != nullptr,
                    "gradnorm: task gradients, losses and layout required");
            if (state.gradnorm_initial_losses.empty()) {
                state.gradnorm_initial_losses = *ctx.task_losses;
            }
            Vec trunk_norms(ctx.n_tasks);
            for (int i = 0; i < ctx.n_tasks; ++i) {
                std::span<const double> trunk((*ctx.task_grads)[i].data(), ctx.layout->shared_end);
                trunk_norms[i] = norm2(trunk);
            }
            const Vec w = gradnorm_step(state, trunk_norms, *ctx.task_losses,
                                        state.gradnorm_initial_losses, state.opts.gradnorm_alpha,
                                        state.opts.gradnorm_lr);
            out.weights = broadcast_task_weights(w, ctx.n_batch);
            break;
        }
        case AlgorithmTag::PcGrad:
            require(ctx.task_grads != nullptr, "pcgrad: task gradients required");
            out.direction = pcgrad_combine(*ctx.task_grads, state.rng);
            break;
        case AlgorithmTag::CaGrad:
            require(ctx.task_grads != nullptr, "cagrad: task gradients required");
            out.direction = cagrad_combine(*ctx.task_grads, state.opts.cagrad_c, state.opts.cagrad_iters);
            break;
    }
    return out;
}

}  // namespace slmtl
