#include "slmtl/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace slmtl {

namespace {

// First k positions of a partial Fisher-Yates pass, returned sorted so the
// downstream draw order is independent of the shuffle internals.
std::vector<int> sample_without_replacement(int n, int k, Rng& rng) {
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) {
        idx[i] = i;
    }
    for (int t = 0; t < k; ++t) {
        const int r = t + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n - t)));
        std::swap(idx[t], idx[r]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

double effective_std(double scale, bool scale_is_variance) {
    return scale_is_variance ? std::sqrt(scale) : scale;
}

Matrix draw_inputs(Rng& rng, int n, int dim) {
    return gaussian_matrix(rng, n, dim, 1.0);
}

}  // namespace

MultiTaskDataset generate_toy(const ToySpec& spec) {
    require(spec.input_dim >= 1, "toy: input_dim must be >= 1");
    require(spec.output_dim >= 1, "toy: output_dim must be >= 1");
    require(spec.n_tasks >= 1, "toy: need at least one task");
    require(spec.n_train > 0 && spec.n_val > 0 && spec.n_test > 0, "toy: split sizes must be positive");
    Vec sigma = spec.sigma.empty() ? Vec(spec.n_tasks, 1.0) : spec.sigma;
    require(static_cast<int>(sigma.size()) == spec.n_tasks, "toy: sigma count mismatch");
    Vec frac = spec.noise_fraction.empty() ? Vec(spec.n_tasks, 0.0) : spec.noise_fraction;
    require(static_cast<int>(frac.size()) == spec.n_tasks, "toy: noise fraction count mismatch");
    for (double f : frac) {
        require(f >= 0.0 && f <= 1.0, "toy: noise fraction must be in [0,1]");
    }

    const Rng root(spec.seed);
    Rng coeff_rng = root.fork(0);
    Rng input_rng = root.fork(1);
    Rng noise_rng = root.fork(2);

    const double std_b = effective_std(spec.b_scale, spec.scale_is_variance);
    const double std_eps = effective_std(spec.eps_scale, spec.scale_is_variance);
    const double std_noise = effective_std(spec.noise_scale, spec.scale_is_variance);

    const Matrix basis = gaussian_matrix(coeff_rng, spec.output_dim, spec.input_dim, std_b);
    std::vector<Matrix> eps;
    eps.reserve(spec.n_tasks);
    for (int t = 0; t < spec.n_tasks; ++t) {
        eps.push_back(gaussian_matrix(coeff_rng, spec.output_dim, spec.input_dim, std_eps));
    }

    auto make_split = [&](int n) {
        SplitData split;
        split.X = draw_inputs(input_rng, n, spec.input_dim);
        for (int t = 0; t < spec.n_tasks; ++t) {
            Matrix y(n, spec.output_dim);
            for (int j = 0; j < n; ++j) {
                for (int r = 0; r < spec.output_dim; ++r) {
                    double z = 0.0;
                    for (int k = 0; k < spec.input_dim; ++k) {
                        z += (basis(r, k) + eps[t](r, k)) * split.X(j, k);
                    }
                    y(j, r) = sigma[t] * std::tanh(z);
                }
            }
            split.Y.push_back(std::move(y));
            split.corrupted.emplace_back(n, 0);
        }
        return split;
    };

    MultiTaskDataset data;
    data.train = make_split(spec.n_train);
    data.val = make_split(spec.n_val);
    data.test = make_split(spec.n_test);
    data.losses.assign(spec.n_tasks, LossSpec{LossKind::Mse});
    data.main_task = 0;

    for (int t = 0; t < spec.n_tasks; ++t) {
        const int k = static_cast<int>(std::floor(frac[t] * spec.n_train));
        if (k == 0) continue;
        const auto picks = sample_without_replacement(spec.n_train, k, noise_rng);
        for (int j : picks) {
            for (int r = 0; r < spec.output_dim; ++r) {
                data.train.Y[t](j, r) += std_noise * noise_rng.normal();
            }
            data.train.corrupted[t][j] = 1;
        }
    }
    return data;
}

FlipMode parse_flip_mode(const std::string& name) {
    if (name == "none") return FlipMode::None;
    if (name == "uniform") return FlipMode::Uniform;
    if (name == "background") return FlipMode::Background;
    require(false, "unknown flip mode: " + name);
    return FlipMode::None;
}

std::string flip_mode_name(FlipMode mode) {
    switch (mode) {
        case FlipMode::None: return "none";
        case FlipMode::Uniform: return "uniform";
        case FlipMode::Background: return "background";
    }
    return "none";
}

std::pair<std::vector<int>, std::vector<std::uint8_t>> apply_uniform_flip(
    const std::vector<int>& labels, double fraction, int n_classes, Rng& rng) {
    require(fraction >= 0.0 && fraction <= 1.0, "uniform flip: fraction must be in [0,1]");
    require(n_classes >= 2, "uniform flip: need at least two classes");
    const int n = static_cast<int>(labels.size());
    std::vector<int> out = labels;
    std::vector<std::uint8_t> flags(n, 0);
    const int k = static_cast<int>(std::floor(fraction * n));
    const auto picks = sample_without_replacement(n, k, rng);
    for (int j : picks) {
        // Draw over the other classes only, so the flip always changes the label.
        int c = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n_classes - 1)));
        if (c >= labels[j]) {
            c += 1;
        }
        out[j] = c;
        flags[j] = 1;
    }
    return {out, flags};
}

std::pair<std::vector<int>, std::vector<std::uint8_t>> apply_background_flip(
    const std::vector<int>& labels, double fraction, int background_class, Rng& rng) {
    require(fraction >= 0.0 && fraction <= 1.0, "background flip: fraction must be in [0,1]");
    const int n = static_cast<int>(labels.size());
    std::vector<int> out = labels;
    std::vector<std::uint8_t> flags(n, 0);
    std::vector<int> pool;
    for (int j = 0; j < n; ++j) {
        if (labels[j] != background_class) {
            pool.push_back(j);
        }
    }
    const int k = std::min(static_cast<int>(std::floor(fraction * n)), static_cast<int>(pool.size()));
    const auto picks = sample_without_replacement(static_cast<int>(pool.size()), k, rng);
    for (int p : picks) {
        out[pool[p]] = background_class;
        flags[pool[p]] = 1;
    }
    return {out, flags};
}

MultiTaskDataset generate_classify(const ClassifySpec& spec) {
    require(spec.input_dim >= 1, "classify: input_dim must be >= 1");
    require(spec.n_classes >= 2, "classify: need at least two classes");
    require(spec.n_tasks >= 1 && spec.n_tasks <= spec.n_classes, "classify: 1 <= n_tasks <= n_classes");
    require(spec.main_class >= 0 && spec.main_class < spec.n_classes, "classify: main class out of range");
    require(spec.background_class >= 0 && spec.background_class < spec.n_classes,
            "classify: background class out of range");
    require(spec.flip_fraction >= 0.0 && spec.flip_fraction <= 1.0,
            "classify: flip fraction must be in [0,1]");
    require(spec.n_train > 0 && spec.n_val > 0 && spec.n_test > 0,
            "classify: split sizes must be positive");

    const Rng root(spec.seed);
    Rng center_rng = root.fork(0);
    Rng data_rng = root.fork(1);
    Rng flip_rng = root.fork(2);

    const Matrix centers = gaussian_matrix(center_rng, spec.n_classes, spec.input_dim, spec.center_scale);

    // Task t detects one class one-vs-rest: the main class first, then the
    // remaining classes in ascending order.
    std::vector<int> task_class;
    task_class.push_back(spec.main_class);
    for (int c = 0; c < spec.n_classes && static_cast<int>(task_class.size()) < spec.n_tasks; ++c) {
        if (c != spec.main_class) {
            task_class.push_back(c);
        }
    }

    auto draw_labeled = [&](int n, Matrix& X, std::vector<int>& labels) {
        X = Matrix(n, spec.input_dim);
        labels.resize(n);
        for (int j = 0; j < n; ++j) {
            const int c = static_cast<int>(data_rng.uniform_int(static_cast<std::uint64_t>(spec.n_classes)));
            labels[j] = c;
            for (int k = 0; k < spec.input_dim; ++k) {
                X(j, k) = centers(c, k) + spec.cluster_std * data_rng.normal();
            }
        }
    };

    auto to_split = [&](const Matrix& X, const std::vector<int>& labels,
                        const std::vector<std::uint8_t>& flags) {
        SplitData split;
        split.X = X;
        const int n = static_cast<int>(labels.size());
        for (int t = 0; t < spec.n_tasks; ++t) {
            Matrix y(n, 1);
            for (int j = 0; j < n; ++j) {
                y(j, 0) = labels[j] == task_class[t] ? 1.0 : 0.0;
            }
            split.Y.push_back(std::move(y));
            split.corrupted.push_back(flags);
        }
        return split;
    };

    Matrix x_train, x_val, x_test;
    std::vector<int> l_train, l_val, l_test;
    draw_labeled(spec.n_train, x_train, l_train);
    draw_labeled(spec.n_val, x_val, l_val);
    draw_labeled(spec.n_test, x_test, l_test);

    std::vector<std::uint8_t> train_flags(spec.n_train, 0);
    if (spec.flip_mode == FlipMode::Uniform) {
        std::tie(l_train, train_flags) =
            apply_uniform_flip(l_train, spec.flip_fraction, spec.n_classes, flip_rng);
    } else if (spec.flip_mode == FlipMode::Background) {
        std::tie(l_train, train_flags) =
            apply_background_flip(l_train, spec.flip_fraction, spec.background_class, flip_rng);
    }

    MultiTaskDataset data;
    data.train = to_split(x_train, l_train, train_flags);
    data.val = to_split(x_val, l_val, std::vector<std::uint8_t>(spec.n_val, 0));
    data.test = to_split(x_test, l_test, std::vector<std::uint8_t>(spec.n_test, 0));
    data.losses.assign(spec.n_tasks, LossSpec{LossKind::BceWithLogits});
    data.main_task = 0;
    return data;
}

TaskBatch next_batch(const SplitData& split, int batch_size, Rng& rng) {
    require(split.size() > 0, "next_batch: empty split");
    require(batch_size >= 1, "next_batch: batch size must be positive");
    TaskBatch batch;
    batch.indices.resize(batch_size);
    for (int j = 0; j < batch_size; ++j) {
        batch.indices[j] = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(split.size())));
    }
    batch.X = Matrix(batch_size, split.X.cols);
    for (int j = 0; j < batch_size; ++j) {
        const auto src = split.X.row(batch.indices[j]);
        std::copy(src.begin(), src.end(), batch.X.row(j).begin());
    }
    for (int t = 0; t < split.n_tasks(); ++t) {
        Matrix y(batch_size, split.Y[t].cols);
        std::vector<std::uint8_t> flags(batch_size, 0);
        for (int j = 0; j < batch_size; ++j) {
            const auto src = split.Y[t].row(batch.indices[j]);
            std::copy(src.begin(), src.end(), y.row(j).begin());
            flags[j] = split.corrupted[t][batch.indices[j]];
        }
        batch.Y.push_back(std::move(y));
        batch.corrupted.push_back(std::move(flags));
    }
    return batch;
}

void export_split_csv(const SplitData& split, std::ostream& os) {
    for (int k = 0; k < split.X.cols; ++k) {
        os << (k == 0 ? "" : ",") << "x" << k;
    }
    for (int t = 0; t < split.n_tasks(); ++t) {
        if (split.Y[t].cols == 1) {
            os << ",y" << t;
        } else {
            for (int k = 0; k < split.Y[t].cols; ++k) {
                os << ",y" << t << "_" << k;
            }
        }
    }
    for (int t = 0; t < split.n_tasks(); ++t) {
        os << ",flag" << t;
    }
    os << "\n";
    for (int j = 0; j < split.size(); ++j) {
        for (int k = 0; k < split.X.cols; ++k) {
            os << (k == 0 ? "" : ",") << split.X(j, k);
        }
        for (int t = 0; t < split.n_tasks(); ++t) {
            for (int k = 0; k < split.Y[t].cols; ++k) {
                os << "," << split.Y[t](j, k);
            }
        }
        for (int t = 0; t < split.n_tasks(); ++t) {
            os << "," << static_cast<int>(split.corrupted[t][j]);
        }
        os << "\n";
    }
}

}  // namespace slmtl
