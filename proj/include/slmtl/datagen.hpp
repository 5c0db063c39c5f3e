#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "slmtl/batch.hpp"
#include "slmtl/losses.hpp"
#include "slmtl/tensor.hpp"

namespace slmtl {

/// One immutable split with per-task targets and corruption provenance.
struct SplitData {
    Matrix X;
    std::vector<Matrix> Y;
    std::vector<std::vector<std::uint8_t>> corrupted;

    int size() const { return X.rows; }
    int n_tasks() const { return static_cast<int>(Y.size()); }
};

struct MultiTaskDataset {
    SplitData train, val, test;
    std::vector<LossSpec> losses;
    int main_task = 0;

    int n_tasks() const { return train.n_tasks(); }
};

/// Synthetic regression tasks sharing a common linear basis inside a tanh,
/// with optional additive Gaussian target noise on an exact-count subset of
/// the training split. The scale fields are the raw second arguments of the
/// generating normals; by default they are standard deviations, with
/// `scale_is_variance` switching the interpretation for sensitivity checks.
struct ToySpec {
    int input_dim = 10;
    int output_dim = 1;  // rows of B; targets are vectors of this length
    int n_tasks = 2;       // main + one auxiliary
    Vec sigma;             // per-task output scale; empty means all 1.0
    double b_scale = 1.0;
    double eps_scale = 1.8708286933869707;    // sqrt(3.5)
    double noise_scale = 1.4142135623730951;  // sqrt(2)
    bool scale_is_variance = false;
    int n_train = 1000;
    int n_val = 200;
    int n_test = 200;
    Vec noise_fraction;  // per task in [0,1]; empty means all 0
    std::uint64_t seed = 1;
};

MultiTaskDataset generate_toy(const ToySpec& spec);

enum class FlipMode { None, Uniform, Background };

FlipMode parse_flip_mode(const std::string& name);
std::string flip_mode_name(FlipMode mode);

/// Gaussian-cluster classification recast as one-vs-rest binary tasks: the
/// main task detects `main_class`, auxiliaries detect the remaining classes
/// in ascending order. Label flips touch the training split only.
struct ClassifySpec {
    int input_dim = 10;
    int n_classes = 4;
    int n_tasks = 4;  // 1 main + (n_tasks - 1) auxiliaries
    int main_class = 0;
    double center_scale = 1.5;
    double cluster_std = 1.0;
    FlipMode flip_mode = FlipMode::None;
    double flip_fraction = 0.0;
    int background_class = 0;
    int n_train = 1000;
    int n_val = 200;
    int n_test = 200;
    std::uint64_t seed = 1;
};

MultiTaskDataset generate_classify(const ClassifySpec& spec);

/// Flips exactly floor(fraction*n) labels, each to a uniformly drawn
/// *different* class. Returns the new labels and the per-sample flags.
std::pair<std::vector<int>, std::vector<std::uint8_t>> apply_uniform_flip(
    const std::vector<int>& labels, double fraction, int n_classes, Rng& rng);

/// Flips floor(fraction*n) labels drawn from the samples not already in the
/// background class, all to the background class.
std::pair<std::vector<int>, std::vector<std::uint8_t>> apply_background_flip(
    const std::vector<int>& labels, double fraction, int background_class, Rng& rng);

/// Uniform sample with replacement; carries flags and source indices.
TaskBatch next_batch(const SplitData& split, int batch_size, Rng& rng);

/// Columnar text export: header row, one column per input dim, per task
/// target component, and per task flag.
void export_split_csv(const SplitData& split, std::ostream& os);

}  // namespace slmtl
