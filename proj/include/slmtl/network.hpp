#pragma once

#include <span>
#include <string>
#include <vector>

#include "slmtl/batch.hpp"
#include "slmtl/losses.hpp"
#include "slmtl/tensor.hpp"

namespace slmtl {

enum class Activation { Tanh, Relu, Linear };

Activation parse_activation(const std::string& name);

struct DenseLayer {
    Matrix w;  // out x in
    Vec b;     // out
    Activation act = Activation::Linear;

    int out_dim() const { return w.rows; }
    int in_dim() const { return w.cols; }
};

/// Hard-parameter-sharing architecture: a shared trunk followed by one head
/// per task. Every head has the same hidden widths plus a final linear layer
/// of the task's output dimension.
struct ArchSpec {
    int input_dim = 0;
    std::vector<int> shared_widths;      // at least one layer
    std::vector<int> task_hidden_widths; // may be empty (head = output layer only)
    std::vector<int> task_output_dims;   // one per task
    Activation shared_act = Activation::Tanh;
    Activation task_act = Activation::Relu;

    int n_tasks() const { return static_cast<int>(task_output_dims.size()); }
};

/// Maps the flattened parameter vector onto trunk and head segments. The
/// canonical order is: shared layers (weights row-major, then bias), then
/// each head in task order.
struct NetworkLayout {
    size_t total = 0;
    size_t shared_end = 0;                              // trunk = [0, shared_end)
    std::vector<std::pair<size_t, size_t>> head_spans;  // per task [begin, end)
};

struct MtlNetwork {
    ArchSpec arch;
    std::vector<DenseLayer> shared;
    std::vector<std::vector<DenseLayer>> heads;
    NetworkLayout layout;

    int n_tasks() const { return static_cast<int>(heads.size()); }
    size_t param_count() const { return layout.total; }
};

/// Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases,
/// drawn in canonical layer order. Deterministic given the generator state.
MtlNetwork init_network(const ArchSpec& arch, Rng& rng);

Vec flatten(const MtlNetwork& net);
void unflatten(MtlNetwork& net, std::span<const double> theta);

/// Pre-activations and activations retained for one mini-batch, enough to
/// run any number of backward passes against it.
struct ForwardTrace {
    Matrix input;
    std::vector<Matrix> shared_z, shared_a;
    std::vector<std::vector<Matrix>> head_z, head_a;
};

struct ForwardResult {
    std::vector<Matrix> preds;  // per task, N x out_dim
    ForwardTrace trace;
};

ForwardResult forward(const MtlNetwork& net, const Matrix& X);

/// Dense grid of per-(task, sample) flat gradients, stored contiguously.
class GradGrid {
  public:
    GradGrid(int n_tasks, int n_batch, size_t params)
        : n_tasks_(n_tasks),
          n_batch_(n_batch),
          params_(params),
          data_(static_cast<size_t>(n_tasks) * n_batch * params, 0.0) {}

    int n_tasks() const { return n_tasks_; }
    int n_batch() const { return n_batch_; }
    size_t params() const { return params_; }

    std::span<double> at(int task, int sample) {
        return {data_.data() + offset(task, sample), params_};
    }
    std::span<const double> at(int task, int sample) const {
        return {data_.data() + offset(task, sample), params_};
    }

  private:
    size_t offset(int task, int sample) const {
        return (static_cast<size_t>(task) * n_batch_ + sample) * params_;
    }

    int n_tasks_;
    int n_batch_;
    size_t params_;
    Vec data_;
};

/// Gradient of the unweighted per-sample loss L_ij for every task i and
/// sample j. Head segments of tasks other than i are exactly zero in
/// entry (i, j).
GradGrid per_sample_task_gradients(const MtlNetwork& net, const TaskBatch& batch,
                                   const std::vector<LossSpec>& specs);

/// Same, reusing an already computed forward pass on batch.X.
GradGrid per_sample_task_gradients(const MtlNetwork& net, const TaskBatch& batch,
                                   const std::vector<LossSpec>& specs, const ForwardResult& fwd);

/// Gradient of sum_j scale_j * L(task, j) in one batched backward pass.
Vec task_scaled_gradient(const MtlNetwork& net, const ForwardResult& fwd, const Matrix& Y,
                         int task, const LossSpec& spec, std::span<const double> scales);

/// Per-task gradient of the mean batch loss (scale 1/N on every sample).
std::vector<Vec> task_mean_gradients(const MtlNetwork& net, const TaskBatch& batch,
                                     const std::vector<LossSpec>& specs);

/// sum_ij W(i,j) * grads(i,j).
Vec weighted_total_gradient(const GradGrid& grads, const Matrix& weights);

/// theta - eta * g.
Vec sgd_step(const Vec& theta, const Vec& g, double eta);

/// Gradient of the mean main-task loss on a held-out batch; auxiliary head
/// segments are exactly zero.
Vec validation_gradient(const MtlNetwork& net, const TaskBatch& val_batch, const MetaObjective& meta,
                        const std::vector<LossSpec>& specs);

/// Mean per-sample loss of one task over a full split or batch.
double mean_task_loss(const MtlNetwork& net, const Matrix& X, const Matrix& Y, int task,
                      const LossSpec& spec);

}  // namespace slmtl
