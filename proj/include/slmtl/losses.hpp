#pragma once

#include <span>
#include <string>

#include "slmtl/tensor.hpp"

namespace slmtl {

enum class LossKind {
    Mse,           // mean over output dims of (yhat - y)^2
    BceWithLogits, // mean over output dims, stable log-sum-exp form
    CeWithLogits,  // categorical cross entropy over the logit vector
};

LossKind parse_loss_kind(const std::string& name);
std::string loss_kind_name(LossKind kind);

/// Per-task loss configuration; fixed for the duration of a run.
struct LossSpec {
    LossKind kind = LossKind::Mse;
};

/// Validation meta-objective: the mean loss of one designated task,
/// evaluated on held-out data only.
struct MetaObjective {
    int main_task = 0;
};

/// Per-sample loss. For cross entropy, `y` is either a one-hot (or soft)
/// distribution of the same length as `yhat`, or a single class index.
double loss_value(const LossSpec& spec, std::span<const double> y, std::span<const double> yhat);

/// Analytic gradient of loss_value with respect to the prediction (logits
/// for bce/ce). Same target conventions as loss_value.
Vec loss_grad_wrt_prediction(const LossSpec& spec, std::span<const double> y, std::span<const double> yhat);

/// Mean per-sample loss over matching rows of targets and predictions.
double mean_batch_loss(const LossSpec& spec, const Matrix& Y, const Matrix& preds);

}  // namespace slmtl
