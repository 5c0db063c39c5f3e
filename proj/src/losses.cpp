#include "slmtl/losses.hpp"

#include <algorithm>
#include <cmath>

namespace slmtl {

LossKind parse_loss_kind(const std::string& name) {
    if (name == "mse") return LossKind::Mse;
    if (name == "bce-with-logits") return LossKind::BceWithLogits;
    if (name == "ce-with-logits") return LossKind::CeWithLogits;
    require(false, "unknown loss kind: " + name);
    return LossKind::Mse;
}

std::string loss_kind_name(LossKind kind) {
    switch (kind) {
        case LossKind::Mse: return "mse";
        case LossKind::BceWithLogits: return "bce-with-logits";
        case LossKind::CeWithLogits: return "ce-with-logits";
    }
    return "mse";
}

namespace {

double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// softplus(z) - y*z written so that no exp overflows for |z| up to ~700.
double bce_term(double z, double y) {
    return std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::abs(z)));
}

// Targets for cross entropy: one-hot/soft distribution of logit length, or a
// single class index in y[0].
void ce_target(std::span<const double> y, size_t n_logits, Vec& onehot) {
    onehot.assign(n_logits, 0.0);
    if (y.size() == n_logits) {
        std::copy(y.begin(), y.end(), onehot.begin());
        return;
    }
    require(y.size() == 1, "ce-with-logits: target must be one-hot or a class index");
    const double raw = y[0];
    const long idx = std::lround(raw);
    require(idx >= 0 && static_cast<size_t>(idx) < n_logits && std::abs(raw - static_cast<double>(idx)) < 1e-9,
            "ce-with-logits: invalid class index");
    onehot[static_cast<size_t>(idx)] = 1.0;
}

double log_sum_exp(std::span<const double> z) {
    const double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) {
        s += std::exp(v - m);
    }
    return m + std::log(s);
}

}  // namespace

double loss_value(const LossSpec& spec, std::span<const double> y, std::span<const double> yhat) {
    require(!yhat.empty(), "loss_value: empty prediction");
    switch (spec.kind) {
        case LossKind::Mse: {
            require(y.size() == yhat.size(), "mse: target/prediction length mismatch");
            double s = 0.0;
            for (size_t k = 0; k < y.size(); ++k) {
                const double d = yhat[k] - y[k];
                s += d * d;
            }
            return s / static_cast<double>(y.size());
        }
        case LossKind::BceWithLogits: {
            require(y.size() == yhat.size(), "bce: target/prediction length mismatch");
            double s = 0.0;
            for (size_t k = 0; k < y.size(); ++k) {
                s += bce_term(yhat[k], y[k]);
            }
            return s / static_cast<double>(y.size());
        }
        case LossKind::CeWithLogits: {
            Vec onehot;
            ce_target(y, yhat.size(), onehot);
            const double lse = log_sum_exp(yhat);
            double zy = 0.0;
            for (size_t k = 0; k < yhat.size(); ++k) {
                zy += onehot[k] * yhat[k];
            }
            return lse - zy;
        }
    }
    return 0.0;
}

Vec loss_grad_wrt_prediction(const LossSpec& spec, std::span<const double> y, std::span<const double> yhat) {
    Vec g(yhat.size(), 0.0);
    switch (spec.kind) {
        case LossKind::Mse: {
            require(y.size() == yhat.size(), "mse: target/prediction length mismatch");
            const double inv = 1.0 / static_cast<double>(y.size());
            for (size_t k = 0; k < y.size(); ++k) {
                g[k] = 2.0 * (yhat[k] - y[k]) * inv;
            }
            return g;
        }
        case LossKind::BceWithLogits: {
            require(y.size() == yhat.size(), "bce: target/prediction length mismatch");
            const double inv = 1.0 / static_cast<double>(y.size());
            for (size_t k = 0; k < y.size(); ++k) {
                g[k] = (sigmoid(yhat[k]) - y[k]) * inv;
            }
            return g;
        }
        case LossKind::CeWithLogits: {
            Vec onehot;
            ce_target(y, yhat.size(), onehot);
            const double m = *std::max_element(yhat.begin(), yhat.end());
            double denom = 0.0;
            for (double v : yhat) {
                denom += std::exp(v - m);
            }
            for (size_t k = 0; k < yhat.size(); ++k) {
                g[k] = std::exp(yhat[k] - m) / denom - onehot[k];
            }
            return g;
        }
    }
    return g;
}

double mean_batch_loss(const LossSpec& spec, const Matrix& Y, const Matrix& preds) {
    require(Y.rows == preds.rows && Y.rows > 0, "mean_batch_loss: empty or mismatched batch");
    double s = 0.0;
    for (int j = 0; j < Y.rows; ++j) {
        s += loss_value(spec, Y.row(j), preds.row(j));
    }
    return s / static_cast<double>(Y.rows);
}

}  // namespace slmtl
