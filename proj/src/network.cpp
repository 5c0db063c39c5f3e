#include "slmtl/network.hpp"

#include <cmath>

namespace slmtl {

Activation parse_activation(const std::string& name) {
    if (name == "tanh") return Activation::Tanh;
    if (name == "relu") return Activation::Relu;
    if (name == "linear") return Activation::Linear;
    require(false, "unknown activation: " + name);
    return Activation::Linear;
}

namespace {

double activate(Activation act, double z) {
    switch (act) {
        case Activation::Tanh: return std::tanh(z);
        case Activation::Relu: return z > 0.0 ? z : 0.0;
        case Activation::Linear: return z;
    }
    return z;
}

// Derivative from the stored pre-activation / activation pair.
double activate_deriv(Activation act, double z, double a) {
    switch (act) {
        case Activation::Tanh: return 1.0 - a * a;
        case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::Linear: return 1.0;
    }
    (void)z;
    return 1.0;
}

NetworkLayout compute_layout(const std::vector<DenseLayer>& shared,
                             const std::vector<std::vector<DenseLayer>>& heads) {
    NetworkLayout layout;
    size_t off = 0;
    for (const auto& l : shared) {
        off += l.w.data.size() + l.b.size();
    }
    layout.shared_end = off;
    for (const auto& head : heads) {
        const size_t begin = off;
        for (const auto& l : head) {
            off += l.w.data.size() + l.b.size();
        }
        layout.head_spans.emplace_back(begin, off);
    }
    layout.total = off;
    return layout;
}

DenseLayer glorot_layer(int out, int in, Activation act, Rng& rng) {
    DenseLayer layer;
    layer.w = Matrix(out, in);
    layer.b = Vec(out, 0.0);
    layer.act = act;
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& v : layer.w.data) {
        v = (2.0 * rng.uniform() - 1.0) * bound;
    }
    return layer;
}

// z = a_prev * W^T + b, row per sample.
void layer_forward(const DenseLayer& layer, const Matrix& a_prev, Matrix& z, Matrix& a) {
    const int n = a_prev.rows;
    const int out = layer.out_dim();
    const int in = layer.in_dim();
    require(a_prev.cols == in, "forward: layer input width mismatch");
    z = Matrix(n, out);
    a = Matrix(n, out);
    for (int j = 0; j < n; ++j) {
        const double* x = a_prev.data.data() + static_cast<size_t>(j) * in;
        for (int r = 0; r < out; ++r) {
            const double* wr = layer.w.data.data() + static_cast<size_t>(r) * in;
            double s = layer.b[r];
            for (int c = 0; c < in; ++c) {
                s += wr[c] * x[c];
            }
            z(j, r) = s;
            a(j, r) = activate(layer.act, s);
        }
    }
}

struct SegmentCursor {
    // Walks the canonical flat order: per layer, weights then bias.
    size_t off = 0;
    size_t weight_at(const DenseLayer& l) {
        const size_t o = off;
        off += l.w.data.size() + l.b.size();
        return o;
    }
};

// Backpropagates deltas (dL/dz of this layer, full batch) through one layer,
// accumulating weight/bias gradients into grad at `off` and producing the
// previous layer's dL/dz in `delta_prev` given its (z, a) pair.
void layer_backward(const DenseLayer& layer, const Matrix& a_prev, const Matrix& delta, size_t off,
                    std::span<double> grad, const Matrix* prev_z, const Matrix* prev_a,
                    Activation prev_act, Matrix* delta_prev) {
    const int n = delta.rows;
    const int out = layer.out_dim();
    const int in = layer.in_dim();
    double* dw = grad.data() + off;
    double* db = grad.data() + off + layer.w.data.size();
    for (int r = 0; r < out; ++r) {
        double* dwr = dw + static_cast<size_t>(r) * in;
        for (int j = 0; j < n; ++j) {
            const double d = delta(j, r);
            if (d == 0.0) continue;
            const double* x = a_prev.data.data() + static_cast<size_t>(j) * in;
            for (int c = 0; c < in; ++c) {
                dwr[c] += d * x[c];
            }
            db[r] += d;
        }
    }
    if (delta_prev != nullptr) {
        *delta_prev = Matrix(n, in);
        for (int j = 0; j < n; ++j) {
            for (int c = 0; c < in; ++c) {
                double s = 0.0;
                for (int r = 0; r < out; ++r) {
                    s += layer.w(r, c) * delta(j, r);
                }
                (*delta_prev)(j, c) = s * activate_deriv(prev_act, (*prev_z)(j, c), (*prev_a)(j, c));
            }
        }
    }
}

// Single-sample variant of layer_backward.
void layer_backward_row(const DenseLayer& layer, std::span<const double> a_prev,
                        std::span<const double> delta, size_t off, std::span<double> grad,
                        std::span<const double> prev_z, std::span<const double> prev_a,
                        Activation prev_act, Vec* delta_prev) {
    const int out = layer.out_dim();
    const int in = layer.in_dim();
    double* dw = grad.data() + off;
    double* db = grad.data() + off + layer.w.data.size();
    for (int r = 0; r < out; ++r) {
        const double d = delta[r];
        if (d != 0.0) {
            double* dwr = dw + static_cast<size_t>(r) * in;
            for (int c = 0; c < in; ++c) {
                dwr[c] += d * a_prev[c];
            }
            db[r] += d;
        }
    }
    if (delta_prev != nullptr) {
        delta_prev->assign(in, 0.0);
        for (int c = 0; c < in; ++c) {
            double s = 0.0;
            for (int r = 0; r < out; ++r) {
                s += layer.w(r, c) * delta[r];
            }
            (*delta_prev)[c] = s * activate_deriv(prev_act, prev_z[c], prev_a[c]);
        }
    }
}

// Segment offsets for every layer of one task path (shared + head).
struct PathOffsets {
    std::vector<size_t> shared_off;
    std::vector<size_t> head_off;
};

PathOffsets path_offsets(const MtlNetwork& net, int task) {
    PathOffsets p;
    SegmentCursor cur;
    for (const auto& l : net.shared) {
        p.shared_off.push_back(cur.weight_at(l));
    }
    for (int i = 0; i < net.n_tasks(); ++i) {
        for (const auto& l : net.heads[i]) {
            const size_t off = cur.weight_at(l);
            if (i == task) {
                p.head_off.push_back(off);
            }
        }
    }
    return p;
}

// Backward through one task path for the whole batch; seeds are dL/d(logits)
// per sample (already scaled). Accumulates into grad.
void backward_task_batched(const MtlNetwork& net, const ForwardTrace& trace, int task,
                           const Matrix& seeds, std::span<double> grad) {
    const auto offs = path_offsets(net, task);
    const auto& head = net.heads[task];
    const int n_head = static_cast<int>(head.size());
    const int n_shared = static_cast<int>(net.shared.size());

    Matrix delta = seeds;  // output layer is linear: dL/dz = seed
    for (int k = n_head - 1; k >= 0; --k) {
        const Matrix& a_prev = (k == 0) ? trace.shared_a.back() : trace.head_a[task][k - 1];
        const Matrix* pz = (k == 0) ? &trace.shared_z.back() : &trace.head_z[task][k - 1];
        const Matrix* pa = (k == 0) ? &trace.shared_a.back() : &trace.head_a[task][k - 1];
        const Activation prev_act = (k == 0) ? net.shared.back().act : head[k - 1].act;
        Matrix delta_prev;
        layer_backward(head[k], a_prev, delta, offs.head_off[k], grad, pz, pa, prev_act, &delta_prev);
        delta = std::move(delta_prev);
    }
    for (int l = n_shared - 1; l >= 0; --l) {
        const Matrix& a_prev = (l == 0) ? trace.input : trace.shared_a[l - 1];
        if (l == 0) {
            layer_backward(net.shared[0], a_prev, delta, offs.shared_off[0], grad, nullptr, nullptr,
                           Activation::Linear, nullptr);
        } else {
            Matrix delta_prev;
            layer_backward(net.shared[l], a_prev, delta, offs.shared_off[l], grad, &trace.shared_z[l - 1],
                           &trace.shared_a[l - 1], net.shared[l - 1].act, &delta_prev);
            delta = std::move(delta_prev);
        }
    }
}

void backward_task_row(const MtlNetwork& net, const ForwardTrace& trace, int task, int row,
                       const PathOffsets& offs, std::span<const double> seed, std::span<double> grad) {
    const auto& head = net.heads[task];
    const int n_head = static_cast<int>(head.size());
    const int n_shared = static_cast<int>(net.shared.size());

    Vec delta(seed.begin(), seed.end());
    Vec delta_prev;
    for (int k = n_head - 1; k >= 0; --k) {
        const Matrix& a_prev_m = (k == 0) ? trace.shared_a.back() : trace.head_a[task][k - 1];
        const Matrix& pz = (k == 0) ? trace.shared_z.back() : trace.head_z[task][k - 1];
        const Matrix& pa = (k == 0) ? trace.shared_a.back() : trace.head_a[task][k - 1];
        const Activation prev_act = (k == 0) ? net.shared.back().act : head[k - 1].act;
        layer_backward_row(head[k], a_prev_m.row(row), delta, offs.head_off[k], grad, pz.row(row),
                           pa.row(row), prev_act, &delta_prev);
        std::swap(delta, delta_prev);
    }
    for (int l = n_shared - 1; l >= 0; --l) {
        const Matrix& a_prev_m = (l == 0) ? trace.input : trace.shared_a[l - 1];
        if (l == 0) {
            layer_backward_row(net.shared[0], a_prev_m.row(row), delta, offs.shared_off[0], grad, {}, {},
                               Activation::Linear, nullptr);
        } else {
            layer_backward_row(net.shared[l], a_prev_m.row(row), delta, offs.shared_off[l], grad,
                               trace.shared_z[l - 1].row(row), trace.shared_a[l - 1].row(row),
                               net.shared[l - 1].act, &delta_prev);
            std::swap(delta, delta_prev);
        }
    }
}

void validate_arch(const ArchSpec& arch) {
    require(arch.input_dim >= 1, "arch: input_dim must be >= 1");
    require(!arch.shared_widths.empty(), "arch: at least one shared layer required");
    require(!arch.task_output_dims.empty(), "arch: at least one task required");
    for (int w : arch.shared_widths) {
        require(w >= 1, "arch: shared layer width must be >= 1");
    }
    for (int w : arch.task_hidden_widths) {
        require(w >= 1, "arch: task layer width must be >= 1");
    }
    for (int d : arch.task_output_dims) {
        require(d >= 1, "arch: task output dim must be >= 1");
    }
}

}  // namespace

MtlNetwork init_network(const ArchSpec& arch, Rng& rng) {
    validate_arch(arch);
    MtlNetwork net;
    net.arch = arch;
    int in = arch.input_dim;
    for (int w : arch.shared_widths) {
        net.shared.push_back(glorot_layer(w, in, arch.shared_act, rng));
        in = w;
    }
    const int trunk_out = in;
    for (int t = 0; t < arch.n_tasks(); ++t) {
        std::vector<DenseLayer> head;
        int hin = trunk_out;
        for (int w : arch.task_hidden_widths) {
            head.push_back(glorot_layer(w, hin, arch.task_act, rng));
            hin = w;
        }
        head.push_back(glorot_layer(arch.task_output_dims[t], hin, Activation::Linear, rng));
        net.heads.push_back(std::move(head));
    }
    net.layout = compute_layout(net.shared, net.heads);
    return net;
}

Vec flatten(const MtlNetwork& net) {
    Vec theta;
    theta.reserve(net.layout.total);
    auto emit = [&theta](const DenseLayer& l) {
        theta.insert(theta.end(), l.w.data.begin(), l.w.data.end());
        theta.insert(theta.end(), l.b.begin(), l.b.end());
    };
    for (const auto& l : net.shared) emit(l);
    for (const auto& head : net.heads) {
        for (const auto& l : head) emit(l);
    }
    return theta;
}

void unflatten(MtlNetwork& net, std::span<const double> theta) {
    require(theta.size() == net.layout.total, "unflatten: parameter length mismatch");
    size_t off = 0;
    auto absorb = [&](DenseLayer& l) {
        std::copy(theta.begin() + off, theta.begin() + off + l.w.data.size(), l.w.data.begin());
        off += l.w.data.size();
        std::copy(theta.begin() + off, theta.begin() + off + l.b.size(), l.b.begin());
        off += l.b.size();
    };
    for (auto& l : net.shared) absorb(l);
    for (auto& head : net.heads) {
        for (auto& l : head) absorb(l);
    }
}

ForwardResult forward(const MtlNetwork& net, const Matrix& X) {
    require(X.cols == net.arch.input_dim, "forward: input width mismatch");
    ForwardResult out;
    ForwardTrace& tr = out.trace;
    tr.input = X;
    const Matrix* a_prev = &tr.input;
    tr.shared_z.resize(net.shared.size());
    tr.shared_a.resize(net.shared.size());
    for (size_t l = 0; l < net.shared.size(); ++l) {
        layer_forward(net.shared[l], *a_prev, tr.shared_z[l], tr.shared_a[l]);
        a_prev = &tr.shared_a[l];
    }
    tr.head_z.resize(net.heads.size());
    tr.head_a.resize(net.heads.size());
    out.preds.resize(net.heads.size());
    for (size_t t = 0; t < net.heads.size(); ++t) {
        const Matrix* h_prev = a_prev;
        tr.head_z[t].resize(net.heads[t].size());
        tr.head_a[t].resize(net.heads[t].size());
        for (size_t k = 0; k < net.heads[t].size(); ++k) {
            layer_forward(net.heads[t][k], *h_prev, tr.head_z[t][k], tr.head_a[t][k]);
            h_prev = &tr.head_a[t][k];
        }
        out.preds[t] = tr.head_a[t].back();
    }
    return out;
}

GradGrid per_sample_task_gradients(const MtlNetwork& net, const TaskBatch& batch,
                                   const std::vector<LossSpec>& specs) {
    return per_sample_task_gradients(net, batch, specs, forward(net, batch.X));
}

GradGrid per_sample_task_gradients(const MtlNetwork& net, const TaskBatch& batch,
                                   const std::vector<LossSpec>& specs, const ForwardResult& fwd) {
    require(batch.n_tasks() == net.n_tasks(), "per_sample_task_gradients: task count mismatch");
    require(specs.size() == static_cast<size_t>(net.n_tasks()),
            "per_sample_task_gradients: loss spec count mismatch");
    require(fwd.trace.input.rows == batch.size(), "per_sample_task_gradients: trace batch mismatch");
    GradGrid grid(net.n_tasks(), batch.size(), net.param_count());
    for (int i = 0; i < net.n_tasks(); ++i) {
        const auto offs = path_offsets(net, i);
        for (int j = 0; j < batch.size(); ++j) {
            const Vec seed = loss_grad_wrt_prediction(specs[i], batch.Y[i].row(j), fwd.preds[i].row(j));
            backward_task_row(net, fwd.trace, i, j, offs, seed, grid.at(i, j));
        }
    }
    return grid;
}

Vec task_scaled_gradient(const MtlNetwork& net, const ForwardResult& fwd, const Matrix& Y, int task,
                         const LossSpec& spec, std::span<const double> scales) {
    require(static_cast<int>(scales.size()) == Y.rows, "task_scaled_gradient: scale count mismatch");
    const int out_dim = fwd.preds[task].cols;
    Matrix seeds(Y.rows, out_dim);
    for (int j = 0; j < Y.rows; ++j) {
        if (scales[j] == 0.0) continue;
        const Vec g = loss_grad_wrt_prediction(spec, Y.row(j), fwd.preds[task].row(j));
        for (int k = 0; k < out_dim; ++k) {
            seeds(j, k) = scales[j] * g[k];
        }
    }
    Vec grad(net.param_count(), 0.0);
    backward_task_batched(net, fwd.trace, task, seeds, grad);
    return grad;
}

std::vector<Vec> task_mean_gradients(const MtlNetwork& net, const TaskBatch& batch,
                                     const std::vector<LossSpec>& specs) {
    const auto fwd = forward(net, batch.X);
    const Vec scales(batch.size(), 1.0 / static_cast<double>(batch.size()));
    std::vector<Vec> grads;
    grads.reserve(net.n_tasks());
    for (int i = 0; i < net.n_tasks(); ++i) {
        grads.push_back(task_scaled_gradient(net, fwd, batch.Y[i], i, specs[i], scales));
    }
    return grads;
}

Vec weighted_total_gradient(const GradGrid& grads, const Matrix& weights) {
    require(weights.rows == grads.n_tasks() && weights.cols == grads.n_batch(),
            "weighted_total_gradient: weight matrix dimension mismatch");
    Vec g(grads.params(), 0.0);
    for (int i = 0; i < grads.n_tasks(); ++i) {
        for (int j = 0; j < grads.n_batch(); ++j) {
            const double w = weights(i, j);
            if (w != 0.0) {
                axpy_inplace(w, grads.at(i, j), g);
            }
        }
    }
    return g;
}

Vec sgd_step(const Vec& theta, const Vec& g, double eta) {
    require(theta.size() == g.size(), "sgd_step: dimension mismatch");
    require(eta > 0.0, "sgd_step: eta must be positive");
    return axpy(-eta, g, theta);
}

Vec validation_gradient(const MtlNetwork& net, const TaskBatch& val_batch, const MetaObjective& meta,
                        const std::vector<LossSpec>& specs) {
    require(val_batch.size() > 0, "validation_gradient: empty validation batch");
    require(meta.main_task >= 0 && meta.main_task < net.n_tasks(),
            "validation_gradient: main task out of range");
    const auto fwd = forward(net, val_batch.X);
    const Vec scales(val_batch.size(), 1.0 / static_cast<double>(val_batch.size()));
    return task_scaled_gradient(net, fwd, val_batch.Y[meta.main_task], meta.main_task,
                                specs[meta.main_task], scales);
}

double mean_task_loss(const MtlNetwork& net, const Matrix& X, const Matrix& Y, int task,
                      const LossSpec& spec) {
    require(X.rows == Y.rows && X.rows > 0, "mean_task_loss: empty or mismatched split");
    const auto fwd = forward(net, X);
    double s = 0.0;
    for (int j = 0; j < X.rows; ++j) {
        s += loss_value(spec, Y.row(j), fwd.preds[task].row(j));
    }
    return s / static_cast<double>(X.rows);
}

}  // namespace slmtl
