#pragma once

#include <cstdint>
#include <vector>

#include "slmtl/tensor.hpp"

namespace slmtl {

/// One mini-batch of multi-task data: shared inputs, per-task targets, and
/// per-task per-sample corruption provenance flags. Validation and test
/// batches always carry all-false flags.
struct TaskBatch {
    Matrix X;                                   // N x input_dim
    std::vector<Matrix> Y;                      // per task, N x out_dim(task)
    std::vector<std::vector<std::uint8_t>> corrupted;  // per task, N flags
    std::vector<int> indices;                   // positions in the parent split

    int size() const { return X.rows; }
    int n_tasks() const { return static_cast<int>(Y.size()); }
};

}  // namespace slmtl
