#ifndef SPLITGUARD_LOSSES_HPP
#define SPLITGUARD_LOSSES_HPP

#include <vector>

#include "splitguard/tensor.hpp"

namespace splitguard {

struct LossResult {
    float loss = 0.0f;
    Tensor grad;
};

// Mean over the batch of -log softmax(logits)[label], log-sum-exp stabilized.
// grad is (softmax - onehot) / batch.
LossResult cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// loss = mean((pred - target)^2), grad = 2 (pred - target) / numel.
LossResult mse_loss(const Tensor& prediction, const Tensor& target);

}  // namespace splitguard

#endif
