#include "splitguard/losses.hpp"

#include <cmath>

namespace splitguard {

LossResult cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.shape.size() != 2)
        fail(cat("cross_entropy: logits must be [batch x classes], got ", shape_str(logits.shape)));
    const int n = logits.shape[0], c = logits.shape[1];
    if (n < 1) fail("cross_entropy: empty batch");
    if (static_cast<int>(labels.size()) != n)
        fail(cat("cross_entropy: ", labels.size(), " labels for batch of ", n));
    for (int i = 0; i < n; ++i)
        if (labels[i] < 0 || labels[i] >= c)
            fail(cat("cross_entropy: label ", labels[i], " at index ", i, " outside [0, ", c, ")"));

    LossResult r;
    r.grad = Tensor::zeros(logits.shape);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const float* row = logits.data.data() + static_cast<size_t>(i) * c;
        float* grow = r.grad.data.data() + static_cast<size_t>(i) * c;
        float mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        float denom = 0.0f;
        for (int j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
        const float log_denom = std::log(denom);
        total += static_cast<double>(log_denom - (row[labels[i]] - mx));
        const float inv_n = 1.0f / static_cast<float>(n);
        for (int j = 0; j < c; ++j) {
            const float p = std::exp(row[j] - mx) / denom;
            grow[j] = (p - (j == labels[i] ? 1.0f : 0.0f)) * inv_n;
        }
    }
    r.loss = static_cast<float>(total / n);
    return r;
}

LossResult mse_loss(const Tensor& prediction, const Tensor& target) {
    if (!prediction.same_shape(target))
        fail(cat("mse_loss: shape mismatch ", shape_str(prediction.shape), " vs ",
                 shape_str(target.shape)));
    LossResult r;
    r.grad = Tensor::zeros(prediction.shape);
    const int64_t n = prediction.numel();
    double total = 0.0;
    const float inv = 2.0f / static_cast<float>(n);
    for (int64_t i = 0; i < n; ++i) {
        const float d = prediction.data[i] - target.data[i];
        total += static_cast<double>(d) * d;
        r.grad.data[i] = inv * d;
    }
    r.loss = static_cast<float>(total / static_cast<double>(n));
    return r;
}

}  // namespace splitguard
