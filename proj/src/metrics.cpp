#include "splitguard/metrics.hpp"

#include <cmath>

namespace splitguard {

double mse_image(const Tensor& p, const Tensor& q) {
    if (!p.same_shape(q))
        fail(cat("mse_image: shape mismatch ", shape_str(p.shape), " vs ", shape_str(q.shape)));
    double acc = 0.0;
    for (size_t i = 0; i < p.data.size(); ++i) {
        const double d = static_cast<double>(p.data[i]) - q.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(p.numel());
}

static double ssim_channel(const float* p, const float* q, int64_t n) {
    constexpr double c1 = 0.01 * 0.01;  // (0.01 L)^2, L = 1
    constexpr double c2 = 0.03 * 0.03;
    double mp = 0.0, mq = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        mp += p[i];
        mq += q[i];
    }
    mp /= static_cast<double>(n);
    mq /= static_cast<double>(n);
    double vp = 0.0, vq = 0.0, cov = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double dp = p[i] - mp, dq = q[i] - mq;
        vp += dp * dp;
        vq += dq * dq;
        cov += dp * dq;
    }
    vp /= static_cast<double>(n);  // population statistics
    vq /= static_cast<double>(n);
    cov /= static_cast<double>(n);
    return ((2.0 * mp * mq + c1) * (2.0 * cov + c2)) /
           ((mp * mp + mq * mq + c1) * (vp + vq + c2));
}

double ssim(const Tensor& p, const Tensor& q) {
    if (!p.same_shape(q))
        fail(cat("ssim: shape mismatch ", shape_str(p.shape), " vs ", shape_str(q.shape)));
    // treat a leading axis of a >=3-D tensor as channels; anything else is
    // one plane
    if (p.shape.size() >= 3) {
        const int channels = p.shape[0];
        const int64_t per = p.numel() / channels;
        double acc = 0.0;
        for (int c = 0; c < channels; ++c)
            acc += ssim_channel(p.data.data() + static_cast<size_t>(c) * per,
                                q.data.data() + static_cast<size_t>(c) * per, per);
        return acc / channels;
    }
    return ssim_channel(p.data.data(), q.data.data(), p.numel());
}

double accuracy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.shape.size() != 2)
        fail(cat("accuracy: logits must be [batch x classes], got ", shape_str(logits.shape)));
    const int n = logits.shape[0], c = logits.shape[1];
    if (n < 1) fail("accuracy: empty batch");
    if (static_cast<int>(labels.size()) != n)
        fail(cat("accuracy: ", labels.size(), " labels for batch of ", n));
    int hits = 0;
    for (int i = 0; i < n; ++i) {
        const float* row = logits.data.data() + static_cast<size_t>(i) * c;
        int best = 0;
        for (int j = 1; j < c; ++j)
            if (row[j] > row[best]) best = j;  // strict: lowest index wins ties
        if (best == labels[i]) ++hits;
    }
    return static_cast<double>(hits) / n;
}

}  // namespace splitguard
