#ifndef SPLITGUARD_METRICS_HPP
#define SPLITGUARD_METRICS_HPP

#include <optional>
#include <string>
#include <vector>

#include "splitguard/tensor.hpp"

namespace splitguard {

// Mean of squared per-pixel differences over all channels.
double mse_image(const Tensor& p, const Tensor& q);

// Single global SSIM with population statistics, C1=(0.01)^2, C2=(0.03)^2
// for the unit pixel range; multi-channel images are evaluated per channel
// and averaged. Inputs are [C,H,W] or [H,W]-like; only shapes must match.
double ssim(const Tensor& p, const Tensor& q);

// Fraction of argmax(logits) == label, ties broken toward the lowest class.
double accuracy(const Tensor& logits, const std::vector<int>& labels);

struct MetricsRecord {
    int round = 0;
    std::string method;
    double accuracy = 0.0;
    std::optional<double> attack_mse;
    std::optional<double> attack_ssim;
    double wall_time_s = 0.0;
    std::string config_hash;
};

}  // namespace splitguard

#endif
