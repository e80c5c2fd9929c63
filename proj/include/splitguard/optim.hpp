#ifndef SPLITGUARD_OPTIM_HPP
#define SPLITGUARD_OPTIM_HPP

#include <cstdint>
#include <map>
#include <string>

#include "splitguard/tensor.hpp"

namespace splitguard {

struct AdamConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

// Adam with bias correction. Moment tensors are allocated lazily per
// parameter name on the first step.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    // Applies one update to every parameter in `params`; every parameter
    // must have a gradient of identical shape in `grads`.
    void step(const std::map<std::string, Tensor*>& params, const WeightMap& grads);

    int64_t steps() const { return step_; }
    const AdamConfig& config() const { return cfg_; }
    const WeightMap& first_moments() const { return m_; }
    const WeightMap& second_moments() const { return v_; }

private:
    AdamConfig cfg_;
    int64_t step_ = 0;
    WeightMap m_, v_;
};

}  // namespace splitguard

#endif
