#include "splitguard/optim.hpp"

#include <cmath>

namespace splitguard {

void Adam::step(const std::map<std::string, Tensor*>& params, const WeightMap& grads) {
    ++step_;
    const float bc1 = 1.0f - std::pow(cfg_.beta1, static_cast<float>(step_));
    const float bc2 = 1.0f - std::pow(cfg_.beta2, static_cast<float>(step_));
    for (const auto& [name, param] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) fail(cat("adam_step: no gradient for parameter '", name, "'"));
        const Tensor& g = git->second;
        if (!g.same_shape(*param))
            fail(cat("adam_step: gradient shape ", shape_str(g.shape), " for '", name,
                     "' does not match parameter ", shape_str(param->shape)));
        auto& m = m_[name];
        auto& v = v_[name];
        if (m.data.empty()) {
            m = Tensor::zeros(param->shape);
            v = Tensor::zeros(param->shape);
        }
        for (size_t i = 0; i < param->data.size(); ++i) {
            m.data[i] = cfg_.beta1 * m.data[i] + (1.0f - cfg_.beta1) * g.data[i];
            v.data[i] = cfg_.beta2 * v.data[i] + (1.0f - cfg_.beta2) * g.data[i] * g.data[i];
            const float mhat = m.data[i] / bc1;
            const float vhat = v.data[i] / bc2;
            param->data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace splitguard
