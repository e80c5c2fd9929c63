#include "splitguard/tensor.hpp"

#include <cmath>

namespace splitguard {

bool all_finite(const Tensor& t) {
    for (float v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

void add_inplace(Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        fail(cat("add: shape mismatch ", shape_str(a.shape), " vs ", shape_str(b.shape)));
    for (size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

Tensor add(const Tensor& a, const Tensor& b) {
    Tensor out = a;
    add_inplace(out, b);
    return out;
}

void scale_inplace(Tensor& a, float s) {
    for (auto& v : a.data) v *= s;
}

uint64_t tensor_digest(const Tensor& t) {
    uint64_t h = kFnvOffset;
    h = fnv1a(t.shape.data(), t.shape.size() * sizeof(int), h);
    h = fnv1a(t.data.data(), t.data.size() * sizeof(float), h);
    return h;
}

}  // namespace splitguard
