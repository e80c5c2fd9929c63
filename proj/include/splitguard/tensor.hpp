#ifndef SPLITGUARD_TENSOR_HPP
#define SPLITGUARD_TENSOR_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "splitguard/common.hpp"

namespace splitguard {

inline int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

// Dense row-major tensor of 32-bit floats.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;

    static Tensor zeros(std::vector<int> s) {
        Tensor t;
        t.shape = std::move(s);
        validate_shape(t.shape);
        t.data.assign(static_cast<size_t>(shape_numel(t.shape)), 0.0f);
        return t;
    }

    static Tensor full(std::vector<int> s, float v) {
        Tensor t = zeros(std::move(s));
        for (auto& x : t.data) x = v;
        return t;
    }

    static Tensor from(std::vector<int> s, std::vector<float> values) {
        validate_shape(s);
        if (shape_numel(s) != static_cast<int64_t>(values.size()))
            fail(cat("Tensor: shape ", shape_str(s), " expects ", shape_numel(s),
                     " values, got ", values.size()));
        Tensor t;
        t.shape = std::move(s);
        t.data = std::move(values);
        return t;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }

    int dim(int i) const {
        if (i < 0 || i >= ndim()) fail(cat("Tensor::dim: axis ", i, " out of range for ", shape_str(shape)));
        return shape[i];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    // 4-D accessors for [N,C,H,W] layouts used by the conv layers.
    float& at4(int n, int c, int h, int w) {
        return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    float at4(int n, int c, int h, int w) const {
        return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }

private:
    static void validate_shape(const std::vector<int>& s) {
        if (s.empty()) fail("Tensor: shape must have at least one dimension");
        for (int d : s)
            if (d <= 0) fail(cat("Tensor: nonpositive dimension in ", shape_str(s)));
    }
};

using WeightMap = std::map<std::string, Tensor>;

bool all_finite(const Tensor& t);

// Elementwise helpers; shapes must match.
void add_inplace(Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
void scale_inplace(Tensor& a, float s);

// 64-bit digest of shape + raw contents; used by the boundary audit.
uint64_t tensor_digest(const Tensor& t);

}  // namespace splitguard

#endif
