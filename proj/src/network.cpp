#include "splitguard/network.hpp"

#include <cmath>

namespace splitguard {

std::vector<int> Segment::output_shape(const std::vector<int>& in_shape) const {
    std::vector<int> s = in_shape;
    for (const auto& l : layers) s = layer_output_shape(l, s);
    return s;
}

Tensor Segment::forward(const Tensor& x, bool training, SegmentCache* cache) {
    if (cache) {
        *cache = SegmentCache{};
        cache->valid = true;
        cache->layers.resize(layers.size());
        cache->capture_index.assign(layers.size(), -1);
    }
    std::vector<int> open;  // capture indices of unmatched skip_begins
    std::vector<Tensor> local_captures;
    Tensor cur = x;
    for (size_t i = 0; i < layers.size(); ++i) {
        Layer& l = layers[i];
        if (l.kind == LayerKind::skip_begin) {
            open.push_back(static_cast<int>(local_captures.size()));
            local_captures.push_back(cur);
            if (cache) cache->capture_index[i] = open.back();
            continue;
        }
        if (l.kind == LayerKind::skip_add) {
            if (open.empty())
                fail(cat("Segment::forward: skip_add at layer ", i, " has no open skip_begin"));
            const int ci = open.back();
            open.pop_back();
            if (!cur.same_shape(local_captures[ci]))
                fail(cat("Segment::forward: skip_add at layer ", i, " joins ",
                         shape_str(cur.shape), " with captured ",
                         shape_str(local_captures[ci].shape)));
            add_inplace(cur, local_captures[ci]);
            if (cache) cache->capture_index[i] = ci;
            continue;
        }
        cur = layer_forward(l, cur, training, cache ? &cache->layers[i] : nullptr);
    }
    if (!open.empty())
        fail(cat("Segment::forward: ", open.size(), " skip_begin without matching skip_add"));
    if (cache) cache->captures = std::move(local_captures);
    return cur;
}

Tensor Segment::backward(const SegmentCache& cache, const Tensor& grad_output,
                         WeightMap* grads) const {
    if (!cache.valid || cache.layers.size() != layers.size())
        fail("Segment::backward: cache does not match this segment");
    std::map<int, Tensor> pending;  // capture index -> grad waiting at its skip_begin
    Tensor g = grad_output;
    for (size_t ii = layers.size(); ii-- > 0;) {
        const Layer& l = layers[ii];
        if (l.kind == LayerKind::skip_add) {
            const int ci = cache.capture_index[ii];
            auto [it, inserted] = pending.emplace(ci, g);
            if (!inserted) add_inplace(it->second, g);
            continue;  // grad to the main path is g unchanged
        }
        if (l.kind == LayerKind::skip_begin) {
            const int ci = cache.capture_index[ii];
            auto it = pending.find(ci);
            if (it == pending.end())
                fail(cat("Segment::backward: skip_begin at layer ", ii,
                         " has no gradient from its skip_add"));
            add_inplace(g, it->second);
            pending.erase(it);
            continue;
        }
        LayerGrads lg;
        g = layer_backward(l, cache.layers[ii], g, grads ? &lg : nullptr);
        if (grads)
            for (auto& [name, tensor] : lg.params)
                (*grads)[cat("L", ii, ".", name)] = std::move(tensor);
    }
    return g;
}

std::map<std::string, Tensor*> Segment::param_refs() {
    std::map<std::string, Tensor*> out;
    for (size_t i = 0; i < layers.size(); ++i)
        for (auto& [name, tensor] : layers[i].params) out[cat("L", i, ".", name)] = &tensor;
    return out;
}

WeightMap Segment::state_dict() const {
    WeightMap out;
    for (size_t i = 0; i < layers.size(); ++i) {
        for (const auto& [name, tensor] : layers[i].params) out[cat("L", i, ".", name)] = tensor;
        for (const auto& [name, tensor] : layers[i].buffers) out[cat("L", i, ".", name)] = tensor;
    }
    return out;
}

void Segment::load_state_dict(const WeightMap& state) {
    for (size_t i = 0; i < layers.size(); ++i) {
        for (auto& [name, tensor] : layers[i].params) {
            auto it = state.find(cat("L", i, ".", name));
            if (it == state.end())
                fail(cat("Segment::load_state_dict: missing entry L", i, ".", name));
            if (it->second.shape != tensor.shape)
                fail(cat("Segment::load_state_dict: shape mismatch for L", i, ".", name));
            tensor = it->second;
        }
        for (auto& [name, tensor] : layers[i].buffers) {
            auto it = state.find(cat("L", i, ".", name));
            if (it == state.end())
                fail(cat("Segment::load_state_dict: missing entry L", i, ".", name));
            tensor = it->second;
        }
    }
}

int64_t Segment::param_count() const {
    int64_t n = 0;
    for (const auto& l : layers)
        for (const auto& [name, tensor] : l.params) n += tensor.numel();
    return n;
}

void init_segment(Segment& seg, RngStream& rng) {
    for (auto& l : seg.layers) {
        int fan_in = 0;
        switch (l.kind) {
            case LayerKind::dense:
                fan_in = l.in_features;
                break;
            case LayerKind::conv2d:
            case LayerKind::transposed_conv2d:
                fan_in = l.in_channels * l.kernel * l.kernel;
                break;
            default:
                continue;  // activations, pools, bn keep their defaults
        }
        auto& w = l.params.at("weight");
        const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
        for (auto& v : w.data) v = static_cast<float>((rng.uniform() * 2.0 - 1.0) * bound);
        // biases stay zero
    }
}

}  // namespace splitguard
