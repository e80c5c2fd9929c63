#ifndef SPLITGUARD_NETWORK_HPP
#define SPLITGUARD_NETWORK_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "splitguard/layers.hpp"
#include "splitguard/rng.hpp"
#include "splitguard/tensor.hpp"

namespace splitguard {

struct SegmentCache {
    bool valid = false;
    std::vector<LayerCache> layers;
    std::vector<Tensor> captures;        // skip_begin snapshots, in forward order
    std::vector<int> capture_index;      // per layer: capture consumed/produced, -1 otherwise
};

// A contiguous run of layers. Handles skip_begin/skip_add spans, which add
// the activation captured at skip_begin back in at skip_add. Spans must be
// fully contained in the segment.
struct Segment {
    std::vector<Layer> layers;

    std::vector<int> output_shape(const std::vector<int>& in_shape) const;

    Tensor forward(const Tensor& x, bool training, SegmentCache* cache = nullptr);

    // Returns grad wrt the segment input; parameter grads keyed "L<i>.<name>"
    // are accumulated into `grads` when non-null.
    Tensor backward(const SegmentCache& cache, const Tensor& grad_output,
                    WeightMap* grads) const;

    // Trainable parameters, keyed "L<i>.<name>".
    std::map<std::string, Tensor*> param_refs();
    // Parameters plus batch-norm running buffers; the aggregation currency.
    WeightMap state_dict() const;
    void load_state_dict(const WeightMap& state);

    int64_t param_count() const;
};

// He-style fan-in-scaled uniform init for conv/dense weights, zero biases.
void init_segment(Segment& seg, RngStream& rng);

}  // namespace splitguard

#endif
