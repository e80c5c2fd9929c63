#ifndef SPLITGUARD_LAYERS_HPP
#define SPLITGUARD_LAYERS_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "splitguard/tensor.hpp"

namespace splitguard {

// skip_begin / skip_add bracket a residual span; they are handled by
// Segment, not by layer_forward/layer_backward directly.
enum class LayerKind {
    dense,
    conv2d,
    transposed_conv2d,
    relu,
    sigmoid,
    max_pool2d,
    avg_pool2d,
    flatten,
    batch_norm,
    skip_begin,
    skip_add,
};

const char* kind_name(LayerKind k);

struct Layer {
    LayerKind kind = LayerKind::relu;

    // conv2d / transposed_conv2d / pools
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 0;
    int stride = 1;
    int padding = 0;

    // dense
    int in_features = 0;
    int out_features = 0;

    // batch_norm
    float bn_momentum = 0.1f;
    float bn_eps = 1e-5f;

    WeightMap params;   // weight, bias, gamma, beta
    WeightMap buffers;  // running_mean, running_var
};

Layer make_dense(int in_features, int out_features);
Layer make_conv2d(int in_channels, int out_channels, int kernel, int stride = 1, int padding = 0);
Layer make_transposed_conv2d(int in_channels, int out_channels, int kernel, int stride = 1,
                             int padding = 0);
Layer make_relu();
Layer make_sigmoid();
Layer make_max_pool2d(int kernel, int stride);
Layer make_avg_pool2d(int kernel, int stride);
Layer make_flatten();
Layer make_batch_norm(int channels);
Layer make_skip_begin();
Layer make_skip_add();

// Output shape is computable from hyperparameters alone; throws a
// structured error on any shape inconsistency.
std::vector<int> layer_output_shape(const Layer& layer, const std::vector<int>& in_shape);

struct LayerCache {
    bool valid = false;
    bool training = false;
    std::vector<int> in_shape;
    Tensor input;                 // dense, conv, tconv, relu, pools, batch_norm
    Tensor output;                // sigmoid
    std::vector<int32_t> argmax;  // max_pool2d: flat input offset per output element
    Tensor saved_mean;            // batch_norm, training mode
    Tensor saved_invstd;
};

struct LayerGrads {
    WeightMap params;
};

// Forward pass. In training mode batch_norm consumes batch statistics and
// updates the layer's running buffers (the one mutation this module does).
// `cache` may be null for inference-only calls.
Tensor layer_forward(Layer& layer, const Tensor& input, bool training, LayerCache* cache);

// Backward pass; `cache` must come from a training-mode forward of the same
// layer. Returns grad wrt input; fills parameter grads if `grads` non-null.
Tensor layer_backward(const Layer& layer, const LayerCache& cache, const Tensor& grad_output,
                      LayerGrads* grads);

}  // namespace splitguard

#endif
