#include "splitguard/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace splitguard {

const char* kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::dense: return "dense";
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::transposed_conv2d: return "transposed_conv2d";
        case LayerKind::relu: return "relu";
        case LayerKind::sigmoid: return "sigmoid";
        case LayerKind::max_pool2d: return "max_pool2d";
        case LayerKind::avg_pool2d: return "avg_pool2d";
        case LayerKind::flatten: return "flatten";
        case LayerKind::batch_norm: return "batch_norm";
        case LayerKind::skip_begin: return "skip_begin";
        case LayerKind::skip_add: return "skip_add";
    }
    return "?";
}

Layer make_dense(int in_features, int out_features) {
    if (in_features <= 0 || out_features <= 0)
        fail(cat("dense: feature counts must be positive, got ", in_features, " -> ", out_features));
    Layer l;
    l.kind = LayerKind::dense;
    l.in_features = in_features;
    l.out_features = out_features;
    l.params["weight"] = Tensor::zeros({out_features, in_features});
    l.params["bias"] = Tensor::zeros({out_features});
    return l;
}

static Layer make_convlike(LayerKind kind, int cin, int cout, int k, int s, int p) {
    if (cin <= 0 || cout <= 0 || k <= 0 || s <= 0 || p < 0)
        fail(cat(kind_name(kind), ": bad hyperparameters cin=", cin, " cout=", cout, " k=", k,
                 " stride=", s, " padding=", p));
    Layer l;
    l.kind = kind;
    l.in_channels = cin;
    l.out_channels = cout;
    l.kernel = k;
    l.stride = s;
    l.padding = p;
    if (kind == LayerKind::conv2d)
        l.params["weight"] = Tensor::zeros({cout, cin, k, k});
    else
        l.params["weight"] = Tensor::zeros({cin, cout, k, k});
    l.params["bias"] = Tensor::zeros({cout});
    return l;
}

Layer make_conv2d(int cin, int cout, int k, int s, int p) {
    return make_convlike(LayerKind::conv2d, cin, cout, k, s, p);
}

Layer make_transposed_conv2d(int cin, int cout, int k, int s, int p) {
    return make_convlike(LayerKind::transposed_conv2d, cin, cout, k, s, p);
}

Layer make_relu() {
    Layer l;
    l.kind = LayerKind::relu;
    return l;
}

Layer make_sigmoid() {
    Layer l;
    l.kind = LayerKind::sigmoid;
    return l;
}

static Layer make_pool(LayerKind kind, int k, int s) {
    if (k <= 0 || s <= 0) fail(cat(kind_name(kind), ": kernel and stride must be positive"));
    Layer l;
    l.kind = kind;
    l.kernel = k;
    l.stride = s;
    return l;
}

Layer make_max_pool2d(int k, int s) { return make_pool(LayerKind::max_pool2d, k, s); }
Layer make_avg_pool2d(int k, int s) { return make_pool(LayerKind::avg_pool2d, k, s); }

Layer make_flatten() {
    Layer l;
    l.kind = LayerKind::flatten;
    return l;
}

Layer make_batch_norm(int channels) {
    if (channels <= 0) fail("batch_norm: channel count must be positive");
    Layer l;
    l.kind = LayerKind::batch_norm;
    l.in_channels = channels;
    l.out_channels = channels;
    l.params["gamma"] = Tensor::full({channels}, 1.0f);
    l.params["beta"] = Tensor::zeros({channels});
    l.buffers["running_mean"] = Tensor::zeros({channels});
    l.buffers["running_var"] = Tensor::full({channels}, 1.0f);
    return l;
}

Layer make_skip_begin() {
    Layer l;
    l.kind = LayerKind::skip_begin;
    return l;
}

Layer make_skip_add() {
    Layer l;
    l.kind = LayerKind::skip_add;
    return l;
}

// ---------------------------------------------------------------------------
// shape algebra

static void expect_4d(const Layer& l, const std::vector<int>& s) {
    if (s.size() != 4)
        fail(cat(kind_name(l.kind), ": expected 4-D [N,C,H,W] input, got ", shape_str(s)));
}

std::vector<int> layer_output_shape(const Layer& l, const std::vector<int>& in) {
    switch (l.kind) {
        case LayerKind::dense: {
            if (in.size() != 2 || in[1] != l.in_features)
                fail(cat("dense: input ", shape_str(in), " does not match [N x ", l.in_features, "]"));
            return {in[0], l.out_features};
        }
        case LayerKind::conv2d: {
            expect_4d(l, in);
            if (in[1] != l.in_channels)
                fail(cat("conv2d: input has ", in[1], " channels, layer expects ", l.in_channels,
                         " (input ", shape_str(in), ")"));
            const int oh = (in[2] + 2 * l.padding - l.kernel) / l.stride + 1;
            const int ow = (in[3] + 2 * l.padding - l.kernel) / l.stride + 1;
            if (in[2] + 2 * l.padding < l.kernel || in[3] + 2 * l.padding < l.kernel)
                fail(cat("conv2d: input ", shape_str(in), " smaller than kernel ", l.kernel,
                         " with padding ", l.padding));
            return {in[0], l.out_channels, oh, ow};
        }
        case LayerKind::transposed_conv2d: {
            expect_4d(l, in);
            if (in[1] != l.in_channels)
                fail(cat("transposed_conv2d: input has ", in[1], " channels, layer expects ",
                         l.in_channels, " (input ", shape_str(in), ")"));
            const int oh = (in[2] - 1) * l.stride - 2 * l.padding + l.kernel;
            const int ow = (in[3] - 1) * l.stride - 2 * l.padding + l.kernel;
            if (oh <= 0 || ow <= 0)
                fail(cat("transposed_conv2d: degenerate output for input ", shape_str(in)));
            return {in[0], l.out_channels, oh, ow};
        }
        case LayerKind::relu:
        case LayerKind::sigmoid:
        case LayerKind::skip_begin:
        case LayerKind::skip_add:
            return in;
        case LayerKind::max_pool2d:
        case LayerKind::avg_pool2d: {
            expect_4d(l, in);
            if (in[2] < l.kernel || in[3] < l.kernel)
                fail(cat(kind_name(l.kind), ": input ", shape_str(in), " smaller than window ",
                         l.kernel));
            const int oh = (in[2] - l.kernel) / l.stride + 1;
            const int ow = (in[3] - l.kernel) / l.stride + 1;
            return {in[0], in[1], oh, ow};
        }
        case LayerKind::flatten: {
            if (in.size() < 2) fail(cat("flatten: input ", shape_str(in), " has no batch axis"));
            int64_t f = 1;
            for (size_t i = 1; i < in.size(); ++i) f *= in[i];
            return {in[0], static_cast<int>(f)};
        }
        case LayerKind::batch_norm: {
            if (in.size() != 2 && in.size() != 4)
                fail(cat("batch_norm: expected 2-D or 4-D input, got ", shape_str(in)));
            if (in[1] != l.in_channels)
                fail(cat("batch_norm: input has ", in[1], " channels, layer expects ",
                         l.in_channels));
            return in;
        }
    }
    fail("layer_output_shape: unknown kind");
}

// ---------------------------------------------------------------------------
// small GEMM helpers, row-major, all accumulate into C

static void gemm_nn(int m, int n, int k, const float* A, const float* B, float* C) {
    for (int i = 0; i < m; ++i) {
        float* ci = C + static_cast<size_t>(i) * n;
        const float* ai = A + static_cast<size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const float a = ai[kk];
            if (a == 0.0f) continue;
            const float* bk = B + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) ci[j] += a * bk[j];
        }
    }
}

// C[m x n] += A[k x m]^T * B[k x n]
static void gemm_tn(int m, int n, int k, const float* A, const float* B, float* C) {
    for (int kk = 0; kk < k; ++kk) {
        const float* ak = A + static_cast<size_t>(kk) * m;
        const float* bk = B + static_cast<size_t>(kk) * n;
        for (int i = 0; i < m; ++i) {
            const float a = ak[i];
            if (a == 0.0f) continue;
            float* ci = C + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) ci[j] += a * bk[j];
        }
    }
}

// C[m x n] += A[m x k] * B[n x k]^T
static void gemm_nt(int m, int n, int k, const float* A, const float* B, float* C) {
    for (int i = 0; i < m; ++i) {
        const float* ai = A + static_cast<size_t>(i) * k;
        float* ci = C + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const float* bj = B + static_cast<size_t>(j) * k;
            float acc = 0.0f;
            for (int kk = 0; kk < k; ++kk) acc += ai[kk] * bj[kk];
            ci[j] += acc;
        }
    }
}

// ---------------------------------------------------------------------------
// im2col / col2im for one sample

static void im2col(const float* x, int C, int H, int W, int k, int s, int p, int OH, int OW,
                   float* cols) {
    for (int c = 0; c < C; ++c) {
        for (int kh = 0; kh < k; ++kh) {
            for (int kw = 0; kw < k; ++kw) {
                float* row = cols + (static_cast<size_t>(c) * k * k + kh * k + kw) *
                                        static_cast<size_t>(OH) * OW;
                for (int oh = 0; oh < OH; ++oh) {
                    const int ih = oh * s + kh - p;
                    if (ih < 0 || ih >= H) {
                        std::memset(row + static_cast<size_t>(oh) * OW, 0, sizeof(float) * OW);
                        continue;
                    }
                    const float* xr = x + (static_cast<size_t>(c) * H + ih) * W;
                    float* out = row + static_cast<size_t>(oh) * OW;
                    for (int ow = 0; ow < OW; ++ow) {
                        const int iw = ow * s + kw - p;
                        out[ow] = (iw >= 0 && iw < W) ? xr[iw] : 0.0f;
                    }
                }
            }
        }
    }
}

// scatter-add the column matrix back into the image
static void col2im(const float* cols, int C, int H, int W, int k, int s, int p, int OH, int OW,
                   float* x) {
    for (int c = 0; c < C; ++c) {
        for (int kh = 0; kh < k; ++kh) {
            for (int kw = 0; kw < k; ++kw) {
                const float* row = cols + (static_cast<size_t>(c) * k * k + kh * k + kw) *
                                              static_cast<size_t>(OH) * OW;
                for (int oh = 0; oh < OH; ++oh) {
                    const int ih = oh * s + kh - p;
                    if (ih < 0 || ih >= H) continue;
                    float* xr = x + (static_cast<size_t>(c) * H + ih) * W;
                    const float* in = row + static_cast<size_t>(oh) * OW;
                    for (int ow = 0; ow < OW; ++ow) {
                        const int iw = ow * s + kw - p;
                        if (iw >= 0 && iw < W) xr[iw] += in[ow];
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// per-kind forward

static void check_input_shape(const Layer& l, const Tensor& in) {
    // layer_output_shape performs the structural validation and throws with
    // layer and shape context; calling it is the check.
    (void)layer_output_shape(l, in.shape);
}

static Tensor dense_forward(const Layer& l, const Tensor& x) {
    const int n = x.shape[0];
    Tensor y = Tensor::zeros({n, l.out_features});
    const Tensor& w = l.params.at("weight");
    const Tensor& b = l.params.at("bias");
    // y = x * W^T + b
    gemm_nt(n, l.out_features, l.in_features, x.data.data(), w.data.data(), y.data.data());
    for (int i = 0; i < n; ++i)
        for (int o = 0; o < l.out_features; ++o) y.data[static_cast<size_t>(i) * l.out_features + o] += b.data[o];
    return y;
}

static Tensor conv2d_forward(const Layer& l, const Tensor& x) {
    const auto out_shape = layer_output_shape(l, x.shape);
    const int N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const int OC = out_shape[1], OH = out_shape[2], OW = out_shape[3];
    const int k = l.kernel, s = l.stride, p = l.padding;
    const int patch = C * k * k;
    Tensor y = Tensor::zeros(out_shape);
    std::vector<float> cols(static_cast<size_t>(patch) * OH * OW);
    const float* wmat = l.params.at("weight").data.data();  // [OC x patch]
    const float* bias = l.params.at("bias").data.data();
    for (int n = 0; n < N; ++n) {
        im2col(x.data.data() + static_cast<size_t>(n) * C * H * W, C, H, W, k, s, p, OH, OW,
               cols.data());
        float* yn = y.data.data() + static_cast<size_t>(n) * OC * OH * OW;
        gemm_nn(OC, OH * OW, patch, wmat, cols.data(), yn);
        for (int oc = 0; oc < OC; ++oc) {
            float* yc = yn + static_cast<size_t>(oc) * OH * OW;
            const float bv = bias[oc];
            for (int i = 0; i < OH * OW; ++i) yc[i] += bv;
        }
    }
    return y;
}

static Tensor tconv2d_forward(const Layer& l, const Tensor& x) {
    const auto out_shape = layer_output_shape(l, x.shape);
    const int N = x.shape[0], IC = x.shape[1], IH = x.shape[2], IW = x.shape[3];
    const int OC = out_shape[1], OH = out_shape[2], OW = out_shape[3];
    const int k = l.kernel, s = l.stride, p = l.padding;
    const int patch = OC * k * k;
    Tensor y = Tensor::zeros(out_shape);
    std::vector<float> cols(static_cast<size_t>(patch) * IH * IW);
    // weight [IC x OC x k x k] viewed as [IC x patch]
    const float* wmat = l.params.at("weight").data.data();
    const float* bias = l.params.at("bias").data.data();
    for (int n = 0; n < N; ++n) {
        std::fill(cols.begin(), cols.end(), 0.0f);
        const float* xn = x.data.data() + static_cast<size_t>(n) * IC * IH * IW;
        // cols = W^T [patch x IC] * x [IC x IH*IW]
        gemm_tn(patch, IH * IW, IC, wmat, xn, cols.data());
        float* yn = y.data.data() + static_cast<size_t>(n) * OC * OH * OW;
        col2im(cols.data(), OC, OH, OW, k, s, p, IH, IW, yn);
        for (int oc = 0; oc < OC; ++oc) {
            float* yc = yn + static_cast<size_t>(oc) * OH * OW;
            const float bv = bias[oc];
            for (int i = 0; i < OH * OW; ++i) yc[i] += bv;
        }
    }
    return y;
}

static Tensor max_pool_forward(const Layer& l, const Tensor& x, LayerCache* cache) {
    const auto out_shape = layer_output_shape(l, x.shape);
    const int N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const int OH = out_shape[2], OW = out_shape[3];
    Tensor y = Tensor::zeros(out_shape);
    if (cache) cache->argmax.assign(y.data.size(), 0);
    size_t oi = 0;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const float* xc = x.data.data() + (static_cast<size_t>(n) * C + c) * H * W;
            for (int oh = 0; oh < OH; ++oh)
                for (int ow = 0; ow < OW; ++ow, ++oi) {
                    float best = -std::numeric_limits<float>::infinity();
                    int32_t best_idx = 0;
                    for (int kh = 0; kh < l.kernel; ++kh)
                        for (int kw = 0; kw < l.kernel; ++kw) {
                            const int ih = oh * l.stride + kh;
                            const int iw = ow * l.stride + kw;
                            const float v = xc[static_cast<size_t>(ih) * W + iw];
                            if (v > best) {  // first max wins on ties
                                best = v;
                                best_idx = static_cast<int32_t>(ih * W + iw);
                            }
                        }
                    y.data[oi] = best;
                    if (cache) cache->argmax[oi] = best_idx;
                }
        }
    return y;
}

static Tensor avg_pool_forward(const Layer& l, const Tensor& x) {
    const auto out_shape = layer_output_shape(l, x.shape);
    const int N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const int OH = out_shape[2], OW = out_shape[3];
    Tensor y = Tensor::zeros(out_shape);
    const float inv = 1.0f / static_cast<float>(l.kernel * l.kernel);
    size_t oi = 0;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const float* xc = x.data.data() + (static_cast<size_t>(n) * C + c) * H * W;
            for (int oh = 0; oh < OH; ++oh)
                for (int ow = 0; ow < OW; ++ow, ++oi) {
                    float acc = 0.0f;
                    for (int kh = 0; kh < l.kernel; ++kh)
                        for (int kw = 0; kw < l.kernel; ++kw)
                            acc += xc[static_cast<size_t>(oh * l.stride + kh) * W + ow * l.stride + kw];
                    y.data[oi] = acc * inv;
                }
        }
    return y;
}

// channel statistics layout: [N,C] reduces over N; [N,C,H,W] over N,H,W
static void bn_axes(const std::vector<int>& s, int& channels, int64_t& per_channel) {
    channels = s[1];
    per_channel = s[0];
    for (size_t i = 2; i < s.size(); ++i) per_channel *= s[i];
}

static Tensor batch_norm_forward(Layer& l, const Tensor& x, bool training, LayerCache* cache) {
    int C;
    int64_t m;
    bn_axes(x.shape, C, m);
    const bool conv_layout = x.shape.size() == 4;
    const int HW = conv_layout ? x.shape[2] * x.shape[3] : 1;
    const int N = x.shape[0];
    const float* gamma = l.params.at("gamma").data.data();
    const float* beta = l.params.at("beta").data.data();

    Tensor mean = Tensor::zeros({C});
    Tensor invstd = Tensor::zeros({C});
    if (training) {
        Tensor var = Tensor::zeros({C});
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const float* xc = x.data.data() + (static_cast<size_t>(n) * C + c) * HW;
                float acc = 0.0f;
                for (int i = 0; i < HW; ++i) acc += xc[i];
                mean.data[c] += acc;
            }
        for (int c = 0; c < C; ++c) mean.data[c] /= static_cast<float>(m);
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                const float* xc = x.data.data() + (static_cast<size_t>(n) * C + c) * HW;
                float acc = 0.0f;
                for (int i = 0; i < HW; ++i) {
                    const float d = xc[i] - mean.data[c];
                    acc += d * d;
                }
                var.data[c] += acc;
            }
        for (int c = 0; c < C; ++c) var.data[c] /= static_cast<float>(m);
        // running stats use the unbiased variance, torch-style
        auto& rm = l.buffers.at("running_mean");
        auto& rv = l.buffers.at("running_var");
        const float mom = l.bn_momentum;
        const float unbias = m > 1 ? static_cast<float>(m) / static_cast<float>(m - 1) : 1.0f;
        for (int c = 0; c < C; ++c) {
            rm.data[c] = (1.0f - mom) * rm.data[c] + mom * mean.data[c];
            rv.data[c] = (1.0f - mom) * rv.data[c] + mom * var.data[c] * unbias;
        }
        for (int c = 0; c < C; ++c)
            invstd.data[c] = 1.0f / std::sqrt(var.data[c] + l.bn_eps);
    } else {
        const auto& rm = l.buffers.at("running_mean");
        const auto& rv = l.buffers.at("running_var");
        mean = rm;
        for (int c = 0; c < C; ++c)
            invstd.data[c] = 1.0f / std::sqrt(rv.data[c] + l.bn_eps);
    }

    Tensor y = Tensor::zeros(x.shape);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const float* xc = x.data.data() + (static_cast<size_t>(n) * C + c) * HW;
            float* yc = y.data.data() + (static_cast<size_t>(n) * C + c) * HW;
            const float mu = mean.data[c], is = invstd.data[c];
            const float g = gamma[c], b = beta[c];
            for (int i = 0; i < HW; ++i) yc[i] = (xc[i] - mu) * is * g + b;
        }
    if (cache) {
        cache->saved_mean = std::move(mean);
        cache->saved_invstd = std::move(invstd);
    }
    return y;
}

Tensor layer_forward(Layer& l, const Tensor& x, bool training, LayerCache* cache) {
    if (l.kind == LayerKind::skip_begin || l.kind == LayerKind::skip_add)
        fail(cat(kind_name(l.kind), ": skip markers are segment-scoped; use Segment::forward"));
    check_input_shape(l, x);
    if (cache) {
        *cache = LayerCache{};
        cache->valid = true;
        cache->training = training;
        cache->in_shape = x.shape;
    }
    Tensor y;
    switch (l.kind) {
        case LayerKind::dense:
            if (cache) cache->input = x;
            y = dense_forward(l, x);
            break;
        case LayerKind::conv2d:
            if (cache) cache->input = x;
            y = conv2d_forward(l, x);
            break;
        case LayerKind::transposed_conv2d:
            if (cache) cache->input = x;
            y = tconv2d_forward(l, x);
            break;
        case LayerKind::relu: {
            if (cache) cache->input = x;
            y = x;
            for (auto& v : y.data) v = v > 0.0f ? v : 0.0f;
            break;
        }
        case LayerKind::sigmoid: {
            y = x;
            for (auto& v : y.data)
                v = v >= 0.0f ? 1.0f / (1.0f + std::exp(-v))
                              : std::exp(v) / (1.0f + std::exp(v));
            if (cache) cache->output = y;
            break;
        }
        case LayerKind::max_pool2d:
            y = max_pool_forward(l, x, cache);
            break;
        case LayerKind::avg_pool2d:
            y = avg_pool_forward(l, x);
            break;
        case LayerKind::flatten: {
            y = x;
            y.shape = layer_output_shape(l, x.shape);
            break;
        }
        case LayerKind::batch_norm:
            if (cache) cache->input = x;
            y = batch_norm_forward(l, x, training, cache);
            break;
        default:
            fail("layer_forward: unknown kind");
    }
    return y;
}

// ---------------------------------------------------------------------------
// per-kind backward

static void check_cache(const Layer& l, const LayerCache& cache, const Tensor& gy) {
    if (!cache.valid)
        fail(cat(kind_name(l.kind), ": layer_backward called with an empty or stale cache"));
    if (!cache.training)
        fail(cat(kind_name(l.kind), ": layer_backward needs a training-mode cache"));
    const auto expect = layer_output_shape(l, cache.in_shape);
    if (gy.shape != expect)
        fail(cat(kind_name(l.kind), ": grad_output ", shape_str(gy.shape),
                 " does not match layer output ", shape_str(expect)));
}

static Tensor dense_backward(const Layer& l, const LayerCache& cache, const Tensor& gy,
                             LayerGrads* grads) {
    const Tensor& x = cache.input;
    const int n = x.shape[0];
    const Tensor& w = l.params.at("weight");
    Tensor gx = Tensor::zeros(x.shape);
    // gx = gy * W
    gemm_nn(n, l.in_features, l.out_features, gy.data.data(), w.data.data(), gx.data.data());
    if (grads) {
        Tensor gw = Tensor::zeros(w.shape);
        Tensor gb = Tensor::zeros({l.out_features});
        // gW = gy^T * x
        gemm_tn(l.out_features, l.in_features, n, gy.data.data(), x.data.data(), gw.data.data());
        for (int i = 0; i < n; ++i)
            for (int o = 0; o < l.out_features; ++o)
                gb.data[o] += gy.data[static_cast<size_t>(i) * l.out_features + o];
        grads->params["weight"] = std::move(gw);
        grads->params["bias"] = std::move(gb);
    }
    return gx;
}

static Tensor conv2d_backward(const Layer& l, const LayerCache& cache, const Tensor& gy,
                              LayerGrads* grads) {
    const Tensor& x = cache.input;
    const int N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const int OC = gy.shape[1], OH = gy.shape[2], OW = gy.shape[3];
    const int k = l.kernel, s = l.stride, p = l.padding;
    const int patch = C * k * k;
    const float* wmat = l.params.at("weight").data.data();
    Tensor gx = Tensor::zeros(x.shape);
    Tensor gw = Tensor::zeros(l.params.at("weight").shape);
    Tensor gb = Tensor::zeros({OC});
    std::vector<float> cols(static_cast<size_t>(patch) * OH * OW);
    std::vector<float> gcols(cols.size());
    for (int n = 0; n < N; ++n) {
        const float* gyn = gy.data.data() + static_cast<size_t>(n) * OC * OH * OW;
        im2col(x.data.data() + static_cast<size_t>(n) * C * H * W, C, H, W, k, s, p, OH, OW,
               cols.data());
        if (grads) {
            // gW += gy[n] * cols^T
            gemm_nt(OC, patch, OH * OW, gyn, cols.data(), gw.data.data());
            for (int oc = 0; oc < OC; ++oc) {
                const float* gc = gyn + static_cast<size_t>(oc) * OH * OW;
                float acc = 0.0f;
                for (int i = 0; i < OH * OW; ++i) acc += gc[i];
                gb.data[oc] += acc;
            }
        }
        // gcols = W^T * gy[n]; scatter back
        std::fill(gcols.begin(), gcols.end(), 0.0f);
        gemm_tn(patch, OH * OW, OC, wmat, gyn, gcols.data());
        col2im(gcols.data(), C, H, W, k, s, p, OH, OW,
               gx.data.data() + static_cast<size_t>(n) * C * H * W);
    }
    if (grads) {
        grads->params["weight"] = std::move(gw);
        grads->params["bias"] = std::move(gb);
    }
    return gx;
}

static Tensor tconv2d_backward(const Layer& l, const LayerCache& cache, const Tensor& gy,
                               LayerGrads* grads) {
    const Tensor& x = cache.input;
    const int N = x.shape[0], IC = x.shape[1], IH = x.shape[2], IW = x.shape[3];
    const int OC = gy.shape[1], OH = gy.shape[2], OW = gy.shape[3];
    const int k = l.kernel, s = l.stride, p = l.padding;
    const int patch = OC * k * k;
    const float* wmat = l.params.at("weight").data.data();  // [IC x patch]
    Tensor gx = Tensor::zeros(x.shape);
    Tensor gw = Tensor::zeros(l.params.at("weight").shape);
    Tensor gb = Tensor::zeros({OC});
    std::vector<float> cols(static_cast<size_t>(patch) * IH * IW);
    for (int n = 0; n < N; ++n) {
        const float* gyn = gy.data.data() + static_cast<size_t>(n) * OC * OH * OW;
        const float* xn = x.data.data() + static_cast<size_t>(n) * IC * IH * IW;
        // columns of the incoming gradient, patch layout matching the weight
        im2col(gyn, OC, OH, OW, k, s, p, IH, IW, cols.data());
        // gx[n] = W * cols
        gemm_nn(IC, IH * IW, patch, wmat, cols.data(),
                gx.data.data() + static_cast<size_t>(n) * IC * IH * IW);
        if (grads) {
            // gW += x[n] * cols^T
            gemm_nt(IC, patch, IH * IW, xn, cols.data(), gw.data.data());
            for (int oc = 0; oc < OC; ++oc) {
                const float* gc = gyn + static_cast<size_t>(oc) * OH * OW;
                float acc = 0.0f;
                for (int i = 0; i < OH * OW; ++i) acc += gc[i];
                gb.data[oc] += acc;
            }
        }
    }
    if (grads) {
        grads->params["weight"] = std::move(gw);
        grads->params["bias"] = std::move(gb);
    }
    return gx;
}

static Tensor batch_norm_backward(const Layer& l, const LayerCache& cache, const Tensor& gy,
                                  LayerGrads* grads) {
    const Tensor& x = cache.input;
    int C;
    int64_t m;
    bn_axes(x.shape, C, m);
    const int HW = x.shape.size() == 4 ? x.shape[2] * x.shape[3] : 1;
    const int N = x.shape[0];
    const float* gamma = l.params.at("gamma").data.data();
    const float* mean = cache.saved_mean.data.data();
    const float* invstd = cache.saved_invstd.data.data();

    // per-channel reductions
    Tensor sum_gy = Tensor::zeros({C});
    Tensor sum_gy_xhat = Tensor::zeros({C});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const float* xc = x.data.data() + (static_cast<size_t>(n) * C + c) * HW;
            const float* gc = gy.data.data() + (static_cast<size_t>(n) * C + c) * HW;
            float s0 = 0.0f, s1 = 0.0f;
            for (int i = 0; i < HW; ++i) {
                s0 += gc[i];
                s1 += gc[i] * (xc[i] - mean[c]) * invstd[c];
            }
            sum_gy.data[c] += s0;
            sum_gy_xhat.data[c] += s1;
        }

    Tensor gx = Tensor::zeros(x.shape);
    const float inv_m = 1.0f / static_cast<float>(m);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const float* xc = x.data.data() + (static_cast<size_t>(n) * C + c) * HW;
            const float* gc = gy.data.data() + (static_cast<size_t>(n) * C + c) * HW;
            float* oc = gx.data.data() + (static_cast<size_t>(n) * C + c) * HW;
            const float g = gamma[c], is = invstd[c], mu = mean[c];
            const float sg = sum_gy.data[c], sgx = sum_gy_xhat.data[c];
            for (int i = 0; i < HW; ++i) {
                const float xhat = (xc[i] - mu) * is;
                oc[i] = g * is * (gc[i] - inv_m * sg - inv_m * xhat * sgx);
            }
        }
    if (grads) {
        grads->params["gamma"] = sum_gy_xhat;
        grads->params["beta"] = sum_gy;
    }
    return gx;
}

Tensor layer_backward(const Layer& l, const LayerCache& cache, const Tensor& gy,
                      LayerGrads* grads) {
    if (l.kind == LayerKind::skip_begin || l.kind == LayerKind::skip_add)
        fail(cat(kind_name(l.kind), ": skip markers are segment-scoped; use Segment::backward"));
    check_cache(l, cache, gy);
    switch (l.kind) {
        case LayerKind::dense:
            return dense_backward(l, cache, gy, grads);
        case LayerKind::conv2d:
            return conv2d_backward(l, cache, gy, grads);
        case LayerKind::transposed_conv2d:
            return tconv2d_backward(l, cache, gy, grads);
        case LayerKind::relu: {
            Tensor gx = gy;
            for (size_t i = 0; i < gx.data.size(); ++i)
                if (cache.input.data[i] <= 0.0f) gx.data[i] = 0.0f;
            return gx;
        }
        case LayerKind::sigmoid: {
            Tensor gx = gy;
            for (size_t i = 0; i < gx.data.size(); ++i) {
                const float y = cache.output.data[i];
                gx.data[i] *= y * (1.0f - y);
            }
            return gx;
        }
        case LayerKind::max_pool2d: {
            Tensor gx = Tensor::zeros(cache.in_shape);
            const int C = cache.in_shape[1], H = cache.in_shape[2], W = cache.in_shape[3];
            const int OH = gy.shape[2], OW = gy.shape[3];
            size_t oi = 0;
            for (int n = 0; n < gy.shape[0]; ++n)
                for (int c = 0; c < C; ++c) {
                    float* xc = gx.data.data() + (static_cast<size_t>(n) * C + c) * H * W;
                    for (int i = 0; i < OH * OW; ++i, ++oi) xc[cache.argmax[oi]] += gy.data[oi];
                }
            return gx;
        }
        case LayerKind::avg_pool2d: {
            Tensor gx = Tensor::zeros(cache.in_shape);
            const int C = cache.in_shape[1], H = cache.in_shape[2], W = cache.in_shape[3];
            const int OH = gy.shape[2], OW = gy.shape[3];
            const float inv = 1.0f / static_cast<float>(l.kernel * l.kernel);
            size_t oi = 0;
            for (int n = 0; n < gy.shape[0]; ++n)
                for (int c = 0; c < C; ++c) {
                    float* xc = gx.data.data() + (static_cast<size_t>(n) * C + c) * H * W;
                    for (int oh = 0; oh < OH; ++oh)
                        for (int ow = 0; ow < OW; ++ow, ++oi) {
                            const float g = gy.data[oi] * inv;
                            for (int kh = 0; kh < l.kernel; ++kh)
                                for (int kw = 0; kw < l.kernel; ++kw)
                                    xc[static_cast<size_t>(oh * l.stride + kh) * W + ow * l.stride +
                                       kw] += g;
                        }
                }
            return gx;
        }
        case LayerKind::flatten: {
            Tensor gx = gy;
            gx.shape = cache.in_shape;
            return gx;
        }
        case LayerKind::batch_norm:
            return batch_norm_backward(l, cache, gy, grads);
        default:
            fail("layer_backward: unknown kind");
    }
}

}  // namespace splitguard
