#include "splitguard/models.hpp"

namespace splitguard {

void validate_network(const NetworkSpec& net) {
    if (net.input_shape.size() != 3)
        fail(cat("NetworkSpec: input shape must be [C,H,W], got ", shape_str(net.input_shape)));
    if (net.classes < 2) fail("NetworkSpec: need at least 2 classes");
    std::vector<int> s = {1, net.input_shape[0], net.input_shape[1], net.input_shape[2]};
    for (size_t i = 0; i < net.layers.size(); ++i) s = layer_output_shape(net.layers[i], s);
    if (s != std::vector<int>{1, net.classes})
        fail(cat("NetworkSpec: final output ", shape_str(s), " is not [batch x ", net.classes, "]"));
}

static int flattened_features(const std::vector<Layer>& layers, const std::vector<int>& input) {
    std::vector<int> s = {1, input[0], input[1], input[2]};
    for (const auto& l : layers) s = layer_output_shape(l, s);
    int64_t f = 1;
    for (size_t i = 1; i < s.size(); ++i) f *= s[i];
    return static_cast<int>(f);
}

NetworkSpec build_convnet(const std::vector<int>& input_shape, int classes) {
    if (input_shape.size() != 3)
        fail(cat("build_convnet: input shape must be [C,H,W], got ", shape_str(input_shape)));
    const int c = input_shape[0], h = input_shape[1], w = input_shape[2];
    if (h < 8 || w < 8)
        fail(cat("build_convnet: input ", h, "x", w,
                 " too small for the pooling schedule (needs >= 8)"));
    NetworkSpec net;
    net.input_shape = input_shape;
    net.classes = classes;
    auto& L = net.layers;
    L.push_back(make_conv2d(c, 8, 3, 1, 1));    // block 1
    L.push_back(make_relu());
    net.named_cuts["RB1"] = static_cast<int>(L.size());
    L.push_back(make_conv2d(8, 16, 3, 1, 1));   // block 2
    L.push_back(make_relu());
    L.push_back(make_max_pool2d(2, 2));
    net.named_cuts["RB2"] = static_cast<int>(L.size());
    L.push_back(make_conv2d(16, 16, 3, 1, 1));  // block 3
    L.push_back(make_relu());
    net.named_cuts["RB3"] = static_cast<int>(L.size());
    L.push_back(make_conv2d(16, 32, 3, 1, 1));  // block 4
    L.push_back(make_relu());
    L.push_back(make_max_pool2d(2, 2));
    net.tail_start = static_cast<int>(L.size());
    L.push_back(make_flatten());
    L.push_back(make_dense(flattened_features(std::vector<Layer>(L.begin(), L.end() - 1), input_shape), classes));
    validate_network(net);
    return net;
}

// pre-activation identity block: with all-zero conv weights the residual
// branch is exactly zero and the block is the identity
static void push_residual_block(std::vector<Layer>& L, int channels) {
    L.push_back(make_skip_begin());
    L.push_back(make_batch_norm(channels));
    L.push_back(make_relu());
    L.push_back(make_conv2d(channels, channels, 3, 1, 1));
    L.push_back(make_batch_norm(channels));
    L.push_back(make_relu());
    L.push_back(make_conv2d(channels, channels, 3, 1, 1));
    L.push_back(make_skip_add());
}

NetworkSpec build_small_resnet(const std::vector<int>& input_shape, int classes, int blocks) {
    if (blocks != 2 && blocks != 3)
        fail(cat("build_small_resnet: unsupported block count ", blocks, " (expected 2 or 3)"));
    if (input_shape.size() != 3)
        fail(cat("build_small_resnet: input shape must be [C,H,W], got ", shape_str(input_shape)));
    const int c = input_shape[0], h = input_shape[1], w = input_shape[2];
    if (h < 8 || w < 8)
        fail(cat("build_small_resnet: input ", h, "x", w,
                 " too small for the pooling schedule (needs >= 8)"));
    NetworkSpec net;
    net.input_shape = input_shape;
    net.classes = classes;
    auto& L = net.layers;
    L.push_back(make_conv2d(c, 8, 3, 1, 1));  // stem
    push_residual_block(L, 8);
    net.named_cuts["RB1"] = static_cast<int>(L.size());
    L.push_back(make_conv2d(8, 16, 3, 1, 1));
    L.push_back(make_relu());
    L.push_back(make_max_pool2d(2, 2));
    push_residual_block(L, 16);
    net.named_cuts["RB2"] = static_cast<int>(L.size());
    int channels = 16;
    if (blocks == 3) {
        L.push_back(make_conv2d(16, 32, 3, 1, 1));
        L.push_back(make_relu());
        L.push_back(make_max_pool2d(2, 2));
        push_residual_block(L, 32);
        net.named_cuts["RB3"] = static_cast<int>(L.size());
        channels = 32;
    }
    L.push_back(make_batch_norm(channels));
    L.push_back(make_relu());
    L.push_back(make_avg_pool2d(2, 2));
    net.tail_start = static_cast<int>(L.size());
    L.push_back(make_flatten());
    L.push_back(make_dense(flattened_features(std::vector<Layer>(L.begin(), L.end() - 1), input_shape), classes));
    validate_network(net);
    return net;
}

SplitSpec split_spec_at(const NetworkSpec& net, const std::string& cut_name) {
    auto it = net.named_cuts.find(cut_name);
    if (it == net.named_cuts.end())
        fail(cat("split_spec_at: no cut named '", cut_name, "' in this network"));
    return SplitSpec{it->second, net.tail_start};
}

// (begin, add) index pairs of every residual span
static std::vector<std::pair<int, int>> skip_spans(const std::vector<Layer>& layers) {
    std::vector<std::pair<int, int>> spans;
    std::vector<int> open;
    for (size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].kind == LayerKind::skip_begin) open.push_back(static_cast<int>(i));
        if (layers[i].kind == LayerKind::skip_add) {
            if (open.empty()) fail(cat("skip_add at layer ", i, " has no matching skip_begin"));
            spans.emplace_back(open.back(), static_cast<int>(i));
            open.pop_back();
        }
    }
    if (!open.empty()) fail("skip_begin without matching skip_add");
    return spans;
}

SplitModel split(const NetworkSpec& net, const SplitSpec& spec) {
    const int n = static_cast<int>(net.layers.size());
    if (!(0 < spec.head_end && spec.head_end < spec.body_end && spec.body_end < n))
        fail(cat("split: invalid cut points head_end=", spec.head_end, " body_end=", spec.body_end,
                 " for ", n, " layers"));
    for (const auto& [b, a] : skip_spans(net.layers))
        for (int cut : {spec.head_end, spec.body_end})
            if (b < cut && cut <= a)
                fail(cat("split: cut at ", cut, " falls inside the residual span [", b, "..", a,
                         "]; cuts are only legal at block boundaries"));
    SplitModel m;
    m.head.layers.assign(net.layers.begin(), net.layers.begin() + spec.head_end);
    m.body.layers.assign(net.layers.begin() + spec.head_end, net.layers.begin() + spec.body_end);
    m.tail.layers.assign(net.layers.begin() + spec.body_end, net.layers.end());
    return m;
}

std::vector<Layer> concat_layers(const SplitModel& model) {
    std::vector<Layer> out = model.head.layers;
    out.insert(out.end(), model.body.layers.begin(), model.body.layers.end());
    out.insert(out.end(), model.tail.layers.begin(), model.tail.layers.end());
    return out;
}

Segment full_segment(const NetworkSpec& net) { return Segment{net.layers}; }

Segment build_inversion(const Segment& head, const std::vector<int>& head_input_shape) {
    if (head_input_shape.size() != 3)
        fail(cat("build_inversion: head input must be an image [C,H,W], got ",
                 shape_str(head_input_shape)));
    // shapes entering each head layer
    std::vector<std::vector<int>> in_shapes;
    std::vector<int> s = {1, head_input_shape[0], head_input_shape[1], head_input_shape[2]};
    for (const auto& l : head.layers) {
        in_shapes.push_back(s);
        s = layer_output_shape(l, s);
    }

    Segment inv;
    for (size_t ii = head.layers.size(); ii-- > 0;) {
        const Layer& l = head.layers[ii];
        switch (l.kind) {
            case LayerKind::conv2d:
                inv.layers.push_back(make_transposed_conv2d(l.out_channels, l.in_channels,
                                                            l.kernel, l.stride, l.padding));
                inv.layers.push_back(make_relu());
                break;
            case LayerKind::max_pool2d:
            case LayerKind::avg_pool2d: {
                const int channels = in_shapes[ii][1];
                inv.layers.push_back(
                    make_transposed_conv2d(channels, channels, l.kernel, l.stride, 0));
                inv.layers.push_back(make_relu());
                break;
            }
            case LayerKind::relu:
            case LayerKind::sigmoid:
            case LayerKind::batch_norm:
            case LayerKind::skip_begin:
            case LayerKind::skip_add:
                break;  // no spatial effect, nothing to mirror
            default:
                fail(cat("build_inversion: cannot mirror layer kind ", kind_name(l.kind)));
        }
    }
    if (inv.layers.empty()) fail("build_inversion: head has no mirrorable layers");
    inv.layers.back() = make_sigmoid();  // final squashing to [0,1]

    const auto smashed = head.output_shape({1, head_input_shape[0], head_input_shape[1],
                                            head_input_shape[2]});
    const auto closed = inv.output_shape(smashed);
    const std::vector<int> want = {1, head_input_shape[0], head_input_shape[1],
                                   head_input_shape[2]};
    if (closed != want)
        fail(cat("build_inversion: mirror output ", shape_str(closed),
                 " does not close back to head input ", shape_str(want)));
    return inv;
}

}  // namespace splitguard
