#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracle_shadow.hpp"
#include "splitguard/losses.hpp"
#include "splitguard/optim.hpp"

using namespace splitguard;

namespace {

Tensor random_tensor(std::vector<int> shape, RngStream& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = static_cast<float>(lo + (hi - lo) * rng.uniform());
    return t;
}

void randomize_params(Layer& l, RngStream& rng) {
    for (auto& [name, t] : l.params)
        for (auto& v : t.data) v = static_cast<float>(rng.uniform() * 2.0 - 1.0);
}

// |a - n| <= tol * max(1, |a|, |n|)
bool close_rel(double a, double n, double tol) {
    return std::abs(a - n) <= tol * std::max({1.0, std::abs(a), std::abs(n)});
}

// Central finite differences on the double shadow model vs the float
// analytic backward, over inputs and every parameter.
void fd_check_segment(Segment seg, const Tensor& input, RngStream& rng, double h = 1e-3,
                      double tol = 1e-3, bool training = true) {
    SegmentCache cache;
    Segment run = seg;
    const Tensor out = run.forward(input, training, &cache);

    std::vector<double> proj(out.data.size());
    for (auto& p : proj) p = rng.uniform() * 2.0 - 1.0;
    Tensor gy = Tensor::zeros(out.shape);
    for (size_t i = 0; i < proj.size(); ++i) gy.data[i] = static_cast<float>(proj[i]);

    WeightMap grads;
    const Tensor gx = run.backward(cache, gy, &grads);

    shadow::Model model = shadow::Model::from_segment(seg, training);
    shadow::DT x = shadow::dt_from(input);

    for (size_t i = 0; i < x.data.size(); ++i) {
        const double keep = x.data[i];
        x.data[i] = keep + h;
        const double up = shadow::probe_loss(model, x, proj);
        x.data[i] = keep - h;
        const double dn = shadow::probe_loss(model, x, proj);
        x.data[i] = keep;
        const double fd = (up - dn) / (2 * h);
        CAPTURE(i);
        REQUIRE(close_rel(gx.data[i], fd, tol));
    }
    for (size_t li = 0; li < seg.layers.size(); ++li) {
        for (auto& [name, pvec] : model.params[li]) {
            if (!seg.layers[li].params.count(name)) continue;  // buffers have no grads
            const std::string key = cat("L", li, ".", name);
            REQUIRE(grads.count(key) == 1);
            for (size_t i = 0; i < pvec.size(); ++i) {
                const double keep = pvec[i];
                pvec[i] = keep + h;
                const double up = shadow::probe_loss(model, x, proj);
                pvec[i] = keep - h;
                const double dn = shadow::probe_loss(model, x, proj);
                pvec[i] = keep;
                const double fd = (up - dn) / (2 * h);
                CAPTURE(key);
                CAPTURE(i);
                REQUIRE(close_rel(grads.at(key).data[i], fd, tol));
            }
        }
    }
}

void fd_check_layer(Layer l, const Tensor& input, RngStream& rng) {
    Segment seg;
    seg.layers.push_back(std::move(l));
    fd_check_segment(std::move(seg), input, rng);
}

// values spaced > 2h apart so max_pool argmax never flips under FD probes
Tensor distinct_grid_tensor(std::vector<int> shape, RngStream& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    const auto n = t.data.size();
    std::vector<int> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order);
    for (size_t i = 0; i < n; ++i)
        t.data[i] = static_cast<float>(order[i] + 1) / static_cast<float>(n + 1);
    return t;
}

}  // namespace

TEST_CASE("conv2d with a centered one-hot kernel is the identity") {
    RngStream rng(1);
    Layer conv = make_conv2d(1, 1, 3, 1, 1);
    conv.params.at("weight").data[4] = 1.0f;  // center tap
    const Tensor x = random_tensor({2, 1, 5, 7}, rng, 0.0, 1.0);
    Layer run = conv;
    const Tensor y = layer_forward(run, x, false, nullptr);
    REQUIRE(y.shape == x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) CHECK(y.data[i] == doctest::Approx(x.data[i]));
}

TEST_CASE("relu forward clamps negatives") {
    Layer relu = make_relu();
    const Tensor x = Tensor::from({1, 3}, {-1.0f, 0.0f, 2.5f});
    const Tensor y = layer_forward(relu, x, false, nullptr);
    CHECK(y.data == std::vector<float>{0.0f, 0.0f, 2.5f});
}

TEST_CASE("conv2d matches the direct nested-loop oracle") {
    RngStream rng(2);
    Layer conv = make_conv2d(1, 1, 3, 1, 0);
    randomize_params(conv, rng);
    const Tensor x = random_tensor({1, 1, 5, 5}, rng);
    Layer run = conv;
    const Tensor y = layer_forward(run, x, false, nullptr);
    REQUIRE(y.shape == std::vector<int>{1, 1, 3, 3});
    Segment seg;
    seg.layers.push_back(conv);
    const auto ref = shadow::Model::from_segment(seg).forward(shadow::dt_from(x));
    for (size_t i = 0; i < y.data.size(); ++i)
        CHECK(y.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-6));
}

TEST_CASE("layer_forward rejects shape mismatches with context") {
    Layer conv = make_conv2d(3, 4, 3, 1, 1);
    const Tensor x = Tensor::zeros({1, 1, 8, 8});
    CHECK_THROWS_WITH_AS(layer_forward(conv, x, false, nullptr), doctest::Contains("conv2d"),
                         std::runtime_error);
    Layer dense = make_dense(4, 2);
    CHECK_THROWS_AS(layer_forward(dense, Tensor::zeros({2, 5}), false, nullptr),
                    std::runtime_error);
}

TEST_CASE("relu backward gates by input sign") {
    Layer relu = make_relu();
    LayerCache cache;
    (void)layer_forward(relu, Tensor::from({1, 2}, {-1.0f, 2.0f}), true, &cache);
    const Tensor gx = layer_backward(relu, cache, Tensor::from({1, 2}, {5.0f, 7.0f}), nullptr);
    CHECK(gx.data == std::vector<float>{0.0f, 7.0f});
}

TEST_CASE("dense identity weight passes gradients through") {
    Layer dense = make_dense(2, 2);
    dense.params.at("weight") = Tensor::from({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
    LayerCache cache;
    (void)layer_forward(dense, Tensor::from({1, 2}, {0.3f, -0.4f}), true, &cache);
    const Tensor gy = Tensor::from({1, 2}, {2.0f, -3.0f});
    const Tensor gx = layer_backward(dense, cache, gy, nullptr);
    CHECK(gx.data[0] == doctest::Approx(2.0f));
    CHECK(gx.data[1] == doctest::Approx(-3.0f));
}

TEST_CASE("layer_backward rejects stale caches and bad grad shapes") {
    Layer dense = make_dense(3, 2);
    LayerCache cache;  // never filled
    CHECK_THROWS_WITH_AS(layer_backward(dense, cache, Tensor::zeros({1, 2}), nullptr),
                         doctest::Contains("cache"), std::runtime_error);
    (void)layer_forward(dense, Tensor::zeros({1, 3}), true, &cache);
    CHECK_THROWS_AS(layer_backward(dense, cache, Tensor::zeros({1, 3}), nullptr),
                    std::runtime_error);
    LayerCache eval_cache;
    (void)layer_forward(dense, Tensor::zeros({1, 3}), false, &eval_cache);
    CHECK_THROWS_AS(layer_backward(dense, eval_cache, Tensor::zeros({1, 2}), nullptr),
                    std::runtime_error);
}

TEST_CASE("finite-difference gradients: dense") {
    RngStream rng(10);
    for (int t = 0; t < 20; ++t) {
        const int batch = 2 + static_cast<int>(rng.bounded(3));
        const int in = 3 + static_cast<int>(rng.bounded(4));
        const int out = 2 + static_cast<int>(rng.bounded(4));
        Layer l = make_dense(in, out);
        randomize_params(l, rng);
        fd_check_layer(std::move(l), random_tensor({batch, in}, rng), rng);
    }
}

TEST_CASE("finite-difference gradients: conv2d") {
    RngStream rng(11);
    for (int t = 0; t < 20; ++t) {
        const int cin = 1 + static_cast<int>(rng.bounded(3));
        const int cout = 1 + static_cast<int>(rng.bounded(3));
        const int k = 1 + static_cast<int>(rng.bounded(3));
        const int s = 1 + static_cast<int>(rng.bounded(2));
        const int p = static_cast<int>(rng.bounded(2));
        const int h = k + 3 + static_cast<int>(rng.bounded(3));
        const int batch = 1 + static_cast<int>(rng.bounded(2));
        Layer l = make_conv2d(cin, cout, k, s, p);
        randomize_params(l, rng);
        fd_check_layer(std::move(l), random_tensor({batch, cin, h, h}, rng), rng);
    }
}

TEST_CASE("finite-difference gradients: transposed_conv2d") {
    RngStream rng(12);
    for (int t = 0; t < 20; ++t) {
        const int cin = 1 + static_cast<int>(rng.bounded(3));
        const int cout = 1 + static_cast<int>(rng.bounded(3));
        const int k = 2 + static_cast<int>(rng.bounded(2));
        const int s = 1 + static_cast<int>(rng.bounded(2));
        const int p = static_cast<int>(rng.bounded(2));
        const int h = 2 + static_cast<int>(rng.bounded(3));
        const int batch = 1 + static_cast<int>(rng.bounded(2));
        if ((h - 1) * s - 2 * p + k <= 0) continue;
        Layer l = make_transposed_conv2d(cin, cout, k, s, p);
        randomize_params(l, rng);
        fd_check_layer(std::move(l), random_tensor({batch, cin, h, h}, rng), rng);
    }
}

TEST_CASE("finite-difference gradients: relu (inputs bounded away from the kink)") {
    RngStream rng(13);
    for (int t = 0; t < 20; ++t) {
        Tensor x = random_tensor({2, 3 + static_cast<int>(rng.bounded(4))}, rng);
        for (auto& v : x.data) {
            const float sign = v < 0 ? -1.0f : 1.0f;
            v = sign * (0.01f + std::abs(v));
        }
        fd_check_layer(make_relu(), x, rng);
    }
}

TEST_CASE("finite-difference gradients: sigmoid") {
    RngStream rng(14);
    for (int t = 0; t < 20; ++t)
        fd_check_layer(make_sigmoid(),
                       random_tensor({2, 4 + static_cast<int>(rng.bounded(4))}, rng, -3.0, 3.0),
                       rng);
}

TEST_CASE("finite-difference gradients: max_pool2d") {
    RngStream rng(15);
    for (int t = 0; t < 20; ++t) {
        const int s = 1 + static_cast<int>(rng.bounded(2));
        const int h = 4 + static_cast<int>(rng.bounded(3));
        const int c = 1 + static_cast<int>(rng.bounded(2));
        fd_check_layer(make_max_pool2d(2, s), distinct_grid_tensor({1, c, h, h}, rng), rng);
    }
}

TEST_CASE("finite-difference gradients: avg_pool2d") {
    RngStream rng(16);
    for (int t = 0; t < 20; ++t) {
        const int s = 1 + static_cast<int>(rng.bounded(2));
        const int h = 4 + static_cast<int>(rng.bounded(3));
        const int c = 1 + static_cast<int>(rng.bounded(2));
        fd_check_layer(make_avg_pool2d(2, s), random_tensor({2, c, h, h}, rng), rng);
    }
}

TEST_CASE("finite-difference gradients: flatten") {
    RngStream rng(17);
    for (int t = 0; t < 20; ++t)
        fd_check_layer(make_flatten(), random_tensor({2, 2, 3, 3}, rng), rng);
}

TEST_CASE("finite-difference gradients: batch_norm training mode") {
    RngStream rng(18);
    for (int t = 0; t < 10; ++t) {
        const int c = 2 + static_cast<int>(rng.bounded(3));
        Layer l = make_batch_norm(c);
        randomize_params(l, rng);
        fd_check_layer(std::move(l), random_tensor({4 + static_cast<int>(rng.bounded(3)), c}, rng),
                       rng);
    }
    for (int t = 0; t < 10; ++t) {
        const int c = 2 + static_cast<int>(rng.bounded(2));
        Layer l = make_batch_norm(c);
        randomize_params(l, rng);
        fd_check_layer(std::move(l), random_tensor({2, c, 3, 4}, rng), rng);
    }
}

TEST_CASE("batch_norm eval mode normalizes with running statistics") {
    RngStream rng(19);
    Layer l = make_batch_norm(2);
    l.buffers.at("running_mean") = Tensor::from({2}, {0.5f, -1.0f});
    l.buffers.at("running_var") = Tensor::from({2}, {4.0f, 0.25f});
    const Tensor x = random_tensor({3, 2}, rng);
    const Tensor y = layer_forward(l, x, false, nullptr);
    for (int n = 0; n < 3; ++n)
        for (int c = 0; c < 2; ++c) {
            const float mu = c == 0 ? 0.5f : -1.0f;
            const float var = c == 0 ? 4.0f : 0.25f;
            const float want = (x.data[n * 2 + c] - mu) / std::sqrt(var + l.bn_eps);
            CHECK(y.data[n * 2 + c] == doctest::Approx(want).epsilon(1e-5));
        }
    // eval-mode forward must not touch the buffers
    CHECK(l.buffers.at("running_mean").data == std::vector<float>{0.5f, -1.0f});
    CHECK(l.buffers.at("running_var").data == std::vector<float>{4.0f, 0.25f});
}

TEST_CASE("finite-difference gradients: residual span through the segment") {
    RngStream rng(20);
    for (int t = 0; t < 5; ++t) {
        Segment seg;
        seg.layers.push_back(make_skip_begin());
        Layer c1 = make_conv2d(2, 2, 3, 1, 1);
        randomize_params(c1, rng);
        seg.layers.push_back(c1);
        seg.layers.push_back(make_sigmoid());
        Layer c2 = make_conv2d(2, 2, 3, 1, 1);
        randomize_params(c2, rng);
        seg.layers.push_back(c2);
        seg.layers.push_back(make_skip_add());
        fd_check_segment(seg, random_tensor({2, 2, 4, 4}, rng), rng);
    }
}

TEST_CASE("skip markers are rejected outside segments") {
    Layer begin = make_skip_begin();
    CHECK_THROWS_WITH_AS(layer_forward(begin, Tensor::zeros({1, 2}), false, nullptr),
                         doctest::Contains("segment"), std::runtime_error);
}

TEST_CASE("declared output shape equals runtime output shape") {
    RngStream rng(21);
    std::vector<Layer> layers;
    layers.push_back(make_dense(6, 3));
    layers.push_back(make_conv2d(2, 4, 3, 2, 1));
    layers.push_back(make_transposed_conv2d(3, 2, 2, 2, 0));
    layers.push_back(make_max_pool2d(2, 2));
    layers.push_back(make_avg_pool2d(3, 1));
    layers.push_back(make_flatten());
    layers.push_back(make_batch_norm(2));
    const std::vector<std::vector<int>> inputs = {{2, 6},       {2, 2, 9, 9}, {2, 3, 4, 4},
                                                  {2, 1, 6, 6}, {1, 2, 5, 5}, {3, 2, 4, 5},
                                                  {4, 2, 3, 3}};
    for (size_t i = 0; i < layers.size(); ++i) {
        randomize_params(layers[i], rng);
        const Tensor x = random_tensor(inputs[i], rng);
        const auto declared = layer_output_shape(layers[i], x.shape);
        const Tensor y = layer_forward(layers[i], x, true, nullptr);
        CHECK(y.shape == declared);
        CHECK(all_finite(y));
    }
}

TEST_CASE("cross_entropy matches hand values and stays stable") {
    const auto uniform = cross_entropy(Tensor::from({1, 2}, {0.0f, 0.0f}), {0});
    CHECK(uniform.loss == doctest::Approx(std::log(2.0)).epsilon(1e-6));

    const auto saturated = cross_entropy(Tensor::from({1, 2}, {1000.0f, 0.0f}), {0});
    CHECK(saturated.loss == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(all_finite(saturated.grad));

    CHECK_THROWS_WITH_AS(cross_entropy(Tensor::from({1, 2}, {0.0f, 0.0f}), {2}),
                         doctest::Contains("label 2"), std::runtime_error);
}

TEST_CASE("cross_entropy matches an extended-precision softmax oracle") {
    RngStream rng(22);
    const Tensor logits = random_tensor({4, 3}, rng, -4.0, 4.0);
    const std::vector<int> labels = {2, 0, 1, 1};
    const auto got = cross_entropy(logits, labels);

    double loss = 0.0;
    Tensor want_grad = Tensor::zeros({4, 3});
    for (int i = 0; i < 4; ++i) {
        double denom = 0.0;
        for (int j = 0; j < 3; ++j) denom += std::exp(static_cast<double>(logits.data[i * 3 + j]));
        for (int j = 0; j < 3; ++j) {
            const double p = std::exp(static_cast<double>(logits.data[i * 3 + j])) / denom;
            want_grad.data[i * 3 + j] =
                static_cast<float>((p - (j == labels[i] ? 1.0 : 0.0)) / 4.0);
        }
        loss -= std::log(std::exp(static_cast<double>(logits.data[i * 3 + labels[i]])) / denom);
    }
    CHECK(got.loss == doctest::Approx(loss / 4.0).epsilon(1e-6));
    for (int i = 0; i < 12; ++i)
        CHECK(got.grad.data[i] == doctest::Approx(want_grad.data[i]).epsilon(1e-5));
}

TEST_CASE("cross_entropy gradient sums to zero over classes") {
    RngStream rng(23);
    for (int t = 0; t < 10; ++t) {
        const Tensor logits = random_tensor({5, 7}, rng, -3.0, 3.0);
        std::vector<int> labels(5);
        for (auto& l : labels) l = static_cast<int>(rng.bounded(7));
        const auto r = cross_entropy(logits, labels);
        for (int i = 0; i < 5; ++i) {
            double row = 0.0;
            for (int j = 0; j < 7; ++j) row += r.grad.data[i * 7 + j];
            CHECK(std::abs(row) < 1e-6);
        }
    }
}

TEST_CASE("mse_loss hand values and brute-force agreement") {
    const Tensor a = Tensor::from({2}, {1.0f, 1.0f});
    const Tensor b = Tensor::from({2}, {0.0f, 0.0f});
    CHECK(mse_loss(a, a).loss == doctest::Approx(0.0));
    for (float g : mse_loss(a, a).grad.data) CHECK(g == 0.0f);
    CHECK(mse_loss(a, b).loss == doctest::Approx(1.0));

    RngStream rng(24);
    const Tensor p = random_tensor({3, 4}, rng);
    const Tensor q = random_tensor({3, 4}, rng);
    double want = 0.0;
    for (int i = 0; i < 12; ++i) {
        const double d = static_cast<double>(p.data[i]) - q.data[i];
        want += d * d;
    }
    CHECK(mse_loss(p, q).loss == doctest::Approx(want / 12.0).epsilon(1e-6));
    CHECK_THROWS_AS(mse_loss(p, Tensor::zeros({4, 3})), std::runtime_error);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    Tensor p = Tensor::from({2}, {0.5f, -0.25f});
    Adam opt(AdamConfig{0.01f});
    WeightMap grads;
    grads["p"] = Tensor::zeros({2});
    std::map<std::string, Tensor*> params{{"p", &p}};
    opt.step(params, grads);
    opt.step(params, grads);
    CHECK(p.data[0] == 0.5f);
    CHECK(p.data[1] == -0.25f);
    CHECK(opt.steps() == 2);
}

TEST_CASE("adam: first step with unit gradient moves by the learning rate") {
    // hand evaluation of the recurrence: m_hat = 1, v_hat = 1, so the first
    // update is lr / (1 + eps)
    Tensor p = Tensor::from({1}, {0.0f});
    const float lr = 0.001f;
    Adam opt(AdamConfig{lr});
    WeightMap grads;
    grads["p"] = Tensor::from({1}, {1.0f});
    std::map<std::string, Tensor*> params{{"p", &p}};
    opt.step(params, grads);
    CHECK(p.data[0] == doctest::Approx(-lr).epsilon(1e-5));
}

TEST_CASE("adam: missing gradient is a structured error") {
    Tensor p = Tensor::zeros({1});
    Adam opt;
    std::map<std::string, Tensor*> params{{"p", &p}};
    CHECK_THROWS_WITH_AS(opt.step(params, WeightMap{}), doctest::Contains("'p'"),
                         std::runtime_error);
}

TEST_CASE("adam: identical calls on independent copies are bit-identical") {
    RngStream rng(25);
    Tensor p1 = random_tensor({8}, rng);
    Tensor p2 = p1;
    WeightMap grads;
    grads["p"] = random_tensor({8}, rng);
    Adam o1, o2;
    std::map<std::string, Tensor*> m1{{"p", &p1}}, m2{{"p", &p2}};
    for (int i = 0; i < 5; ++i) {
        o1.step(m1, grads);
        o2.step(m2, grads);
    }
    CHECK(p1.data == p2.data);
}

TEST_CASE("forward/backward/update sequences are bit-reproducible") {
    auto run_once = [] {
        RngStream rng(404);
        Segment seg;
        seg.layers.push_back(make_conv2d(1, 2, 3, 1, 1));
        seg.layers.push_back(make_relu());
        seg.layers.push_back(make_flatten());
        seg.layers.push_back(make_dense(2 * 6 * 6, 3));
        init_segment(seg, rng);
        Adam opt(AdamConfig{0.01f});
        auto params = seg.param_refs();
        Tensor x = Tensor::zeros({2, 1, 6, 6});
        for (auto& v : x.data) v = static_cast<float>(rng.uniform());
        for (int i = 0; i < 3; ++i) {
            SegmentCache cache;
            const Tensor logits = seg.forward(x, true, &cache);
            const auto loss = cross_entropy(logits, {0, 2});
            WeightMap grads;
            seg.backward(cache, loss.grad, &grads);
            opt.step(params, grads);
        }
        uint64_t digest = kFnvOffset;
        for (const auto& [name, t] : seg.state_dict())
            digest = fnv1a(t.data.data(), t.data.size() * sizeof(float), digest);
        return digest;
    };
    CHECK(run_once() == run_once());
}
