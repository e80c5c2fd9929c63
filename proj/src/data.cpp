#include "splitguard/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "splitguard/rng.hpp"

namespace splitguard {

Tensor Dataset::image(int index) const {
    if (index < 0 || index >= count())
        fail(cat("Dataset::image: index ", index, " out of range for ", count(), " samples"));
    Tensor out = Tensor::zeros(image_shape);
    const size_t per = out.data.size();
    std::copy_n(images.data.begin() + static_cast<size_t>(index) * per, per, out.data.begin());
    return out;
}

static std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(cat("cannot open '", path, "'"));
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

static uint32_t be32(const std::vector<unsigned char>& b, size_t off, const std::string& path) {
    if (off + 4 > b.size())
        fail(cat("'", path, "': truncated at byte offset ", off, " (need 4 header bytes)"));
    return (static_cast<uint32_t>(b[off]) << 24) | (static_cast<uint32_t>(b[off + 1]) << 16) |
           (static_cast<uint32_t>(b[off + 2]) << 8) | static_cast<uint32_t>(b[off + 3]);
}

Dataset load_idx(const std::string& image_path, const std::string& label_path) {
    const auto ib = read_file(image_path);
    const auto lb = read_file(label_path);

    if (be32(ib, 0, image_path) != 0x00000803u)
        fail(cat("'", image_path, "': bad magic at offset 0 (expected 0x00000803)"));
    const uint32_t n = be32(ib, 4, image_path);
    const uint32_t rows = be32(ib, 8, image_path);
    const uint32_t cols = be32(ib, 12, image_path);
    const size_t need = 16 + static_cast<size_t>(n) * rows * cols;
    if (ib.size() < need)
        fail(cat("'", image_path, "': truncated at byte offset ", ib.size(), " (expected ", need,
                 " bytes)"));

    if (be32(lb, 0, label_path) != 0x00000801u)
        fail(cat("'", label_path, "': bad magic at offset 0 (expected 0x00000801)"));
    const uint32_t ln = be32(lb, 4, label_path);
    if (lb.size() < 8 + ln)
        fail(cat("'", label_path, "': truncated at byte offset ", lb.size()));
    if (ln != n)
        fail(cat("IDX count mismatch: ", n, " images in '", image_path, "' vs ", ln,
                 " labels in '", label_path, "'"));

    Dataset ds;
    ds.image_shape = {1, static_cast<int>(rows), static_cast<int>(cols)};
    ds.labels.resize(n);
    int max_label = 0;
    for (uint32_t i = 0; i < n; ++i) {
        ds.labels[i] = lb[8 + i];
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.classes = max_label + 1;
    if (n > 0) {
        ds.images = Tensor::zeros({static_cast<int>(n), 1, static_cast<int>(rows),
                                   static_cast<int>(cols)});
        for (size_t i = 0; i < static_cast<size_t>(n) * rows * cols; ++i)
            ds.images.data[i] = static_cast<float>(ib[16 + i]) / 255.0f;
    }
    return ds;
}

void save_idx(const Dataset& ds, const std::string& image_path, const std::string& label_path) {
    if (ds.image_shape.size() != 3 || ds.image_shape[0] != 1)
        fail(cat("save_idx: IDX stores single-channel images, got ", shape_str(ds.image_shape)));
    const uint32_t n = static_cast<uint32_t>(ds.count());
    const uint32_t rows = ds.image_shape[1], cols = ds.image_shape[2];
    auto put32 = [](std::ofstream& out, uint32_t v) {
        const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                    static_cast<unsigned char>(v >> 16),
                                    static_cast<unsigned char>(v >> 8),
                                    static_cast<unsigned char>(v)};
        out.write(reinterpret_cast<const char*>(b), 4);
    };
    std::ofstream io(image_path, std::ios::binary);
    if (!io) fail(cat("save_idx: cannot write '", image_path, "'"));
    put32(io, 0x00000803u);
    put32(io, n);
    put32(io, rows);
    put32(io, cols);
    for (size_t i = 0; i < static_cast<size_t>(n) * rows * cols; ++i) {
        const float v = std::clamp(ds.images.data[i], 0.0f, 1.0f);
        const unsigned char b = static_cast<unsigned char>(std::lround(v * 255.0f));
        io.write(reinterpret_cast<const char*>(&b), 1);
    }
    std::ofstream lo(label_path, std::ios::binary);
    if (!lo) fail(cat("save_idx: cannot write '", label_path, "'"));
    put32(lo, 0x00000801u);
    put32(lo, n);
    for (uint32_t i = 0; i < n; ++i) {
        const unsigned char b = static_cast<unsigned char>(ds.labels[i]);
        lo.write(reinterpret_cast<const char*>(&b), 1);
    }
}

Dataset load_cifar_binary(const std::vector<std::string>& paths) {
    constexpr size_t kRecord = 3073;
    std::vector<unsigned char> all;
    for (const auto& p : paths) {
        const auto b = read_file(p);
        if (b.size() % kRecord != 0)
            fail(cat("'", p, "': length ", b.size(), " is not a multiple of ", kRecord));
        all.insert(all.end(), b.begin(), b.end());
    }
    const size_t n = all.size() / kRecord;
    Dataset ds;
    ds.image_shape = {3, 32, 32};
    ds.classes = 10;
    ds.labels.resize(n);
    if (n > 0) ds.images = Tensor::zeros({static_cast<int>(n), 3, 32, 32});
    for (size_t i = 0; i < n; ++i) {
        const unsigned char* rec = all.data() + i * kRecord;
        ds.labels[i] = rec[0];
        for (size_t j = 0; j < 3072; ++j)
            ds.images.data[i * 3072 + j] = static_cast<float>(rec[1 + j]) / 255.0f;
    }
    return ds;
}

Dataset synthetic_blobs(int classes, int count, const std::vector<int>& shape, uint64_t seed) {
    if (classes < 2) fail(cat("synthetic_blobs: need >= 2 classes, got ", classes));
    if (shape.size() != 3)
        fail(cat("synthetic_blobs: shape must be [C,H,W], got ", shape_str(shape)));
    const int C = shape[0], H = shape[1], W = shape[2];
    int grid = 2;
    while (grid * grid < classes) ++grid;
    if (grid > std::min(H, W))
        fail(cat("synthetic_blobs: ", classes, " classes need a ", grid, "x", grid,
                 " cell grid, image is only ", H, "x", W));
    const int ch = H / grid, cw = W / grid;

    constexpr float kBackground = 0.05f;
    constexpr float kPrimary = 0.9f;  // kPrimary - kSecondary > kBlobContrast
    constexpr float kSecondary = 0.35f;

    // per-class template: a unique full-strength primary cell plus two
    // tinted secondary cells
    std::vector<Tensor> patterns;
    for (int c = 0; c < classes; ++c) {
        RngStream crng(derive_seed(0x5eedb10b5ull, "class", static_cast<uint64_t>(c)));
        Tensor pat = Tensor::full(shape, kBackground);
        auto light = [&](int cell, float level, bool tinted) {
            const int gy = cell / grid, gx = cell % grid;
            for (int ch_i = 0; ch_i < C; ++ch_i) {
                const float tint =
                    tinted && C > 1 ? 0.75f + 0.25f * static_cast<float>(crng.uniform()) : 1.0f;
                for (int y = gy * ch; y < std::min((gy + 1) * ch, H); ++y)
                    for (int x = gx * cw; x < std::min((gx + 1) * cw, W); ++x)
                        pat.data[(static_cast<size_t>(ch_i) * H + y) * W + x] =
                            std::max(pat.data[(static_cast<size_t>(ch_i) * H + y) * W + x],
                                     level * tint);
            }
        };
        light(c, kPrimary, false);
        light(static_cast<int>(crng.bounded(static_cast<uint64_t>(grid * grid))), kSecondary, true);
        light(static_cast<int>(crng.bounded(static_cast<uint64_t>(grid * grid))), kSecondary, true);
        patterns.push_back(std::move(pat));
    }

    RngStream rng(seed);
    Dataset ds;
    ds.classes = classes;
    ds.image_shape = shape;
    ds.labels.resize(count);
    if (count > 0) ds.images = Tensor::zeros({count, C, H, W});
    const size_t per = static_cast<size_t>(C) * H * W;
    for (int i = 0; i < count; ++i) {
        const int label = static_cast<int>(rng.bounded(static_cast<uint64_t>(classes)));
        ds.labels[i] = label;
        float* img = ds.images.data.data() + static_cast<size_t>(i) * per;
        for (size_t j = 0; j < per; ++j) {
            const float v = patterns[label].data[j] + 0.08f * static_cast<float>(rng.normal());
            img[j] = std::clamp(v, 0.0f, 1.0f);
        }
    }
    return ds;
}

Dataset take(const Dataset& ds, const std::vector<int>& indices, const std::string& tag) {
    Dataset out;
    out.classes = ds.classes;
    out.image_shape = ds.image_shape;
    out.split_tag = tag.empty() ? ds.split_tag : tag;
    out.labels.reserve(indices.size());
    const size_t per = static_cast<size_t>(shape_numel(ds.image_shape));
    if (!indices.empty()) {
        std::vector<int> shape = ds.image_shape;
        shape.insert(shape.begin(), static_cast<int>(indices.size()));
        out.images = Tensor::zeros(shape);
    }
    for (size_t i = 0; i < indices.size(); ++i) {
        const int idx = indices[i];
        if (idx < 0 || idx >= ds.count())
            fail(cat("take: index ", idx, " out of range for ", ds.count(), " samples"));
        out.labels.push_back(ds.labels[idx]);
        std::copy_n(ds.images.data.begin() + static_cast<size_t>(idx) * per, per,
                    out.images.data.begin() + i * per);
    }
    return out;
}

Dataset subset_fraction(const Dataset& ds, double fraction, uint64_t seed) {
    if (fraction <= 0.0 || fraction > 1.0)
        fail(cat("subset_fraction: fraction must lie in (0,1], got ", fraction));
    const auto target = static_cast<size_t>(std::llround(fraction * ds.count()));
    RngStream rng(seed);

    std::vector<std::vector<int>> by_class(ds.classes);
    for (int i = 0; i < ds.count(); ++i) by_class[ds.labels[i]].push_back(i);
    for (auto& v : by_class) rng.shuffle(v);

    std::vector<int> chosen;
    std::vector<size_t> used(ds.classes, 0);
    for (int c = 0; c < ds.classes; ++c) {
        used[c] = static_cast<size_t>(fraction * static_cast<double>(by_class[c].size()));
        for (size_t j = 0; j < used[c]; ++j) chosen.push_back(by_class[c][j]);
    }
    // top up round-robin over a shuffled class order until the target size
    std::vector<int> order(ds.classes);
    for (int c = 0; c < ds.classes; ++c) order[c] = c;
    rng.shuffle(order);
    size_t oi = 0, guard = 0;
    while (chosen.size() < target && guard++ < target * 4 + 16) {
        const int c = order[oi++ % order.size()];
        if (used[c] < by_class[c].size()) chosen.push_back(by_class[c][used[c]++]);
    }
    rng.shuffle(chosen);
    return take(ds, chosen);
}

PartitionPlan partition_iid(const Dataset& ds, int n_clients, uint64_t seed) {
    if (n_clients < 1) fail(cat("partition_iid: need >= 1 client, got ", n_clients));
    if (ds.count() < n_clients)
        fail(cat("partition_iid: ", n_clients, " clients exceed ", ds.count(), " samples"));
    std::vector<int> idx(ds.count());
    for (int i = 0; i < ds.count(); ++i) idx[i] = i;
    RngStream rng(seed);
    rng.shuffle(idx);
    PartitionPlan plan;
    plan.seed = seed;
    plan.shards.resize(n_clients);
    const int base = ds.count() / n_clients;
    const int extra = ds.count() % n_clients;
    int pos = 0;
    for (int c = 0; c < n_clients; ++c) {
        const int size = base + (c < extra ? 1 : 0);
        plan.shards[c].assign(idx.begin() + pos, idx.begin() + pos + size);
        pos += size;
    }
    return plan;
}

Tensor batch_images(const Dataset& ds, const std::vector<int>& indices) {
    if (indices.empty()) fail("batch_images: empty index list");
    std::vector<int> shape = ds.image_shape;
    shape.insert(shape.begin(), static_cast<int>(indices.size()));
    Tensor out = Tensor::zeros(shape);
    const size_t per = static_cast<size_t>(shape_numel(ds.image_shape));
    for (size_t i = 0; i < indices.size(); ++i)
        std::copy_n(ds.images.data.begin() + static_cast<size_t>(indices[i]) * per, per,
                    out.data.begin() + i * per);
    return out;
}

std::vector<int> batch_labels(const Dataset& ds, const std::vector<int>& indices) {
    std::vector<int> out;
    out.reserve(indices.size());
    for (int i : indices) out.push_back(ds.labels[i]);
    return out;
}

}  // namespace splitguard
