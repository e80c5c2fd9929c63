#ifndef SPLITGUARD_DATA_HPP
#define SPLITGUARD_DATA_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "splitguard/tensor.hpp"

namespace splitguard {

struct Dataset {
    Tensor images;                 // [N,C,H,W], pixels in [0,1]; empty when count()==0
    std::vector<int> labels;
    int classes = 0;
    std::string split_tag;
    std::vector<int> image_shape;  // [C,H,W], valid even for an empty set

    int count() const { return static_cast<int>(labels.size()); }
    Tensor image(int index) const;  // one [C,H,W] copy
};

// IDX container (big-endian headers, magic 0x00000803 for images and
// 0x00000801 for labels); pixels scaled to [0,1] by /255.
Dataset load_idx(const std::string& image_path, const std::string& label_path);
void save_idx(const Dataset& ds, const std::string& image_path, const std::string& label_path);

// CIFAR-10 binary: 3073-byte records, label byte then 1024 R + 1024 G +
// 1024 B bytes of a 32x32 image. Files are concatenated in order.
Dataset load_cifar_binary(const std::vector<std::string>& paths);

// Class-conditional patterned images plus Gaussian pixel jitter; linearly
// separable by construction. Mean images of distinct classes differ by at
// least kBlobContrast somewhere.
inline constexpr double kBlobContrast = 0.4;
Dataset synthetic_blobs(int classes, int count, const std::vector<int>& shape, uint64_t seed);

// Random subset of size round(fraction*count), stratified by class where
// the per-class counts divide evenly.
Dataset subset_fraction(const Dataset& ds, double fraction, uint64_t seed);

struct PartitionPlan {
    std::vector<std::vector<int>> shards;  // per-client index lists
    uint64_t seed = 0;
};

// Random equal split (sizes differ by <= 1), disjoint and covering.
PartitionPlan partition_iid(const Dataset& ds, int n_clients, uint64_t seed);

Dataset take(const Dataset& ds, const std::vector<int>& indices, const std::string& tag = "");

// Stack images ds[idx[0..n)] into one [n,C,H,W] batch.
Tensor batch_images(const Dataset& ds, const std::vector<int>& indices);
std::vector<int> batch_labels(const Dataset& ds, const std::vector<int>& indices);

}  // namespace splitguard

#endif
