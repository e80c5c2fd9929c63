#ifndef SPLITGUARD_PRIVACY_HPP
#define SPLITGUARD_PRIVACY_HPP

#include <vector>

#include "splitguard/rng.hpp"
#include "splitguard/tensor.hpp"

namespace splitguard {

struct PrivacyConfig {
    double sigma2 = 0.0;       // noise variance, pixel units^2
    double epsilon = 0.0;      // used only when calibrating
    double delta = 0.0;
    double sensitivity = 1.0;  // unit per-pixel range default
    int k = 1;                 // anonymity group size
    bool dp_enabled = false;
    bool ka_enabled = false;
};

void validate_privacy(const PrivacyConfig& cfg);

// Minimal Gaussian noise scale (standard deviation) for (epsilon, delta)-DP
// at the given sensitivity: sensitivity * sqrt(2 ln(1.25/delta)) / epsilon.
double calibrate_sigma(double epsilon, double delta, double sensitivity);

// output = input + iid N(0, sigma2) per element; sigma2 == 0 returns the
// input untouched without consuming randomness.
Tensor gaussian_mechanism(const Tensor& batch, double sigma2, RngStream& rng);

struct GroupAssignment {
    std::vector<std::vector<int>> groups;  // disjoint, covering, sizes in {k, k+1}
    int round = 0;
};

// Uniformly random partition into floor(n/k) groups; the n mod k leftover
// clients are spread one-each over the first groups.
GroupAssignment group_clients(const std::vector<int>& client_ids, int k, RngStream& rng);

// Element-wise mean of the group's smashed tensors. `ids` label the
// members for error reporting and must align with `smashed`.
Tensor microaggregate(const std::vector<Tensor>& smashed, const std::vector<int>& ids);

}  // namespace splitguard

#endif
