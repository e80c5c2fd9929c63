#include "splitguard/privacy.hpp"

#include <cmath>
#include <numeric>

namespace splitguard {

void validate_privacy(const PrivacyConfig& cfg) {
    if (cfg.sigma2 < 0) fail(cat("privacy: sigma2 must be >= 0, got ", cfg.sigma2));
    if (cfg.k < 1) fail(cat("privacy: k must be >= 1, got ", cfg.k));
    if (cfg.dp_enabled && cfg.sigma2 <= 0)
        fail("privacy: dp_enabled requires sigma2 > 0");
    if (cfg.ka_enabled && cfg.k < 2)
        fail(cat("privacy: ka_enabled requires k >= 2, got k=", cfg.k));
}

double calibrate_sigma(double epsilon, double delta, double sensitivity) {
    if (epsilon <= 0) fail(cat("calibrate_sigma: epsilon must be positive, got ", epsilon));
    if (delta <= 0 || delta >= 1)
        fail(cat("calibrate_sigma: delta must lie in (0,1), got ", delta));
    if (sensitivity <= 0)
        fail(cat("calibrate_sigma: sensitivity must be positive, got ", sensitivity));
    return sensitivity * std::sqrt(2.0 * std::log(1.25 / delta)) / epsilon;
}

Tensor gaussian_mechanism(const Tensor& batch, double sigma2, RngStream& rng) {
    if (sigma2 < 0) fail(cat("gaussian_mechanism: negative variance ", sigma2));
    if (sigma2 == 0.0) return batch;
    Tensor out = batch;
    const double sigma = std::sqrt(sigma2);
    for (auto& v : out.data) v += static_cast<float>(sigma * rng.normal());
    return out;
}

GroupAssignment group_clients(const std::vector<int>& client_ids, int k, RngStream& rng) {
    const int n = static_cast<int>(client_ids.size());
    if (k < 1) fail(cat("group_clients: k must be >= 1, got ", k));
    if (n < k) fail(cat("group_clients: ", n, " clients cannot form a group of size ", k));
    std::vector<int> ids = client_ids;
    rng.shuffle(ids);
    const int m = n / k;
    const int leftover = n % k;
    GroupAssignment ga;
    ga.groups.resize(m);
    int pos = 0;
    for (int g = 0; g < m; ++g)
        for (int j = 0; j < k; ++j) ga.groups[g].push_back(ids[pos++]);
    for (int r = 0; r < leftover; ++r) ga.groups[r % m].push_back(ids[pos++]);
    return ga;
}

Tensor microaggregate(const std::vector<Tensor>& smashed, const std::vector<int>& ids) {
    if (smashed.empty()) fail("microaggregate: empty group");
    if (ids.size() != smashed.size())
        fail(cat("microaggregate: ", ids.size(), " ids for ", smashed.size(), " tensors"));
    const auto& shape = smashed.front().shape;
    for (size_t i = 1; i < smashed.size(); ++i)
        if (smashed[i].shape != shape)
            fail(cat("microaggregate: client ", ids[i], " smashed shape ",
                     shape_str(smashed[i].shape), " differs from client ", ids[0], " shape ",
                     shape_str(shape)));
    Tensor out = Tensor::zeros(shape);
    for (const auto& t : smashed)
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += t.data[i];
    const float inv = 1.0f / static_cast<float>(smashed.size());
    for (auto& v : out.data) v *= inv;
    return out;
}

}  // namespace splitguard
