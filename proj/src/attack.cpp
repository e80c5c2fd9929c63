#include "splitguard/attack.hpp"

#include <algorithm>

#include "splitguard/losses.hpp"
#include "splitguard/metrics.hpp"
#include "splitguard/optim.hpp"

namespace splitguard {

Segment train_inversion(Segment& head, const std::vector<int>& head_input_shape,
                        const Dataset& attacker_set, const AttackConfig& cfg, RngStream& rng,
                        std::vector<double>* epoch_losses) {
    if (attacker_set.count() == 0) fail("train_inversion: empty attacker set");
    if (cfg.epochs < 0) fail("train_inversion: negative epoch count");

    Segment inversion = build_inversion(head, head_input_shape);
    init_segment(inversion, rng);
    if (epoch_losses) epoch_losses->clear();

    const int batch = std::min(cfg.batch_size, attacker_set.count());
    const int steps = attacker_set.count() / batch;
    Adam opt(AdamConfig{static_cast<float>(cfg.learning_rate)});
    auto params = inversion.param_refs();

    for (int e = 0; e < cfg.epochs; ++e) {
        std::vector<int> order(attacker_set.count());
        for (int i = 0; i < attacker_set.count(); ++i) order[i] = i;
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (int s = 0; s < steps; ++s) {
            const std::vector<int> idx(order.begin() + static_cast<size_t>(s) * batch,
                                       order.begin() + static_cast<size_t>(s + 1) * batch);
            const Tensor images = batch_images(attacker_set, idx);
            const Tensor smashed = head.forward(images, false, nullptr);  // frozen snapshot
            SegmentCache cache;
            const Tensor recon = inversion.forward(smashed, true, &cache);
            const LossResult loss = mse_loss(recon, images);
            WeightMap grads;
            inversion.backward(cache, loss.grad, &grads);
            opt.step(params, grads);
            epoch_loss += loss.loss;
        }
        if (epoch_losses) epoch_losses->push_back(epoch_loss / steps);
    }
    return inversion;
}

Tensor reconstruct(Segment& inversion, const Tensor& smashed) {
    return inversion.forward(smashed, false, nullptr);
}

AttackEvaluation evaluate_attack(Segment& inversion, Segment& victim_head,
                                 const PrivacyConfig& privacy, const Dataset& test_set,
                                 const Tensor& peer_pool, RngStream& rng, int sample_pairs) {
    if (test_set.count() == 0) fail("evaluate_attack: empty test set");
    const bool use_ka = privacy.ka_enabled && privacy.k >= 2;
    if (use_ka && peer_pool.shape.empty())
        fail("evaluate_attack: k-anonymity is enabled but no peer pool was given");

    const int pool_size = use_ka ? peer_pool.shape[0] : 0;
    const size_t image_numel = static_cast<size_t>(shape_numel(test_set.image_shape));

    AttackEvaluation ev;
    double mse_sum = 0.0, ssim_sum = 0.0;

    constexpr int kChunk = 64;
    std::vector<Tensor> kept_orig, kept_recon;
    for (int start = 0; start < test_set.count(); start += kChunk) {
        const int n = std::min(kChunk, test_set.count() - start);
        std::vector<int> idx(n);
        for (int i = 0; i < n; ++i) idx[i] = start + i;
        const Tensor clean = batch_images(test_set, idx);

        Tensor observed = privacy.dp_enabled
                              ? victim_head.forward(
                                    gaussian_mechanism(clean, privacy.sigma2, rng), false, nullptr)
                              : victim_head.forward(clean, false, nullptr);
        if (use_ka) {
            std::vector<Tensor> member_smashed;
            std::vector<int> member_ids;
            member_smashed.push_back(std::move(observed));
            member_ids.push_back(0);
            std::vector<int> shape = test_set.image_shape;
            shape.insert(shape.begin(), n);
            for (int peer = 1; peer < privacy.k; ++peer) {
                Tensor peers = Tensor::zeros(shape);
                for (int i = 0; i < n; ++i) {
                    const auto src = static_cast<size_t>(rng.bounded(pool_size));
                    std::copy_n(peer_pool.data.begin() + src * image_numel, image_numel,
                                peers.data.begin() + static_cast<size_t>(i) * image_numel);
                }
                if (privacy.dp_enabled)
                    peers = gaussian_mechanism(peers, privacy.sigma2, rng);
                member_smashed.push_back(victim_head.forward(peers, false, nullptr));
                member_ids.push_back(peer);
            }
            observed = microaggregate(member_smashed, member_ids);
        }

        const Tensor recon = reconstruct(inversion, observed);
        for (int i = 0; i < n; ++i) {
            Tensor orig_i = Tensor::zeros(test_set.image_shape);
            Tensor recon_i = Tensor::zeros(test_set.image_shape);
            std::copy_n(clean.data.begin() + static_cast<size_t>(i) * image_numel, image_numel,
                        orig_i.data.begin());
            std::copy_n(recon.data.begin() + static_cast<size_t>(i) * image_numel, image_numel,
                        recon_i.data.begin());
            mse_sum += mse_image(orig_i, recon_i);
            ssim_sum += ssim(orig_i, recon_i);
            if (static_cast<int>(kept_orig.size()) < sample_pairs) {
                kept_orig.push_back(std::move(orig_i));
                kept_recon.push_back(std::move(recon_i));
            }
        }
    }

    ev.mean_mse = mse_sum / test_set.count();
    ev.mean_ssim = ssim_sum / test_set.count();
    if (!kept_orig.empty()) {
        std::vector<int> shape = test_set.image_shape;
        shape.insert(shape.begin(), static_cast<int>(kept_orig.size()));
        ev.originals = Tensor::zeros(shape);
        ev.reconstructions = Tensor::zeros(shape);
        for (size_t i = 0; i < kept_orig.size(); ++i) {
            std::copy_n(kept_orig[i].data.begin(), image_numel,
                        ev.originals.data.begin() + i * image_numel);
            std::copy_n(kept_recon[i].data.begin(), image_numel,
                        ev.reconstructions.data.begin() + i * image_numel);
        }
    }
    return ev;
}

}  // namespace splitguard
