#ifndef SPLITGUARD_ATTACK_HPP
#define SPLITGUARD_ATTACK_HPP

#include <vector>

#include "splitguard/data.hpp"
#include "splitguard/models.hpp"
#include "splitguard/privacy.hpp"

namespace splitguard {

struct AttackConfig {
    int epochs = 20;
    int batch_size = 8;
    double learning_rate = 0.01;
};

// Trains a mirror decoder against the frozen head snapshot by minimizing
// MSE(x, inversion(head(x))) over the attacker set. The head is read-only:
// it runs in inference mode and its weights are never touched. With zero
// epochs the freshly initialized decoder is returned as-is. epoch_losses,
// when non-null, receives the per-epoch mean training loss.
Segment train_inversion(Segment& head, const std::vector<int>& head_input_shape,
                        const Dataset& attacker_set, const AttackConfig& cfg, RngStream& rng,
                        std::vector<double>* epoch_losses = nullptr);

// Deterministic inference through the decoder.
Tensor reconstruct(Segment& inversion, const Tensor& smashed);

struct AttackEvaluation {
    double mean_mse = 0.0;
    double mean_ssim = 0.0;
    Tensor originals;        // first few pairs, for image export
    Tensor reconstructions;
};

// Replays the victim-side pipeline exactly as the server observes it (DP
// noise if enabled, microaggregation with k-1 batch-aligned peer draws if
// enabled), reconstructs, and scores against the clean originals.
// `peer_pool` supplies peer images ([M,C,H,W]) and may be empty when
// k-anonymity is off.
AttackEvaluation evaluate_attack(Segment& inversion, Segment& victim_head,
                                 const PrivacyConfig& privacy, const Dataset& test_set,
                                 const Tensor& peer_pool, RngStream& rng, int sample_pairs = 8);

}  // namespace splitguard

#endif
