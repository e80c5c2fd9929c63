#ifndef SPLITGUARD_HARNESS_HPP
#define SPLITGUARD_HARNESS_HPP

#include <string>
#include <vector>

#include "splitguard/attack.hpp"
#include "splitguard/federation.hpp"

namespace splitguard {

// Resolved config from a JSON file plus "key.path=value" overrides.
// Unknown keys, type mismatches and method/privacy inconsistencies are
// structured errors naming the key. Defaults: lr 0.001, k 3,
// sigma2 0.1 (kd_ufsl) / 0.2 (ufsl_dp), 10 clients, method kd_ufsl.
ExperimentConfig parse_config(const std::string& path,
                              const std::vector<std::string>& overrides = {});
ExperimentConfig parse_config_text(const std::string& json_text,
                                   const std::vector<std::string>& overrides = {});

// Canonical serialized form of the resolved config; equal configs hash
// equal. The hash is FNV-1a over the canonical text, as 16 hex digits.
std::string canonical_config_json(const ExperimentConfig& cfg);
std::string config_hash_hex(const ExperimentConfig& cfg);

struct ResolvedData {
    Dataset train;     // client shards come out of this
    Dataset attacker;  // adversary's similar-features dataset
    Dataset test;      // evaluation set, disjoint from the other two
};

// Materializes the dataset descriptor and carves the test pool into
// disjoint attacker and evaluation halves.
ResolvedData resolve_datasets(const ExperimentConfig& cfg);

// Writes metrics.csv (one row per round plus a final attack summary row),
// the final weights pair, sample image dumps, and manifest.json last.
// Returns the process exit status.
int run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

// One sub-run per axis value (axis in {sigma2, k, head_depth, n_clients}),
// each with a value-derived sub-seed, plus a combined summary.csv.
int sweep(const ExperimentConfig& base, const std::string& axis,
          const std::vector<std::string>& values, const std::string& out_dir);

// Attack-only flow against a saved weights file.
int run_attack_only(const ExperimentConfig& cfg, const std::string& weights_path,
                    const std::string& out_dir);

// Paired orig_%04d / recon_%04d NetPBM dumps: P5 for grayscale, P6 for RGB.
void dump_images(const Tensor& originals, const Tensor& reconstructions,
                 const std::string& directory);
void write_netpbm(const Tensor& image, const std::string& path);  // [C,H,W]
Tensor load_netpbm(const std::string& path);

// Flat little-endian float32 payload plus a JSON sidecar naming order,
// names and shapes.
void save_weights(const WeightMap& weights, const std::string& bin_path,
                  const std::string& json_path);
WeightMap load_weights(const std::string& bin_path, const std::string& json_path);

// CSV schema: round,method,accuracy,attack_mse,attack_ssim,wall_time_s,config_hash
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRecord& rec);

// Synthetic IDX fixture writer (train + test file pairs under `dir`).
struct IdxFixturePaths {
    std::string train_images, train_labels, test_images, test_labels;
};
IdxFixturePaths write_synthetic_idx(const std::string& dir, int classes, int train_count,
                                    int test_count, const std::vector<int>& shape, uint64_t seed);

// $SPLITGUARD_OUT or "./out".
std::string default_out_root();

}  // namespace splitguard

#endif
