#ifndef SPLITGUARD_FEDERATION_HPP
#define SPLITGUARD_FEDERATION_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "splitguard/data.hpp"
#include "splitguard/metrics.hpp"
#include "splitguard/models.hpp"
#include "splitguard/privacy.hpp"

namespace splitguard {

enum class Method { ufsl, ufsl_dp, ufsl_ka, kd_ufsl };

const char* method_name(Method m);
Method method_from_string(const std::string& s);

struct DataSpec {
    std::string source = "synthetic";  // synthetic | idx | cifar
    int classes = 10;
    std::vector<int> image_shape = {1, 28, 28};
    int train_count = 2000;  // synthetic only
    int test_count = 1000;
    double fraction = 1.0;
    uint64_t seed = 99;
    std::string train_images, train_labels, test_images, test_labels;  // idx
    std::vector<std::string> cifar_train, cifar_test;
};

struct AttackSpec {
    int epochs = 20;
    int batch_size = 8;
    double learning_rate = 0.01;
    int target_client = 0;
};

struct ExperimentConfig {
    Method method = Method::kd_ufsl;
    int rounds = 30;
    int local_epochs = 1;
    int batch_size = 32;
    double learning_rate = 1e-3;
    int clients = 10;
    uint64_t seed = 1234;
    bool record_timing = true;
    PrivacyConfig privacy;
    std::string arch = "convnet";  // convnet | resnet
    int blocks = 2;                // resnet only
    std::string cut = "RB2";
    DataSpec data;
    AttackSpec attack;
};

// Strict consistency check used on user-supplied configs: the method fixes
// the privacy toggles (ufsl => none, ufsl_dp => dp, ufsl_ka => ka,
// kd_ufsl => both).
void validate_config(const ExperimentConfig& cfg);

// Per-parameter weighted average with weights |D_c| / |D|.
WeightMap fedavg(const std::vector<WeightMap>& weight_sets,
                 const std::vector<int64_t>& sample_counts);

// Plain-FL local update: E epochs of mini-batch SGD on the shard.
WeightMap local_update(const Segment& init, const Dataset& shard, int epochs, double lr,
                       int batch_size, RngStream& rng);

struct ClientState {
    int id = 0;
    Dataset shard;
    Segment head, tail;
    RngStream rng{0};
};

// Holds body networks only; labels and raw images never enter.
struct ServerState {
    std::map<int, Segment> bodies;  // keyed by client id (UFSL) or group index (KD rounds)
};

// Records every tensor reaching the server side, for the locality and
// k-anonymity checks.
struct BoundaryAudit {
    enum class Kind { client_smashed, body_input };
    struct Crossing {
        int round = 0;
        int step = 0;
        Kind kind = Kind::client_smashed;
        int owner = 0;  // client id or body owner
        std::vector<int> shape;
        uint64_t digest = 0;
    };
    std::vector<Crossing> crossings;
};

struct FederationState {
    ExperimentConfig config;
    NetworkSpec network;
    SplitSpec cut_points;
    std::vector<ClientState> clients;
    ServerState server;
    WeightMap global_head, global_body, global_tail;
    RngStream orchestrator_rng{0};
    int round = 0;  // rounds completed
};

FederationState init_federation(const ExperimentConfig& cfg, const Dataset& train_set);

// One vanilla UFSL round (optionally with data-level DP): per-client body
// networks, head/body/tail Adam updates per batch, FedAvg of all three at
// the end.
MetricsRecord run_round_ufsl(FederationState& st, BoundaryAudit* audit = nullptr);

// One KD-UFSL round: regroup, per-batch Gaussian noise, per-group
// microaggregated smashed data through one shared body, summed body
// gradients, 1/|g|-scaled head gradients, then the three aggregations.
MetricsRecord run_round_kd_ufsl(FederationState& st, BoundaryAudit* audit = nullptr);

double evaluate_global_accuracy(const FederationState& st, const Dataset& test_set);

SplitModel assemble_global_model(const FederationState& st);

struct TrainResult {
    std::vector<MetricsRecord> trajectory;
    SplitModel final_model;
    PartitionPlan plan;
};

TrainResult train(const ExperimentConfig& cfg, const Dataset& train_set, const Dataset& test_set,
                  BoundaryAudit* audit = nullptr);

}  // namespace splitguard

#endif
