#include "splitguard/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "splitguard/losses.hpp"
#include "splitguard/optim.hpp"

namespace splitguard {

const char* method_name(Method m) {
    switch (m) {
        case Method::ufsl: return "ufsl";
        case Method::ufsl_dp: return "ufsl_dp";
        case Method::ufsl_ka: return "ufsl_ka";
        case Method::kd_ufsl: return "kd_ufsl";
    }
    return "?";
}

Method method_from_string(const std::string& s) {
    if (s == "ufsl") return Method::ufsl;
    if (s == "ufsl_dp") return Method::ufsl_dp;
    if (s == "ufsl_ka") return Method::ufsl_ka;
    if (s == "kd_ufsl") return Method::kd_ufsl;
    fail(cat("unknown method '", s, "' (expected ufsl, ufsl_dp, ufsl_ka or kd_ufsl)"));
}

void validate_config(const ExperimentConfig& cfg) {
    if (cfg.rounds < 0) fail("config: rounds must be >= 0");
    if (cfg.local_epochs < 1) fail("config: local_epochs must be >= 1");
    if (cfg.batch_size < 1) fail("config: batch_size must be >= 1");
    if (cfg.clients < 1) fail("config: clients must be >= 1");
    if (cfg.learning_rate < 0) fail("config: learning_rate must be >= 0");
    if (cfg.arch != "convnet" && cfg.arch != "resnet")
        fail(cat("config: unknown arch '", cfg.arch, "'"));
    const bool want_dp = cfg.method == Method::ufsl_dp || cfg.method == Method::kd_ufsl;
    const bool want_ka = cfg.method == Method::ufsl_ka || cfg.method == Method::kd_ufsl;
    if (cfg.privacy.dp_enabled != want_dp)
        fail(cat("config: method=", method_name(cfg.method), " requires privacy.dp_enabled=",
                 want_dp ? "true" : "false"));
    if (cfg.privacy.ka_enabled != want_ka)
        fail(cat("config: method=", method_name(cfg.method), " requires privacy.ka_enabled=",
                 want_ka ? "true" : "false"));
    validate_privacy(cfg.privacy);
    if (cfg.privacy.ka_enabled && cfg.privacy.k > cfg.clients)
        fail(cat("config: k=", cfg.privacy.k, " exceeds the ", cfg.clients, " clients"));
}

WeightMap fedavg(const std::vector<WeightMap>& weight_sets,
                 const std::vector<int64_t>& sample_counts) {
    if (weight_sets.empty()) fail("fedavg: no weight sets");
    if (weight_sets.size() != sample_counts.size())
        fail(cat("fedavg: ", weight_sets.size(), " weight sets vs ", sample_counts.size(),
                 " sample counts"));
    double total = 0.0;
    for (int64_t c : sample_counts) {
        if (c < 0) fail("fedavg: negative sample count");
        total += static_cast<double>(c);
    }
    if (total <= 0.0) fail("fedavg: total sample count is zero");

    const WeightMap& ref = weight_sets.front();
    WeightMap out;
    // double accumulators keep the mean stable across many participants
    std::map<std::string, std::vector<double>> acc;
    for (const auto& [name, t] : ref) acc[name].assign(t.data.size(), 0.0);

    for (size_t i = 0; i < weight_sets.size(); ++i) {
        const double w = static_cast<double>(sample_counts[i]) / total;
        if (weight_sets[i].size() != ref.size())
            fail(cat("fedavg: weight set ", i, " has ", weight_sets[i].size(),
                     " entries, expected ", ref.size()));
        for (const auto& [name, t] : weight_sets[i]) {
            auto it = acc.find(name);
            if (it == acc.end()) fail(cat("fedavg: unexpected parameter '", name, "' in set ", i));
            if (t.shape != ref.at(name).shape)
                fail(cat("fedavg: shape mismatch for '", name, "': ", shape_str(t.shape), " vs ",
                         shape_str(ref.at(name).shape)));
            auto& a = it->second;
            for (size_t j = 0; j < t.data.size(); ++j) a[j] += w * static_cast<double>(t.data[j]);
        }
    }
    for (const auto& [name, t] : ref) {
        Tensor r = Tensor::zeros(t.shape);
        const auto& a = acc.at(name);
        for (size_t j = 0; j < a.size(); ++j) r.data[j] = static_cast<float>(a[j]);
        out[name] = std::move(r);
    }
    return out;
}

// deterministic epoch schedule shared by every training path
static std::vector<int> shuffled_indices(int n, RngStream& rng) {
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    rng.shuffle(idx);
    return idx;
}

WeightMap local_update(const Segment& init, const Dataset& shard, int epochs, double lr,
                       int batch_size, RngStream& rng) {
    if (shard.count() == 0) fail("local_update: empty shard");
    if (epochs < 1) fail("local_update: epochs must be >= 1");
    Segment model = init;
    const int steps = shard.count() / batch_size;
    for (int e = 0; e < epochs; ++e) {
        const auto order = shuffled_indices(shard.count(), rng);
        for (int s = 0; s < steps; ++s) {
            const std::vector<int> batch(order.begin() + static_cast<size_t>(s) * batch_size,
                                         order.begin() + static_cast<size_t>(s + 1) * batch_size);
            SegmentCache cache;
            const Tensor logits = model.forward(batch_images(shard, batch), true, &cache);
            const LossResult ce = cross_entropy(logits, batch_labels(shard, batch));
            WeightMap grads;
            model.backward(cache, ce.grad, &grads);
            for (auto& [name, param] : model.param_refs()) {
                const auto& g = grads.at(name);
                for (size_t j = 0; j < param->data.size(); ++j)
                    param->data[j] -= static_cast<float>(lr) * g.data[j];
            }
        }
    }
    return model.state_dict();
}

// ---------------------------------------------------------------------------

static Dataset resolve_shard(const Dataset& train_set, const std::vector<int>& indices, int id) {
    Dataset d = take(train_set, indices, cat("client", id));
    if (d.count() == 0) fail(cat("client ", id, ": empty shard"));
    return d;
}

FederationState init_federation(const ExperimentConfig& cfg, const Dataset& train_set) {
    FederationState st;
    st.config = cfg;
    st.network = cfg.arch == "resnet"
                     ? build_small_resnet(cfg.data.image_shape, cfg.data.classes, cfg.blocks)
                     : build_convnet(cfg.data.image_shape, cfg.data.classes);
    st.cut_points = split_spec_at(st.network, cfg.cut);

    RngStream init_rng(derive_seed(cfg.seed, "init"));
    Segment whole = full_segment(st.network);
    init_segment(whole, init_rng);
    st.network.layers = whole.layers;

    SplitModel global = split(st.network, st.cut_points);
    st.global_head = global.head.state_dict();
    st.global_body = global.body.state_dict();
    st.global_tail = global.tail.state_dict();

    const PartitionPlan plan = partition_iid(train_set, cfg.clients, derive_seed(cfg.seed, "partition"));
    for (int c = 0; c < cfg.clients; ++c) {
        ClientState client;
        client.id = c;
        client.shard = resolve_shard(train_set, plan.shards[c], c);
        client.head = global.head;
        client.tail = global.tail;
        client.rng = RngStream(derive_seed(cfg.seed, "client", static_cast<uint64_t>(c)));
        st.clients.push_back(std::move(client));
        st.server.bodies.emplace(c, global.body);
    }
    st.orchestrator_rng = RngStream(derive_seed(cfg.seed, "orchestrator"));
    return st;
}

static int lockstep_steps(const FederationState& st) {
    int min_count = st.clients.front().shard.count();
    for (const auto& c : st.clients) min_count = std::min(min_count, c.shard.count());
    const int steps = min_count / st.config.batch_size;
    if (steps < 1)
        fail(cat("round: batch size ", st.config.batch_size, " exceeds the smallest shard (",
                 min_count, " samples)"));
    return steps;
}

static void audit_crossing(BoundaryAudit* audit, int round, int step, BoundaryAudit::Kind kind,
                           int owner, const Tensor& t) {
    if (!audit) return;
    audit->crossings.push_back({round, step, kind, owner, t.shape, tensor_digest(t)});
}

MetricsRecord run_round_ufsl(FederationState& st, BoundaryAudit* audit) {
    const auto& cfg = st.config;
    const int steps = lockstep_steps(st);
    const AdamConfig adam_cfg{static_cast<float>(cfg.learning_rate)};

    std::vector<WeightMap> head_sets, body_sets, tail_sets;
    std::vector<int64_t> counts;

    for (auto& client : st.clients) {
        client.head.load_state_dict(st.global_head);
        client.tail.load_state_dict(st.global_tail);
        Segment& body = st.server.bodies.at(client.id);
        body.load_state_dict(st.global_body);

        Adam head_opt(adam_cfg), body_opt(adam_cfg), tail_opt(adam_cfg);
        auto head_params = client.head.param_refs();
        auto body_params = body.param_refs();
        auto tail_params = client.tail.param_refs();

        int global_step = 0;
        for (int e = 0; e < cfg.local_epochs; ++e) {
            const auto order = shuffled_indices(client.shard.count(), client.rng);
            for (int s = 0; s < steps; ++s, ++global_step) {
                const std::vector<int> batch(
                    order.begin() + static_cast<size_t>(s) * cfg.batch_size,
                    order.begin() + static_cast<size_t>(s + 1) * cfg.batch_size);
                Tensor images = batch_images(client.shard, batch);
                const auto labels = batch_labels(client.shard, batch);
                if (cfg.privacy.dp_enabled)
                    images = gaussian_mechanism(images, cfg.privacy.sigma2, client.rng);

                SegmentCache head_cache, body_cache, tail_cache;
                const Tensor smashed = client.head.forward(images, true, &head_cache);
                audit_crossing(audit, st.round, global_step, BoundaryAudit::Kind::client_smashed,
                               client.id, smashed);
                audit_crossing(audit, st.round, global_step, BoundaryAudit::Kind::body_input,
                               client.id, smashed);
                const Tensor body_out = body.forward(smashed, true, &body_cache);
                const Tensor logits = client.tail.forward(body_out, true, &tail_cache);
                const LossResult ce = cross_entropy(logits, labels);

                WeightMap tail_grads, body_grads, head_grads;
                const Tensor g_body_out = client.tail.backward(tail_cache, ce.grad, &tail_grads);
                const Tensor g_smashed = body.backward(body_cache, g_body_out, &body_grads);
                client.head.backward(head_cache, g_smashed, &head_grads);

                tail_opt.step(tail_params, tail_grads);
                body_opt.step(body_params, body_grads);
                head_opt.step(head_params, head_grads);
            }
        }
        head_sets.push_back(client.head.state_dict());
        body_sets.push_back(body.state_dict());
        tail_sets.push_back(client.tail.state_dict());
        counts.push_back(client.shard.count());
    }

    st.global_head = fedavg(head_sets, counts);
    st.global_body = fedavg(body_sets, counts);
    st.global_tail = fedavg(tail_sets, counts);
    st.round += 1;

    MetricsRecord rec;
    rec.round = st.round;
    rec.method = method_name(cfg.method);
    return rec;
}

MetricsRecord run_round_kd_ufsl(FederationState& st, BoundaryAudit* audit) {
    const auto& cfg = st.config;
    const int steps = lockstep_steps(st);
    const AdamConfig adam_cfg{static_cast<float>(cfg.learning_rate)};

    std::vector<int> ids;
    for (const auto& c : st.clients) ids.push_back(c.id);
    GroupAssignment groups = group_clients(ids, cfg.privacy.k, st.orchestrator_rng);
    groups.round = st.round;
    for (auto& g : groups.groups) std::sort(g.begin(), g.end());

    for (auto& client : st.clients) {
        client.head.load_state_dict(st.global_head);
        client.tail.load_state_dict(st.global_tail);
    }
    // one shared body per group, initialized from the aggregated body
    st.server.bodies.clear();
    const int n_groups = static_cast<int>(groups.groups.size());
    SplitModel ref = split(st.network, st.cut_points);
    for (int g = 0; g < n_groups; ++g) {
        Segment body = ref.body;
        body.load_state_dict(st.global_body);
        st.server.bodies.emplace(g, std::move(body));
    }

    std::vector<Adam> head_opts(st.clients.size(), Adam(adam_cfg));
    std::vector<Adam> tail_opts(st.clients.size(), Adam(adam_cfg));
    std::vector<Adam> body_opts(n_groups, Adam(adam_cfg));

    std::vector<std::vector<int>> epoch_order(st.clients.size());
    int global_step = 0;
    for (int e = 0; e < cfg.local_epochs; ++e) {
        for (auto& client : st.clients)
            epoch_order[client.id] = shuffled_indices(client.shard.count(), client.rng);
        for (int s = 0; s < steps; ++s, ++global_step) {
            for (int g = 0; g < n_groups; ++g) {
                const auto& members = groups.groups[g];
                const auto group_size = static_cast<int>(members.size());
                Segment& body = st.server.bodies.at(g);

                std::vector<Tensor> smashed(group_size);
                std::vector<SegmentCache> head_caches(group_size);
                std::vector<std::vector<int>> labels(group_size);
                for (int mi = 0; mi < group_size; ++mi) {
                    ClientState& client = st.clients[members[mi]];
                    const auto& order = epoch_order[client.id];
                    const std::vector<int> batch(
                        order.begin() + static_cast<size_t>(s) * cfg.batch_size,
                        order.begin() + static_cast<size_t>(s + 1) * cfg.batch_size);
                    Tensor images = batch_images(client.shard, batch);
                    labels[mi] = batch_labels(client.shard, batch);
                    if (cfg.privacy.dp_enabled)
                        images = gaussian_mechanism(images, cfg.privacy.sigma2, client.rng);
                    smashed[mi] = client.head.forward(images, true, &head_caches[mi]);
                    audit_crossing(audit, st.round, global_step,
                                   BoundaryAudit::Kind::client_smashed, client.id, smashed[mi]);
                }

                const Tensor aggregated = microaggregate(smashed, members);
                audit_crossing(audit, st.round, global_step, BoundaryAudit::Kind::body_input, g,
                               aggregated);

                SegmentCache body_cache;
                const Tensor body_out = body.forward(aggregated, true, &body_cache);

                // every member computes its own loss against the shared
                // body output; the body sees the summed gradient
                Tensor g_body_out = Tensor::zeros(body_out.shape);
                std::vector<WeightMap> tail_grads(group_size);
                for (int mi = 0; mi < group_size; ++mi) {
                    ClientState& client = st.clients[members[mi]];
                    SegmentCache tail_cache;
                    const Tensor logits = client.tail.forward(body_out, true, &tail_cache);
                    const LossResult ce = cross_entropy(logits, labels[mi]);
                    const Tensor g = client.tail.backward(tail_cache, ce.grad, &tail_grads[mi]);
                    add_inplace(g_body_out, g);
                }

                WeightMap body_grads;
                Tensor g_aggregated = body.backward(body_cache, g_body_out, &body_grads);

                // microaggregation Jacobian: each member's head receives 1/|g|
                scale_inplace(g_aggregated, 1.0f / static_cast<float>(group_size));
                for (int mi = 0; mi < group_size; ++mi) {
                    ClientState& client = st.clients[members[mi]];
                    WeightMap head_grads;
                    client.head.backward(head_caches[mi], g_aggregated, &head_grads);
                    auto head_params = client.head.param_refs();
                    head_opts[client.id].step(head_params, head_grads);
                    auto tail_params = client.tail.param_refs();
                    tail_opts[client.id].step(tail_params, tail_grads[mi]);
                }
                auto body_params = body.param_refs();
                body_opts[g].step(body_params, body_grads);
            }
        }
    }

    std::vector<WeightMap> head_sets, tail_sets, body_sets;
    std::vector<int64_t> counts, group_counts;
    for (const auto& client : st.clients) {
        head_sets.push_back(client.head.state_dict());
        tail_sets.push_back(client.tail.state_dict());
        counts.push_back(client.shard.count());
    }
    for (int g = 0; g < n_groups; ++g) {
        body_sets.push_back(st.server.bodies.at(g).state_dict());
        group_counts.push_back(1);  // unweighted mean over groups
    }
    st.global_head = fedavg(head_sets, counts);
    st.global_body = fedavg(body_sets, group_counts);
    st.global_tail = fedavg(tail_sets, counts);
    st.round += 1;

    MetricsRecord rec;
    rec.round = st.round;
    rec.method = method_name(cfg.method);
    return rec;
}

SplitModel assemble_global_model(const FederationState& st) {
    SplitModel m = split(st.network, st.cut_points);
    m.head.load_state_dict(st.global_head);
    m.body.load_state_dict(st.global_body);
    m.tail.load_state_dict(st.global_tail);
    return m;
}

double evaluate_global_accuracy(const FederationState& st, const Dataset& test_set) {
    if (test_set.count() == 0) fail("evaluate_global_accuracy: empty test set");
    SplitModel m = assemble_global_model(st);
    Segment net{concat_layers(m)};
    constexpr int kChunk = 256;
    int hits = 0;
    for (int start = 0; start < test_set.count(); start += kChunk) {
        const int n = std::min(kChunk, test_set.count() - start);
        std::vector<int> idx(n);
        for (int i = 0; i < n; ++i) idx[i] = start + i;
        const Tensor logits = net.forward(batch_images(test_set, idx), false, nullptr);
        hits += static_cast<int>(
            std::lround(accuracy(logits, batch_labels(test_set, idx)) * n));
    }
    return static_cast<double>(hits) / test_set.count();
}

TrainResult train(const ExperimentConfig& cfg, const Dataset& train_set, const Dataset& test_set,
                  BoundaryAudit* audit) {
    FederationState st = init_federation(cfg, train_set);
    TrainResult result;
    result.plan = partition_iid(train_set, cfg.clients, derive_seed(cfg.seed, "partition"));
    const bool grouped = cfg.method == Method::ufsl_ka || cfg.method == Method::kd_ufsl;
    for (int t = 0; t < cfg.rounds; ++t) {
        const auto t0 = std::chrono::steady_clock::now();
        MetricsRecord rec;
        try {
            rec = grouped ? run_round_kd_ufsl(st, audit) : run_round_ufsl(st, audit);
        } catch (const std::exception& e) {
            fail(cat("round ", t + 1, ": ", e.what()));
        }
        rec.accuracy = evaluate_global_accuracy(st, test_set);
        if (cfg.record_timing) {
            const auto t1 = std::chrono::steady_clock::now();
            rec.wall_time_s = std::chrono::duration<double>(t1 - t0).count();
        }
        result.trajectory.push_back(std::move(rec));
    }
    result.final_model = assemble_global_model(st);
    return result;
}

}  // namespace splitguard
