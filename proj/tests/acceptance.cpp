// Acceptance suite: runs every criterion at its pinned tolerance and prints
// one PASS/FAIL line per criterion. Exit status is the number of failures.
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "oracle_shadow.hpp"
#include "splitguard/harness.hpp"
#include "splitguard/losses.hpp"
#include "splitguard/optim.hpp"

using namespace splitguard;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

void report(int num, const std::string& name, bool pass, double seconds,
            const std::string& detail) {
    std::printf("%s criterion %2d [%6.1fs] %s -- %s\n", pass ? "PASS" : "FAIL", num, seconds,
                name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

Tensor random_tensor(std::vector<int> shape, RngStream& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = static_cast<float>(lo + (hi - lo) * rng.uniform());
    return t;
}

void randomize_params(Layer& l, RngStream& rng) {
    for (auto& [name, t] : l.params)
        for (auto& v : t.data) v = static_cast<float>(rng.uniform() * 2.0 - 1.0);
}

bool close_rel(double a, double n, double tol) {
    return std::abs(a - n) <= tol * std::max({1.0, std::abs(a), std::abs(n)});
}

// finite differences on the double shadow vs the float analytic backward;
// returns the worst relative mismatch over inputs and parameters
double fd_worst_error(Segment seg, const Tensor& input, RngStream& rng, double h = 1e-3) {
    SegmentCache cache;
    Segment run = seg;
    const Tensor out = run.forward(input, true, &cache);
    std::vector<double> proj(out.data.size());
    for (auto& p : proj) p = rng.uniform() * 2.0 - 1.0;
    Tensor gy = Tensor::zeros(out.shape);
    for (size_t i = 0; i < proj.size(); ++i) gy.data[i] = static_cast<float>(proj[i]);
    WeightMap grads;
    const Tensor gx = run.backward(cache, gy, &grads);

    shadow::Model model = shadow::Model::from_segment(seg, true);
    shadow::DT x = shadow::dt_from(input);
    double worst = 0.0;
    auto probe = [&](double analytic, double* slot) {
        const double keep = *slot;
        *slot = keep + h;
        const double up = shadow::probe_loss(model, x, proj);
        *slot = keep - h;
        const double dn = shadow::probe_loss(model, x, proj);
        *slot = keep;
        const double fd = (up - dn) / (2 * h);
        const double err = std::abs(analytic - fd) / std::max({1.0, std::abs(analytic), std::abs(fd)});
        worst = std::max(worst, err);
    };
    for (size_t i = 0; i < x.data.size(); ++i) probe(gx.data[i], &x.data[i]);
    for (size_t li = 0; li < seg.layers.size(); ++li)
        for (auto& [name, pvec] : model.params[li]) {
            if (!seg.layers[li].params.count(name)) continue;
            const auto& g = grads.at(cat("L", li, ".", name));
            for (size_t i = 0; i < pvec.size(); ++i) probe(g.data[i], &pvec[i]);
        }
    return worst;
}

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

// ---------------------------------------------------------------------------
// shared desk-scale setup for criteria 7-10: 2000-image 10-class 28x28 set
// in IDX format, ConvNet-4, 5 clients, 30 rounds, batch 32, seed 2026

constexpr uint64_t kDeskSeed = 2026;

struct DeskData {
    ResolvedData data;
    std::string fixture_dir;
};

const DeskData& desk_data() {
    static DeskData dd = [] {
        DeskData out;
        out.fixture_dir =
            (fs::temp_directory_path() / ("sg_acceptance_" + std::to_string(::getpid()))).string();
        const IdxFixturePaths p =
            write_synthetic_idx(out.fixture_dir, 10, 2000, 1000, {1, 28, 28}, 31337);
        ExperimentConfig cfg;
        cfg.data.source = "idx";
        cfg.data.train_images = p.train_images;
        cfg.data.train_labels = p.train_labels;
        cfg.data.test_images = p.test_images;
        cfg.data.test_labels = p.test_labels;
        cfg.data.classes = 10;
        cfg.data.image_shape = {1, 28, 28};
        out.data = resolve_datasets(cfg);
        return out;
    }();
    return dd;
}

ExperimentConfig desk_config(Method method, double sigma2, int k, const std::string& cut) {
    ExperimentConfig cfg;
    cfg.method = method;
    cfg.rounds = 30;
    cfg.clients = 5;
    cfg.batch_size = 32;
    cfg.learning_rate = 0.001;
    cfg.seed = kDeskSeed;
    cfg.record_timing = false;
    cfg.cut = cut;
    cfg.privacy.sigma2 = sigma2;
    cfg.privacy.k = k;
    cfg.privacy.dp_enabled = method == Method::ufsl_dp || method == Method::kd_ufsl;
    cfg.privacy.ka_enabled = method == Method::ufsl_ka || method == Method::kd_ufsl;
    cfg.data.classes = 10;
    cfg.data.image_shape = {1, 28, 28};
    return cfg;
}

struct DeskRun {
    double final_accuracy = 0.0;
    double attack_mse = 0.0;
    double attack_ssim = 0.0;
};

DeskRun desk_run(Method method, double sigma2, int k, const std::string& cut) {
    const ExperimentConfig cfg = desk_config(method, sigma2, k, cut);
    const ResolvedData& data = desk_data().data;
    TrainResult tr = train(cfg, data.train, data.test);

    AttackConfig acfg{cfg.attack.epochs, cfg.attack.batch_size, cfg.attack.learning_rate};
    RngStream attack_rng(derive_seed(cfg.seed, "attack"));
    Segment inversion = train_inversion(tr.final_model.head, cfg.data.image_shape, data.attacker,
                                        acfg, attack_rng);
    Tensor peer_pool;
    if (cfg.privacy.ka_enabled) {
        std::vector<int> pool_idx;
        for (size_t c = 1; c < tr.plan.shards.size(); ++c)  // victim is client 0
            pool_idx.insert(pool_idx.end(), tr.plan.shards[c].begin(), tr.plan.shards[c].end());
        peer_pool = batch_images(data.train, pool_idx);
    }
    RngStream eval_rng(derive_seed(cfg.seed, "attack_eval"));
    const AttackEvaluation ev = evaluate_attack(inversion, tr.final_model.head, cfg.privacy,
                                                data.test, peer_pool, eval_rng);
    DeskRun out;
    out.final_accuracy = tr.trajectory.back().accuracy;
    out.attack_mse = ev.mean_mse;
    out.attack_ssim = ev.mean_ssim;
    return out;
}

const DeskRun& run_ufsl() {
    static DeskRun r = desk_run(Method::ufsl, 0.0, 1, "RB1");
    return r;
}
const DeskRun& run_kd_rb1() {
    static DeskRun r = desk_run(Method::kd_ufsl, 0.1, 2, "RB1");
    return r;
}

}  // namespace

// ---------------------------------------------------------------------------

static void criterion_1_gradient_oracle() {
    Timer timer;
    RngStream rng(101);
    double worst = 0.0;
    int instances = 0;
    auto run = [&](Layer l, const Tensor& x) {
        Segment seg;
        seg.layers.push_back(std::move(l));
        worst = std::max(worst, fd_worst_error(std::move(seg), x, rng));
        ++instances;
    };
    for (int t = 0; t < 20; ++t) {
        {
            const int in = 3 + static_cast<int>(rng.bounded(4));
            Layer l = make_dense(in, 2 + static_cast<int>(rng.bounded(4)));
            randomize_params(l, rng);
            run(std::move(l), random_tensor({2 + static_cast<int>(rng.bounded(3)), in}, rng));
        }
        {
            const int cin = 1 + static_cast<int>(rng.bounded(3));
            const int k = 1 + static_cast<int>(rng.bounded(3));
            Layer l = make_conv2d(cin, 1 + static_cast<int>(rng.bounded(3)), k,
                                  1 + static_cast<int>(rng.bounded(2)),
                                  static_cast<int>(rng.bounded(2)));
            randomize_params(l, rng);
            const int h = k + 3 + static_cast<int>(rng.bounded(3));
            run(std::move(l), random_tensor({1 + static_cast<int>(rng.bounded(2)), cin, h, h}, rng));
        }
        {
            const int cin = 1 + static_cast<int>(rng.bounded(3));
            const int k = 2 + static_cast<int>(rng.bounded(2));
            const int s = 1 + static_cast<int>(rng.bounded(2));
            const int p = static_cast<int>(rng.bounded(2));
            const int h = 3 + static_cast<int>(rng.bounded(3));
            if ((h - 1) * s - 2 * p + k > 0) {
                Layer l = make_transposed_conv2d(cin, 1 + static_cast<int>(rng.bounded(3)), k, s, p);
                randomize_params(l, rng);
                run(std::move(l), random_tensor({1 + static_cast<int>(rng.bounded(2)), cin, h, h},
                                                rng));
            }
        }
        {
            Tensor x = random_tensor({2, 5}, rng);
            for (auto& v : x.data) v = (v < 0 ? -1.0f : 1.0f) * (0.01f + std::abs(v));
            run(make_relu(), x);
        }
        run(make_sigmoid(), random_tensor({2, 6}, rng, -3.0, 3.0));
        run(make_max_pool2d(2, 1 + static_cast<int>(rng.bounded(2))),
            distinct_grid_tensor({1, 1 + static_cast<int>(rng.bounded(2)),
                                  4 + static_cast<int>(rng.bounded(3)),
                                  4 + static_cast<int>(rng.bounded(3))},
                                 rng));
        run(make_avg_pool2d(2, 1 + static_cast<int>(rng.bounded(2))),
            random_tensor({2, 1 + static_cast<int>(rng.bounded(2)),
                           4 + static_cast<int>(rng.bounded(3)),
                           4 + static_cast<int>(rng.bounded(3))},
                          rng));
        run(make_flatten(), random_tensor({2, 2, 3, 3}, rng));
        {
            const int c = 2 + static_cast<int>(rng.bounded(3));
            Layer l = make_batch_norm(c);
            randomize_params(l, rng);
            run(std::move(l), random_tensor({4 + static_cast<int>(rng.bounded(3)), c}, rng));
        }
    }
    const bool pass = worst <= 1e-3;
    report(1, "gradient oracle (finite differences, every layer kind)", pass, timer.seconds(),
           cat(instances, " instances, worst relative error ", worst));
}

static void criterion_2_split_equivalence() {
    Timer timer;
    RngStream rng(102);
    double worst = 0.0;
    for (const bool resnet : {false, true}) {
        NetworkSpec net = resnet ? build_small_resnet({1, 16, 16}, 10, 3)
                                 : build_convnet({1, 28, 28}, 10);
        Segment whole = full_segment(net);
        init_segment(whole, rng);
        net.layers = whole.layers;
        const Tensor x = random_tensor({3, net.input_shape[0], net.input_shape[1],
                                        net.input_shape[2]},
                                       rng, 0.0, 1.0);
        for (const auto& [cut_name, cut_idx] : net.named_cuts)
            for (const bool training : {true, false}) {
                Segment full = full_segment(net);
                const Tensor want = full.forward(x, training, nullptr);
                SplitModel m = split(net, split_spec_at(net, cut_name));
                const Tensor got = m.tail.forward(
                    m.body.forward(m.head.forward(x, training, nullptr), training, nullptr),
                    training, nullptr);
                for (size_t i = 0; i < want.data.size(); ++i)
                    worst = std::max(worst,
                                     std::abs(static_cast<double>(want.data[i]) - got.data[i]));
            }
    }
    report(2, "split equivalence at every supported cut", worst < 1e-6, timer.seconds(),
           cat("max |full - split| = ", worst));
}

static void criterion_3_degenerate_privacy() {
    Timer timer;
    ExperimentConfig ufsl_cfg;
    ufsl_cfg.method = Method::ufsl;
    ufsl_cfg.rounds = 0;
    ufsl_cfg.clients = 3;
    ufsl_cfg.batch_size = 16;
    ufsl_cfg.seed = 99;
    ufsl_cfg.data.classes = 4;
    ufsl_cfg.data.image_shape = {1, 16, 16};
    ExperimentConfig kd_cfg = ufsl_cfg;
    kd_cfg.method = Method::kd_ufsl;
    kd_cfg.privacy.k = 1;
    kd_cfg.privacy.sigma2 = 0.0;

    const Dataset train_set = synthetic_blobs(4, 96, {1, 16, 16}, 404);
    FederationState a = init_federation(ufsl_cfg, train_set);
    FederationState b = init_federation(kd_cfg, train_set);
    double worst = 0.0;
    auto compare = [&worst](const WeightMap& lhs, const WeightMap& rhs) {
        for (const auto& [name, t] : lhs) {
            const auto& o = rhs.at(name);
            for (size_t i = 0; i < t.data.size(); ++i)
                worst = std::max(worst, std::abs(static_cast<double>(t.data[i]) - o.data[i]));
        }
    };
    for (int round = 0; round < 3; ++round) {
        run_round_ufsl(a);
        run_round_kd_ufsl(b);
        compare(a.global_head, b.global_head);
        compare(a.global_body, b.global_body);
        compare(a.global_tail, b.global_tail);
    }
    report(3, "degenerate privacy: kd_ufsl(k=1, sigma2=0) == ufsl", worst < 1e-5, timer.seconds(),
           cat("max weight difference over 3 rounds = ", worst));
}

static void criterion_4_mechanism_statistics() {
    Timer timer;
    RngStream rng(2024);
    const Tensor zeros = Tensor::zeros({1000000});
    const Tensor noisy = gaussian_mechanism(zeros, 0.04, rng);
    double mean = 0.0;
    for (float v : noisy.data) mean += v;
    mean /= static_cast<double>(noisy.numel());
    double var = 0.0;
    for (float v : noisy.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(noisy.numel());
    const double sd = std::sqrt(var);

    const double sigma = calibrate_sigma(1.0, 1e-5, 1.0);
    const double want = std::sqrt(2.0 * std::log(1.25e5));

    const bool pass = std::abs(mean) <= 0.001 && sd >= 0.2 * 0.98 && sd <= 0.2 * 1.02 &&
                      std::abs(sigma - want) <= 1e-3;
    report(4, "gaussian mechanism statistics and sigma calibration", pass, timer.seconds(),
           cat("noise mean ", mean, ", std ", sd, ", calibrate(1,1e-5,1) = ", sigma,
               " (formula ", want, ")"));
}

static void criterion_5_grouping_laws() {
    Timer timer;
    RngStream meta(55);
    int checked = 0;
    bool ok = true;
    while (checked < 1000) {
        const int n = 2 + static_cast<int>(meta.bounded(40));
        const int k = 1 + static_cast<int>(meta.bounded(static_cast<uint64_t>(n)));
        if (n % k > n / k) continue;  // sizes {k,k+1} are infeasible there
        std::vector<int> ids(n);
        for (int i = 0; i < n; ++i) ids[i] = i;
        RngStream rng(meta.next_u64());
        const GroupAssignment ga = group_clients(ids, k, rng);
        std::set<int> seen;
        for (const auto& g : ga.groups) {
            if (g.size() < static_cast<size_t>(k) || g.size() > static_cast<size_t>(k + 1))
                ok = false;
            for (int id : g)
                if (!seen.insert(id).second) ok = false;
        }
        if (seen.size() != static_cast<size_t>(n)) ok = false;
        ++checked;
    }
    // group means vs 64-bit brute force
    double worst = 0.0;
    RngStream rng(56);
    for (int t = 0; t < 200; ++t) {
        const int members = 2 + static_cast<int>(rng.bounded(6));
        std::vector<Tensor> group;
        std::vector<int> ids;
        for (int i = 0; i < members; ++i) {
            group.push_back(random_tensor({3, 5}, rng));
            ids.push_back(i);
        }
        const Tensor mean = microaggregate(group, ids);
        for (int i = 0; i < 15; ++i) {
            double acc = 0.0;
            for (const auto& g : group) acc += static_cast<double>(g.data[i]);
            worst = std::max(worst, std::abs(acc / members - mean.data[i]));
        }
    }
    report(5, "grouping partition laws and microaggregation means", ok && worst < 1e-6,
           timer.seconds(),
           cat(checked, " feasible (n,k,seed) triples, worst mean error ", worst));
}

static void criterion_6_metric_oracles() {
    Timer timer;
    RngStream rng(57);
    bool ok = true;
    double worst_match = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const Tensor p = random_tensor({1, 6, 6}, rng, 0.0, 1.0);
        const Tensor q = random_tensor({1, 6, 6}, rng, 0.0, 1.0);
        if (ssim(p, p) != 1.0) ok = false;
        const double pq = ssim(p, q);
        if (pq != ssim(q, p)) ok = false;
        if (std::abs(pq) > 1.0 + 1e-12) ok = false;

        // 64-bit direct evaluations
        double mp = 0, mq = 0;
        for (int i = 0; i < 36; ++i) {
            mp += p.data[i];
            mq += q.data[i];
        }
        mp /= 36;
        mq /= 36;
        double vp = 0, vq = 0, cov = 0, mse_direct = 0;
        for (int i = 0; i < 36; ++i) {
            vp += (p.data[i] - mp) * (p.data[i] - mp);
            vq += (q.data[i] - mq) * (q.data[i] - mq);
            cov += (p.data[i] - mp) * (q.data[i] - mq);
            const double d = static_cast<double>(p.data[i]) - q.data[i];
            mse_direct += d * d;
        }
        vp /= 36;
        vq /= 36;
        cov /= 36;
        mse_direct /= 36;
        const double c1 = 1e-4, c2 = 9e-4;
        const double ssim_direct =
            (2 * mp * mq + c1) * (2 * cov + c2) / ((mp * mp + mq * mq + c1) * (vp + vq + c2));
        worst_match = std::max(worst_match, std::abs(pq - ssim_direct));
        worst_match = std::max(worst_match, std::abs(mse_image(p, q) - mse_direct));
    }
    report(6, "metric oracles: ssim identity/symmetry/bounds, 64-bit agreement",
           ok && worst_match < 1e-6, timer.seconds(),
           cat("1000 pairs, worst direct-evaluation mismatch ", worst_match));
}

static void criterion_7_attack_potency() {
    Timer timer;
    const DeskRun& r = run_ufsl();
    report(7, "attack potency: 20-epoch inversion vs UFSL, shallow cut", r.attack_ssim >= 0.5,
           timer.seconds(),
           cat("reconstruction SSIM ", r.attack_ssim, " (needs >= 0.5), MSE ", r.attack_mse));
}

static void criterion_8_defense_direction() {
    Timer timer;
    const DeskRun& u = run_ufsl();
    const DeskRun& k = run_kd_rb1();
    const bool pass = k.attack_mse > u.attack_mse && k.attack_ssim < u.attack_ssim &&
                      (u.attack_ssim - k.attack_ssim) >= 0.05;
    report(8, "defense direction: KD-UFSL (k=2, sigma2=0.1) vs UFSL", pass, timer.seconds(),
           cat("MSE ", u.attack_mse, " -> ", k.attack_mse, ", SSIM ", u.attack_ssim, " -> ",
               k.attack_ssim, " (gap ", u.attack_ssim - k.attack_ssim, ", needs >= 0.05)"));
}

static void criterion_9_utility_retention() {
    Timer timer;
    const DeskRun& u = run_ufsl();
    const DeskRun& k = run_kd_rb1();
    const bool pass = u.final_accuracy >= 0.85 && k.final_accuracy >= u.final_accuracy - 0.05;
    report(9, "utility retention after 30 rounds", pass, timer.seconds(),
           cat("UFSL accuracy ", u.final_accuracy, " (needs >= 0.85), KD-UFSL ", k.final_accuracy,
               " (needs >= UFSL - 0.05)"));
}

static void criterion_10_monotone_knobs() {
    Timer timer;
    // sigma2 sweep at k=2, shallow cut; sigma2=0 drops the DP leg
    const DeskRun s0 = desk_run(Method::ufsl_ka, 0.0, 2, "RB1");
    const DeskRun& s1 = run_kd_rb1();  // sigma2 = 0.1
    const DeskRun s3 = desk_run(Method::kd_ufsl, 0.3, 2, "RB1");
    const bool sigma_ok =
        s1.attack_mse >= s0.attack_mse * 0.95 && s3.attack_mse >= s1.attack_mse * 0.95;

    // head-depth sweep RB1 -> RB2 -> RB3 under the KD setup
    const DeskRun& d1 = run_kd_rb1();
    const DeskRun d2 = desk_run(Method::kd_ufsl, 0.1, 2, "RB2");
    const DeskRun d3 = desk_run(Method::kd_ufsl, 0.1, 2, "RB3");
    const bool depth_ok = d2.attack_ssim <= d1.attack_ssim && d3.attack_ssim <= d2.attack_ssim;

    report(10, "monotone privacy knobs (sigma2 sweep, head-depth sweep)", sigma_ok && depth_ok,
           timer.seconds(),
           cat("MSE over sigma2 {0,0.1,0.3}: ", s0.attack_mse, ", ", s1.attack_mse, ", ",
               s3.attack_mse, "; SSIM over RB1/RB2/RB3: ", d1.attack_ssim, ", ", d2.attack_ssim,
               ", ", d3.attack_ssim));
}

static void criterion_11_reproducibility_formats() {
    Timer timer;
    bool ok = true;
    std::string detail;
    const fs::path dir =
        fs::temp_directory_path() / ("sg_acceptance11_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    };

    // byte-identical CSV across two runs of the same manifest
    ExperimentConfig cfg;
    cfg.method = Method::ufsl;
    cfg.rounds = 2;
    cfg.clients = 2;
    cfg.batch_size = 16;
    cfg.seed = 321;
    cfg.record_timing = false;
    cfg.data.classes = 4;
    cfg.data.image_shape = {1, 16, 16};
    cfg.data.train_count = 64;
    cfg.data.test_count = 32;
    cfg.attack.epochs = 2;
    if (run_experiment(cfg, (dir / "a").string()) != 0) ok = false;
    if (run_experiment(cfg, (dir / "b").string()) != 0) ok = false;
    if (slurp(dir / "a/metrics.csv") != slurp(dir / "b/metrics.csv")) {
        ok = false;
        detail += "CSV mismatch; ";
    }
    if (slurp(dir / "a/weights.bin") != slurp(dir / "b/weights.bin")) {
        ok = false;
        detail += "weights mismatch; ";
    }

    // hand-built IDX fixture loads bit-exactly
    {
        std::ofstream img(dir / "idx_img", std::ios::binary);
        const unsigned char ih[] = {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2,
                                    0, 255, 128, 64, 10, 20, 30, 40};
        img.write(reinterpret_cast<const char*>(ih), sizeof ih);
        img.close();
        std::ofstream lab(dir / "idx_lab", std::ios::binary);
        const unsigned char lh[] = {0, 0, 8, 1, 0, 0, 0, 2, 3, 1};
        lab.write(reinterpret_cast<const char*>(lh), sizeof lh);
        lab.close();
        const Dataset ds = load_idx((dir / "idx_img").string(), (dir / "idx_lab").string());
        if (ds.count() != 2 || ds.labels != std::vector<int>{3, 1} || ds.images.data[0] != 0.0f ||
            ds.images.data[1] != 1.0f || ds.images.data[2] != 128.0f / 255.0f) {
            ok = false;
            detail += "IDX fixture mismatch; ";
        }
    }
    // CIFAR binary fixture
    {
        std::vector<unsigned char> rec(3073, 255);
        rec[0] = 7;
        std::ofstream f(dir / "cifar_rec", std::ios::binary);
        f.write(reinterpret_cast<const char*>(rec.data()), 3073);
        f.close();
        const Dataset ds = load_cifar_binary({(dir / "cifar_rec").string()});
        if (ds.count() != 1 || ds.labels[0] != 7 || ds.images.data[0] != 1.0f ||
            ds.images.data[3071] != 1.0f) {
            ok = false;
            detail += "CIFAR fixture mismatch; ";
        }
    }
    // PGM/PPM round trip
    {
        RngStream rng(77);
        for (const int channels : {1, 3}) {
            Tensor img = random_tensor({channels, 9, 7}, rng, 0.0, 1.0);
            const fs::path p = dir / (channels == 1 ? "rt.pgm" : "rt.ppm");
            write_netpbm(img, p.string());
            const Tensor back = load_netpbm(p.string());
            for (size_t i = 0; i < img.data.size(); ++i)
                if (std::abs(back.data[i] - img.data[i]) > 1.0f / 255.0f + 1e-6f) {
                    ok = false;
                    detail += "NetPBM round trip out of tolerance; ";
                    break;
                }
        }
    }
    fs::remove_all(dir);
    if (detail.empty()) detail = "CSV/weights byte-identical, IDX + CIFAR + NetPBM bit-exact";
    report(11, "reproducibility and file formats", ok, timer.seconds(), detail);
}

int main() {
    std::printf("splitguard acceptance suite\n");
    criterion_1_gradient_oracle();
    criterion_2_split_equivalence();
    criterion_3_degenerate_privacy();
    criterion_4_mechanism_statistics();
    criterion_5_grouping_laws();
    criterion_6_metric_oracles();
    criterion_7_attack_potency();
    criterion_8_defense_direction();
    criterion_9_utility_retention();
    criterion_10_monotone_knobs();
    criterion_11_reproducibility_formats();
    fs::remove_all(fs::temp_directory_path() / ("sg_acceptance_" + std::to_string(::getpid())));
    std::printf("%d of 11 criteria failed\n", g_failures);
    return g_failures;
}
