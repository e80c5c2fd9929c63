#include "splitguard/harness.hpp"

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace splitguard {

// ---------------------------------------------------------------------------
// config schema

namespace {

const std::map<std::string, std::vector<std::string>> kSchema = {
    {"", {"method", "seed", "rounds", "local_epochs", "batch_size", "learning_rate", "clients",
          "record_timing", "privacy", "model", "data", "attack"}},
    {"privacy", {"sigma2", "epsilon", "delta", "sensitivity", "k", "dp_enabled", "ka_enabled"}},
    {"model", {"arch", "blocks", "cut"}},
    {"data", {"source", "classes", "image_shape", "train_count", "test_count", "fraction", "seed",
              "train_images", "train_labels", "test_images", "test_labels", "cifar_train",
              "cifar_test"}},
    {"attack", {"epochs", "batch_size", "learning_rate", "target_client"}},
};

void check_keys(const json& j, const std::string& prefix) {
    auto it = kSchema.find(prefix);
    if (it == kSchema.end()) return;
    for (const auto& [key, value] : j.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (std::find(it->second.begin(), it->second.end(), key) == it->second.end())
            fail(cat("config: unknown key '", path, "'"));
        if (value.is_object()) check_keys(value, path);
    }
}

template <typename T>
T get_or(const json& j, const std::string& key, const std::string& prefix, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        fail(cat("config: bad type for '", prefix.empty() ? key : prefix + "." + key, "'"));
    }
}

json parse_override_value(const std::string& text) {
    json v = json::parse(text, nullptr, false);
    if (v.is_discarded()) return json(text);  // bare string
    return v;
}

void apply_override(json& root, const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos)
        fail(cat("override '", spec, "' is not of the form key.path=value"));
    const std::string path = spec.substr(0, eq);
    json* node = &root;
    size_t start = 0;
    for (;;) {
        const auto dot = path.find('.', start);
        const std::string part = path.substr(start, dot - start);
        if (part.empty()) fail(cat("override '", spec, "': empty key segment"));
        if (dot == std::string::npos) {
            (*node)[part] = parse_override_value(spec.substr(eq + 1));
            return;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& json_text,
                                   const std::vector<std::string>& overrides) {
    json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded()) fail("config: file is not valid JSON");
    if (!j.is_object()) fail("config: top level must be a JSON object");
    for (const auto& o : overrides) apply_override(j, o);
    check_keys(j, "");

    ExperimentConfig cfg;
    cfg.method = method_from_string(get_or<std::string>(j, "method", "", "kd_ufsl"));
    cfg.seed = get_or<uint64_t>(j, "seed", "", 1234);
    cfg.rounds = get_or<int>(j, "rounds", "", 30);
    cfg.local_epochs = get_or<int>(j, "local_epochs", "", 1);
    cfg.batch_size = get_or<int>(j, "batch_size", "", 32);
    cfg.learning_rate = get_or<double>(j, "learning_rate", "", 0.001);
    cfg.clients = get_or<int>(j, "clients", "", 10);
    cfg.record_timing = get_or<bool>(j, "record_timing", "", true);

    const json jp = j.value("privacy", json::object());
    const json jm = j.value("model", json::object());
    const json jd = j.value("data", json::object());
    const json ja = j.value("attack", json::object());

    cfg.privacy.k = get_or<int>(jp, "k", "privacy", 3);
    cfg.privacy.sensitivity = get_or<double>(jp, "sensitivity", "privacy", 1.0);
    const bool derived_dp = cfg.method == Method::ufsl_dp || cfg.method == Method::kd_ufsl;
    const bool derived_ka = cfg.method == Method::ufsl_ka || cfg.method == Method::kd_ufsl;
    if (jp.contains("dp_enabled") &&
        get_or<bool>(jp, "dp_enabled", "privacy", derived_dp) != derived_dp)
        fail(cat("config: 'privacy.dp_enabled' contradicts method=", method_name(cfg.method)));
    if (jp.contains("ka_enabled") &&
        get_or<bool>(jp, "ka_enabled", "privacy", derived_ka) != derived_ka)
        fail(cat("config: 'privacy.ka_enabled' contradicts method=", method_name(cfg.method)));
    cfg.privacy.dp_enabled = derived_dp;
    cfg.privacy.ka_enabled = derived_ka;

    if (jp.contains("sigma2")) {
        cfg.privacy.sigma2 = get_or<double>(jp, "sigma2", "privacy", 0.0);
    } else if (jp.contains("epsilon") || jp.contains("delta")) {
        cfg.privacy.epsilon = get_or<double>(jp, "epsilon", "privacy", 0.0);
        cfg.privacy.delta = get_or<double>(jp, "delta", "privacy", 0.0);
        const double sigma =
            calibrate_sigma(cfg.privacy.epsilon, cfg.privacy.delta, cfg.privacy.sensitivity);
        cfg.privacy.sigma2 = sigma * sigma;
    } else if (derived_dp) {
        cfg.privacy.sigma2 = cfg.method == Method::kd_ufsl ? 0.1 : 0.2;
    }

    cfg.arch = get_or<std::string>(jm, "arch", "model", "convnet");
    cfg.blocks = get_or<int>(jm, "blocks", "model", 2);
    cfg.cut = get_or<std::string>(jm, "cut", "model", "RB2");

    cfg.data.source = get_or<std::string>(jd, "source", "data", "synthetic");
    cfg.data.classes = get_or<int>(jd, "classes", "data", 10);
    cfg.data.image_shape = get_or<std::vector<int>>(jd, "image_shape", "data", {1, 28, 28});
    cfg.data.train_count = get_or<int>(jd, "train_count", "data", 2000);
    cfg.data.test_count = get_or<int>(jd, "test_count", "data", 1000);
    cfg.data.fraction = get_or<double>(jd, "fraction", "data", 1.0);
    cfg.data.seed = get_or<uint64_t>(jd, "seed", "data", 99);
    cfg.data.train_images = get_or<std::string>(jd, "train_images", "data", "");
    cfg.data.train_labels = get_or<std::string>(jd, "train_labels", "data", "");
    cfg.data.test_images = get_or<std::string>(jd, "test_images", "data", "");
    cfg.data.test_labels = get_or<std::string>(jd, "test_labels", "data", "");
    cfg.data.cifar_train = get_or<std::vector<std::string>>(jd, "cifar_train", "data", {});
    cfg.data.cifar_test = get_or<std::vector<std::string>>(jd, "cifar_test", "data", {});

    cfg.attack.epochs = get_or<int>(ja, "epochs", "attack", 20);
    cfg.attack.batch_size = get_or<int>(ja, "batch_size", "attack", 8);
    cfg.attack.learning_rate = get_or<double>(ja, "learning_rate", "attack", 0.01);
    cfg.attack.target_client = get_or<int>(ja, "target_client", "attack", 0);

    validate_config(cfg);
    return cfg;
}

ExperimentConfig parse_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) fail(cat("config: cannot open '", path, "'"));
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text, overrides);
}

std::string canonical_config_json(const ExperimentConfig& cfg) {
    json j;
    j["method"] = method_name(cfg.method);
    j["seed"] = cfg.seed;
    j["rounds"] = cfg.rounds;
    j["local_epochs"] = cfg.local_epochs;
    j["batch_size"] = cfg.batch_size;
    j["learning_rate"] = cfg.learning_rate;
    j["clients"] = cfg.clients;
    j["record_timing"] = cfg.record_timing;
    j["privacy"] = {{"sigma2", cfg.privacy.sigma2},
                    {"epsilon", cfg.privacy.epsilon},
                    {"delta", cfg.privacy.delta},
                    {"sensitivity", cfg.privacy.sensitivity},
                    {"k", cfg.privacy.k},
                    {"dp_enabled", cfg.privacy.dp_enabled},
                    {"ka_enabled", cfg.privacy.ka_enabled}};
    j["model"] = {{"arch", cfg.arch}, {"blocks", cfg.blocks}, {"cut", cfg.cut}};
    j["data"] = {{"source", cfg.data.source},
                 {"classes", cfg.data.classes},
                 {"image_shape", cfg.data.image_shape},
                 {"train_count", cfg.data.train_count},
                 {"test_count", cfg.data.test_count},
                 {"fraction", cfg.data.fraction},
                 {"seed", cfg.data.seed},
                 {"train_images", cfg.data.train_images},
                 {"train_labels", cfg.data.train_labels},
                 {"test_images", cfg.data.test_images},
                 {"test_labels", cfg.data.test_labels},
                 {"cifar_train", cfg.data.cifar_train},
                 {"cifar_test", cfg.data.cifar_test}};
    j["attack"] = {{"epochs", cfg.attack.epochs},
                   {"batch_size", cfg.attack.batch_size},
                   {"learning_rate", cfg.attack.learning_rate},
                   {"target_client", cfg.attack.target_client}};
    return j.dump();  // nlohmann objects iterate in sorted key order
}

std::string config_hash_hex(const ExperimentConfig& cfg) {
    const std::string text = canonical_config_json(cfg);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a_str(text));
    return buf;
}

// ---------------------------------------------------------------------------
// datasets

ResolvedData resolve_datasets(const ExperimentConfig& cfg) {
    const auto& d = cfg.data;
    Dataset train, test_pool;
    if (d.source == "synthetic") {
        train = synthetic_blobs(d.classes, d.train_count, d.image_shape, d.seed);
        test_pool = synthetic_blobs(d.classes, d.test_count, d.image_shape,
                                    derive_seed(d.seed, "test"));
    } else if (d.source == "idx") {
        train = load_idx(d.train_images, d.train_labels);
        test_pool = load_idx(d.test_images, d.test_labels);
    } else if (d.source == "cifar") {
        train = load_cifar_binary(d.cifar_train);
        test_pool = load_cifar_binary(d.cifar_test);
    } else {
        fail(cat("config: unknown data.source '", d.source, "'"));
    }
    if (d.fraction < 1.0) train = subset_fraction(train, d.fraction, derive_seed(d.seed, "frac"));
    train.split_tag = "train";

    // test pool -> disjoint attacker and evaluation halves
    std::vector<int> idx(test_pool.count());
    for (int i = 0; i < test_pool.count(); ++i) idx[i] = i;
    RngStream carve(derive_seed(d.seed, "carve"));
    carve.shuffle(idx);
    const int half = test_pool.count() / 2;
    ResolvedData out;
    out.train = std::move(train);
    out.attacker = take(test_pool, {idx.begin(), idx.begin() + half}, "attacker");
    out.test = take(test_pool, {idx.begin() + half, idx.end()}, "test");
    return out;
}

// ---------------------------------------------------------------------------
// csv / weights / images

std::string metrics_csv_header() {
    return "round,method,accuracy,attack_mse,attack_ssim,wall_time_s,config_hash";
}

std::string metrics_csv_row(const MetricsRecord& rec) {
    char buf[256];
    char mse[32] = "", ssim_s[32] = "";
    if (rec.attack_mse) std::snprintf(mse, sizeof mse, "%.8f", *rec.attack_mse);
    if (rec.attack_ssim) std::snprintf(ssim_s, sizeof ssim_s, "%.8f", *rec.attack_ssim);
    std::snprintf(buf, sizeof buf, "%d,%s,%.6f,%s,%s,%.3f,%s", rec.round, rec.method.c_str(),
                  rec.accuracy, mse, ssim_s, rec.wall_time_s, rec.config_hash.c_str());
    return buf;
}

void save_weights(const WeightMap& weights, const std::string& bin_path,
                  const std::string& json_path) {
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) fail(cat("save_weights: cannot write '", bin_path, "'"));
    json sidecar;
    sidecar["format"] = "f32-le";
    sidecar["params"] = json::array();
    static_assert(sizeof(float) == 4);
    for (const auto& [name, t] : weights) {
        sidecar["params"].push_back({{"name", name}, {"shape", t.shape}});
        bin.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * 4));
    }
    std::ofstream js(json_path);
    if (!js) fail(cat("save_weights: cannot write '", json_path, "'"));
    js << sidecar.dump(2) << "\n";
}

WeightMap load_weights(const std::string& bin_path, const std::string& json_path) {
    std::ifstream js(json_path);
    if (!js) fail(cat("load_weights: cannot open '", json_path, "'"));
    json sidecar = json::parse(js, nullptr, false);
    if (sidecar.is_discarded()) fail(cat("load_weights: '", json_path, "' is not valid JSON"));
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) fail(cat("load_weights: cannot open '", bin_path, "'"));
    WeightMap out;
    for (const auto& p : sidecar.at("params")) {
        const std::string name = p.at("name").get<std::string>();
        const std::vector<int> shape = p.at("shape").get<std::vector<int>>();
        Tensor t = Tensor::zeros(shape);
        bin.read(reinterpret_cast<char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * 4));
        if (!bin) fail(cat("load_weights: '", bin_path, "' truncated at parameter '", name, "'"));
        out[name] = std::move(t);
    }
    return out;
}

void write_netpbm(const Tensor& image, const std::string& path) {
    if (image.shape.size() != 3 || (image.shape[0] != 1 && image.shape[0] != 3))
        fail(cat("write_netpbm: image must be [1,H,W] or [3,H,W], got ", shape_str(image.shape)));
    const int c = image.shape[0], h = image.shape[1], w = image.shape[2];
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(cat("write_netpbm: cannot write '", path, "'"));
    out << (c == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
    auto quantize = [](float v) {
        return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
    };
    std::vector<unsigned char> row(static_cast<size_t>(w) * c);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch)  // planes -> interleaved
                row[static_cast<size_t>(x) * c + ch] =
                    quantize(image.data[(static_cast<size_t>(ch) * h + y) * w + x]);
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
}

Tensor load_netpbm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(cat("load_netpbm: cannot open '", path, "'"));
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if ((magic != "P5" && magic != "P6") || maxval != 255 || w <= 0 || h <= 0)
        fail(cat("load_netpbm: '", path, "' is not an 8-bit P5/P6 file"));
    in.get();  // single whitespace after maxval
    const int c = magic == "P5" ? 1 : 3;
    std::vector<unsigned char> raw(static_cast<size_t>(w) * h * c);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) fail(cat("load_netpbm: '", path, "' truncated"));
    Tensor t = Tensor::zeros({c, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch)
                t.data[(static_cast<size_t>(ch) * h + y) * w + x] =
                    static_cast<float>(raw[(static_cast<size_t>(y) * w + x) * c + ch]) / 255.0f;
    return t;
}

void dump_images(const Tensor& originals, const Tensor& reconstructions,
                 const std::string& directory) {
    if (originals.shape != reconstructions.shape)
        fail(cat("dump_images: mismatched batches ", shape_str(originals.shape), " vs ",
                 shape_str(reconstructions.shape)));
    if (originals.shape.size() != 4)
        fail(cat("dump_images: expected [N,C,H,W], got ", shape_str(originals.shape)));
    std::error_code ec;
    fs::create_directories(directory, ec);
    if (ec && !fs::is_directory(directory))
        fail(cat("dump_images: cannot create directory '", directory, "'"));
    const int n = originals.shape[0], c = originals.shape[1];
    const char* ext = c == 1 ? "pgm" : "ppm";
    const std::vector<int> img_shape = {c, originals.shape[2], originals.shape[3]};
    const size_t per = static_cast<size_t>(shape_numel(img_shape));
    for (int i = 0; i < n; ++i) {
        Tensor img = Tensor::zeros(img_shape);
        char name[64];
        std::copy_n(originals.data.begin() + i * per, per, img.data.begin());
        std::snprintf(name, sizeof name, "orig_%04d.%s", i, ext);
        write_netpbm(img, (fs::path(directory) / name).string());
        std::copy_n(reconstructions.data.begin() + i * per, per, img.data.begin());
        std::snprintf(name, sizeof name, "recon_%04d.%s", i, ext);
        write_netpbm(img, (fs::path(directory) / name).string());
    }
}

// ---------------------------------------------------------------------------
// experiment drivers

namespace {

std::string file_checksum_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "";
    const std::string bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a_str(bytes));
    return buf;
}

std::string timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

Tensor build_peer_pool(const Dataset& train_set, const PartitionPlan& plan, int victim) {
    std::vector<int> pool_idx;
    for (size_t c = 0; c < plan.shards.size(); ++c) {
        if (static_cast<int>(c) == victim) continue;
        pool_idx.insert(pool_idx.end(), plan.shards[c].begin(), plan.shards[c].end());
    }
    if (pool_idx.empty()) fail("build_peer_pool: no peer clients available");
    return batch_images(train_set, pool_idx);
}

struct AttackOutcome {
    double mse = 0.0;
    double ssim_v = 0.0;
    double seconds = 0.0;
};

AttackOutcome run_attack_phase(const ExperimentConfig& cfg, SplitModel& model,
                               const ResolvedData& data, const PartitionPlan& plan,
                               const std::string& out_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    AttackConfig acfg{cfg.attack.epochs, cfg.attack.batch_size, cfg.attack.learning_rate};
    RngStream attack_rng(derive_seed(cfg.seed, "attack"));
    Segment inversion =
        train_inversion(model.head, cfg.data.image_shape, data.attacker, acfg, attack_rng);
    Tensor peer_pool;
    if (cfg.privacy.ka_enabled)
        peer_pool = build_peer_pool(data.train, plan, cfg.attack.target_client);
    RngStream eval_rng(derive_seed(cfg.seed, "attack_eval"));
    const AttackEvaluation ev =
        evaluate_attack(inversion, model.head, cfg.privacy, data.test, peer_pool, eval_rng);
    if (ev.originals.numel() > 0)
        dump_images(ev.originals, ev.reconstructions, (fs::path(out_dir) / "images").string());
    AttackOutcome out;
    out.mse = ev.mean_mse;
    out.ssim_v = ev.mean_ssim;
    if (cfg.record_timing) {
        const auto t1 = std::chrono::steady_clock::now();
        out.seconds = std::chrono::duration<double>(t1 - t0).count();
    }
    return out;
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
    try {
        validate_config(cfg);
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        if (!fs::is_directory(out_dir))
            fail(cat("run_experiment: cannot create output directory '", out_dir, "'"));
        const std::string started = timestamp_now();
        const std::string hash = config_hash_hex(cfg);

        const ResolvedData data = resolve_datasets(cfg);
        TrainResult tr = train(cfg, data.train, data.test);

        const std::string csv_path = (fs::path(out_dir) / "metrics.csv").string();
        {
            std::ofstream csv(csv_path);
            if (!csv) fail(cat("run_experiment: cannot write '", csv_path, "'"));
            csv << metrics_csv_header() << "\n";
            for (auto& rec : tr.trajectory) {
                rec.config_hash = hash;
                csv << metrics_csv_row(rec) << "\n";
            }
            // final attack summary row
            const AttackOutcome atk = run_attack_phase(cfg, tr.final_model, data, tr.plan, out_dir);
            MetricsRecord summary;
            summary.round = cfg.rounds;
            summary.method = method_name(cfg.method);
            summary.accuracy = tr.trajectory.empty() ? 0.0 : tr.trajectory.back().accuracy;
            summary.attack_mse = atk.mse;
            summary.attack_ssim = atk.ssim_v;
            summary.wall_time_s = atk.seconds;
            summary.config_hash = hash;
            csv << metrics_csv_row(summary) << "\n";
        }

        WeightMap all;
        for (const auto& [k, v] : tr.final_model.head.state_dict()) all["head." + k] = v;
        for (const auto& [k, v] : tr.final_model.body.state_dict()) all["body." + k] = v;
        for (const auto& [k, v] : tr.final_model.tail.state_dict()) all["tail." + k] = v;
        const std::string wbin = (fs::path(out_dir) / "weights.bin").string();
        const std::string wjson = (fs::path(out_dir) / "weights.json").string();
        save_weights(all, wbin, wjson);

        // manifest last: its presence marks a completed run
        json manifest;
        manifest["config"] = json::parse(canonical_config_json(cfg));
        manifest["config_hash"] = hash;
        manifest["seed"] = cfg.seed;
        manifest["started"] = started;
        manifest["output_dir"] = out_dir;
        manifest["checksums"] = {{"metrics.csv", file_checksum_hex(csv_path)},
                                 {"weights.bin", file_checksum_hex(wbin)}};
        std::ofstream mf((fs::path(out_dir) / "manifest.json").string());
        mf << manifest.dump(2) << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "run failed: %s\n", e.what());
        return 1;
    }
}

// ---------------------------------------------------------------------------
// sweeps

namespace {

std::string canonical_value(const std::string& axis, const std::string& raw) {
    char buf[64];
    if (axis == "sigma2") {
        std::snprintf(buf, sizeof buf, "%.12g", std::stod(raw));
        return buf;
    }
    return std::to_string(std::stoll(raw));
}

ExperimentConfig apply_axis(const ExperimentConfig& base, const std::string& axis,
                            const std::string& value) {
    ExperimentConfig cfg = base;
    if (axis == "sigma2") {
        const double v = std::stod(value);
        if (v < 0) fail(cat("sweep: sigma2 value ", value, " must be >= 0"));
        cfg.privacy.sigma2 = v;
        if (v == 0.0) {  // degenerate noise: the method loses its DP leg
            cfg.privacy.dp_enabled = false;
            if (cfg.method == Method::kd_ufsl) cfg.method = Method::ufsl_ka;
            if (cfg.method == Method::ufsl_dp) cfg.method = Method::ufsl;
        } else if (!cfg.privacy.dp_enabled) {
            fail(cat("sweep: sigma2=", value, " needs a DP-enabled method, got ",
                     method_name(cfg.method)));
        }
    } else if (axis == "k") {
        const int v = static_cast<int>(std::stoll(value));
        if (v < 1) fail(cat("sweep: k value ", value, " must be >= 1"));
        if (v > cfg.clients)
            fail(cat("sweep: k=", v, " exceeds the ", cfg.clients, " clients"));
        cfg.privacy.k = v;
        if (v == 1) {  // singleton groups: k-anonymity is off
            cfg.privacy.ka_enabled = false;
            if (cfg.method == Method::kd_ufsl) cfg.method = Method::ufsl_dp;
            if (cfg.method == Method::ufsl_ka) cfg.method = Method::ufsl;
        } else if (!cfg.privacy.ka_enabled) {
            fail(cat("sweep: k=", value, " needs a KA-enabled method, got ",
                     method_name(cfg.method)));
        }
    } else if (axis == "head_depth") {
        const int v = static_cast<int>(std::stoll(value));
        if (v < 1 || v > 3) fail(cat("sweep: head_depth value ", value, " must be 1, 2 or 3"));
        cfg.cut = cat("RB", v);
    } else if (axis == "n_clients") {
        const int v = static_cast<int>(std::stoll(value));
        if (v < 1) fail(cat("sweep: n_clients value ", value, " must be >= 1"));
        if (cfg.privacy.ka_enabled && cfg.privacy.k > v)
            fail(cat("sweep: n_clients=", v, " is smaller than k=", cfg.privacy.k));
        cfg.clients = v;
    } else {
        fail(cat("sweep: unknown axis '", axis, "' (expected sigma2, k, head_depth, n_clients)"));
    }
    return cfg;
}

}  // namespace

int sweep(const ExperimentConfig& base, const std::string& axis,
          const std::vector<std::string>& values, const std::string& out_dir) {
    try {
        if (values.empty()) fail("sweep: no values given");
        // validate the whole grid before any run starts
        std::vector<ExperimentConfig> cfgs;
        for (const auto& v : values) {
            ExperimentConfig cfg = apply_axis(base, axis, v);
            // sub-seed from the value itself so order does not matter
            uint64_t h = fnv1a_u64(base.seed);
            h = fnv1a_str(axis, h);
            h = fnv1a_str(canonical_value(axis, v), h);
            cfg.seed = h;
            validate_config(cfg);
            cfgs.push_back(std::move(cfg));
        }
        std::error_code ec;
        fs::create_directories(out_dir, ec);

        std::vector<std::string> summary_rows;
        for (size_t i = 0; i < values.size(); ++i) {
            const std::string sub =
                (fs::path(out_dir) / cat(axis, "=", canonical_value(axis, values[i]))).string();
            if (run_experiment(cfgs[i], sub) != 0)
                fail(cat("sweep: sub-run for ", axis, "=", values[i], " failed"));
            // last CSV line is the attack summary row
            std::ifstream csv((fs::path(sub) / "metrics.csv").string());
            std::string line, last;
            std::getline(csv, line);  // header
            while (std::getline(csv, line))
                if (!line.empty()) last = line;
            summary_rows.push_back(cat(axis, ",", canonical_value(axis, values[i]), ",", last));
        }
        std::ofstream summary((fs::path(out_dir) / "summary.csv").string());
        summary << "axis,value," << metrics_csv_header() << "\n";
        for (const auto& row : summary_rows) summary << row << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "sweep failed: %s\n", e.what());
        return 1;
    }
}

int run_attack_only(const ExperimentConfig& cfg, const std::string& weights_path,
                    const std::string& out_dir) {
    try {
        validate_config(cfg);
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        const std::string json_path =
            (fs::path(weights_path).parent_path() / "weights.json").string();
        const WeightMap all = load_weights(weights_path, json_path);

        const NetworkSpec net =
            cfg.arch == "resnet"
                ? build_small_resnet(cfg.data.image_shape, cfg.data.classes, cfg.blocks)
                : build_convnet(cfg.data.image_shape, cfg.data.classes);
        SplitModel model = split(net, split_spec_at(net, cfg.cut));
        WeightMap head_w;
        for (const auto& [k, v] : all)
            if (k.rfind("head.", 0) == 0) head_w[k.substr(5)] = v;
        model.head.load_state_dict(head_w);

        const ResolvedData data = resolve_datasets(cfg);
        const PartitionPlan plan =
            partition_iid(data.train, cfg.clients, derive_seed(cfg.seed, "partition"));
        const AttackOutcome atk = run_attack_phase(cfg, model, data, plan, out_dir);

        const std::string csv_path = (fs::path(out_dir) / "attack_metrics.csv").string();
        std::ofstream csv(csv_path);
        csv << metrics_csv_header() << "\n";
        MetricsRecord rec;
        rec.round = cfg.rounds;
        rec.method = method_name(cfg.method);
        rec.attack_mse = atk.mse;
        rec.attack_ssim = atk.ssim_v;
        rec.wall_time_s = atk.seconds;
        rec.config_hash = config_hash_hex(cfg);
        csv << metrics_csv_row(rec) << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "attack failed: %s\n", e.what());
        return 1;
    }
}

IdxFixturePaths write_synthetic_idx(const std::string& dir, int classes, int train_count,
                                    int test_count, const std::vector<int>& shape, uint64_t seed) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    const Dataset train = synthetic_blobs(classes, train_count, shape, seed);
    const Dataset test = synthetic_blobs(classes, test_count, shape, derive_seed(seed, "test"));
    IdxFixturePaths p;
    p.train_images = (fs::path(dir) / "train-images-idx3-ubyte").string();
    p.train_labels = (fs::path(dir) / "train-labels-idx1-ubyte").string();
    p.test_images = (fs::path(dir) / "t10k-images-idx3-ubyte").string();
    p.test_labels = (fs::path(dir) / "t10k-labels-idx1-ubyte").string();
    save_idx(train, p.train_images, p.train_labels);
    save_idx(test, p.test_images, p.test_labels);
    return p;
}

std::string default_out_root() {
    if (const char* env = std::getenv("SPLITGUARD_OUT")) return env;
    return "out";
}

}  // namespace splitguard
