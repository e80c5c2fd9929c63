#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "splitguard/harness.hpp"

using namespace splitguard;

int main(int argc, char** argv) {
    CLI::App app{"U-shaped federated split learning simulator with DP and k-anonymity"};
    app.require_subcommand(1);

    std::string config_path, out_dir, axis, values_csv, weights_path;
    std::vector<std::string> overrides;
    uint64_t seed = 0;
    bool seed_given = false;

    auto add_common = [&](CLI::App* cmd, bool needs_config) {
        auto* copt = cmd->add_option("--config", config_path, "JSON experiment config");
        if (needs_config) copt->required();
        cmd->add_option("--set", overrides, "override config values as key.path=value");
        cmd->add_option("--seed", seed, "master seed override")
            ->each([&](const std::string&) { seed_given = true; });
        cmd->add_option("--out", out_dir, "output directory (default: $SPLITGUARD_OUT or ./out)");
    };

    auto* run_cmd = app.add_subcommand("run", "run one experiment");
    add_common(run_cmd, true);

    auto* sweep_cmd = app.add_subcommand("sweep", "run one experiment per axis value");
    add_common(sweep_cmd, true);
    sweep_cmd->add_option("--axis", axis, "sigma2 | k | head_depth | n_clients")->required();
    sweep_cmd->add_option("--values", values_csv, "comma-separated axis values")->required();

    auto* attack_cmd = app.add_subcommand("attack", "train and evaluate the inversion attack "
                                                    "against saved weights");
    add_common(attack_cmd, true);
    attack_cmd->add_option("--weights", weights_path, "weights.bin from a finished run")
        ->required();

    int gen_classes = 10, gen_train = 2000, gen_test = 1000;
    uint64_t gen_seed = 7;
    std::string gen_dir = "data";
    auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic IDX dataset pair");
    gen_cmd->add_option("--dir", gen_dir, "target directory");
    gen_cmd->add_option("--classes", gen_classes, "class count");
    gen_cmd->add_option("--train", gen_train, "training sample count");
    gen_cmd->add_option("--test", gen_test, "test sample count");
    gen_cmd->add_option("--seed", gen_seed, "generator seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen_cmd->parsed()) {
            const auto paths = write_synthetic_idx(gen_dir, gen_classes, gen_train, gen_test,
                                                   {1, 28, 28}, gen_seed);
            std::printf("wrote %s\n      %s\n      %s\n      %s\n", paths.train_images.c_str(),
                        paths.train_labels.c_str(), paths.test_images.c_str(),
                        paths.test_labels.c_str());
            return 0;
        }

        ExperimentConfig cfg = parse_config(config_path, overrides);
        if (seed_given) cfg.seed = seed;

        if (run_cmd->parsed()) {
            if (out_dir.empty())
                out_dir = default_out_root() + "/run_" + config_hash_hex(cfg);
            const int rc = run_experiment(cfg, out_dir);
            if (rc == 0) std::printf("run complete: %s\n", out_dir.c_str());
            return rc;
        }
        if (sweep_cmd->parsed()) {
            std::vector<std::string> values;
            std::string tok;
            for (char ch : values_csv) {
                if (ch == ',') {
                    if (!tok.empty()) values.push_back(tok);
                    tok.clear();
                } else {
                    tok += ch;
                }
            }
            if (!tok.empty()) values.push_back(tok);
            if (out_dir.empty()) out_dir = default_out_root() + "/sweep_" + axis;
            const int rc = sweep(cfg, axis, values, out_dir);
            if (rc == 0) std::printf("sweep complete: %s\n", out_dir.c_str());
            return rc;
        }
        if (attack_cmd->parsed()) {
            if (out_dir.empty())
                out_dir = default_out_root() + "/attack_" + config_hash_hex(cfg);
            const int rc = run_attack_only(cfg, weights_path, out_dir);
            if (rc == 0) std::printf("attack complete: %s\n", out_dir.c_str());
            return rc;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
