#pragma once
// Run configuration: JSON on disk, every field defaulted, unknown keys
// rejected.

#include "hgrec/policy.hpp"
#include "hgrec/semantic.hpp"

#include <cstdint>
#include <string>

namespace hgrec {

struct RunConfig {
    struct Data {
        std::string interactions;
        std::string semantic;  // empty -> no semantic table
        int k_core = 5;
    } data;

    std::uint64_t seed = 42;

    struct Backbone {
        int d = 64;
        int d_id = 64;
        int layers = 3;
        int k_positive = 1;
    } backbone;

    struct Optimizer {
        double lr = 0.001;
        int batch = 4096;
        int epochs = 100;
        int anchors_per_batch = 128;  // per node side, for RL + contrast
    } optimizer;

    struct Contrastive {
        double lambda_cl = 0.1;
        double lambda_reg = 1e-4;
    } contrastive;

    HgpoConfig hgpo;

    struct Ablation {
        bool no_hgpo = false;
        bool fixed_tau = false;
        bool random_neg = false;
        bool grpo = false;  // lambda_harm forced to 0
        bool weighted_sum_fusion = false;
        bool no_semantic = false;
        double fixed_tau_value = 0.2;
    } ablation;

    struct EarlyStopping {
        int patience = 10;
        std::string metric = "ndcg@20";
    } early_stopping;

    struct Split {
        double train = 0.8;
        double val = 0.1;
        double test = 0.1;
    } split;

    void validate() const;
};

// Throws with the offending key name on unknown keys; missing keys take
// defaults.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);
std::string run_config_to_json(const RunConfig& cfg);

}  // namespace hgrec
