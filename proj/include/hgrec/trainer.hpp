#pragma once
// End-to-end training: embedding model forward/backward, policy rollouts
// and updates, the epoch loop with early stopping, and the final report.

#include "hgrec/backbone.hpp"
#include "hgrec/config.hpp"
#include "hgrec/eval.hpp"
#include "hgrec/graph.hpp"
#include "hgrec/policy.hpp"
#include "hgrec/semantic.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hgrec {

struct ModelConfig {
    int d = 64;
    int d_id = 64;
    int layers = 3;
    int k_positive = 1;
    FusionMode fusion_mode = FusionMode::ConcatLinear;
    bool use_semantic = true;
};

// Trainable embeddings (plus fusion parameters when a semantic table is
// attached) and the tape forward through the propagation stack.
class Model {
public:
    Model(int num_users, int num_items, const ModelConfig& cfg,
          const SemanticTable* table, std::uint64_t seed);

    struct Forward {
        std::map<std::string, Var> param_vars;
        LayerStack stack;
        Var z_users;
        Var z_items;
    };
    Forward forward(Tape& tape, const NormalizedAdjacency& adj) const;

    // Plain-value propagation for evaluation and checkpoints.
    std::pair<Matrix, Matrix> final_embeddings(
        const NormalizedAdjacency& adj) const;

    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }
    const ModelConfig& config() const { return cfg_; }

private:
    ModelConfig cfg_;
    const SemanticTable* table_;
    FusionLayer fusion_;
    int num_users_;
    int num_items_;
    ParameterStore params_;
};

// Everything the policy rollout needs to look at, all detached values.
struct TransitionContext {
    const InteractionGraph& graph;
    const Matrix& user0;   // z_u^(0)
    const Matrix& user_k;  // z_u^(k)
    const Matrix& item0;
    const Matrix& item_k;
    const DegreeGroups& user_groups;
    const DegreeGroups& item_groups;
    double user_log_dmax = 1.0;  // ln(1 + max user degree)
    double item_log_dmax = 1.0;
};

struct RolloutOptions {
    bool fixed_tau = false;    // tau not policy-controlled
    double fixed_tau_value = 0.2;
    bool random_neg = false;   // selection not policy-controlled
};

// Samples pools and actions for the given anchors, scores them with the
// rule rewards, and fills group-relative advantages. Deterministic given
// (seed, iter).
std::vector<Transition> sample_transitions(
    const PolicyNetwork& policy, const TransitionContext& ctx,
    const std::vector<int>& user_anchors, const std::vector<int>& item_anchors,
    const HgpoConfig& cfg, const RolloutOptions& opts, std::uint64_t seed,
    std::uint64_t iter, HgpoBatchStats* stats_out = nullptr);

struct PolicyUpdateResult {
    double l_policy = 0.0;  // clipped surrogate (to maximize)
    double entropy = 0.0;
    double l_harm = 0.0;
    double l_hgpo = 0.0;    // total objective (to minimize)
    double grad_norm = 0.0;
};

// One clipped-surrogate update on the transition batch. Old log-probs come
// from the stored actions, so calling this repeatedly on a frozen batch
// optimizes a fixed objective.
PolicyUpdateResult policy_update(PolicyNetwork& policy,
                                 const std::vector<Transition>& batch,
                                 const HgpoConfig& cfg,
                                 bool include_selection, bool include_tau,
                                 bool take_step);

// --- data preparation ---

struct PreparedData {
    IdMaps ids;                    // reindexed to k-core survivors
    InteractionGraph full_graph;   // all surviving edges
    DatasetSplit split;
    InteractionGraph train_graph;
    DegreeGroups user_groups;      // train degrees, K = hgpo.group_count
    DegreeGroups item_groups;
    std::optional<SemanticTable> semantic;
};

// k-core filter, reindex, split, group. `table` (if any) must be indexed
// by the raw interactions' dense item ids; it is remapped to survivors.
PreparedData prepare_data(const RunConfig& cfg, const RawInteractions& raw,
                          const SemanticTable* table);

// Ingest + semantic load from the paths in the config.
PreparedData prepare_from_files(const RunConfig& cfg);

// --- training loop ---

struct IterationRecord {
    int iter = 0;
    int epoch = 0;
    double l_bpr = 0.0;
    double l_struct = 0.0;
    double l_reg = 0.0;
    double l_total = 0.0;
    double l_policy = 0.0;
    double entropy = 0.0;
    double l_harm = 0.0;
    double l_hgpo = 0.0;
    double policy_grad_norm = 0.0;
    double group_mean_variance = 0.0;
    std::map<int, double> group_mean_reward;
    std::map<int, double> mean_tau_per_group;
    double frac_hard = 0.0;   // over selected negatives
    double frac_false = 0.0;
    double frac_easy = 0.0;

    std::string to_json() const;
};

struct TrainOutput {
    EvalReport test_report;        // diagnostics filled in
    EvalReport popularity_report;  // same split, degree-ranked baseline
    double best_val_metric = 0.0;
    int best_epoch = -1;
    int epochs_run = 0;
    Matrix z_users;  // at the restored best checkpoint
    Matrix z_items;
    std::vector<IterationRecord> iterations;
    std::vector<double> epoch_val_metric;
    std::map<std::string, Matrix> model_snapshot;
    std::map<std::string, Matrix> policy_snapshot;
};

TrainOutput train_model(const RunConfig& cfg, const PreparedData& data);

}  // namespace hgrec
