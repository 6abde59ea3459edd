#pragma once
// HGPO: policy network over hybrid actions (negative selection +
// temperature), rule-based rewards, group-relative advantages, clipped
// surrogate with entropy and cross-group coordination terms.

#include "hgrec/optim.hpp"
#include "hgrec/tensor.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace hgrec {

struct HgpoConfig {
    // reward thresholds and weights
    double theta_fn = 0.8;
    double theta_easy = 0.5;
    double theta_fp = 0.8;
    double theta_easy_low = 0.2;
    double w1 = 1.0, w2 = 1.0, w3 = 1.0, w4 = 0.5, w5 = 1.2;
    // objective
    double clip_eps = 0.2;
    double c1 = 0.2;
    double lambda_harm = 0.5;
    bool entropy_bonus = true;  // false -> literal +c1*S sign
    // action space
    int num_negatives = 10;  // M
    int pool_size = 0;       // 0 -> min(1024, ceil(0.10 * num_items))
    int group_count = 5;     // K, per node kind
    double tau_min = 0.05;
    double tau_max = 1.0;
    double sigma_min = 0.05;
    double sigma_max = 0.15;  // tau range is bounded, so sigma is too
    // policy network
    int hidden_width = 128;
    double policy_lr = 1e-4;

    void validate() const;
    int resolved_pool_size(int num_items) const;
};

struct PolicyState {
    Eigen::RowVectorXd anchor;    // z^(0) view, detached
    Eigen::RowVectorXd positive;  // z^(k) view, detached
    Matrix pool;                  // C x d candidate z^(k) views, detached
    std::vector<int> pool_node_indices;
    double degree_feature = 0.0;  // ln(1+d) / ln(1+d_max)
    int degree = 0;
    int group = 0;                // user groups [0,K), item groups [K,2K)
    int anchor_index = 0;
    bool is_user = true;
};

struct PolicyAction {
    std::vector<int> selected;          // distinct positions into the pool
    std::vector<double> step_logprobs;  // sequential renormalized softmax
    double tau = 0.0;                   // clamped sample
    double tau_raw = 0.0;               // unclamped Gaussian draw
    double mu = 0.0;
    double log_sigma = 0.0;
    double selection_logprob = 0.0;
    double gauss_logprob = 0.0;  // unclamped density at tau_raw
    double total_logprob = 0.0;
};

struct RewardBreakdown {
    std::vector<double> hard;   // per selected negative
    std::vector<double> false_neg;
    std::vector<double> easy;
    double negatives_total = 0.0;  // R_t
    double tau_reward = 0.0;       // R_tau
    double total = 0.0;            // r_t
};

struct Transition {
    PolicyState state;
    PolicyAction action;
    RewardBreakdown reward;
    double advantage = 0.0;
};

struct HgpoBatchStats {
    std::map<int, double> group_mean_reward;  // only groups present in batch
    double group_mean_variance = 0.0;         // population variance
};

// --- rewards (plain doubles; views are detached by construction) ---

double cosine_similarity(const Eigen::RowVectorXd& a,
                         const Eigen::RowVectorXd& b);  // zero-norm -> 0
double t_ideal(double degree);  // 1 / (1 + ln(1 + d))
double reward_temperature(double tau, double degree, double w5);

// Per-negative rule rewards; negatives are rows of `negatives`.
RewardBreakdown reward_negatives(const Eigen::RowVectorXd& anchor0,
                                 const Eigen::RowVectorXd& anchor_k,
                                 const Matrix& negatives,
                                 const HgpoConfig& cfg);

// Bounds [R_min, R_max] on the total transition reward implied by the
// config and the maximum node degree.
std::pair<double, double> reward_bounds(const HgpoConfig& cfg,
                                        double max_degree);

// --- group statistics ---

std::map<int, double> group_mean_rewards(const std::vector<Transition>& batch);
double relative_advantage(double reward, double group_mean);
// Fills Transition::advantage and returns the batch stats.
HgpoBatchStats compute_advantages(std::vector<Transition>& batch);

// --- policy network ---

class PolicyNetwork {
public:
    PolicyNetwork(int embed_dim, const HgpoConfig& cfg,
                  std::uint64_t init_seed = 0);

    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }

    struct PlainOutput {
        Matrix logits;  // C x 1
        double mu = 0.0;
        double log_sigma = 0.0;  // clamped to [ln sigma_min, ln sigma_max]
    };
    PlainOutput forward_plain(const PolicyState& state) const;

    // Tape forward for a whole batch of states; the i-th result exposes the
    // candidate logits (C_i x 1) plus mu / log_sigma nodes.
    struct TapeOutput {
        std::vector<Var> logits;
        std::vector<Var> mu;
        std::vector<Var> log_sigma;
        std::vector<Var> param_vars;            // aligned with param_names
        std::vector<std::string> param_names;
    };
    TapeOutput forward_tape(Tape& tape,
                            const std::vector<PolicyState>& states) const;

    // Sequential sampling without replacement + clamped Gaussian tau.
    PolicyAction sample_action(const PlainOutput& out, int num_negatives,
                               std::mt19937_64& rng) const;

    // Log-probability of `action` under the logits/mu/log_sigma nodes,
    // recorded on the tape (for the surrogate ratio). The include flags
    // support the fixed-tau / random-negative ablations where one action
    // component is not policy-controlled.
    Var action_logprob(Tape& tape, Var logits, Var mu, Var log_sigma,
                       const PolicyAction& action,
                       bool include_selection = true,
                       bool include_tau = true) const;

    // H_neg of the first-step softmax plus H_temp of the Gaussian.
    Var entropy(Tape& tape, Var logits, Var log_sigma,
                bool include_selection = true, bool include_tau = true) const;

    // [anchor | positive | candidate (or pool mean) | degree feature |
    //  sim(anchor, candidate) | sim(positive, candidate)]
    int embed_dim() const { return embed_dim_; }
    int feature_dim() const { return 3 * embed_dim_ + 3; }

private:
    Matrix feature_matrix(const PolicyState& state) const;
    int embed_dim_;
    HgpoConfig cfg_;
    ParameterStore params_;
};

// --- objective terms (recorded on the tape) ---

// mean_t min(ratio * A, clip(ratio, 1-eps, 1+eps) * A); ratio from
// exp(new_logprob - old_logprob).
Var policy_surrogate(Tape& tape, const std::vector<Var>& new_logprobs,
                     const std::vector<double>& old_logprobs,
                     const std::vector<double>& advantages, double clip_eps);

// Batch-mean entropy given per-transition entropy nodes.
Var entropy_term(Tape& tape, const std::vector<Var>& entropies);

// Value: lambda_harm * Var_g[group mean reward]. Gradient: score-function
// surrogate through the new log-probs (the rule rewards themselves are
// not differentiable).
Var harm_loss(Tape& tape, const std::vector<Var>& new_logprobs,
              const std::vector<int>& groups,
              const std::vector<double>& rewards, double lambda_harm);

// Plain value of the coordination penalty (for reporting / tests).
double harm_loss_value(const std::map<int, double>& group_means,
                       double lambda_harm);

// Default mode: -L_policy - c1*S + L_harm. entropy_bonus=false flips the
// entropy sign to the literal +c1*S.
Var hgpo_objective(Tape& tape, Var l_policy, Var entropy, Var l_harm,
                   double c1, bool entropy_bonus);

}  // namespace hgrec
