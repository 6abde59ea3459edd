#pragma once
// All-ranking Top-K evaluation, degree-bucket breakdowns, and training
// diagnostics (temperature-vs-degree tables, similarity histograms).

#include "hgrec/graph.hpp"
#include "hgrec/tensor.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace hgrec {

double recall_at_k(const std::vector<int>& ranked,
                   const std::set<int>& relevant, int k);
double ndcg_at_k(const std::vector<int>& ranked,
                 const std::set<int>& relevant, int k);

// Similarity histogram bin edges mirror the reward thresholds:
// [<0.2, 0.2-0.5, 0.5-0.8, >=0.8]
inline constexpr int kSimBins = 4;
int sim_bin(double similarity);
extern const char* const kSimBinLabels[kSimBins];

struct EvalReport {
    std::map<int, double> recall;  // K -> value
    std::map<int, double> ndcg;
    int evaluated_users = 0;
    // degree-bucket breakdown (ndcg@20)
    std::vector<double> user_bucket_ndcg;
    std::vector<double> item_bucket_ndcg;
    double user_bucket_variance = 0.0;
    double item_bucket_variance = 0.0;
    // diagnostics
    std::vector<double> mean_tau_per_user_bucket;
    std::vector<double> selected_sim_histogram;  // fractions, sum 1
    std::vector<double> random_sim_histogram;
    std::vector<double> group_reward_variance_trace;

    std::string to_json() const;
    std::string to_text() const;
};

struct RankingInput {
    const Matrix& z_users;
    const Matrix& z_items;
    const InteractionGraph& train_graph;           // masks train items
    const std::vector<Edge>& eval_edges;           // val or test edges
};

// Per-user all-ranking metrics averaged over users with >= 1 eval item.
// Ties broken by item index ascending. `num_threads` only affects wall
// time; per-user results are reduced in index order.
EvalReport full_rank_eval(const RankingInput& input,
                          const std::vector<int>& ks, int num_threads = 1);

// Per-user metric values (ndcg@20 by default), for bucket reports.
std::vector<double> per_user_ndcg(const RankingInput& input, int k);
// Item-side credit: for each test edge, the item earns 1/log2(rank+1) if
// ranked within k for that user; per-item mean over its test edges.
std::vector<double> per_item_ndcg(const RankingInput& input, int k);

struct BucketReport {
    std::vector<double> mean_metric;  // per bucket; NaN-free (empty -> 0)
    std::vector<int> population;
    double variance = 0.0;  // population variance over non-empty buckets
};
BucketReport degree_bucket_report(const std::vector<double>& per_node_metric,
                                  const std::vector<bool>& node_evaluated,
                                  const DegreeGroups& groups);

// Popularity baseline: rank items by train degree (ties by index).
EvalReport popularity_baseline_eval(const InteractionGraph& train_graph,
                                    const std::vector<Edge>& eval_edges,
                                    const std::vector<int>& ks);

}  // namespace hgrec
