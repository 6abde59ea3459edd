#pragma once
// Interaction ingestion, k-core filtering, train/val/test splitting,
// degree-quantile grouping, and candidate-pool sampling.
//
// All structures here are immutable after construction and safe to share
// across parallel readers.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace hgrec {

using Edge = std::pair<int, int>;  // (user_index, item_index)

struct IdMaps {
    std::vector<std::string> user_ids;  // dense index -> raw id
    std::vector<std::string> item_ids;
    std::unordered_map<std::string, int> user_index;
    std::unordered_map<std::string, int> item_index;
};

struct RawInteractions {
    IdMaps ids;
    std::vector<Edge> edges;  // duplicates collapsed, first-seen order
};

struct InteractionGraph {
    int num_users = 0;
    int num_items = 0;
    std::vector<Edge> edges;
    std::vector<std::vector<int>> user_adjacency;  // sorted item indices
    std::vector<std::vector<int>> item_adjacency;  // sorted user indices
    std::vector<int> user_degree;
    std::vector<int> item_degree;

    static InteractionGraph build(int num_users, int num_items,
                                  const std::vector<Edge>& edges);
    bool user_has_item(int u, int i) const;
};

struct DatasetSplit {
    std::vector<Edge> train_edges;
    std::vector<Edge> val_edges;
    std::vector<Edge> test_edges;
};

struct DegreeGroups {
    int group_count = 0;
    std::vector<int> assignment;     // node -> group id in [0, K)
    std::vector<int> boundaries;     // K-1 nondecreasing degree thresholds
};

// Parse `user<TAB>item[<TAB>timestamp]` lines. Throws on malformed lines
// (message includes the 1-based line number) and on empty files.
RawInteractions ingest_interactions(const std::string& path);

// Iteratively peel users/items with degree < k until fixpoint. Throws
// "k-core eliminated all data" when nothing survives.
std::vector<Edge> apply_k_core(const std::vector<Edge>& edges, int k);

// Per-user stratified split. Users with fewer than 3 edges keep everything
// in train. Deterministic given seed.
DatasetSplit split_edges(const std::vector<Edge>& edges, double train_ratio,
                         double val_ratio, double test_ratio,
                         std::uint64_t seed);

// Equal-frequency grouping by degree; ties broken by node index ascending.
DegreeGroups assign_degree_groups(const std::vector<int>& degrees, int k);

// Up to `pool_size` items the user has not interacted with, sampled
// uniformly without replacement. Fewer candidates than requested -> all.
std::vector<int> sample_candidate_pool(const InteractionGraph& graph,
                                       int anchor_user, int pool_size,
                                       std::uint64_t seed);

// Symmetric pool for item anchors: non-interacted users.
std::vector<int> sample_candidate_pool_item(const InteractionGraph& graph,
                                            int anchor_item, int pool_size,
                                            std::uint64_t seed);

void export_id_maps(const IdMaps& ids, const std::string& user_csv,
                    const std::string& item_csv);
void export_split(const DatasetSplit& split, const std::string& dir);

}  // namespace hgrec
