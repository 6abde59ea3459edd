#pragma once
// LightGCN-style propagation over the bipartite graph plus layer
// aggregation. Propagation is recorded on the tape so gradients flow back
// to the initial embeddings.

#include "hgrec/graph.hpp"
#include "hgrec/tensor.hpp"

#include <vector>

namespace hgrec {

// Symmetric-normalized bipartite adjacency. Each edge carries
// 1 / sqrt(deg(u) * deg(i)); degree-0 nodes produce zero rows.
struct NormalizedAdjacency {
    int num_users = 0;
    int num_items = 0;
    std::vector<Edge> edges;
    std::vector<double> coeff;  // per edge

    static NormalizedAdjacency build(const InteractionGraph& graph);

    // out[u] = sum_{i in N(u)} coeff * items.row(i)
    Matrix propagate_to_users(const Matrix& items) const;
    Matrix propagate_to_items(const Matrix& users) const;
};

struct LayerStack {
    std::vector<Var> user_layers;  // z_u^(0..L)
    std::vector<Var> item_layers;
    std::vector<double> alpha;     // layer weights, sum to 1
};

// Single propagation step, recorded on the tape.
std::pair<Var, Var> propagate_layer(Tape& tape, const NormalizedAdjacency& adj,
                                    Var users, Var items);

// Run L layers from the initial embeddings. alpha defaults to 1/(L+1).
LayerStack run_backbone(Tape& tape, const NormalizedAdjacency& adj, Var user0,
                        Var item0, int num_layers,
                        std::vector<double> alpha = {});

// Weighted sum over layers -> final representations.
std::pair<Var, Var> aggregate_layers(Tape& tape, const LayerStack& stack);

inline double score(const Matrix& z_u, int u, const Matrix& z_i, int i) {
    return z_u.row(u).dot(z_i.row(i));
}

// CSV export `node_kind,node_id,v1..vd` at 9 significant digits.
void export_embeddings(const Matrix& z_u, const Matrix& z_i,
                       const std::string& path);

}  // namespace hgrec
