#include "hgrec/backbone.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace hgrec {

NormalizedAdjacency NormalizedAdjacency::build(const InteractionGraph& graph) {
    NormalizedAdjacency adj;
    adj.num_users = graph.num_users;
    adj.num_items = graph.num_items;
    adj.edges = graph.edges;
    adj.coeff.reserve(graph.edges.size());
    for (const Edge& e : graph.edges) {
        const double du = graph.user_degree[static_cast<std::size_t>(e.first)];
        const double di = graph.item_degree[static_cast<std::size_t>(e.second)];
        adj.coeff.push_back(1.0 / std::sqrt(du * di));
    }
    return adj;
}

Matrix NormalizedAdjacency::propagate_to_users(const Matrix& items) const {
    Matrix out = Matrix::Zero(num_users, items.cols());
    for (std::size_t k = 0; k < edges.size(); ++k)
        out.row(edges[k].first) += coeff[k] * items.row(edges[k].second);
    return out;
}

Matrix NormalizedAdjacency::propagate_to_items(const Matrix& users) const {
    Matrix out = Matrix::Zero(num_items, users.cols());
    for (std::size_t k = 0; k < edges.size(); ++k)
        out.row(edges[k].second) += coeff[k] * users.row(edges[k].first);
    return out;
}

std::pair<Var, Var> propagate_layer(Tape& tape, const NormalizedAdjacency& adj,
                                    Var users, Var items) {
    // copies: creating nodes below may reallocate the tape's storage
    const Matrix u = tape.value(users);
    const Matrix i = tape.value(items);
    if (u.rows() != adj.num_users || i.rows() != adj.num_items ||
        u.cols() != i.cols())
        shape_error("propagate_layer", u, i);

    // user update reads items; its backward scatters into the item grad
    Var next_users = tape.make_node(
        "propagate_to_users", adj.propagate_to_users(i),
        [&adj, items](Tape& t, const Matrix& g) {
            t.accumulate_grad(items, adj.propagate_to_items(g));
        });
    Var next_items = tape.make_node(
        "propagate_to_items", adj.propagate_to_items(u),
        [&adj, users](Tape& t, const Matrix& g) {
            t.accumulate_grad(users, adj.propagate_to_users(g));
        });
    return {next_users, next_items};
}

LayerStack run_backbone(Tape& tape, const NormalizedAdjacency& adj, Var user0,
                        Var item0, int num_layers, std::vector<double> alpha) {
    LayerStack stack;
    if (alpha.empty())
        alpha.assign(static_cast<std::size_t>(num_layers) + 1,
                     1.0 / (num_layers + 1));
    if (static_cast<int>(alpha.size()) != num_layers + 1)
        throw std::invalid_argument("layer weights must have L+1 entries");
    stack.alpha = std::move(alpha);
    stack.user_layers.push_back(user0);
    stack.item_layers.push_back(item0);
    for (int l = 0; l < num_layers; ++l) {
        auto [nu, ni] = propagate_layer(tape, adj, stack.user_layers.back(),
                                        stack.item_layers.back());
        stack.user_layers.push_back(nu);
        stack.item_layers.push_back(ni);
    }
    return stack;
}

std::pair<Var, Var> aggregate_layers(Tape& tape, const LayerStack& stack) {
    Var zu = tape.scale(stack.user_layers[0], stack.alpha[0]);
    Var zi = tape.scale(stack.item_layers[0], stack.alpha[0]);
    for (std::size_t l = 1; l < stack.user_layers.size(); ++l) {
        zu = tape.add(zu, tape.scale(stack.user_layers[l], stack.alpha[l]));
        zi = tape.add(zi, tape.scale(stack.item_layers[l], stack.alpha[l]));
    }
    return {zu, zi};
}

void export_embeddings(const Matrix& z_u, const Matrix& z_i,
                       const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open embedding export: " + path);
    char buf[32];
    auto dump = [&out, &buf](const Matrix& z, const char* kind) {
        for (Eigen::Index r = 0; r < z.rows(); ++r) {
            out << kind << ',' << r;
            for (Eigen::Index c = 0; c < z.cols(); ++c) {
                std::snprintf(buf, sizeof(buf), "%.9g", z(r, c));
                out << ',' << buf;
            }
            out << '\n';
        }
    };
    out << "node_kind,node_id";
    for (Eigen::Index c = 0; c < z_u.cols(); ++c) out << ",v" << (c + 1);
    out << '\n';
    dump(z_u, "user");
    dump(z_i, "item");
}

}  // namespace hgrec
