#include "hgrec/graph.hpp"

#include "hgrec/rng.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

namespace hgrec {

InteractionGraph InteractionGraph::build(int num_users, int num_items,
                                         const std::vector<Edge>& edges) {
    InteractionGraph g;
    g.num_users = num_users;
    g.num_items = num_items;
    g.edges = edges;
    g.user_adjacency.assign(static_cast<std::size_t>(num_users), {});
    g.item_adjacency.assign(static_cast<std::size_t>(num_items), {});
    std::set<Edge> seen;
    for (const Edge& e : edges) {
        if (e.first < 0 || e.first >= num_users || e.second < 0 ||
            e.second >= num_items)
            throw std::invalid_argument("edge index out of range");
        if (!seen.insert(e).second)
            throw std::invalid_argument("duplicate edge in graph build");
        g.user_adjacency[static_cast<std::size_t>(e.first)].push_back(e.second);
        g.item_adjacency[static_cast<std::size_t>(e.second)].push_back(e.first);
    }
    for (auto& adj : g.user_adjacency) std::sort(adj.begin(), adj.end());
    for (auto& adj : g.item_adjacency) std::sort(adj.begin(), adj.end());
    g.user_degree.resize(static_cast<std::size_t>(num_users));
    g.item_degree.resize(static_cast<std::size_t>(num_items));
    for (int u = 0; u < num_users; ++u)
        g.user_degree[static_cast<std::size_t>(u)] =
            static_cast<int>(g.user_adjacency[static_cast<std::size_t>(u)].size());
    for (int i = 0; i < num_items; ++i)
        g.item_degree[static_cast<std::size_t>(i)] =
            static_cast<int>(g.item_adjacency[static_cast<std::size_t>(i)].size());
    return g;
}

bool InteractionGraph::user_has_item(int u, int i) const {
    const auto& adj = user_adjacency[static_cast<std::size_t>(u)];
    return std::binary_search(adj.begin(), adj.end(), i);
}

RawInteractions ingest_interactions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open interactions file: " + path);
    RawInteractions out;
    std::set<Edge> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::size_t tab1 = line.find('\t');
        if (tab1 == std::string::npos || tab1 == 0)
            throw std::runtime_error("parse error at line " +
                                     std::to_string(line_no) +
                                     ": expected user<TAB>item");
        std::size_t tab2 = line.find('\t', tab1 + 1);
        if (tab2 == std::string::npos) tab2 = line.size();
        const std::string user = line.substr(0, tab1);
        const std::string item = line.substr(tab1 + 1, tab2 - tab1 - 1);
        if (item.empty())
            throw std::runtime_error("parse error at line " +
                                     std::to_string(line_no) +
                                     ": missing item id");
        auto [uit, unew] = out.ids.user_index.try_emplace(
            user, static_cast<int>(out.ids.user_ids.size()));
        if (unew) out.ids.user_ids.push_back(user);
        auto [iit, inew] = out.ids.item_index.try_emplace(
            item, static_cast<int>(out.ids.item_ids.size()));
        if (inew) out.ids.item_ids.push_back(item);
        const Edge e{uit->second, iit->second};
        if (seen.insert(e).second) out.edges.push_back(e);
    }
    if (out.edges.empty())
        throw std::runtime_error("interactions file contains no edges: " + path);
    return out;
}

std::vector<Edge> apply_k_core(const std::vector<Edge>& edges, int k) {
    if (k < 1) throw std::invalid_argument("k-core requires k >= 1");
    std::unordered_map<int, int> udeg, ideg;
    for (const Edge& e : edges) {
        ++udeg[e.first];
        ++ideg[e.second];
    }
    std::vector<Edge> current = edges;
    bool changed = true;
    while (changed) {
        changed = false;
        std::vector<Edge> kept;
        kept.reserve(current.size());
        for (const Edge& e : current) {
            if (udeg[e.first] >= k && ideg[e.second] >= k) {
                kept.push_back(e);
            } else {
                changed = true;
            }
        }
        if (changed) {
            udeg.clear();
            ideg.clear();
            for (const Edge& e : kept) {
                ++udeg[e.first];
                ++ideg[e.second];
            }
            current = std::move(kept);
        }
    }
    if (current.empty()) throw std::runtime_error("k-core eliminated all data");
    return current;
}

DatasetSplit split_edges(const std::vector<Edge>& edges, double train_ratio,
                         double val_ratio, double test_ratio,
                         std::uint64_t seed) {
    if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9)
        throw std::invalid_argument("split ratios must sum to 1");
    std::unordered_map<int, std::vector<int>> by_user;  // user -> edge indices
    for (std::size_t i = 0; i < edges.size(); ++i)
        by_user[edges[i].first].push_back(static_cast<int>(i));

    DatasetSplit out;
    std::vector<int> users;
    users.reserve(by_user.size());
    for (const auto& [u, _] : by_user) users.push_back(u);
    std::sort(users.begin(), users.end());
    for (int u : users) {
        auto& idx = by_user[u];
        const std::size_t n = idx.size();
        if (n < 3) {
            for (int i : idx) out.train_edges.push_back(edges[static_cast<std::size_t>(i)]);
            continue;
        }
        auto rng = substream(seed, "split", static_cast<std::uint64_t>(u));
        std::shuffle(idx.begin(), idx.end(), rng);
        const std::size_t n_val = static_cast<std::size_t>(
            std::floor(static_cast<double>(n) * val_ratio));
        const std::size_t n_test = static_cast<std::size_t>(
            std::floor(static_cast<double>(n) * test_ratio));
        std::size_t p = 0;
        for (; p < n - n_val - n_test; ++p)
            out.train_edges.push_back(edges[static_cast<std::size_t>(idx[p])]);
        for (std::size_t j = 0; j < n_val; ++j, ++p)
            out.val_edges.push_back(edges[static_cast<std::size_t>(idx[p])]);
        for (std::size_t j = 0; j < n_test; ++j, ++p)
            out.test_edges.push_back(edges[static_cast<std::size_t>(idx[p])]);
    }
    return out;
}

DegreeGroups assign_degree_groups(const std::vector<int>& degrees, int k) {
    if (k < 1) throw std::invalid_argument("group count must be >= 1");
    const int n = static_cast<int>(degrees.size());
    if (n < k)
        throw std::invalid_argument("fewer nodes than requested groups");
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&degrees](int a, int b) {
        const int da = degrees[static_cast<std::size_t>(a)];
        const int db = degrees[static_cast<std::size_t>(b)];
        return da != db ? da < db : a < b;
    });
    DegreeGroups out;
    out.group_count = k;
    out.assignment.assign(static_cast<std::size_t>(n), 0);
    for (int g = 0; g < k; ++g) {
        const int lo = static_cast<int>(static_cast<std::int64_t>(g) * n / k);
        const int hi = static_cast<int>(static_cast<std::int64_t>(g + 1) * n / k);
        for (int p = lo; p < hi; ++p)
            out.assignment[static_cast<std::size_t>(order[static_cast<std::size_t>(p)])] = g;
        if (g > 0)
            out.boundaries.push_back(
                degrees[static_cast<std::size_t>(order[static_cast<std::size_t>(lo)])]);
    }
    return out;
}

namespace {
std::vector<int> sample_from_complement(const std::vector<int>& interacted,
                                        int universe, int pool_size,
                                        std::mt19937_64& rng) {
    std::vector<int> candidates;
    candidates.reserve(static_cast<std::size_t>(universe) - interacted.size());
    std::size_t p = 0;
    for (int x = 0; x < universe; ++x) {
        if (p < interacted.size() && interacted[p] == x) {
            ++p;
            continue;
        }
        candidates.push_back(x);
    }
    if (static_cast<int>(candidates.size()) <= pool_size) return candidates;
    // partial Fisher-Yates
    for (int j = 0; j < pool_size; ++j) {
        const std::size_t r =
            static_cast<std::size_t>(j) +
            uniform_index(rng, candidates.size() - static_cast<std::size_t>(j));
        std::swap(candidates[static_cast<std::size_t>(j)], candidates[r]);
    }
    candidates.resize(static_cast<std::size_t>(pool_size));
    return candidates;
}
}  // namespace

std::vector<int> sample_candidate_pool(const InteractionGraph& graph,
                                       int anchor_user, int pool_size,
                                       std::uint64_t seed) {
    if (pool_size < 1) throw std::invalid_argument("pool size must be >= 1");
    auto rng = substream(seed, "pool_user", static_cast<std::uint64_t>(anchor_user));
    return sample_from_complement(
        graph.user_adjacency[static_cast<std::size_t>(anchor_user)],
        graph.num_items, pool_size, rng);
}

std::vector<int> sample_candidate_pool_item(const InteractionGraph& graph,
                                            int anchor_item, int pool_size,
                                            std::uint64_t seed) {
    if (pool_size < 1) throw std::invalid_argument("pool size must be >= 1");
    auto rng = substream(seed, "pool_item", static_cast<std::uint64_t>(anchor_item));
    return sample_from_complement(
        graph.item_adjacency[static_cast<std::size_t>(anchor_item)],
        graph.num_users, pool_size, rng);
}

void export_id_maps(const IdMaps& ids, const std::string& user_csv,
                    const std::string& item_csv) {
    std::ofstream u(user_csv), i(item_csv);
    u << "raw_id,dense_index\n";
    for (std::size_t k = 0; k < ids.user_ids.size(); ++k)
        u << ids.user_ids[k] << ',' << k << '\n';
    i << "raw_id,dense_index\n";
    for (std::size_t k = 0; k < ids.item_ids.size(); ++k)
        i << ids.item_ids[k] << ',' << k << '\n';
}

void export_split(const DatasetSplit& split, const std::string& dir) {
    auto dump = [&dir](const std::vector<Edge>& edges, const char* name) {
        std::ofstream out(std::filesystem::path(dir) / name);
        out << "user_index,item_index\n";
        for (const Edge& e : edges) out << e.first << ',' << e.second << '\n';
    };
    dump(split.train_edges, "train_edges.csv");
    dump(split.val_edges, "val_edges.csv");
    dump(split.test_edges, "test_edges.csv");
}

}  // namespace hgrec
