#include "hgrec/synth.hpp"

#include "hgrec/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>
#include <vector>

namespace hgrec {

namespace {

// Popularity ranks permuted so degree is independent of cluster.
std::vector<double> popularity_weights(const SynthConfig& cfg) {
    std::vector<int> rank(static_cast<std::size_t>(cfg.num_items));
    for (int i = 0; i < cfg.num_items; ++i)
        rank[static_cast<std::size_t>(i)] = i;
    std::mt19937_64 rng = substream(cfg.seed, "pop_perm");
    std::shuffle(rank.begin(), rank.end(), rng);
    std::vector<double> w(static_cast<std::size_t>(cfg.num_items));
    for (int i = 0; i < cfg.num_items; ++i)
        w[static_cast<std::size_t>(i)] = std::pow(
            static_cast<double>(rank[static_cast<std::size_t>(i)] + 1),
            -cfg.skew);
    return w;
}

int weighted_pick(const std::vector<double>& weights,
                  const std::vector<int>& candidates, std::mt19937_64& rng) {
    double total = 0.0;
    for (int c : candidates) total += weights[static_cast<std::size_t>(c)];
    double x = uniform01(rng) * total;
    for (int c : candidates) {
        x -= weights[static_cast<std::size_t>(c)];
        if (x <= 0.0) return c;
    }
    return candidates.back();
}

}  // namespace

RawInteractions synth_interactions(const SynthConfig& cfg) {
    if (cfg.num_users < 1 || cfg.num_items < 1 || cfg.clusters < 1 ||
        cfg.min_interactions < 1 || cfg.max_interactions < cfg.min_interactions)
        throw std::runtime_error("synth: invalid configuration");
    RawInteractions raw;
    char buf[32];
    for (int u = 0; u < cfg.num_users; ++u) {
        std::snprintf(buf, sizeof(buf), "u%d", u);
        raw.ids.user_ids.emplace_back(buf);
        raw.ids.user_index[buf] = u;
    }
    for (int i = 0; i < cfg.num_items; ++i) {
        std::snprintf(buf, sizeof(buf), "i%d", i);
        raw.ids.item_ids.emplace_back(buf);
        raw.ids.item_index[buf] = i;
    }

    const std::vector<double> weights = popularity_weights(cfg);
    std::vector<std::vector<int>> cluster_items(
        static_cast<std::size_t>(cfg.clusters));
    std::vector<int> all_items(static_cast<std::size_t>(cfg.num_items));
    for (int i = 0; i < cfg.num_items; ++i) {
        cluster_items[static_cast<std::size_t>(i % cfg.clusters)].push_back(i);
        all_items[static_cast<std::size_t>(i)] = i;
    }

    for (int u = 0; u < cfg.num_users; ++u) {
        std::mt19937_64 rng = substream(cfg.seed, "user",
                                        static_cast<std::uint64_t>(u));
        const int span = cfg.max_interactions - cfg.min_interactions;
        // square the draw so most users sit near the minimum
        const double q = uniform01(rng);
        const int target = cfg.min_interactions +
                           static_cast<int>(std::floor(span * q * q + 0.5));
        const std::vector<int>& home =
            cluster_items[static_cast<std::size_t>(u % cfg.clusters)];
        std::set<int> chosen;
        int attempts = 0;
        while (static_cast<int>(chosen.size()) < target &&
               attempts < 40 * target) {
            ++attempts;
            const bool in_home = !home.empty() && uniform01(rng) < cfg.affinity;
            chosen.insert(weighted_pick(weights, in_home ? home : all_items,
                                        rng));
        }
        for (int i : chosen) raw.edges.emplace_back(u, i);
    }
    return raw;
}

SemanticTable synth_semantic_for(const SynthConfig& cfg) {
    return synth_semantic_table(cfg.num_items, cfg.semantic_dim,
                                hash_combine(cfg.seed, "semantic"),
                                cfg.clusters);
}

void write_interactions_tsv(const RawInteractions& raw,
                            const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("synth: cannot write '" + path + "'");
    for (const Edge& e : raw.edges)
        out << raw.ids.user_ids[static_cast<std::size_t>(e.first)] << '\t'
            << raw.ids.item_ids[static_cast<std::size_t>(e.second)] << '\n';
}

void write_semantic_tsv(const SemanticTable& table, const IdMaps& ids,
                        const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("synth: cannot write '" + path + "'");
    out << "dim=" << table.dimension << '\n';
    char buf[40];
    for (std::size_t i = 0; i < ids.item_ids.size(); ++i) {
        if (!table.covered[i]) continue;
        out << ids.item_ids[i] << '\t';
        for (int c = 0; c < table.dimension; ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g",
                          table.vectors(static_cast<int>(i), c));
            out << (c ? "," : "") << buf;
        }
        out << '\n';
    }
}

}  // namespace hgrec
