#pragma once
// Independent reference implementations used only by tests. These are
// deliberately naive (dense matrices, exhaustive loops) so they cannot
// share bugs with the library code.

#include "hgrec/graph.hpp"
#include "hgrec/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <vector>

namespace oracle {

using hgrec::Edge;
using hgrec::Matrix;

// Dense symmetric-normalized adjacency over the (users+items) node set.
inline Matrix dense_normalized_adjacency(int num_users, int num_items,
                                         const std::vector<Edge>& edges) {
    const int n = num_users + num_items;
    Matrix a = Matrix::Zero(n, n);
    std::vector<double> deg(static_cast<std::size_t>(n), 0.0);
    for (const Edge& e : edges) {
        ++deg[static_cast<std::size_t>(e.first)];
        ++deg[static_cast<std::size_t>(num_users + e.second)];
    }
    for (const Edge& e : edges) {
        const int u = e.first;
        const int i = num_users + e.second;
        const double c = 1.0 / std::sqrt(deg[static_cast<std::size_t>(u)] *
                                         deg[static_cast<std::size_t>(i)]);
        a(u, i) = c;
        a(i, u) = c;
    }
    return a;
}

// Central finite differences of a scalar function of one matrix input.
inline Matrix finite_difference(
    const std::function<double(const Matrix&)>& f, Matrix x,
    double h = 1e-5) {
    Matrix g(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double keep = x(i);
        x(i) = keep + h;
        const double hi = f(x);
        x(i) = keep - h;
        const double lo = f(x);
        x(i) = keep;
        g(i) = (hi - lo) / (2.0 * h);
    }
    return g;
}

inline double max_rel_error(const Matrix& got, const Matrix& want) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < got.size(); ++i) {
        const double scale = std::max({std::abs(got(i)), std::abs(want(i)),
                                       1e-8});
        worst = std::max(worst, std::abs(got(i) - want(i)) / scale);
    }
    return worst;
}

// Brute-force all-ranking metrics for one user.
struct UserMetrics {
    double recall = 0.0;
    double ndcg = 0.0;
};

inline UserMetrics brute_force_metrics(const Matrix& z_users,
                                       const Matrix& z_items, int user,
                                       const std::set<int>& train_items,
                                       const std::set<int>& relevant, int k) {
    struct Scored {
        double s;
        int item;
    };
    std::vector<Scored> all;
    for (int i = 0; i < z_items.rows(); ++i) {
        if (train_items.count(i)) continue;
        all.push_back({z_users.row(user).dot(z_items.row(i)), i});
    }
    std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
        if (a.s != b.s) return a.s > b.s;
        return a.item < b.item;
    });
    UserMetrics m;
    double dcg = 0.0;
    int hits = 0;
    for (int r = 0; r < std::min<int>(k, static_cast<int>(all.size())); ++r) {
        if (relevant.count(all[static_cast<std::size_t>(r)].item)) {
            ++hits;
            dcg += 1.0 / std::log2(r + 2.0);
        }
    }
    double idcg = 0.0;
    for (int r = 0; r < std::min<int>(k, static_cast<int>(relevant.size()));
         ++r)
        idcg += 1.0 / std::log2(r + 2.0);
    m.recall = relevant.empty()
                   ? 0.0
                   : static_cast<double>(hits) /
                         static_cast<double>(relevant.size());
    m.ndcg = idcg > 0.0 ? dcg / idcg : 0.0;
    return m;
}

// Reward rules written as literal branch-by-branch transcriptions.
struct RewardParams {
    double theta_fn = 0.8, theta_easy = 0.5, theta_fp = 0.8,
           theta_easy_low = 0.2;
    double w1 = 1.0, w2 = 1.0, w3 = 1.0, w4 = 0.5;
};

inline double negative_reward_oracle(double sim0, double simk,
                                     const RewardParams& p) {
    double r = 0.0;
    if (sim0 > p.theta_easy && sim0 < p.theta_fn && simk < p.theta_fp)
        r += p.w1;
    if (sim0 >= p.theta_fn)
        r -= p.w2;
    else if (simk >= p.theta_fp)
        r -= p.w3;
    if (sim0 <= p.theta_easy_low) r -= p.w4;
    return r;
}

// Naive k-core peel: recompute degrees from scratch on every pass.
inline std::vector<Edge> k_core_oracle(std::vector<Edge> edges, int k) {
    bool changed = true;
    while (changed) {
        changed = false;
        std::map<int, int> du, di;
        for (const Edge& e : edges) {
            ++du[e.first];
            ++di[e.second];
        }
        std::vector<Edge> keep;
        for (const Edge& e : edges)
            if (du[e.first] >= k && di[e.second] >= k) keep.push_back(e);
        if (keep.size() != edges.size()) changed = true;
        edges = std::move(keep);
    }
    return edges;
}

// Sort-and-slice degree grouping.
inline std::vector<int> degree_groups_oracle(const std::vector<int>& degrees,
                                             int k) {
    const int n = static_cast<int>(degrees.size());
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&degrees](int a, int b) {
        if (degrees[static_cast<std::size_t>(a)] !=
            degrees[static_cast<std::size_t>(b)])
            return degrees[static_cast<std::size_t>(a)] <
                   degrees[static_cast<std::size_t>(b)];
        return a < b;
    });
    std::vector<int> out(static_cast<std::size_t>(n));
    for (int pos = 0; pos < n; ++pos) {
        int g = 0;
        for (int cand = k - 1; cand >= 0; --cand)
            if (pos >= cand * n / k) {
                g = cand;
                break;
            }
        out[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])] = g;
    }
    return out;
}

}  // namespace oracle
