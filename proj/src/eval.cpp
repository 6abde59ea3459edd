#include "hgrec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

namespace hgrec {

const char* const kSimBinLabels[kSimBins] = {"lt_0.2", "0.2_0.5", "0.5_0.8",
                                             "ge_0.8"};

int sim_bin(double s) {
    if (s < 0.2) return 0;
    if (s < 0.5) return 1;
    if (s < 0.8) return 2;
    return 3;
}

double recall_at_k(const std::vector<int>& ranked,
                   const std::set<int>& relevant, int k) {
    if (relevant.empty()) return 0.0;
    int hits = 0;
    const int top = std::min<int>(k, static_cast<int>(ranked.size()));
    for (int r = 0; r < top; ++r)
        if (relevant.count(ranked[static_cast<std::size_t>(r)])) ++hits;
    return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

double ndcg_at_k(const std::vector<int>& ranked,
                 const std::set<int>& relevant, int k) {
    if (relevant.empty()) return 0.0;
    double dcg = 0.0;
    const int top = std::min<int>(k, static_cast<int>(ranked.size()));
    for (int r = 0; r < top; ++r)
        if (relevant.count(ranked[static_cast<std::size_t>(r)]))
            dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    double idcg = 0.0;
    const int ideal = std::min<int>(k, static_cast<int>(relevant.size()));
    for (int r = 0; r < ideal; ++r)
        idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    return dcg / idcg;
}

namespace {

// Ranked non-train items for one user, ties broken by item index.
std::vector<int> rank_items_for_user(const Eigen::RowVectorXd& scores,
                                     const InteractionGraph& train_graph,
                                     int user) {
    std::vector<int> items;
    items.reserve(static_cast<std::size_t>(scores.size()));
    const auto& trained = train_graph.user_adjacency[static_cast<std::size_t>(user)];
    std::size_t p = 0;
    for (int i = 0; i < scores.size(); ++i) {
        if (p < trained.size() && trained[p] == i) {
            ++p;
            continue;
        }
        items.push_back(i);
    }
    std::stable_sort(items.begin(), items.end(), [&scores](int a, int b) {
        if (scores(a) != scores(b)) return scores(a) > scores(b);
        return a < b;
    });
    return items;
}

std::map<int, std::set<int>> edges_by_user(const std::vector<Edge>& edges) {
    std::map<int, std::set<int>> out;
    for (const Edge& e : edges) out[e.first].insert(e.second);
    return out;
}

double bucket_variance(const std::vector<double>& means,
                       const std::vector<int>& population) {
    std::vector<double> present;
    for (std::size_t b = 0; b < means.size(); ++b)
        if (population[b] > 0) present.push_back(means[b]);
    if (present.empty()) return 0.0;
    double m = 0.0;
    for (double x : present) m += x;
    m /= static_cast<double>(present.size());
    double v = 0.0;
    for (double x : present) v += (x - m) * (x - m);
    return v / static_cast<double>(present.size());
}

}  // namespace

EvalReport full_rank_eval(const RankingInput& input, const std::vector<int>& ks,
                          int num_threads) {
    const auto relevant = edges_by_user(input.eval_edges);
    if (relevant.empty())
        throw std::runtime_error("full_rank_eval: no users with eval items");
    std::vector<int> users;
    users.reserve(relevant.size());
    for (const auto& [u, _] : relevant) users.push_back(u);

    // per-user results computed in parallel, reduced in index order
    std::vector<std::map<int, double>> rec(users.size()), ndc(users.size());
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t w = begin; w < end; ++w) {
            const int u = users[w];
            Eigen::RowVectorXd scores =
                input.z_users.row(u) * input.z_items.transpose();
            const std::vector<int> ranked =
                rank_items_for_user(scores, input.train_graph, u);
            for (int k : ks) {
                rec[w][k] = recall_at_k(ranked, relevant.at(u), k);
                ndc[w][k] = ndcg_at_k(ranked, relevant.at(u), k);
            }
        }
    };
    if (num_threads <= 1) {
        work(0, users.size());
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk =
            (users.size() + static_cast<std::size_t>(num_threads) - 1) /
            static_cast<std::size_t>(num_threads);
        for (int t = 0; t < num_threads; ++t) {
            const std::size_t b = static_cast<std::size_t>(t) * chunk;
            const std::size_t e = std::min(users.size(), b + chunk);
            if (b < e) pool.emplace_back(work, b, e);
        }
        for (auto& th : pool) th.join();
    }

    EvalReport report;
    report.evaluated_users = static_cast<int>(users.size());
    for (int k : ks) {
        double r = 0.0, n = 0.0;
        for (std::size_t w = 0; w < users.size(); ++w) {
            r += rec[w][k];
            n += ndc[w][k];
        }
        report.recall[k] = r / static_cast<double>(users.size());
        report.ndcg[k] = n / static_cast<double>(users.size());
    }
    return report;
}

std::vector<double> per_user_ndcg(const RankingInput& input, int k) {
    const auto relevant = edges_by_user(input.eval_edges);
    std::vector<double> out(
        static_cast<std::size_t>(input.train_graph.num_users), 0.0);
    for (const auto& [u, rel] : relevant) {
        Eigen::RowVectorXd scores =
            input.z_users.row(u) * input.z_items.transpose();
        const std::vector<int> ranked =
            rank_items_for_user(scores, input.train_graph, u);
        out[static_cast<std::size_t>(u)] = ndcg_at_k(ranked, rel, k);
    }
    return out;
}

std::vector<double> per_item_ndcg(const RankingInput& input, int k) {
    const auto relevant = edges_by_user(input.eval_edges);
    std::vector<double> credit(
        static_cast<std::size_t>(input.train_graph.num_items), 0.0);
    std::vector<int> counts(
        static_cast<std::size_t>(input.train_graph.num_items), 0);
    for (const auto& [u, rel] : relevant) {
        Eigen::RowVectorXd scores =
            input.z_users.row(u) * input.z_items.transpose();
        const std::vector<int> ranked =
            rank_items_for_user(scores, input.train_graph, u);
        for (int r = 0; r < static_cast<int>(ranked.size()); ++r) {
            const int item = ranked[static_cast<std::size_t>(r)];
            if (!rel.count(item)) continue;
            const std::size_t si = static_cast<std::size_t>(item);
            ++counts[si];
            if (r < k) credit[si] += 1.0 / std::log2(static_cast<double>(r) + 2.0);
        }
    }
    for (std::size_t i = 0; i < credit.size(); ++i)
        if (counts[i] > 0) credit[i] /= static_cast<double>(counts[i]);
    return credit;
}

BucketReport degree_bucket_report(const std::vector<double>& per_node_metric,
                                  const std::vector<bool>& node_evaluated,
                                  const DegreeGroups& groups) {
    BucketReport out;
    out.mean_metric.assign(static_cast<std::size_t>(groups.group_count), 0.0);
    out.population.assign(static_cast<std::size_t>(groups.group_count), 0);
    for (std::size_t n = 0; n < per_node_metric.size(); ++n) {
        if (!node_evaluated[n]) continue;
        const std::size_t g = static_cast<std::size_t>(groups.assignment[n]);
        out.mean_metric[g] += per_node_metric[n];
        ++out.population[g];
    }
    for (std::size_t g = 0; g < out.mean_metric.size(); ++g)
        if (out.population[g] > 0)
            out.mean_metric[g] /= static_cast<double>(out.population[g]);
    out.variance = bucket_variance(out.mean_metric, out.population);
    return out;
}

EvalReport popularity_baseline_eval(const InteractionGraph& train_graph,
                                    const std::vector<Edge>& eval_edges,
                                    const std::vector<int>& ks) {
    // score = train item degree, identical for every user
    Matrix z_items(train_graph.num_items, 1);
    for (int i = 0; i < train_graph.num_items; ++i)
        z_items(i, 0) =
            static_cast<double>(train_graph.item_degree[static_cast<std::size_t>(i)]);
    Matrix z_users = Matrix::Ones(train_graph.num_users, 1);
    RankingInput input{z_users, z_items, train_graph, eval_edges};
    return full_rank_eval(input, ks);
}

namespace {
std::string fmt(double x) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}
void json_array(std::ostringstream& os, const char* key,
                const std::vector<double>& v, bool trailing_comma = true) {
    os << "\"" << key << "\":[";
    for (std::size_t i = 0; i < v.size(); ++i)
        os << (i ? "," : "") << fmt(v[i]);
    os << "]";
    if (trailing_comma) os << ",";
}
}  // namespace

std::string EvalReport::to_json() const {
    std::ostringstream os;
    os << "{";
    os << "\"evaluated_users\":" << evaluated_users << ",";
    os << "\"recall\":{";
    bool first = true;
    for (const auto& [k, v] : recall) {
        os << (first ? "" : ",") << "\"" << k << "\":" << fmt(v);
        first = false;
    }
    os << "},\"ndcg\":{";
    first = true;
    for (const auto& [k, v] : ndcg) {
        os << (first ? "" : ",") << "\"" << k << "\":" << fmt(v);
        first = false;
    }
    os << "},";
    json_array(os, "user_bucket_ndcg", user_bucket_ndcg);
    json_array(os, "item_bucket_ndcg", item_bucket_ndcg);
    os << "\"user_bucket_variance\":" << fmt(user_bucket_variance) << ",";
    os << "\"item_bucket_variance\":" << fmt(item_bucket_variance) << ",";
    json_array(os, "mean_tau_per_user_bucket", mean_tau_per_user_bucket);
    json_array(os, "selected_sim_histogram", selected_sim_histogram);
    json_array(os, "random_sim_histogram", random_sim_histogram);
    json_array(os, "group_reward_variance_trace", group_reward_variance_trace,
               false);
    os << "}";
    return os.str();
}

std::string EvalReport::to_text() const {
    std::ostringstream os;
    os << "evaluated users: " << evaluated_users << "\n";
    char buf[128];
    for (const auto& [k, v] : recall) {
        std::snprintf(buf, sizeof(buf), "recall@%-3d %.6f\n", k, v);
        os << buf;
    }
    for (const auto& [k, v] : ndcg) {
        std::snprintf(buf, sizeof(buf), "ndcg@%-5d %.6f\n", k, v);
        os << buf;
    }
    auto row = [&os, &buf](const char* name, const std::vector<double>& v) {
        if (v.empty()) return;
        os << name << ":";
        for (double x : v) {
            std::snprintf(buf, sizeof(buf), " %.4f", x);
            os << buf;
        }
        os << "\n";
    };
    row("ndcg@20 by user bucket", user_bucket_ndcg);
    row("ndcg@20 by item bucket", item_bucket_ndcg);
    row("mean tau by user bucket", mean_tau_per_user_bucket);
    row("selected sim histogram ", selected_sim_histogram);
    row("random sim histogram   ", random_sim_histogram);
    return os.str();
}

}  // namespace hgrec
