#include "hgrec/trainer.hpp"

#include "hgrec/losses.hpp"
#include "hgrec/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace hgrec {

namespace {

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", x);
    return buf;
}

Matrix gaussian_matrix(int rows, int cols, double sigma, std::mt19937_64 rng) {
    Matrix m(rows, cols);
    for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) m(r, c) = sigma * gaussian(rng);
    return m;
}

}  // namespace

// --- Model ---

Model::Model(int num_users, int num_items, const ModelConfig& cfg,
             const SemanticTable* table, std::uint64_t seed)
    : cfg_(cfg),
      table_(cfg.use_semantic ? table : nullptr),
      num_users_(num_users),
      num_items_(num_items) {
    if (cfg_.use_semantic && table_ == nullptr)
        throw std::runtime_error("model: use_semantic set but no table given");
    if (!cfg_.use_semantic && cfg_.d_id != cfg_.d)
        throw std::runtime_error(
            "model: without fusion the ID dimension must equal d");
    params_.add("emb.user", gaussian_matrix(num_users, cfg_.d, 0.1,
                                            substream(seed, "emb_user")));
    params_.add("emb.item", gaussian_matrix(num_items, cfg_.d_id, 0.1,
                                            substream(seed, "emb_item")));
    if (table_) {
        fusion_.mode = cfg_.fusion_mode;
        fusion_.d_id = cfg_.d_id;
        fusion_.d_c = table_->dimension;
        fusion_.d_out = cfg_.d;
        fusion_.init_params(params_, hash_combine(seed, "fusion"));
    }
}

Model::Forward Model::forward(Tape& tape, const NormalizedAdjacency& adj) const {
    Forward fwd;
    for (const auto& [name, value] : params_.values())
        fwd.param_vars[name] = tape.leaf(value);
    Var user0 = fwd.param_vars.at("emb.user");
    Var item0 = fwd.param_vars.at("emb.item");
    if (table_) {
        std::vector<Var> fusion_params;
        for (const std::string& name : fusion_.param_names())
            fusion_params.push_back(fwd.param_vars.at(name));
        item0 = fusion_.fuse(tape, item0, *table_, fusion_params);
    }
    fwd.stack = run_backbone(tape, adj, user0, item0, cfg_.layers);
    auto [zu, zi] = aggregate_layers(tape, fwd.stack);
    fwd.z_users = zu;
    fwd.z_items = zi;
    return fwd;
}

std::pair<Matrix, Matrix> Model::final_embeddings(
    const NormalizedAdjacency& adj) const {
    Tape tape;
    Forward fwd = forward(tape, adj);
    return {tape.value(fwd.z_users), tape.value(fwd.z_items)};
}

// --- rollouts ---

std::vector<Transition> sample_transitions(
    const PolicyNetwork& policy, const TransitionContext& ctx,
    const std::vector<int>& user_anchors, const std::vector<int>& item_anchors,
    const HgpoConfig& cfg, const RolloutOptions& opts, std::uint64_t seed,
    std::uint64_t iter, HgpoBatchStats* stats_out) {
    std::vector<Transition> batch;
    const std::uint64_t pool_seed = hash_combine(seed, "pool", iter);
    const std::uint64_t action_seed = hash_combine(seed, "action", iter);

    auto roll = [&](int node, bool is_user) {
        const Matrix& own0 = is_user ? ctx.user0 : ctx.item0;
        const Matrix& own_k = is_user ? ctx.user_k : ctx.item_k;
        const Matrix& other_k = is_user ? ctx.item_k : ctx.user_k;
        const int other_count = is_user ? ctx.graph.num_items
                                        : ctx.graph.num_users;
        const int pool_size = cfg.resolved_pool_size(other_count);
        const std::uint64_t node_seed =
            hash_combine(pool_seed, is_user ? "u" : "i",
                         static_cast<std::uint64_t>(node));
        const std::vector<int> pool_indices =
            is_user ? sample_candidate_pool(ctx.graph, node, pool_size,
                                            node_seed)
                    : sample_candidate_pool_item(ctx.graph, node, pool_size,
                                                 node_seed);
        const int m = std::min<int>(cfg.num_negatives,
                                    static_cast<int>(pool_indices.size()));
        if (m < 1) return;

        Transition t;
        t.state.anchor = own0.row(node);
        t.state.positive = own_k.row(node);
        t.state.pool.resize(static_cast<int>(pool_indices.size()),
                            other_k.cols());
        for (std::size_t r = 0; r < pool_indices.size(); ++r)
            t.state.pool.row(static_cast<int>(r)) =
                other_k.row(pool_indices[r]);
        t.state.pool_node_indices = pool_indices;
        t.state.degree = is_user
                             ? ctx.graph.user_degree[static_cast<std::size_t>(node)]
                             : ctx.graph.item_degree[static_cast<std::size_t>(node)];
        t.state.degree_feature =
            std::log1p(static_cast<double>(t.state.degree)) /
            (is_user ? ctx.user_log_dmax : ctx.item_log_dmax);
        t.state.group = is_user
                            ? ctx.user_groups.assignment[static_cast<std::size_t>(node)]
                            : cfg.group_count +
                                  ctx.item_groups.assignment[static_cast<std::size_t>(node)];
        t.state.anchor_index = node;
        t.state.is_user = is_user;

        std::mt19937_64 rng = substream(action_seed, is_user ? "au" : "ai",
                                        static_cast<std::uint64_t>(node));
        const PolicyNetwork::PlainOutput out = policy.forward_plain(t.state);
        if (opts.random_neg) {
            std::vector<int> positions(pool_indices.size());
            for (std::size_t p = 0; p < positions.size(); ++p)
                positions[p] = static_cast<int>(p);
            for (int j = 0; j < m; ++j) {
                const std::size_t pick =
                    static_cast<std::size_t>(j) +
                    uniform_index(rng, positions.size() -
                                           static_cast<std::size_t>(j));
                std::swap(positions[static_cast<std::size_t>(j)],
                          positions[pick]);
            }
            t.action.selected.assign(positions.begin(),
                                     positions.begin() + m);
            t.action.mu = out.mu;
            t.action.log_sigma = out.log_sigma;
            const double sigma = std::exp(out.log_sigma);
            t.action.tau_raw = out.mu + sigma * gaussian(rng);
            t.action.tau =
                std::clamp(t.action.tau_raw, cfg.tau_min, cfg.tau_max);
            const double z = (t.action.tau_raw - out.mu) / sigma;
            t.action.gauss_logprob =
                -0.5 * z * z - out.log_sigma - 0.5 * std::log(2.0 * M_PI);
            t.action.selection_logprob = 0.0;
            t.action.total_logprob = t.action.gauss_logprob;
        } else {
            t.action = policy.sample_action(out, m, rng);
        }
        if (opts.fixed_tau) {
            t.action.tau = opts.fixed_tau_value;
            t.action.tau_raw = opts.fixed_tau_value;
            t.action.gauss_logprob = 0.0;
            t.action.total_logprob = t.action.selection_logprob;
        }

        Matrix negatives(m, other_k.cols());
        for (int j = 0; j < m; ++j)
            negatives.row(j) = t.state.pool.row(t.action.selected[
                static_cast<std::size_t>(j)]);
        t.reward = reward_negatives(t.state.anchor, t.state.positive,
                                    negatives, cfg);
        if (!opts.fixed_tau)
            t.reward.tau_reward = reward_temperature(
                t.action.tau, static_cast<double>(t.state.degree), cfg.w5);
        else
            t.reward.tau_reward = 0.0;
        if (opts.random_neg)
            t.reward.total = t.reward.tau_reward;
        else
            t.reward.total = t.reward.negatives_total + t.reward.tau_reward;
        batch.push_back(std::move(t));
    };

    for (int u : user_anchors) roll(u, true);
    for (int i : item_anchors) roll(i, false);

    const HgpoBatchStats stats = compute_advantages(batch);
    if (stats_out) *stats_out = stats;
    return batch;
}

// --- policy update ---

PolicyUpdateResult policy_update(PolicyNetwork& policy,
                                 const std::vector<Transition>& batch,
                                 const HgpoConfig& cfg, bool include_selection,
                                 bool include_tau, bool take_step) {
    PolicyUpdateResult result;
    if (batch.empty()) return result;

    Tape tape;
    std::vector<PolicyState> states;
    states.reserve(batch.size());
    for (const Transition& t : batch) states.push_back(t.state);
    const PolicyNetwork::TapeOutput out = policy.forward_tape(tape, states);

    std::vector<Var> new_logprobs, entropies;
    std::vector<double> old_logprobs, advantages, rewards;
    std::vector<int> groups;
    new_logprobs.reserve(batch.size());
    for (std::size_t t = 0; t < batch.size(); ++t) {
        const Transition& tr = batch[t];
        new_logprobs.push_back(policy.action_logprob(
            tape, out.logits[t], out.mu[t], out.log_sigma[t], tr.action,
            include_selection, include_tau));
        entropies.push_back(policy.entropy(tape, out.logits[t],
                                           out.log_sigma[t], include_selection,
                                           include_tau));
        double old_lp = 0.0;
        if (include_selection) old_lp += tr.action.selection_logprob;
        if (include_tau) old_lp += tr.action.gauss_logprob;
        old_logprobs.push_back(old_lp);
        advantages.push_back(tr.advantage);
        rewards.push_back(tr.reward.total);
        groups.push_back(tr.state.group);
    }

    const Var l_policy = policy_surrogate(tape, new_logprobs, old_logprobs,
                                          advantages, cfg.clip_eps);
    const Var entropy = entropy_term(tape, entropies);
    const Var l_harm =
        harm_loss(tape, new_logprobs, groups, rewards, cfg.lambda_harm);
    const Var objective = hgpo_objective(tape, l_policy, entropy, l_harm,
                                         cfg.c1, cfg.entropy_bonus);
    result.l_policy = tape.value(l_policy)(0, 0);
    result.entropy = tape.value(entropy)(0, 0);
    result.l_harm = tape.value(l_harm)(0, 0);
    result.l_hgpo = tape.value(objective)(0, 0);

    tape.backward(objective);
    std::map<std::string, Matrix> grads;
    double sq = 0.0;
    for (std::size_t p = 0; p < out.param_vars.size(); ++p) {
        Matrix g = tape.grad(out.param_vars[p]);
        sq += g.squaredNorm();
        grads.emplace(out.param_names[p], std::move(g));
    }
    result.grad_norm = std::sqrt(sq);
    if (take_step) {
        AdamConfig adam;
        adam.lr = cfg.policy_lr;
        policy.params().adam_step(grads, adam);
    }
    return result;
}

// --- data preparation ---

PreparedData prepare_data(const RunConfig& cfg, const RawInteractions& raw,
                          const SemanticTable* table) {
    const std::vector<Edge> kept = apply_k_core(raw.edges, cfg.data.k_core);

    const int old_users = static_cast<int>(raw.ids.user_ids.size());
    const int old_items = static_cast<int>(raw.ids.item_ids.size());
    std::vector<int> user_map(static_cast<std::size_t>(old_users), -1);
    std::vector<int> item_map(static_cast<std::size_t>(old_items), -1);
    for (const Edge& e : kept) {
        user_map[static_cast<std::size_t>(e.first)] = 0;
        item_map[static_cast<std::size_t>(e.second)] = 0;
    }
    PreparedData data;
    std::vector<int> item_old_of_new;
    int nu = 0, ni = 0;
    for (int u = 0; u < old_users; ++u) {
        if (user_map[static_cast<std::size_t>(u)] < 0) continue;
        user_map[static_cast<std::size_t>(u)] = nu++;
        data.ids.user_ids.push_back(raw.ids.user_ids[static_cast<std::size_t>(u)]);
    }
    for (int i = 0; i < old_items; ++i) {
        if (item_map[static_cast<std::size_t>(i)] < 0) continue;
        item_map[static_cast<std::size_t>(i)] = ni++;
        item_old_of_new.push_back(i);
        data.ids.item_ids.push_back(raw.ids.item_ids[static_cast<std::size_t>(i)]);
    }
    for (int u = 0; u < nu; ++u) data.ids.user_index[data.ids.user_ids[static_cast<std::size_t>(u)]] = u;
    for (int i = 0; i < ni; ++i) data.ids.item_index[data.ids.item_ids[static_cast<std::size_t>(i)]] = i;

    std::vector<Edge> edges;
    edges.reserve(kept.size());
    for (const Edge& e : kept)
        edges.emplace_back(user_map[static_cast<std::size_t>(e.first)],
                           item_map[static_cast<std::size_t>(e.second)]);

    data.full_graph = InteractionGraph::build(nu, ni, edges);
    data.split = split_edges(edges, cfg.split.train, cfg.split.val,
                             cfg.split.test, cfg.seed);
    data.train_graph = InteractionGraph::build(nu, ni, data.split.train_edges);
    data.user_groups = assign_degree_groups(data.train_graph.user_degree,
                                            cfg.hgpo.group_count);
    data.item_groups = assign_degree_groups(data.train_graph.item_degree,
                                            cfg.hgpo.group_count);

    if (table) {
        SemanticTable remapped;
        remapped.dimension = table->dimension;
        remapped.vectors = Matrix::Zero(ni, table->dimension);
        remapped.covered.assign(static_cast<std::size_t>(ni), false);
        for (int i = 0; i < ni; ++i) {
            const int old = item_old_of_new[static_cast<std::size_t>(i)];
            if (!table->covered[static_cast<std::size_t>(old)]) continue;
            remapped.vectors.row(i) = table->vectors.row(old);
            remapped.covered[static_cast<std::size_t>(i)] = true;
            ++remapped.covered_count;
        }
        data.semantic = std::move(remapped);
    }
    return data;
}

PreparedData prepare_from_files(const RunConfig& cfg) {
    const RawInteractions raw = ingest_interactions(cfg.data.interactions);
    PreparedData data = prepare_data(cfg, raw, nullptr);
    if (!cfg.data.semantic.empty() && !cfg.ablation.no_semantic)
        data.semantic = load_semantic_table(
            cfg.data.semantic, data.ids,
            static_cast<int>(data.ids.item_ids.size()));
    return data;
}

// --- training loop ---

std::string IterationRecord::to_json() const {
    std::ostringstream os;
    os << "{\"iter\":" << iter << ",\"epoch\":" << epoch;
    os << ",\"l_bpr\":" << fmt(l_bpr) << ",\"l_struct\":" << fmt(l_struct)
       << ",\"l_reg\":" << fmt(l_reg) << ",\"l_total\":" << fmt(l_total);
    os << ",\"l_policy\":" << fmt(l_policy) << ",\"entropy\":" << fmt(entropy)
       << ",\"l_harm\":" << fmt(l_harm) << ",\"l_hgpo\":" << fmt(l_hgpo);
    os << ",\"policy_grad_norm\":" << fmt(policy_grad_norm);
    os << ",\"group_mean_variance\":" << fmt(group_mean_variance);
    os << ",\"group_mean_reward\":{";
    bool first = true;
    for (const auto& [g, r] : group_mean_reward) {
        os << (first ? "" : ",") << "\"" << g << "\":" << fmt(r);
        first = false;
    }
    os << "},\"mean_tau_per_group\":{";
    first = true;
    for (const auto& [g, t] : mean_tau_per_group) {
        os << (first ? "" : ",") << "\"" << g << "\":" << fmt(t);
        first = false;
    }
    os << "},\"frac_hard\":" << fmt(frac_hard)
       << ",\"frac_false\":" << fmt(frac_false)
       << ",\"frac_easy\":" << fmt(frac_easy) << "}";
    return os.str();
}

namespace {

std::vector<int> distinct_truncated(const std::vector<int>& xs, int limit) {
    std::vector<int> out;
    std::unordered_set<int> seen;
    for (int x : xs) {
        if (seen.insert(x).second) {
            out.push_back(x);
            if (static_cast<int>(out.size()) >= limit) break;
        }
    }
    return out;
}

double log_dmax(const std::vector<int>& degrees) {
    int dmax = 0;
    for (int d : degrees) dmax = std::max(dmax, d);
    return std::max(std::log1p(static_cast<double>(dmax)), 1e-9);
}

}  // namespace

TrainOutput train_model(const RunConfig& cfg_in, const PreparedData& data) {
    RunConfig cfg = cfg_in;
    if (cfg.ablation.grpo) cfg.hgpo.lambda_harm = 0.0;
    const bool use_sem = data.semantic.has_value() && !cfg.ablation.no_semantic;

    ModelConfig mc;
    mc.d = cfg.backbone.d;
    mc.d_id = use_sem && !cfg.ablation.weighted_sum_fusion ? cfg.backbone.d_id
                                                           : cfg.backbone.d;
    mc.layers = cfg.backbone.layers;
    mc.k_positive = cfg.backbone.k_positive;
    mc.fusion_mode = cfg.ablation.weighted_sum_fusion ? FusionMode::WeightedSum
                                                      : FusionMode::ConcatLinear;
    mc.use_semantic = use_sem;

    const InteractionGraph& graph = data.train_graph;
    Model model(graph.num_users, graph.num_items, mc,
                use_sem ? &*data.semantic : nullptr, cfg.seed);
    PolicyNetwork policy(mc.d, cfg.hgpo, hash_combine(cfg.seed, "policy_init"));
    const NormalizedAdjacency adj = NormalizedAdjacency::build(graph);

    const double user_ldm = log_dmax(graph.user_degree);
    const double item_ldm = log_dmax(graph.item_degree);
    RolloutOptions opts;
    opts.fixed_tau = cfg.ablation.fixed_tau;
    opts.fixed_tau_value = cfg.ablation.fixed_tau_value;
    opts.random_neg = cfg.ablation.random_neg;
    const bool include_selection = !cfg.ablation.random_neg;
    const bool include_tau = !cfg.ablation.fixed_tau;
    const int k_pos = mc.k_positive;

    TrainOutput out;
    std::vector<Edge> train_edges = data.split.train_edges;
    double best = -1.0;
    int bad_epochs = 0;
    int iter = 0;

    for (int epoch = 0; epoch < cfg.optimizer.epochs; ++epoch) {
        std::mt19937_64 shuffle_rng = substream(cfg.seed, "shuffle",
                                                static_cast<std::uint64_t>(epoch));
        std::shuffle(train_edges.begin(), train_edges.end(), shuffle_rng);

        double epoch_var_sum = 0.0;
        int epoch_var_count = 0;

        for (std::size_t start = 0; start < train_edges.size();
             start += static_cast<std::size_t>(cfg.optimizer.batch), ++iter) {
            const std::size_t stop =
                std::min(train_edges.size(),
                         start + static_cast<std::size_t>(cfg.optimizer.batch));
            std::vector<Edge> batch(train_edges.begin() +
                                        static_cast<std::ptrdiff_t>(start),
                                    train_edges.begin() +
                                        static_cast<std::ptrdiff_t>(stop));
            IterationRecord rec;
            rec.iter = iter;
            rec.epoch = epoch;

            Tape tape;
            Model::Forward fwd = model.forward(tape, adj);

            std::vector<int> batch_users, batch_items;
            batch_users.reserve(batch.size());
            batch_items.reserve(batch.size());
            for (const Edge& e : batch) {
                batch_users.push_back(e.first);
                batch_items.push_back(e.second);
            }
            const std::vector<int> user_anchors = distinct_truncated(
                batch_users, cfg.optimizer.anchors_per_batch);
            const std::vector<int> item_anchors = distinct_truncated(
                batch_items, cfg.optimizer.anchors_per_batch);

            std::vector<Transition> transitions;
            if (!cfg.ablation.no_hgpo) {
                const Matrix& u0 = tape.value(fwd.stack.user_layers[0]);
                const Matrix& uk = tape.value(
                    fwd.stack.user_layers[static_cast<std::size_t>(k_pos)]);
                const Matrix& i0 = tape.value(fwd.stack.item_layers[0]);
                const Matrix& ik = tape.value(
                    fwd.stack.item_layers[static_cast<std::size_t>(k_pos)]);
                TransitionContext ctx{graph,
                                      u0,
                                      uk,
                                      i0,
                                      ik,
                                      data.user_groups,
                                      data.item_groups,
                                      user_ldm,
                                      item_ldm};
                HgpoBatchStats stats;
                transitions = sample_transitions(
                    policy, ctx, user_anchors, item_anchors, cfg.hgpo, opts,
                    cfg.seed, static_cast<std::uint64_t>(iter), &stats);
                const PolicyUpdateResult pu =
                    policy_update(policy, transitions, cfg.hgpo,
                                  include_selection, include_tau, true);
                rec.l_policy = pu.l_policy;
                rec.entropy = pu.entropy;
                rec.l_harm = pu.l_harm;
                rec.l_hgpo = pu.l_hgpo;
                rec.policy_grad_norm = pu.grad_norm;
                rec.group_mean_variance = stats.group_mean_variance;
                rec.group_mean_reward = stats.group_mean_reward;
                epoch_var_sum += stats.group_mean_variance;
                ++epoch_var_count;

                std::map<int, double> tau_sum;
                std::map<int, int> tau_count;
                int n_hard = 0, n_false = 0, n_easy = 0, n_total = 0;
                for (const Transition& t : transitions) {
                    tau_sum[t.state.group] += t.action.tau;
                    ++tau_count[t.state.group];
                    for (std::size_t j = 0; j < t.reward.hard.size(); ++j) {
                        ++n_total;
                        if (t.reward.hard[j] > 0.0) ++n_hard;
                        if (t.reward.false_neg[j] < 0.0) ++n_false;
                        if (t.reward.easy[j] < 0.0) ++n_easy;
                    }
                }
                for (const auto& [g, s] : tau_sum)
                    rec.mean_tau_per_group[g] = s / tau_count[g];
                if (n_total > 0) {
                    rec.frac_hard = static_cast<double>(n_hard) / n_total;
                    rec.frac_false = static_cast<double>(n_false) / n_total;
                    rec.frac_easy = static_cast<double>(n_easy) / n_total;
                }
            }

            // structural contrastive pairs on the main tape
            Var struct_sum;
            int pair_count = 0;
            auto add_pair = [&](bool is_user, int node,
                                const std::vector<int>& neg_nodes, double tau) {
                const auto& own = is_user ? fwd.stack.user_layers
                                          : fwd.stack.item_layers;
                const auto& other = is_user ? fwd.stack.item_layers
                                            : fwd.stack.user_layers;
                ContrastivePair pair;
                pair.anchor = tape.gather_rows(own[0], {node});
                pair.positive = tape.gather_rows(
                    own[static_cast<std::size_t>(k_pos)], {node});
                pair.negatives = tape.gather_rows(
                    other[static_cast<std::size_t>(k_pos)], neg_nodes);
                pair.temperature = tau;
                Var loss = info_nce(tape, pair);
                struct_sum = pair_count ? tape.add(struct_sum, loss) : loss;
                ++pair_count;
            };
            if (!cfg.ablation.no_hgpo) {
                for (const Transition& t : transitions) {
                    std::vector<int> neg_nodes;
                    neg_nodes.reserve(t.action.selected.size());
                    for (int pos : t.action.selected)
                        neg_nodes.push_back(t.state.pool_node_indices[
                            static_cast<std::size_t>(pos)]);
                    add_pair(t.state.is_user, t.state.anchor_index, neg_nodes,
                             t.action.tau);
                }
            } else if (cfg.contrastive.lambda_cl > 0.0) {
                const std::uint64_t pool_seed =
                    hash_combine(cfg.seed, "pool",
                                 static_cast<std::uint64_t>(iter));
                auto random_pair = [&](int node, bool is_user) {
                    const int other_count = is_user ? graph.num_items
                                                    : graph.num_users;
                    const std::vector<int> pool =
                        is_user ? sample_candidate_pool(
                                      graph, node,
                                      cfg.hgpo.resolved_pool_size(other_count),
                                      hash_combine(pool_seed,
                                                   is_user ? "u" : "i",
                                                   static_cast<std::uint64_t>(node)))
                                : sample_candidate_pool_item(
                                      graph, node,
                                      cfg.hgpo.resolved_pool_size(other_count),
                                      hash_combine(pool_seed,
                                                   is_user ? "u" : "i",
                                                   static_cast<std::uint64_t>(node)));
                    const int m = std::min<int>(cfg.hgpo.num_negatives,
                                                static_cast<int>(pool.size()));
                    if (m < 1) return;
                    std::mt19937_64 rng = substream(
                        hash_combine(cfg.seed, "action",
                                     static_cast<std::uint64_t>(iter)),
                        is_user ? "au" : "ai", static_cast<std::uint64_t>(node));
                    std::vector<int> picks(pool.begin(), pool.end());
                    for (int j = 0; j < m; ++j) {
                        const std::size_t pick =
                            static_cast<std::size_t>(j) +
                            uniform_index(rng,
                                          picks.size() -
                                              static_cast<std::size_t>(j));
                        std::swap(picks[static_cast<std::size_t>(j)],
                                  picks[pick]);
                    }
                    picks.resize(static_cast<std::size_t>(m));
                    add_pair(is_user, node, picks,
                             cfg.ablation.fixed_tau_value);
                };
                for (int u : user_anchors) random_pair(u, true);
                for (int i : item_anchors) random_pair(i, false);
            }

            // BPR over the batch edges with one uniform negative per edge
            std::mt19937_64 bpr_rng = substream(
                cfg.seed, "bpr_neg", static_cast<std::uint64_t>(iter));
            std::vector<int> neg_items(batch.size());
            for (std::size_t b = 0; b < batch.size(); ++b) {
                int j = static_cast<int>(
                    uniform_index(bpr_rng,
                                  static_cast<std::size_t>(graph.num_items)));
                for (int attempt = 0;
                     attempt < 50 && graph.user_has_item(batch[b].first, j);
                     ++attempt)
                    j = static_cast<int>(uniform_index(
                        bpr_rng, static_cast<std::size_t>(graph.num_items)));
                neg_items[b] = j;
            }
            Var zu_rows = tape.gather_rows(fwd.z_users, batch_users);
            Var pos_scores = tape.rowwise_dot(
                zu_rows, tape.gather_rows(fwd.z_items, batch_items));
            Var neg_scores = tape.rowwise_dot(
                zu_rows, tape.gather_rows(fwd.z_items, neg_items));
            Var l_bpr = bpr_loss(tape, pos_scores, neg_scores);

            Var reg;
            bool have_reg = false;
            for (const auto& [name, var] : fwd.param_vars) {
                Var sq = tape.dot(var, var);
                reg = have_reg ? tape.add(reg, sq) : sq;
                have_reg = true;
            }

            Var total = l_bpr;
            if (pair_count > 0 && cfg.contrastive.lambda_cl > 0.0) {
                Var l_struct = tape.scale(struct_sum, 1.0 / pair_count);
                rec.l_struct = tape.value(l_struct)(0, 0);
                total = tape.add(
                    total, tape.scale(l_struct, cfg.contrastive.lambda_cl));
            }
            if (have_reg && cfg.contrastive.lambda_reg > 0.0) {
                rec.l_reg = tape.value(reg)(0, 0);
                total = tape.add(total,
                                 tape.scale(reg, cfg.contrastive.lambda_reg));
            }
            rec.l_bpr = tape.value(l_bpr)(0, 0);
            rec.l_total = tape.value(total)(0, 0);
            if (!std::isfinite(rec.l_total))
                throw std::runtime_error(
                    "training diverged: non-finite total loss at iter " +
                    std::to_string(iter) + " (bpr=" + fmt(rec.l_bpr) +
                    ", struct=" + fmt(rec.l_struct) +
                    ", reg=" + fmt(rec.l_reg) + ")");

            tape.backward(total);
            std::map<std::string, Matrix> grads;
            for (const auto& [name, var] : fwd.param_vars)
                grads[name] = tape.grad(var);
            AdamConfig adam;
            adam.lr = cfg.optimizer.lr;
            model.params().adam_step(grads, adam);

            out.iterations.push_back(std::move(rec));
        }

        out.test_report.group_reward_variance_trace.push_back(
            epoch_var_count ? epoch_var_sum / epoch_var_count : 0.0);
        out.epochs_run = epoch + 1;

        double metric = 0.0;
        if (!data.split.val_edges.empty()) {
            auto [zu, zi] = model.final_embeddings(adj);
            RankingInput in{zu, zi, graph, data.split.val_edges};
            const EvalReport rep = full_rank_eval(in, {20});
            metric = cfg.early_stopping.metric == "recall@20"
                         ? rep.recall.at(20)
                         : rep.ndcg.at(20);
        }
        out.epoch_val_metric.push_back(metric);
        if (metric > best + 1e-12 || out.best_epoch < 0) {
            best = metric;
            out.best_epoch = epoch;
            out.best_val_metric = metric;
            out.model_snapshot = model.params().snapshot();
            bad_epochs = 0;
        } else if (++bad_epochs >= cfg.early_stopping.patience) {
            break;
        }
    }

    // Early stopping picks the embedding checkpoint; the validation metric
    // says nothing about the policy, so the policy of record is the final
    // one, not the one that happened to coincide with the best epoch.
    model.params().restore(out.model_snapshot);
    out.policy_snapshot = policy.params().snapshot();

    auto [zu, zi] = model.final_embeddings(adj);
    out.z_users = zu;
    out.z_items = zi;

    const std::vector<Edge>& eval_edges = data.split.test_edges.empty()
                                              ? data.split.val_edges
                                              : data.split.test_edges;
    if (eval_edges.empty())
        throw std::runtime_error("train: no held-out edges to evaluate");
    RankingInput test_in{zu, zi, graph, eval_edges};
    {
        const EvalReport base = full_rank_eval(test_in, {10, 20});
        out.test_report.recall = base.recall;
        out.test_report.ndcg = base.ndcg;
        out.test_report.evaluated_users = base.evaluated_users;
    }
    out.popularity_report =
        popularity_baseline_eval(graph, eval_edges, {10, 20});

    std::vector<bool> user_eval(static_cast<std::size_t>(graph.num_users),
                                false);
    std::vector<bool> item_eval(static_cast<std::size_t>(graph.num_items),
                                false);
    for (const Edge& e : eval_edges) {
        user_eval[static_cast<std::size_t>(e.first)] = true;
        item_eval[static_cast<std::size_t>(e.second)] = true;
    }
    {
        const BucketReport ub = degree_bucket_report(
            per_user_ndcg(test_in, 20), user_eval, data.user_groups);
        out.test_report.user_bucket_ndcg = ub.mean_metric;
        out.test_report.user_bucket_variance = ub.variance;
        const BucketReport ib = degree_bucket_report(
            per_item_ndcg(test_in, 20), item_eval, data.item_groups);
        out.test_report.item_bucket_ndcg = ib.mean_metric;
        out.test_report.item_bucket_variance = ib.variance;
    }

    // diagnostics on the final policy: temperature by degree bucket and
    // similarity histograms of selected vs uniform negatives
    {
        Tape tape;
        Model::Forward fwd = model.forward(tape, adj);
        const Matrix& u0 = tape.value(fwd.stack.user_layers[0]);
        const Matrix& uk = tape.value(
            fwd.stack.user_layers[static_cast<std::size_t>(k_pos)]);
        const Matrix& i0 = tape.value(fwd.stack.item_layers[0]);
        const Matrix& ik = tape.value(
            fwd.stack.item_layers[static_cast<std::size_t>(k_pos)]);
        TransitionContext ctx{graph,
                              u0,
                              uk,
                              i0,
                              ik,
                              data.user_groups,
                              data.item_groups,
                              user_ldm,
                              item_ldm};
        std::vector<int> diag_users;
        for (int u = 0; u < std::min(graph.num_users, 2048); ++u)
            diag_users.push_back(u);
        RolloutOptions diag_opts = opts;
        const std::uint64_t diag_seed = hash_combine(cfg.seed, "diag");
        std::vector<double> tau_sum(
            static_cast<std::size_t>(cfg.hgpo.group_count), 0.0);
        std::vector<int> tau_count(
            static_cast<std::size_t>(cfg.hgpo.group_count), 0);
        std::vector<double> sel_hist(kSimBins, 0.0), rnd_hist(kSimBins, 0.0);
        double sel_total = 0.0, rnd_total = 0.0;
        if (!cfg.ablation.no_hgpo) {
            const std::vector<Transition> diag = sample_transitions(
                policy, ctx, diag_users, {}, cfg.hgpo, diag_opts, diag_seed, 0);
            for (const Transition& t : diag) {
                const std::size_t g = static_cast<std::size_t>(t.state.group);
                tau_sum[g] += t.action.tau;
                ++tau_count[g];
                std::mt19937_64 rng = substream(
                    diag_seed, "rand_neg",
                    static_cast<std::uint64_t>(t.state.anchor_index));
                const std::size_t pool_n = t.state.pool_node_indices.size();
                for (std::size_t j = 0; j < t.action.selected.size(); ++j) {
                    const Eigen::RowVectorXd sel_row = t.state.pool.row(
                        t.action.selected[j]);
                    sel_hist[static_cast<std::size_t>(sim_bin(
                        cosine_similarity(t.state.anchor, sel_row)))] += 1.0;
                    ++sel_total;
                    const Eigen::RowVectorXd rnd_row = t.state.pool.row(
                        static_cast<int>(uniform_index(rng, pool_n)));
                    rnd_hist[static_cast<std::size_t>(sim_bin(
                        cosine_similarity(t.state.anchor, rnd_row)))] += 1.0;
                    ++rnd_total;
                }
            }
        }
        out.test_report.mean_tau_per_user_bucket.assign(
            static_cast<std::size_t>(cfg.hgpo.group_count),
            cfg.ablation.no_hgpo || cfg.ablation.fixed_tau
                ? cfg.ablation.fixed_tau_value
                : 0.0);
        for (std::size_t g = 0; g < tau_sum.size(); ++g)
            if (tau_count[g] > 0)
                out.test_report.mean_tau_per_user_bucket[g] =
                    tau_sum[g] / tau_count[g];
        out.test_report.selected_sim_histogram.assign(kSimBins, 0.0);
        out.test_report.random_sim_histogram.assign(kSimBins, 0.0);
        for (int b = 0; b < kSimBins; ++b) {
            if (sel_total > 0.0)
                out.test_report.selected_sim_histogram[
                    static_cast<std::size_t>(b)] =
                    sel_hist[static_cast<std::size_t>(b)] / sel_total;
            if (rnd_total > 0.0)
                out.test_report.random_sim_histogram[
                    static_cast<std::size_t>(b)] =
                    rnd_hist[static_cast<std::size_t>(b)] / rnd_total;
        }
    }

    return out;
}

}  // namespace hgrec
