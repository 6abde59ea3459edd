#include "hgrec/policy.hpp"

#include "hgrec/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace hgrec {

void HgpoConfig::validate() const {
    if (!(0.0 <= theta_easy_low && theta_easy_low < theta_easy &&
          theta_easy < theta_fn && theta_fn <= 1.0))
        throw std::invalid_argument(
            "reward thresholds must satisfy 0 <= theta_easy_low < theta_easy < theta_fn <= 1");
    if (!(clip_eps > 0.0 && clip_eps < 1.0))
        throw std::invalid_argument("clip_eps must be in (0,1)");
    if (w1 < 0 || w2 < 0 || w3 < 0 || w4 < 0 || w5 < 0)
        throw std::invalid_argument("reward weights must be >= 0");
    if (!(tau_min > 0.0 && tau_min < tau_max))
        throw std::invalid_argument("need 0 < tau_min < tau_max");
    if (sigma_min <= 0.0)
        throw std::invalid_argument("sigma_min must be positive");
    if (sigma_max <= sigma_min)
        throw std::invalid_argument("sigma_max must exceed sigma_min");
    if (num_negatives < 1) throw std::invalid_argument("M must be >= 1");
    if (group_count < 1) throw std::invalid_argument("K must be >= 1");
}

int HgpoConfig::resolved_pool_size(int num_items) const {
    if (pool_size > 0) return pool_size;
    const int tenth = static_cast<int>(std::ceil(0.10 * num_items));
    return std::min(1024, std::max(1, tenth));
}

double cosine_similarity(const Eigen::RowVectorXd& a,
                         const Eigen::RowVectorXd& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return a.dot(b) / (na * nb);
}

double t_ideal(double degree) { return 1.0 / (1.0 + std::log(1.0 + degree)); }

double reward_temperature(double tau, double degree, double w5) {
    return -w5 * std::abs(tau - t_ideal(degree));
}

RewardBreakdown reward_negatives(const Eigen::RowVectorXd& anchor0,
                                 const Eigen::RowVectorXd& anchor_k,
                                 const Matrix& negatives,
                                 const HgpoConfig& cfg) {
    RewardBreakdown out;
    const Eigen::Index m = negatives.rows();
    out.hard.resize(static_cast<std::size_t>(m), 0.0);
    out.false_neg.resize(static_cast<std::size_t>(m), 0.0);
    out.easy.resize(static_cast<std::size_t>(m), 0.0);
    for (Eigen::Index j = 0; j < m; ++j) {
        const double s0 = cosine_similarity(anchor0, negatives.row(j));
        const double sk = cosine_similarity(anchor_k, negatives.row(j));
        const std::size_t sj = static_cast<std::size_t>(j);
        if (cfg.theta_easy < s0 && s0 < cfg.theta_fn && sk < cfg.theta_fp)
            out.hard[sj] = cfg.w1;
        // first-match branch order: anchor similarity before positive similarity
        if (s0 >= cfg.theta_fn)
            out.false_neg[sj] = -cfg.w2;
        else if (sk >= cfg.theta_fp)
            out.false_neg[sj] = -cfg.w3;
        if (s0 <= cfg.theta_easy_low) out.easy[sj] = -cfg.w4;
        out.negatives_total += out.hard[sj] + out.false_neg[sj] + out.easy[sj];
    }
    out.total = out.negatives_total;
    return out;
}

std::pair<double, double> reward_bounds(const HgpoConfig& cfg,
                                        double max_degree) {
    const double per_neg_min = -std::max(cfg.w2, cfg.w3 + cfg.w4);
    const double t_lo = t_ideal(max_degree);
    const double t_hi = 1.0;  // t_ideal(0)
    const double max_dev =
        std::max({std::abs(cfg.tau_min - t_lo), std::abs(cfg.tau_min - t_hi),
                  std::abs(cfg.tau_max - t_lo), std::abs(cfg.tau_max - t_hi)});
    const double r_min = cfg.num_negatives * per_neg_min - cfg.w5 * max_dev;
    const double r_max = cfg.num_negatives * cfg.w1;
    return {r_min, r_max};
}

std::map<int, double> group_mean_rewards(const std::vector<Transition>& batch) {
    std::map<int, double> sums;
    std::map<int, int> counts;
    for (const Transition& t : batch) {
        sums[t.state.group] += t.reward.total;
        ++counts[t.state.group];
    }
    for (auto& [g, s] : sums) s /= counts[g];
    return sums;
}

double relative_advantage(double reward, double group_mean) {
    return reward - group_mean;
}

HgpoBatchStats compute_advantages(std::vector<Transition>& batch) {
    HgpoBatchStats stats;
    stats.group_mean_reward = group_mean_rewards(batch);
    for (Transition& t : batch)
        t.advantage = relative_advantage(t.reward.total,
                                         stats.group_mean_reward[t.state.group]);
    if (!stats.group_mean_reward.empty()) {
        double mean = 0.0;
        for (const auto& [g, r] : stats.group_mean_reward) mean += r;
        mean /= static_cast<double>(stats.group_mean_reward.size());
        double var = 0.0;
        for (const auto& [g, r] : stats.group_mean_reward)
            var += (r - mean) * (r - mean);
        stats.group_mean_variance =
            var / static_cast<double>(stats.group_mean_reward.size());
    }
    return stats;
}

// --- policy network ---

PolicyNetwork::PolicyNetwork(int embed_dim, const HgpoConfig& cfg,
                             std::uint64_t init_seed)
    : embed_dim_(embed_dim), cfg_(cfg) {
    const int in = feature_dim();
    const int h = cfg.hidden_width;
    auto rng = substream(init_seed, "policy_init");
    auto glorot = [&rng](int rows, int cols) {
        Matrix w(rows, cols);
        const double s = std::sqrt(2.0 / (rows + cols));
        for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = s * gaussian(rng);
        return w;
    };
    params_.add("sel.W1", glorot(in, h));
    params_.add("sel.b1", Matrix::Zero(1, h));
    params_.add("sel.W2", glorot(h, h));
    params_.add("sel.b2", Matrix::Zero(1, h));
    params_.add("sel.W3", glorot(h, 1));
    params_.add("sel.b3", Matrix::Zero(1, 1));
    params_.add("tmp.W1", glorot(in, h));
    params_.add("tmp.b1", Matrix::Zero(1, h));
    params_.add("tmp.W2", glorot(h, h));
    params_.add("tmp.b2", Matrix::Zero(1, h));
    params_.add("tmp.Wmu", glorot(h, 1));
    params_.add("tmp.bmu",
                Matrix::Constant(1, 1, 0.5 * (cfg.tau_min + cfg.tau_max)));
    params_.add("tmp.Wls", glorot(h, 1));
    params_.add("tmp.bls",
                Matrix::Constant(1, 1, std::log(std::clamp(
                                           0.2, cfg.sigma_min, cfg.sigma_max))));
}

Matrix PolicyNetwork::feature_matrix(const PolicyState& state) const {
    const Eigen::Index c = state.pool.rows();
    Matrix f(c, feature_dim());
    for (Eigen::Index r = 0; r < c; ++r) {
        f.block(r, 0, 1, embed_dim_) = state.anchor;
        f.block(r, embed_dim_, 1, embed_dim_) = state.positive;
        f.block(r, 2 * embed_dim_, 1, embed_dim_) = state.pool.row(r);
        f(r, 3 * embed_dim_) = state.degree_feature;
        // the rewards are functions of these two similarities; exposing
        // them directly saves the MLP from having to rediscover cosine
        f(r, 3 * embed_dim_ + 1) =
            cosine_similarity(state.anchor, state.pool.row(r));
        f(r, 3 * embed_dim_ + 2) =
            cosine_similarity(state.positive, state.pool.row(r));
    }
    return f;
}

namespace {
Matrix temp_feature_row(const PolicyState& state, int d) {
    Matrix f(1, 3 * d + 3);
    f.block(0, 0, 1, d) = state.anchor;
    f.block(0, d, 1, d) = state.positive;
    f.block(0, 2 * d, 1, d) = state.pool.colwise().mean();
    f(0, 3 * d) = state.degree_feature;
    double sa = 0.0, sp = 0.0;
    for (Eigen::Index r = 0; r < state.pool.rows(); ++r) {
        sa += cosine_similarity(state.anchor, state.pool.row(r));
        sp += cosine_similarity(state.positive, state.pool.row(r));
    }
    const double n = std::max<double>(1.0, static_cast<double>(state.pool.rows()));
    f(0, 3 * d + 1) = sa / n;
    f(0, 3 * d + 2) = sp / n;
    return f;
}
}  // namespace

PolicyNetwork::PlainOutput PolicyNetwork::forward_plain(
    const PolicyState& state) const {
    auto mlp2 = [this](const Matrix& x, const char* prefix) {
        const std::string p(prefix);
        Matrix h1 = (x * params_.at(p + ".W1")).rowwise() +
                    params_.at(p + ".b1").row(0);
        h1 = h1.array().tanh();
        Matrix h2 = (h1 * params_.at(p + ".W2")).rowwise() +
                    params_.at(p + ".b2").row(0);
        return Matrix(h2.array().tanh());
    };
    PlainOutput out;
    Matrix hs = mlp2(feature_matrix(state), "sel");
    out.logits = (hs * params_.at("sel.W3")).rowwise() +
                 params_.at("sel.b3").row(0);
    Matrix ht = mlp2(temp_feature_row(state, embed_dim_), "tmp");
    out.mu = (ht * params_.at("tmp.Wmu"))(0, 0) + params_.at("tmp.bmu")(0, 0);
    out.log_sigma =
        (ht * params_.at("tmp.Wls"))(0, 0) + params_.at("tmp.bls")(0, 0);
    out.log_sigma = std::clamp(out.log_sigma, std::log(cfg_.sigma_min),
                               std::log(cfg_.sigma_max));
    return out;
}

PolicyNetwork::TapeOutput PolicyNetwork::forward_tape(
    Tape& tape, const std::vector<PolicyState>& states) const {
    TapeOutput out;
    std::map<std::string, Var> pv;
    for (const auto& [name, value] : params_.values()) {
        Var v = tape.leaf(value);
        pv.emplace(name, v);
        out.param_vars.push_back(v);
        out.param_names.push_back(name);
    }

    // stack all candidate features (selection head) and one row per state
    // (temperature head) so the MLPs run as two big matmuls
    Eigen::Index total_rows = 0;
    for (const PolicyState& s : states) total_rows += s.pool.rows();
    Matrix sel_feat(total_rows, feature_dim());
    Matrix tmp_feat(static_cast<Eigen::Index>(states.size()), feature_dim());
    std::vector<std::pair<int, int>> spans;  // (offset, count) per state
    Eigen::Index off = 0;
    for (std::size_t i = 0; i < states.size(); ++i) {
        Matrix f = feature_matrix(states[i]);
        sel_feat.middleRows(off, f.rows()) = f;
        spans.emplace_back(static_cast<int>(off), static_cast<int>(f.rows()));
        off += f.rows();
        tmp_feat.row(static_cast<Eigen::Index>(i)) =
            temp_feature_row(states[i], embed_dim_);
    }

    auto mlp2 = [&tape, &pv](Var x, const std::string& p) {
        Var h1 = tape.tanh(
            tape.add_rowvec(tape.matmul(x, pv.at(p + ".W1")), pv.at(p + ".b1")));
        return tape.tanh(
            tape.add_rowvec(tape.matmul(h1, pv.at(p + ".W2")), pv.at(p + ".b2")));
    };
    Var hs = mlp2(tape.leaf(std::move(sel_feat)), "sel");
    Var logits_all = tape.add_rowvec(tape.matmul(hs, pv.at("sel.W3")),
                                     pv.at("sel.b3"));
    Var ht = mlp2(tape.leaf(std::move(tmp_feat)), "tmp");
    Var mu_all = tape.add_rowvec(tape.matmul(ht, pv.at("tmp.Wmu")),
                                 pv.at("tmp.bmu"));
    Var ls_all = tape.add_rowvec(tape.matmul(ht, pv.at("tmp.Wls")),
                                 pv.at("tmp.bls"));

    for (std::size_t i = 0; i < states.size(); ++i) {
        const auto [o, c] = spans[i];
        std::vector<int> rows(static_cast<std::size_t>(c));
        std::iota(rows.begin(), rows.end(), o);
        out.logits.push_back(tape.gather_rows(logits_all, std::move(rows)));
        out.mu.push_back(
            tape.gather_rows(mu_all, {static_cast<int>(i)}));
        out.log_sigma.push_back(tape.clamp(
            tape.gather_rows(ls_all, {static_cast<int>(i)}),
            std::log(cfg_.sigma_min), std::log(cfg_.sigma_max)));
    }
    return out;
}

PolicyAction PolicyNetwork::sample_action(const PlainOutput& out,
                                          int num_negatives,
                                          std::mt19937_64& rng) const {
    const int c = static_cast<int>(out.logits.rows());
    if (num_negatives > c)
        throw std::invalid_argument("cannot select more negatives than pool size");
    PolicyAction action;
    std::vector<int> remaining(static_cast<std::size_t>(c));
    std::iota(remaining.begin(), remaining.end(), 0);
    for (int m = 0; m < num_negatives; ++m) {
        double lmax = -std::numeric_limits<double>::infinity();
        for (int r : remaining) lmax = std::max(lmax, out.logits(r, 0));
        double z = 0.0;
        for (int r : remaining) z += std::exp(out.logits(r, 0) - lmax);
        const double u = uniform01(rng) * z;
        double acc = 0.0;
        std::size_t pick = remaining.size() - 1;
        for (std::size_t p = 0; p < remaining.size(); ++p) {
            acc += std::exp(out.logits(remaining[p], 0) - lmax);
            if (u <= acc) {
                pick = p;
                break;
            }
        }
        const int chosen = remaining[pick];
        const double logp = out.logits(chosen, 0) - lmax - std::log(z);
        action.selected.push_back(chosen);
        action.step_logprobs.push_back(logp);
        action.selection_logprob += logp;
        remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    const double sigma = std::exp(out.log_sigma);
    action.mu = out.mu;
    action.log_sigma = out.log_sigma;
    action.tau_raw = out.mu + sigma * gaussian(rng);
    action.tau = std::clamp(action.tau_raw, cfg_.tau_min, cfg_.tau_max);
    const double z = (action.tau_raw - out.mu) / sigma;
    action.gauss_logprob =
        -0.5 * std::log(2.0 * M_PI) - out.log_sigma - 0.5 * z * z;
    action.total_logprob = action.selection_logprob + action.gauss_logprob;
    return action;
}

Var PolicyNetwork::action_logprob(Tape& tape, Var logits, Var mu,
                                  Var log_sigma, const PolicyAction& action,
                                  bool include_selection,
                                  bool include_tau) const {
    Var total = tape.leaf(Matrix::Zero(1, 1));
    if (include_selection) {
        const int c = static_cast<int>(tape.value(logits).rows());
        std::vector<int> remaining(static_cast<std::size_t>(c));
        std::iota(remaining.begin(), remaining.end(), 0);
        for (int chosen : action.selected) {
            auto it = std::find(remaining.begin(), remaining.end(), chosen);
            if (it == remaining.end())
                throw std::invalid_argument("action selects a candidate twice");
            const int pos = static_cast<int>(it - remaining.begin());
            Var g = tape.gather_rows(logits, remaining);
            Var ls = tape.log_softmax(g);
            total = tape.add(total, tape.gather_rows(ls, {pos}));
            remaining.erase(it);
        }
    }
    if (include_tau)
        total = tape.add(
            total, tape.gaussian_log_density(mu, log_sigma, action.tau_raw));
    return total;
}

Var PolicyNetwork::entropy(Tape& tape, Var logits, Var log_sigma,
                           bool include_selection, bool include_tau) const {
    Var h = tape.leaf(Matrix::Zero(1, 1));
    if (include_selection) {
        Var ls = tape.log_softmax(logits);
        h = tape.add(
            h, tape.scale(tape.sum(tape.hadamard(tape.exp(ls), ls)), -1.0));
    }
    if (include_tau) {
        // H_temp = 1/2 ln(2 pi e sigma^2) = 1/2 (1 + ln 2 pi) + ln sigma
        h = tape.add(h,
                     tape.add(log_sigma,
                              tape.leaf(Matrix::Constant(
                                  1, 1, 0.5 * (1.0 + std::log(2.0 * M_PI))))));
    }
    return h;
}

// --- objective terms ---

Var policy_surrogate(Tape& tape, const std::vector<Var>& new_logprobs,
                     const std::vector<double>& old_logprobs,
                     const std::vector<double>& advantages, double clip_eps) {
    if (new_logprobs.size() != old_logprobs.size() ||
        new_logprobs.size() != advantages.size())
        throw std::invalid_argument("policy_surrogate: size mismatch");
    if (new_logprobs.empty())
        throw std::invalid_argument("policy_surrogate: empty batch");
    Var acc = tape.leaf(Matrix::Zero(1, 1));
    for (std::size_t t = 0; t < new_logprobs.size(); ++t) {
        Var diff = tape.add(
            new_logprobs[t],
            tape.leaf(Matrix::Constant(1, 1, -old_logprobs[t])));
        Var ratio = tape.exp(diff);
        if (!std::isfinite(tape.value(ratio)(0, 0)))
            throw std::runtime_error("policy_surrogate: non-finite ratio");
        const double a = advantages[t];
        // min(r*A, clip(r)*A) == A * clamp(r, ...) one-sided by sign of A
        Var clipped = a >= 0.0
                          ? tape.clamp(ratio, -1e300, 1.0 + clip_eps)
                          : tape.clamp(ratio, 1.0 - clip_eps, 1e300);
        acc = tape.add(acc, tape.scale(clipped, a));
    }
    return tape.scale(acc, 1.0 / static_cast<double>(new_logprobs.size()));
}

Var entropy_term(Tape& tape, const std::vector<Var>& entropies) {
    if (entropies.empty())
        throw std::invalid_argument("entropy_term: empty batch");
    Var acc = entropies[0];
    for (std::size_t i = 1; i < entropies.size(); ++i)
        acc = tape.add(acc, entropies[i]);
    return tape.scale(acc, 1.0 / static_cast<double>(entropies.size()));
}

double harm_loss_value(const std::map<int, double>& group_means,
                       double lambda_harm) {
    if (group_means.empty()) return 0.0;
    double mean = 0.0;
    for (const auto& [g, r] : group_means) mean += r;
    mean /= static_cast<double>(group_means.size());
    double var = 0.0;
    for (const auto& [g, r] : group_means) var += (r - mean) * (r - mean);
    var /= static_cast<double>(group_means.size());
    return lambda_harm * var;
}

Var harm_loss(Tape& tape, const std::vector<Var>& new_logprobs,
              const std::vector<int>& groups,
              const std::vector<double>& rewards, double lambda_harm) {
    if (groups.size() != rewards.size() ||
        groups.size() != new_logprobs.size())
        throw std::invalid_argument("harm_loss: size mismatch");
    std::map<int, double> sums;
    std::map<int, int> counts;
    for (std::size_t t = 0; t < groups.size(); ++t) {
        sums[groups[t]] += rewards[t];
        ++counts[groups[t]];
    }
    std::map<int, double> means = sums;
    for (auto& [g, s] : means) s /= counts[g];
    const double value = harm_loss_value(means, lambda_harm);
    if (means.size() < 2 || lambda_harm == 0.0)
        return tape.leaf(Matrix::Constant(1, 1, value));

    double grand_mean = 0.0;
    for (const auto& [g, r] : means) grand_mean += r;
    const double num_groups = static_cast<double>(means.size());
    grand_mean /= num_groups;

    // Score-function surrogate: d Var / d theta goes through
    // dRbar_g/dtheta ~= (1/|B_g|) sum (r_t - Rbar_g) grad log pi_t, with the
    // group mean as a variance-reducing baseline (same expectation). The
    // node's value stays lambda * Var; only the gradient carries the
    // surrogate.
    Var sur = tape.leaf(Matrix::Zero(1, 1));
    double sur_value = 0.0;
    for (std::size_t t = 0; t < groups.size(); ++t) {
        const int g = groups[t];
        const double coeff = lambda_harm * (2.0 / num_groups) *
                             (means[g] - grand_mean) * (rewards[t] - means[g]) /
                             static_cast<double>(counts[g]);
        if (coeff == 0.0) continue;
        sur = tape.add(sur, tape.scale(new_logprobs[t], coeff));
        sur_value += coeff * tape.value(new_logprobs[t])(0, 0);
    }
    return tape.add(sur, tape.leaf(Matrix::Constant(1, 1, value - sur_value)));
}

Var hgpo_objective(Tape& tape, Var l_policy, Var entropy, Var l_harm,
                   double c1, bool entropy_bonus) {
    Var loss = tape.scale(l_policy, -1.0);
    loss = tape.add(loss, tape.scale(entropy, entropy_bonus ? -c1 : c1));
    return tape.add(loss, l_harm);
}

}  // namespace hgrec
