#include "hgrec/config.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hgrec {

using json = nlohmann::json;

namespace {

// Pull a key out of `obj`, erasing it so leftovers can be reported.
template <typename T>
void take(json& obj, const char* key, T& out, const std::string& prefix) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    try {
        out = it->get<T>();
    } catch (const json::exception&) {
        throw std::runtime_error("config: bad value type for key '" + prefix +
                                 key + "'");
    }
    obj.erase(it);
}

void reject_leftovers(const json& obj, const std::string& prefix) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        throw std::runtime_error("config: unknown key '" + prefix + it.key() +
                                 "'");
}

json take_section(json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end()) return json::object();
    if (!it->is_object())
        throw std::runtime_error(std::string("config: section '") + key +
                                 "' must be an object");
    json section = std::move(*it);
    obj.erase(it);
    return section;
}

std::string fmt(double x) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

}  // namespace

void RunConfig::validate() const {
    if (backbone.d <= 0 || backbone.d_id <= 0)
        throw std::runtime_error("config: embedding dimensions must be > 0");
    if (backbone.layers < 1)
        throw std::runtime_error("config: backbone.layers must be >= 1");
    if (backbone.k_positive < 0 || backbone.k_positive > backbone.layers)
        throw std::runtime_error(
            "config: backbone.k_positive must lie in [0, layers]");
    if (optimizer.lr <= 0.0)
        throw std::runtime_error("config: optimizer.lr must be > 0");
    if (optimizer.batch < 1 || optimizer.epochs < 1 ||
        optimizer.anchors_per_batch < 1)
        throw std::runtime_error(
            "config: optimizer batch/epochs/anchors_per_batch must be >= 1");
    if (contrastive.lambda_cl < 0.0 || contrastive.lambda_reg < 0.0)
        throw std::runtime_error("config: contrastive weights must be >= 0");
    if (data.k_core < 1)
        throw std::runtime_error("config: data.k_core must be >= 1");
    if (early_stopping.patience < 1)
        throw std::runtime_error("config: early_stopping.patience must be >= 1");
    if (early_stopping.metric != "ndcg@20" &&
        early_stopping.metric != "recall@20")
        throw std::runtime_error(
            "config: early_stopping.metric must be ndcg@20 or recall@20");
    const double total = split.train + split.val + split.test;
    if (split.train <= 0.0 || split.val < 0.0 || split.test < 0.0 ||
        std::abs(total - 1.0) > 1e-9)
        throw std::runtime_error("config: split ratios must sum to 1");
    if (ablation.fixed_tau_value <= 0.0)
        throw std::runtime_error("config: ablation.fixed_tau_value must be > 0");
    hgpo.validate();
}

RunConfig parse_run_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("config: invalid JSON: ") +
                                 e.what());
    }
    if (!root.is_object())
        throw std::runtime_error("config: top level must be a JSON object");

    RunConfig cfg;

    json sec = take_section(root, "data");
    take(sec, "interactions", cfg.data.interactions, "data.");
    take(sec, "semantic", cfg.data.semantic, "data.");
    take(sec, "k_core", cfg.data.k_core, "data.");
    reject_leftovers(sec, "data.");

    take(root, "seed", cfg.seed, "");

    sec = take_section(root, "backbone");
    take(sec, "d", cfg.backbone.d, "backbone.");
    take(sec, "d_id", cfg.backbone.d_id, "backbone.");
    take(sec, "layers", cfg.backbone.layers, "backbone.");
    take(sec, "k_positive", cfg.backbone.k_positive, "backbone.");
    reject_leftovers(sec, "backbone.");

    sec = take_section(root, "optimizer");
    take(sec, "lr", cfg.optimizer.lr, "optimizer.");
    take(sec, "batch", cfg.optimizer.batch, "optimizer.");
    take(sec, "epochs", cfg.optimizer.epochs, "optimizer.");
    take(sec, "anchors_per_batch", cfg.optimizer.anchors_per_batch,
         "optimizer.");
    reject_leftovers(sec, "optimizer.");

    sec = take_section(root, "contrastive");
    take(sec, "lambda_cl", cfg.contrastive.lambda_cl, "contrastive.");
    take(sec, "lambda_reg", cfg.contrastive.lambda_reg, "contrastive.");
    reject_leftovers(sec, "contrastive.");

    sec = take_section(root, "hgpo");
    take(sec, "theta_fn", cfg.hgpo.theta_fn, "hgpo.");
    take(sec, "theta_easy", cfg.hgpo.theta_easy, "hgpo.");
    take(sec, "theta_fp", cfg.hgpo.theta_fp, "hgpo.");
    take(sec, "theta_easy_low", cfg.hgpo.theta_easy_low, "hgpo.");
    take(sec, "w1", cfg.hgpo.w1, "hgpo.");
    take(sec, "w2", cfg.hgpo.w2, "hgpo.");
    take(sec, "w3", cfg.hgpo.w3, "hgpo.");
    take(sec, "w4", cfg.hgpo.w4, "hgpo.");
    take(sec, "w5", cfg.hgpo.w5, "hgpo.");
    take(sec, "clip_eps", cfg.hgpo.clip_eps, "hgpo.");
    take(sec, "c1", cfg.hgpo.c1, "hgpo.");
    take(sec, "lambda_harm", cfg.hgpo.lambda_harm, "hgpo.");
    take(sec, "entropy_bonus", cfg.hgpo.entropy_bonus, "hgpo.");
    take(sec, "num_negatives", cfg.hgpo.num_negatives, "hgpo.");
    take(sec, "pool_size", cfg.hgpo.pool_size, "hgpo.");
    take(sec, "group_count", cfg.hgpo.group_count, "hgpo.");
    take(sec, "tau_min", cfg.hgpo.tau_min, "hgpo.");
    take(sec, "tau_max", cfg.hgpo.tau_max, "hgpo.");
    take(sec, "sigma_min", cfg.hgpo.sigma_min, "hgpo.");
    take(sec, "sigma_max", cfg.hgpo.sigma_max, "hgpo.");
    take(sec, "hidden_width", cfg.hgpo.hidden_width, "hgpo.");
    take(sec, "policy_lr", cfg.hgpo.policy_lr, "hgpo.");
    reject_leftovers(sec, "hgpo.");

    sec = take_section(root, "ablation");
    take(sec, "no_hgpo", cfg.ablation.no_hgpo, "ablation.");
    take(sec, "fixed_tau", cfg.ablation.fixed_tau, "ablation.");
    take(sec, "random_neg", cfg.ablation.random_neg, "ablation.");
    take(sec, "grpo", cfg.ablation.grpo, "ablation.");
    take(sec, "weighted_sum_fusion", cfg.ablation.weighted_sum_fusion,
         "ablation.");
    take(sec, "no_semantic", cfg.ablation.no_semantic, "ablation.");
    take(sec, "fixed_tau_value", cfg.ablation.fixed_tau_value, "ablation.");
    reject_leftovers(sec, "ablation.");

    sec = take_section(root, "early_stopping");
    take(sec, "patience", cfg.early_stopping.patience, "early_stopping.");
    take(sec, "metric", cfg.early_stopping.metric, "early_stopping.");
    reject_leftovers(sec, "early_stopping.");

    sec = take_section(root, "split");
    take(sec, "train", cfg.split.train, "split.");
    take(sec, "val", cfg.split.val, "split.");
    take(sec, "test", cfg.split.test, "split.");
    reject_leftovers(sec, "split.");

    reject_leftovers(root, "");
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("config: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

std::string run_config_to_json(const RunConfig& c) {
    std::ostringstream os;
    os << "{\n";
    os << "  \"data\": {\"interactions\": " << json(c.data.interactions)
       << ", \"semantic\": " << json(c.data.semantic)
       << ", \"k_core\": " << c.data.k_core << "},\n";
    os << "  \"seed\": " << c.seed << ",\n";
    os << "  \"backbone\": {\"d\": " << c.backbone.d
       << ", \"d_id\": " << c.backbone.d_id
       << ", \"layers\": " << c.backbone.layers
       << ", \"k_positive\": " << c.backbone.k_positive << "},\n";
    os << "  \"optimizer\": {\"lr\": " << fmt(c.optimizer.lr)
       << ", \"batch\": " << c.optimizer.batch
       << ", \"epochs\": " << c.optimizer.epochs
       << ", \"anchors_per_batch\": " << c.optimizer.anchors_per_batch
       << "},\n";
    os << "  \"contrastive\": {\"lambda_cl\": " << fmt(c.contrastive.lambda_cl)
       << ", \"lambda_reg\": " << fmt(c.contrastive.lambda_reg) << "},\n";
    os << "  \"hgpo\": {";
    os << "\"theta_fn\": " << fmt(c.hgpo.theta_fn)
       << ", \"theta_easy\": " << fmt(c.hgpo.theta_easy)
       << ", \"theta_fp\": " << fmt(c.hgpo.theta_fp)
       << ", \"theta_easy_low\": " << fmt(c.hgpo.theta_easy_low)
       << ", \"w1\": " << fmt(c.hgpo.w1) << ", \"w2\": " << fmt(c.hgpo.w2)
       << ", \"w3\": " << fmt(c.hgpo.w3) << ", \"w4\": " << fmt(c.hgpo.w4)
       << ", \"w5\": " << fmt(c.hgpo.w5)
       << ", \"clip_eps\": " << fmt(c.hgpo.clip_eps)
       << ", \"c1\": " << fmt(c.hgpo.c1)
       << ", \"lambda_harm\": " << fmt(c.hgpo.lambda_harm)
       << ", \"entropy_bonus\": " << (c.hgpo.entropy_bonus ? "true" : "false")
       << ", \"num_negatives\": " << c.hgpo.num_negatives
       << ", \"pool_size\": " << c.hgpo.pool_size
       << ", \"group_count\": " << c.hgpo.group_count
       << ", \"tau_min\": " << fmt(c.hgpo.tau_min)
       << ", \"tau_max\": " << fmt(c.hgpo.tau_max)
       << ", \"sigma_min\": " << fmt(c.hgpo.sigma_min)
       << ", \"sigma_max\": " << fmt(c.hgpo.sigma_max)
       << ", \"hidden_width\": " << c.hgpo.hidden_width
       << ", \"policy_lr\": " << fmt(c.hgpo.policy_lr) << "},\n";
    os << "  \"ablation\": {\"no_hgpo\": "
       << (c.ablation.no_hgpo ? "true" : "false")
       << ", \"fixed_tau\": " << (c.ablation.fixed_tau ? "true" : "false")
       << ", \"random_neg\": " << (c.ablation.random_neg ? "true" : "false")
       << ", \"grpo\": " << (c.ablation.grpo ? "true" : "false")
       << ", \"weighted_sum_fusion\": "
       << (c.ablation.weighted_sum_fusion ? "true" : "false")
       << ", \"no_semantic\": " << (c.ablation.no_semantic ? "true" : "false")
       << ", \"fixed_tau_value\": " << fmt(c.ablation.fixed_tau_value)
       << "},\n";
    os << "  \"early_stopping\": {\"patience\": " << c.early_stopping.patience
       << ", \"metric\": " << json(c.early_stopping.metric) << "},\n";
    os << "  \"split\": {\"train\": " << fmt(c.split.train)
       << ", \"val\": " << fmt(c.split.val)
       << ", \"test\": " << fmt(c.split.test) << "}\n";
    os << "}\n";
    return os.str();
}

}  // namespace hgrec
