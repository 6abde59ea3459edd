// Command-line entry points: train, eval, synth, report.

#include "hgrec/config.hpp"
#include "hgrec/synth.hpp"
#include "hgrec/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace hgrec;

namespace {

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << content;
}

void save_snapshot(const std::map<std::string, Matrix>& snap,
                   const fs::path& path) {
    ParameterStore store;
    for (const auto& [name, value] : snap) store.add(name, value);
    store.save_checkpoint(path.string());
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
    const RunConfig cfg = load_run_config(config_path);
    fs::create_directories(out_dir);
    const PreparedData data = prepare_from_files(cfg);
    const TrainOutput result = train_model(cfg, data);

    const fs::path out(out_dir);
    write_file(out / "config.json", run_config_to_json(cfg));
    write_file(out / "metrics.json", result.test_report.to_json());
    write_file(out / "metrics.txt", result.test_report.to_text());
    {
        std::ostringstream ss;
        for (const IterationRecord& rec : result.iterations)
            ss << rec.to_json() << "\n";
        write_file(out / "stats.jsonl", ss.str());
    }
    save_snapshot(result.model_snapshot, out / "checkpoint.csv");
    save_snapshot(result.policy_snapshot, out / "policy_checkpoint.csv");
    export_embeddings(result.z_users, result.z_items,
                      (out / "embeddings.csv").string());
    export_id_maps(data.ids, (out / "user_ids.csv").string(),
                   (out / "item_ids.csv").string());
    export_split(data.split, out.string());

    std::cout << "best epoch " << result.best_epoch << " (val "
              << cfg.early_stopping.metric << " = " << result.best_val_metric
              << "), ran " << result.epochs_run << " epochs\n";
    std::cout << result.test_report.to_text();
    std::cout << "popularity baseline ndcg@20 = "
              << result.popularity_report.ndcg.at(20) << "\n";
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint,
             const std::string& split_name, const std::vector<int>& ks) {
    const RunConfig cfg = load_run_config(config_path);
    const PreparedData data = prepare_from_files(cfg);
    const bool use_sem = data.semantic.has_value() && !cfg.ablation.no_semantic;
    ModelConfig mc;
    mc.d = cfg.backbone.d;
    mc.d_id = use_sem && !cfg.ablation.weighted_sum_fusion ? cfg.backbone.d_id
                                                           : cfg.backbone.d;
    mc.layers = cfg.backbone.layers;
    mc.k_positive = cfg.backbone.k_positive;
    mc.fusion_mode = cfg.ablation.weighted_sum_fusion
                         ? FusionMode::WeightedSum
                         : FusionMode::ConcatLinear;
    mc.use_semantic = use_sem;
    Model model(data.train_graph.num_users, data.train_graph.num_items, mc,
                use_sem ? &*data.semantic : nullptr, cfg.seed);
    model.params().load_checkpoint(checkpoint);

    const NormalizedAdjacency adj = NormalizedAdjacency::build(data.train_graph);
    auto [zu, zi] = model.final_embeddings(adj);
    const std::vector<Edge>& edges = split_name == "val"
                                         ? data.split.val_edges
                                         : data.split.test_edges;
    RankingInput in{zu, zi, data.train_graph, edges};
    const EvalReport report = full_rank_eval(in, ks);
    std::cout << report.to_text();
    return 0;
}

int cmd_synth(const SynthConfig& scfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const RawInteractions raw = synth_interactions(scfg);
    const SemanticTable table = synth_semantic_for(scfg);
    const fs::path out(out_dir);
    write_interactions_tsv(raw, (out / "interactions.tsv").string());
    write_semantic_tsv(table, raw.ids, (out / "semantic.tsv").string());
    std::cout << "wrote " << raw.edges.size() << " interactions for "
              << scfg.num_users << " users x " << scfg.num_items
              << " items to " << out_dir << "\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& runs) {
    for (const std::string& dir : runs) {
        const fs::path metrics = fs::path(dir) / "metrics.json";
        std::ifstream in(metrics);
        if (!in) {
            std::cerr << "missing " << metrics.string() << "\n";
            return 1;
        }
        nlohmann::json j;
        in >> j;
        std::cout << dir << ":";
        for (const auto& [k, v] : j.at("ndcg").items())
            std::cout << " ndcg@" << k << "=" << v.get<double>();
        for (const auto& [k, v] : j.at("recall").items())
            std::cout << " recall@" << k << "=" << v.get<double>();
        std::cout << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"graph-contrastive recommender with policy-selected negatives"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "run", checkpoint, split_name = "test";
    std::vector<int> ks = {10, 20};
    std::vector<std::string> runs;
    SynthConfig scfg;

    CLI::App* train = app.add_subcommand("train", "train a model");
    train->add_option("--config", config_path, "run config JSON")->required();
    train->add_option("--out", out_dir, "output directory");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--config", config_path)->required();
    eval->add_option("--checkpoint", checkpoint)->required();
    eval->add_option("--split", split_name)
        ->check(CLI::IsMember({"val", "test"}));
    eval->add_option("--k", ks, "cutoffs");

    CLI::App* synth = app.add_subcommand("synth", "generate synthetic data");
    synth->add_option("--users", scfg.num_users);
    synth->add_option("--items", scfg.num_items);
    synth->add_option("--skew", scfg.skew);
    synth->add_option("--clusters", scfg.clusters);
    synth->add_option("--affinity", scfg.affinity);
    synth->add_option("--seed", scfg.seed);
    synth->add_option("--out", out_dir, "output directory");

    CLI::App* report = app.add_subcommand("report", "summarize run metrics");
    report->add_option("--runs", runs, "run directories")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(config_path, out_dir);
        if (eval->parsed()) return cmd_eval(config_path, checkpoint,
                                            split_name, ks);
        if (synth->parsed()) return cmd_synth(scfg, out_dir);
        if (report->parsed()) return cmd_report(runs);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
