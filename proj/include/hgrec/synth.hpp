#pragma once
// Deterministic synthetic interaction data: power-law item popularity with
// cluster affinity, plus a matching semantic table.

#include "hgrec/graph.hpp"
#include "hgrec/semantic.hpp"

#include <cstdint>
#include <string>

namespace hgrec {

struct SynthConfig {
    int num_users = 500;
    int num_items = 300;
    double skew = 1.0;        // popularity weight (rank+1)^-skew
    int clusters = 8;
    double affinity = 0.8;    // chance of drawing within the user's cluster
    int min_interactions = 15;
    int max_interactions = 40;
    int semantic_dim = 16;
    std::uint64_t seed = 7;
};

// Raw ids are "u<idx>" / "i<idx>". Items take clusters round-robin; each
// user prefers one cluster and samples items by popularity weight.
RawInteractions synth_interactions(const SynthConfig& cfg);

// Semantic vectors aligned with the round-robin item clusters.
SemanticTable synth_semantic_for(const SynthConfig& cfg);

void write_interactions_tsv(const RawInteractions& raw,
                            const std::string& path);
// Matches load_semantic_table: `dim=<d>` header, `raw_id<TAB>f1,f2,...`.
void write_semantic_tsv(const SemanticTable& table, const IdMaps& ids,
                        const std::string& path);

}  // namespace hgrec
