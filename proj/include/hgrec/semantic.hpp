#pragma once
// Precomputed semantic item vectors and their fusion with trainable ID
// embeddings. Users never touch the semantic table.

#include "hgrec/graph.hpp"
#include "hgrec/optim.hpp"
#include "hgrec/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hgrec {

struct SemanticTable {
    int dimension = 0;
    Matrix vectors;               // num_items x d_c, zero rows where uncovered
    std::vector<bool> covered;    // per item
    int covered_count = 0;

    double coverage() const {
        return covered.empty() ? 0.0
                               : static_cast<double>(covered_count) /
                                     static_cast<double>(covered.size());
    }
};

// File format: first line `dim=<d_c>`, rows `raw_item_id<TAB>f1,f2,...`.
// Unknown raw ids are skipped; wrong value counts and non-finite values
// are errors (message carries the row number).
SemanticTable load_semantic_table(const std::string& path, const IdMaps& ids,
                                  int num_items);

// Deterministic stand-in table: round-robin cluster assignment, unit-norm
// centroid plus Gaussian noise (sigma defaults to 0.1), renormalized.
SemanticTable synth_semantic_table(int num_items, int dimension,
                                   std::uint64_t seed, int cluster_count,
                                   double noise_sigma = 0.1);

enum class FusionMode { ConcatLinear, WeightedSum };

// Trainable fusion parameters. ConcatLinear: [e_ID || e_sem] W + b with
// W of shape (d_id + d_c) x d. WeightedSum: s * e_ID + (1-s) * (e_sem P + b),
// requires d_id == d.
struct FusionLayer {
    FusionMode mode = FusionMode::ConcatLinear;
    int d_id = 0;
    int d_c = 0;
    int d_out = 0;

    void init_params(ParameterStore& store, std::uint64_t seed) const;
    // Builds the fused item matrix on the tape. `e_id` is the trainable ID
    // embedding node; semantic vectors enter as constants.
    Var fuse(Tape& tape, Var e_id, const SemanticTable& table,
             const std::vector<Var>& params) const;
    std::vector<std::string> param_names() const;
};

}  // namespace hgrec
