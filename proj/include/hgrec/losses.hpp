#pragma once
// Structural InfoNCE with policy-chosen negatives and per-anchor
// temperature, plus the BPR ranking loss.

#include "hgrec/tensor.hpp"

namespace hgrec {

struct ContrastivePair {
    Var anchor;      // 1 x d layer-0 view, on tape
    Var positive;    // 1 x d layer-k view
    Var negatives;   // M x d selected negative views (M may be 0)
    double temperature = 0.2;
};

// -ln[ exp(s+/tau) / (exp(s+/tau) + sum_n exp(s_n/tau)) ] with cosine
// similarities over the selected negative set only. Zero negatives -> 0.
Var info_nce(Tape& tape, const ContrastivePair& pair);

// Mean of -ln sigma(pos_score - neg_score) over the batch. Scores are
// B x 1 column vectors on the tape.
Var bpr_loss(Tape& tape, Var pos_scores, Var neg_scores);

}  // namespace hgrec
