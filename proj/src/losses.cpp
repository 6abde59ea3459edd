#include "hgrec/losses.hpp"

#include <stdexcept>

namespace hgrec {

Var info_nce(Tape& tape, const ContrastivePair& pair) {
    if (pair.temperature <= 0.0)
        throw std::invalid_argument("info_nce: temperature must be positive");
    Var anchor_n = tape.l2_normalize_rows(pair.anchor);
    Var positive_n = tape.l2_normalize_rows(pair.positive);
    Var s_pos = tape.rowwise_dot(anchor_n, positive_n);  // 1x1
    const double inv_tau = 1.0 / pair.temperature;
    if (tape.value(pair.negatives).rows() == 0) {
        // denominator equals numerator: the loss is identically zero but we
        // keep the graph connected so gradients stay defined (and zero)
        return tape.sub(tape.scale(s_pos, inv_tau), tape.scale(s_pos, inv_tau));
    }
    Var negs_n = tape.l2_normalize_rows(pair.negatives);
    Var s_neg = tape.matmul(negs_n, tape.transpose(anchor_n));  // M x 1
    Var all = tape.vcat(s_pos, s_neg);
    Var scaled = tape.scale(all, inv_tau);
    Var lse = tape.log(tape.sum(tape.exp(scaled)));
    return tape.sub(lse, tape.scale(s_pos, inv_tau));
}

Var bpr_loss(Tape& tape, Var pos_scores, Var neg_scores) {
    Var margin = tape.sub(pos_scores, neg_scores);
    // -ln sigma(x) = softplus(-x)
    return tape.mean(tape.softplus(tape.scale(margin, -1.0)));
}

}  // namespace hgrec
