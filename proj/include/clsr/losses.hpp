#pragma once

#include "clsr/graph.hpp"
#include "clsr/model.hpp"
#include "clsr/tensor.hpp"

namespace clsr::losses {

struct loss_weights {
    double alpha = 1.0; // semantic consistency weight
    double beta = 0.1;  // reconstruction weight
    double tau0 = 0.07; // base temperature
    double gamma = 1.2; // temperature schedule base
};

// alpha, beta >= 0; tau0, gamma > 0. Violations are config errors.
void validate(const loss_weights& w);

struct loss_config {
    loss_weights weights;
    bool intra_terms = true;  // include the a2a/t2t contrastive terms
    bool adaptive_tau = true; // batch-confidence schedule vs fixed tau0
};

// Per-batch report. con and total are exact double sums of the other fields,
// so the reconciliation identities hold to roundoff; the graph root value is
// the same quantity accumulated in 32-bit.
struct loss_breakdown {
    double a2t = 0, t2a = 0, a2a = 0, t2t = 0;
    double con = 0, sem = 0, rec = 0, total = 0;
    double tau_realized = 0;
    double alignment_confidence = 0;
};

// 64-bit cosine matrix: out[i][j] = cos(x_i, y_j), rows eps-guarded and the
// result clamped into [-1, 1] to repair rounding. Detached from any graph.
tensor2d cosine_sim_matrix(const tensor2& x, const tensor2& y);

// Sum of squared asymmetry of a raw square matrix: sum_ij (s_ij - s_ji)^2.
double asymmetry_penalty_value(const tensor2d& s);

struct temperature {
    double tau = 0;
    double confidence = 0;
};

// tau = tau0 * gamma^confidence with confidence = mean diagonal cosine of
// (z_a, z_t), clamped into [-1, 1]. Pure value computation: the schedule is
// a per-batch constant and never differentiated through.
temperature adaptive_temperature(const tensor2& z_a, const tensor2& z_t, double tau0,
                                 double gamma);

// One retrieval direction: -(1/b) sum_i log softmax_row_i(Q K^T / tau)[i].
// The positive is the diagonal; the other b-1 items are the negatives and the
// positive appears once in the denominator. Rows of q and k must be unit
// normalized by the caller. Stabilized via row-max subtraction inside the
// logsumexp kernel. b < 2 is a contract error; tau must be positive.
node_id contrastive_directional(graph& g, node_id q, node_id k, double tau);

// Convenience evaluation on plain tensors (builds a throwaway graph).
double contrastive_directional_value(const tensor2& q, const tensor2& k, double tau);

struct contrastive_nodes {
    node_id a2t = 0, t2a = 0, a2a = 0, t2t = 0;
    node_id con = 0;
};

// con = a2t + t2a (+ a2a + t2t when intra_terms). Intra-modal terms pair each
// item with itself as the positive, pushing apart in-batch same-modality
// negatives. When intra_terms is false, a2a/t2t are left as node 0.
contrastive_nodes contrastive_total(graph& g, node_id z_a, node_id z_t, double tau,
                                    bool intra_terms);

// || S - S^T ||_F^2 with S the cosine matrix of (z_a, z_t). Inputs are
// re-normalized internally so the penalty is a true cosine asymmetry even on
// raw activations; 0 iff S is symmetric.
node_id semantic_consistency(graph& g, node_id z_a, node_id z_t);
double semantic_consistency_value(const tensor2& z_a, const tensor2& z_t);

// || f_t - h_t ||_F^2 + || f_a - h_a ||_F^2. Targets are live graph nodes, so
// gradients flow into both the decoders and the adapter features.
node_id reconstruction(graph& g, node_id f_a, node_id f_t, node_id h_a, node_id h_t);

struct loss_result {
    node_id root = 0; // scalar [1x1] node: con + alpha*sem + beta*rec
    loss_breakdown breakdown;
};

// Composes the full objective over a completed forward pass. The temperature
// is computed from the current embeddings before any contrastive term is
// built. Terms whose weight is zero are skipped entirely (their breakdown
// fields stay 0).
loss_result total_loss(model::forward_state& fs, const loss_config& cfg);

} // namespace clsr::losses
