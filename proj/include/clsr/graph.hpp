#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clsr/tensor.hpp"

namespace clsr {

// Reverse-mode tape over 2-D tensors. Nodes are appended in evaluation order,
// so inputs always precede outputs and the tape is acyclic by construction.
// Forward values are computed eagerly at node creation and are immutable
// afterwards; backward walks the tape once in reverse order. Graphs never
// share state: the trainer builds a fresh graph per step.
//
// Op set is deliberately small: matmul, transpose, elementwise add/sub,
// row-broadcast bias add, relu, row L2-normalization, scalar scale,
// elementwise exp/log, max-stabilized row log-sum-exp, trace, full sum,
// squared Frobenius norm. Reductions accumulate in 64-bit and store 32-bit.
//
// Any non-finite value produced by an op is surfaced as errc::numeric at
// creation time; training aborts ride on that signal.

enum class op_kind : uint8_t {
    leaf,
    matmul,
    transpose,
    add,
    sub,
    add_bias_row,
    relu,
    l2_normalize_rows,
    scale,
    exp_elem,
    log_elem,
    row_logsumexp,
    trace,
    sum_all,
    frobenius_sq,
};

const char* op_name(op_kind k);

using node_id = uint32_t;

class graph {
  public:
    graph() = default;
    graph(const graph&) = delete;
    graph& operator=(const graph&) = delete;
    graph(graph&&) = default;
    graph& operator=(graph&&) = default;

    // Leaves hold parameters and inputs. Values must be finite.
    node_id leaf(tensor2 value);

    node_id matmul(node_id a, node_id b);
    node_id transpose(node_id x);
    node_id add(node_id a, node_id b);
    node_id sub(node_id a, node_id b);
    // x is [m x n], bias is [1 x n]; bias is added to every row.
    node_id add_bias_row(node_id x, node_id bias);
    node_id relu(node_id x);
    // Each row divided by max(||row||_2, eps); norms accumulate in 64-bit.
    node_id l2_normalize_rows(node_id x, double eps = 1e-12);
    // Multiply by a compile-time constant (not a node; no gradient to c).
    node_id scale(node_id x, double c);
    node_id exp_elem(node_id x);
    node_id log_elem(node_id x);
    // [m x n] -> [m x 1]; log(sum(exp(row))) with row-max subtraction, so the
    // result is exact for arbitrarily large magnitudes.
    node_id row_logsumexp(node_id x);
    // [n x n] -> [1 x 1] sum of the diagonal.
    node_id trace(node_id x);
    node_id sum_all(node_id x);
    // [m x n] -> [1 x 1] sum of squared entries.
    node_id frobenius_sq(node_id x);

    const tensor2& value(node_id id) const;

    // Valid only after backward(); unreachable nodes have no gradient.
    const tensor2& grad(node_id id) const;

    // root must be [1 x 1]. Seeds d(root)/d(root) = 1 and visits every node
    // reachable from root exactly once in reverse insertion order. A second
    // call on the same graph is a contract error: values are immutable, so
    // re-running could only double-accumulate.
    void backward(node_id root);

    bool backward_ran() const { return backward_ran_; }

    // True once backward() has run and id was reachable from its root. A
    // leaf outside the root's subgraph (a parameter whose loss term is
    // disabled) has no gradient, not a zero gradient.
    bool grad_defined(node_id id) const;

    // Re-evaluates the subgraph below root entirely in 64-bit, optionally with
    // one leaf entry shifted by delta. This is the replay path the
    // finite-difference gradient checker drives; it shares the forward kernels
    // (instantiated at double) but not the reverse path under test.
    // relu_sign_hash, when given, receives a hash of every relu input's sign
    // encountered during the replay; two replays whose hashes differ crossed a
    // relu kink between them, where central differences are meaningless.
    double eval_scalar_f64(node_id root) const;
    double eval_scalar_f64_perturbed(node_id root, node_id leaf, size_t flat_index,
                                     double delta, uint64_t* relu_sign_hash = nullptr) const;

    size_t node_count() const { return nodes_.size(); }
    op_kind kind(node_id id) const;

  private:
    struct node {
        op_kind kind;
        node_id a = 0;
        node_id b = 0;
        double attr = 0.0; // scale constant or normalization eps
        tensor2 value;
        tensor2 grad;
    };

    node_id push(node n);
    const node& at(node_id id) const;
    std::vector<char> reachable_from(node_id root) const;

    std::vector<node> nodes_;
    bool backward_ran_ = false;
};

} // namespace clsr
