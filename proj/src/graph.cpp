#include "clsr/graph.hpp"

#include <algorithm>
#include <cmath>

namespace clsr {

const char* op_name(op_kind k) {
    switch (k) {
        case op_kind::leaf: return "leaf";
        case op_kind::matmul: return "matmul";
        case op_kind::transpose: return "transpose";
        case op_kind::add: return "add";
        case op_kind::sub: return "sub";
        case op_kind::add_bias_row: return "add_bias_row";
        case op_kind::relu: return "relu";
        case op_kind::l2_normalize_rows: return "l2_normalize_rows";
        case op_kind::scale: return "scale";
        case op_kind::exp_elem: return "exp";
        case op_kind::log_elem: return "log";
        case op_kind::row_logsumexp: return "row_logsumexp";
        case op_kind::trace: return "trace";
        case op_kind::sum_all: return "sum_all";
        case op_kind::frobenius_sq: return "frobenius_sq";
    }
    return "?";
}

namespace {

// Forward kernels, templated so the finite-difference harness can replay the
// tape at double precision. Inner products and reductions accumulate in
// 64-bit regardless of the storage type.

template <typename T>
mat<T> k_matmul(const mat<T>& a, const mat<T>& b) {
    mat<T> out(a.rows, b.cols);
    for (size_t i = 0; i < a.rows; ++i) {
        for (size_t j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (size_t k = 0; k < a.cols; ++k)
                acc += static_cast<double>(a.at(i, k)) * static_cast<double>(b.at(k, j));
            out.at(i, j) = static_cast<T>(acc);
        }
    }
    return out;
}

template <typename T>
mat<T> k_transpose(const mat<T>& x) {
    mat<T> out(x.cols, x.rows);
    for (size_t i = 0; i < x.rows; ++i)
        for (size_t j = 0; j < x.cols; ++j) out.at(j, i) = x.at(i, j);
    return out;
}

template <typename T>
mat<T> k_add(const mat<T>& a, const mat<T>& b, double sign) {
    mat<T> out(a.rows, a.cols);
    for (size_t i = 0; i < a.size(); ++i)
        out.data[i] = static_cast<T>(static_cast<double>(a.data[i]) +
                                     sign * static_cast<double>(b.data[i]));
    return out;
}

template <typename T>
mat<T> k_add_bias_row(const mat<T>& x, const mat<T>& bias) {
    mat<T> out(x.rows, x.cols);
    for (size_t i = 0; i < x.rows; ++i)
        for (size_t j = 0; j < x.cols; ++j)
            out.at(i, j) = static_cast<T>(static_cast<double>(x.at(i, j)) +
                                          static_cast<double>(bias.at(0, j)));
    return out;
}

template <typename T>
mat<T> k_relu(const mat<T>& x) {
    mat<T> out(x.rows, x.cols);
    for (size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
    return out;
}

template <typename T>
mat<T> k_l2_normalize_rows(const mat<T>& x, double eps) {
    mat<T> out(x.rows, x.cols);
    for (size_t i = 0; i < x.rows; ++i) {
        double sq = 0.0;
        for (size_t j = 0; j < x.cols; ++j) {
            double v = static_cast<double>(x.at(i, j));
            sq += v * v;
        }
        double div = std::max(std::sqrt(sq), eps);
        for (size_t j = 0; j < x.cols; ++j)
            out.at(i, j) = static_cast<T>(static_cast<double>(x.at(i, j)) / div);
    }
    return out;
}

template <typename T>
mat<T> k_scale(const mat<T>& x, double c) {
    mat<T> out(x.rows, x.cols);
    for (size_t i = 0; i < x.size(); ++i)
        out.data[i] = static_cast<T>(static_cast<double>(x.data[i]) * c);
    return out;
}

template <typename T>
mat<T> k_exp(const mat<T>& x) {
    mat<T> out(x.rows, x.cols);
    for (size_t i = 0; i < x.size(); ++i)
        out.data[i] = static_cast<T>(std::exp(static_cast<double>(x.data[i])));
    return out;
}

template <typename T>
mat<T> k_log(const mat<T>& x) {
    mat<T> out(x.rows, x.cols);
    for (size_t i = 0; i < x.size(); ++i)
        out.data[i] = static_cast<T>(std::log(static_cast<double>(x.data[i])));
    return out;
}

template <typename T>
mat<T> k_row_logsumexp(const mat<T>& x) {
    mat<T> out(x.rows, 1);
    for (size_t i = 0; i < x.rows; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < x.cols; ++j)
            m = std::max(m, static_cast<double>(x.at(i, j)));
        double s = 0.0;
        for (size_t j = 0; j < x.cols; ++j)
            s += std::exp(static_cast<double>(x.at(i, j)) - m);
        out.at(i, 0) = static_cast<T>(m + std::log(s));
    }
    return out;
}

template <typename T>
mat<T> k_trace(const mat<T>& x) {
    mat<T> out(1, 1);
    double acc = 0.0;
    for (size_t i = 0; i < x.rows; ++i) acc += static_cast<double>(x.at(i, i));
    out.at(0, 0) = static_cast<T>(acc);
    return out;
}

template <typename T>
mat<T> k_sum_all(const mat<T>& x) {
    mat<T> out(1, 1);
    double acc = 0.0;
    for (T v : x.data) acc += static_cast<double>(v);
    out.at(0, 0) = static_cast<T>(acc);
    return out;
}

template <typename T>
mat<T> k_frobenius_sq(const mat<T>& x) {
    mat<T> out(1, 1);
    double acc = 0.0;
    for (T v : x.data) {
        double d = static_cast<double>(v);
        acc += d * d;
    }
    out.at(0, 0) = static_cast<T>(acc);
    return out;
}

template <typename T>
mat<T> eval_op(op_kind kind, const mat<T>& a, const mat<T>* b, double attr) {
    switch (kind) {
        case op_kind::matmul: return k_matmul(a, *b);
        case op_kind::transpose: return k_transpose(a);
        case op_kind::add: return k_add(a, *b, 1.0);
        case op_kind::sub: return k_add(a, *b, -1.0);
        case op_kind::add_bias_row: return k_add_bias_row(a, *b);
        case op_kind::relu: return k_relu(a);
        case op_kind::l2_normalize_rows: return k_l2_normalize_rows(a, attr);
        case op_kind::scale: return k_scale(a, attr);
        case op_kind::exp_elem: return k_exp(a);
        case op_kind::log_elem: return k_log(a);
        case op_kind::row_logsumexp: return k_row_logsumexp(a);
        case op_kind::trace: return k_trace(a);
        case op_kind::sum_all: return k_sum_all(a);
        case op_kind::frobenius_sq: return k_frobenius_sq(a);
        case op_kind::leaf: break;
    }
    fail(errc::contract, "eval_op on leaf");
}

void accumulate(tensor2& slot, size_t idx, double v) {
    slot.data[idx] = static_cast<float>(static_cast<double>(slot.data[idx]) + v);
}

} // namespace

node_id graph::push(node n) {
    if (!n.value.all_finite())
        fail(errc::numeric, std::string("non-finite value produced by op '") + op_name(n.kind) +
                                "' at node " + std::to_string(nodes_.size()));
    nodes_.push_back(std::move(n));
    return static_cast<node_id>(nodes_.size() - 1);
}

const graph::node& graph::at(node_id id) const {
    if (id >= nodes_.size())
        fail(errc::contract, "node id " + std::to_string(id) + " out of range");
    return nodes_[id];
}

op_kind graph::kind(node_id id) const { return at(id).kind; }

node_id graph::leaf(tensor2 value) {
    node n;
    n.kind = op_kind::leaf;
    n.value = std::move(value);
    return push(std::move(n));
}

node_id graph::matmul(node_id a, node_id b) {
    const auto& va = at(a).value;
    const auto& vb = at(b).value;
    if (va.cols != vb.rows)
        fail(errc::dimension,
             "matmul " + shape_str(va) + " x " + shape_str(vb) + ": inner dimensions differ");
    node n{op_kind::matmul, a, b, 0.0, k_matmul(va, vb), {}};
    return push(std::move(n));
}

node_id graph::transpose(node_id x) {
    node n{op_kind::transpose, x, 0, 0.0, k_transpose(at(x).value), {}};
    return push(std::move(n));
}

node_id graph::add(node_id a, node_id b) {
    const auto& va = at(a).value;
    const auto& vb = at(b).value;
    if (!va.same_shape(vb))
        fail(errc::dimension, "add " + shape_str(va) + " vs " + shape_str(vb));
    node n{op_kind::add, a, b, 0.0, k_add(va, vb, 1.0), {}};
    return push(std::move(n));
}

node_id graph::sub(node_id a, node_id b) {
    const auto& va = at(a).value;
    const auto& vb = at(b).value;
    if (!va.same_shape(vb))
        fail(errc::dimension, "sub " + shape_str(va) + " vs " + shape_str(vb));
    node n{op_kind::sub, a, b, 0.0, k_add(va, vb, -1.0), {}};
    return push(std::move(n));
}

node_id graph::add_bias_row(node_id x, node_id bias) {
    const auto& vx = at(x).value;
    const auto& vb = at(bias).value;
    if (vb.rows != 1 || vb.cols != vx.cols)
        fail(errc::dimension,
             "add_bias_row " + shape_str(vx) + " with bias " + shape_str(vb) +
                 ": bias must be [1 x cols]");
    node n{op_kind::add_bias_row, x, bias, 0.0, k_add_bias_row(vx, vb), {}};
    return push(std::move(n));
}

node_id graph::relu(node_id x) {
    node n{op_kind::relu, x, 0, 0.0, k_relu(at(x).value), {}};
    return push(std::move(n));
}

node_id graph::l2_normalize_rows(node_id x, double eps) {
    if (eps <= 0.0) fail(errc::contract, "l2_normalize_rows eps must be positive");
    node n{op_kind::l2_normalize_rows, x, 0, eps, k_l2_normalize_rows(at(x).value, eps), {}};
    return push(std::move(n));
}

node_id graph::scale(node_id x, double c) {
    node n{op_kind::scale, x, 0, c, k_scale(at(x).value, c), {}};
    return push(std::move(n));
}

node_id graph::exp_elem(node_id x) {
    node n{op_kind::exp_elem, x, 0, 0.0, k_exp(at(x).value), {}};
    return push(std::move(n));
}

node_id graph::log_elem(node_id x) {
    node n{op_kind::log_elem, x, 0, 0.0, k_log(at(x).value), {}};
    return push(std::move(n));
}

node_id graph::row_logsumexp(node_id x) {
    if (at(x).value.cols == 0) fail(errc::dimension, "row_logsumexp on zero-width matrix");
    node n{op_kind::row_logsumexp, x, 0, 0.0, k_row_logsumexp(at(x).value), {}};
    return push(std::move(n));
}

node_id graph::trace(node_id x) {
    const auto& v = at(x).value;
    if (v.rows != v.cols)
        fail(errc::dimension, "trace requires a square matrix, got " + shape_str(v));
    node n{op_kind::trace, x, 0, 0.0, k_trace(v), {}};
    return push(std::move(n));
}

node_id graph::sum_all(node_id x) {
    node n{op_kind::sum_all, x, 0, 0.0, k_sum_all(at(x).value), {}};
    return push(std::move(n));
}

node_id graph::frobenius_sq(node_id x) {
    node n{op_kind::frobenius_sq, x, 0, 0.0, k_frobenius_sq(at(x).value), {}};
    return push(std::move(n));
}

const tensor2& graph::value(node_id id) const { return at(id).value; }

const tensor2& graph::grad(node_id id) const {
    if (!backward_ran_) fail(errc::contract, "grad() before backward()");
    const auto& n = at(id);
    if (n.grad.size() == 0 && n.value.size() != 0)
        fail(errc::contract, "node " + std::to_string(id) + " unreachable from backward root");
    return n.grad;
}

bool graph::grad_defined(node_id id) const {
    return backward_ran_ && at(id).grad.size() != 0;
}

std::vector<char> graph::reachable_from(node_id root) const {
    std::vector<char> mark(nodes_.size(), 0);
    std::vector<node_id> stack{root};
    mark[root] = 1;
    while (!stack.empty()) {
        node_id id = stack.back();
        stack.pop_back();
        const node& n = nodes_[id];
        if (n.kind == op_kind::leaf) continue;
        node_id ins[2] = {n.a, n.b};
        size_t arity =
            (n.kind == op_kind::matmul || n.kind == op_kind::add || n.kind == op_kind::sub ||
             n.kind == op_kind::add_bias_row)
                ? 2
                : 1;
        for (size_t i = 0; i < arity; ++i) {
            if (!mark[ins[i]]) {
                mark[ins[i]] = 1;
                stack.push_back(ins[i]);
            }
        }
    }
    return mark;
}

void graph::backward(node_id root) {
    if (backward_ran_)
        fail(errc::contract, "backward already ran on this graph; build a fresh graph per step");
    const node& r = at(root);
    if (r.value.rows != 1 || r.value.cols != 1)
        fail(errc::contract, "backward root must be [1 x 1], got " + shape_str(r.value));

    std::vector<char> mark = reachable_from(root);
    for (size_t id = 0; id < nodes_.size(); ++id)
        if (mark[id]) nodes_[id].grad = tensor2(nodes_[id].value.rows, nodes_[id].value.cols);
    nodes_[root].grad.at(0, 0) = 1.0f;

    // Reverse insertion order is reverse topological order on an append-only
    // tape; each reachable node is visited exactly once.
    for (size_t idp = nodes_.size(); idp-- > 0;) {
        if (!mark[idp]) continue;
        node& n = nodes_[idp];
        if (n.kind == op_kind::leaf) continue;
        const tensor2& g = n.grad;
        node& na = nodes_[n.a];
        switch (n.kind) {
            case op_kind::matmul: {
                node& nb = nodes_[n.b];
                const tensor2& a = na.value;
                const tensor2& b = nb.value;
                for (size_t i = 0; i < a.rows; ++i)
                    for (size_t k = 0; k < a.cols; ++k) {
                        double acc = 0.0;
                        for (size_t j = 0; j < b.cols; ++j)
                            acc += static_cast<double>(g.at(i, j)) *
                                   static_cast<double>(b.at(k, j));
                        accumulate(na.grad, i * a.cols + k, acc);
                    }
                for (size_t k = 0; k < b.rows; ++k)
                    for (size_t j = 0; j < b.cols; ++j) {
                        double acc = 0.0;
                        for (size_t i = 0; i < a.rows; ++i)
                            acc += static_cast<double>(a.at(i, k)) *
                                   static_cast<double>(g.at(i, j));
                        accumulate(nb.grad, k * b.cols + j, acc);
                    }
                break;
            }
            case op_kind::transpose: {
                for (size_t i = 0; i < g.rows; ++i)
                    for (size_t j = 0; j < g.cols; ++j)
                        accumulate(na.grad, j * g.rows + i, static_cast<double>(g.at(i, j)));
                break;
            }
            case op_kind::add: {
                node& nb = nodes_[n.b];
                for (size_t i = 0; i < g.size(); ++i) {
                    accumulate(na.grad, i, static_cast<double>(g.data[i]));
                    accumulate(nb.grad, i, static_cast<double>(g.data[i]));
                }
                break;
            }
            case op_kind::sub: {
                node& nb = nodes_[n.b];
                for (size_t i = 0; i < g.size(); ++i) {
                    accumulate(na.grad, i, static_cast<double>(g.data[i]));
                    accumulate(nb.grad, i, -static_cast<double>(g.data[i]));
                }
                break;
            }
            case op_kind::add_bias_row: {
                node& nb = nodes_[n.b];
                for (size_t i = 0; i < g.size(); ++i)
                    accumulate(na.grad, i, static_cast<double>(g.data[i]));
                for (size_t j = 0; j < g.cols; ++j) {
                    double acc = 0.0;
                    for (size_t i = 0; i < g.rows; ++i)
                        acc += static_cast<double>(g.at(i, j));
                    accumulate(nb.grad, j, acc);
                }
                break;
            }
            case op_kind::relu: {
                for (size_t i = 0; i < g.size(); ++i)
                    if (na.value.data[i] > 0.f)
                        accumulate(na.grad, i, static_cast<double>(g.data[i]));
                break;
            }
            case op_kind::l2_normalize_rows: {
                const tensor2& x = na.value;
                for (size_t i = 0; i < x.rows; ++i) {
                    double sq = 0.0;
                    for (size_t j = 0; j < x.cols; ++j) {
                        double v = static_cast<double>(x.at(i, j));
                        sq += v * v;
                    }
                    double norm = std::sqrt(sq);
                    if (norm > n.attr) {
                        double dot = 0.0;
                        for (size_t j = 0; j < x.cols; ++j)
                            dot += static_cast<double>(g.at(i, j)) *
                                   static_cast<double>(x.at(i, j));
                        double n3 = norm * norm * norm;
                        for (size_t j = 0; j < x.cols; ++j)
                            accumulate(na.grad, i * x.cols + j,
                                       static_cast<double>(g.at(i, j)) / norm -
                                           static_cast<double>(x.at(i, j)) * dot / n3);
                    } else {
                        for (size_t j = 0; j < x.cols; ++j)
                            accumulate(na.grad, i * x.cols + j,
                                       static_cast<double>(g.at(i, j)) / n.attr);
                    }
                }
                break;
            }
            case op_kind::scale: {
                for (size_t i = 0; i < g.size(); ++i)
                    accumulate(na.grad, i, n.attr * static_cast<double>(g.data[i]));
                break;
            }
            case op_kind::exp_elem: {
                for (size_t i = 0; i < g.size(); ++i)
                    accumulate(na.grad, i,
                               static_cast<double>(g.data[i]) *
                                   static_cast<double>(n.value.data[i]));
                break;
            }
            case op_kind::log_elem: {
                for (size_t i = 0; i < g.size(); ++i)
                    accumulate(na.grad, i,
                               static_cast<double>(g.data[i]) /
                                   static_cast<double>(na.value.data[i]));
                break;
            }
            case op_kind::row_logsumexp: {
                // d lse / d x_j = exp(x_j - lse); stored output is the lse.
                const tensor2& x = na.value;
                for (size_t i = 0; i < x.rows; ++i) {
                    double gi = static_cast<double>(g.at(i, 0));
                    double lse = static_cast<double>(n.value.at(i, 0));
                    for (size_t j = 0; j < x.cols; ++j)
                        accumulate(na.grad, i * x.cols + j,
                                   gi * std::exp(static_cast<double>(x.at(i, j)) - lse));
                }
                break;
            }
            case op_kind::trace: {
                double gi = static_cast<double>(g.at(0, 0));
                for (size_t i = 0; i < na.value.rows; ++i)
                    accumulate(na.grad, i * na.value.cols + i, gi);
                break;
            }
            case op_kind::sum_all: {
                double gi = static_cast<double>(g.at(0, 0));
                for (size_t i = 0; i < na.value.size(); ++i) accumulate(na.grad, i, gi);
                break;
            }
            case op_kind::frobenius_sq: {
                double gi = static_cast<double>(g.at(0, 0));
                for (size_t i = 0; i < na.value.size(); ++i)
                    accumulate(na.grad, i, 2.0 * gi * static_cast<double>(na.value.data[i]));
                break;
            }
            case op_kind::leaf: break;
        }
    }
    backward_ran_ = true;
}

double graph::eval_scalar_f64(node_id root) const {
    return eval_scalar_f64_perturbed(root, root, 0, 0.0);
}

double graph::eval_scalar_f64_perturbed(node_id root, node_id leaf, size_t flat_index,
                                        double delta, uint64_t* relu_sign_hash) const {
    const node& r = at(root);
    if (r.value.rows != 1 || r.value.cols != 1)
        fail(errc::contract, "eval_scalar_f64 root must be [1 x 1]");
    if (delta != 0.0) {
        const node& l = at(leaf);
        if (l.kind != op_kind::leaf) fail(errc::contract, "perturbation target must be a leaf");
        if (flat_index >= l.value.size())
            fail(errc::contract, "perturbation index out of range");
    }

    uint64_t hash = 1469598103934665603ull; // FNV offset basis
    std::vector<char> mark = reachable_from(root);
    std::vector<tensor2d> vals(nodes_.size());
    for (size_t id = 0; id <= root; ++id) {
        if (!mark[id]) continue;
        const node& n = nodes_[id];
        if (n.kind == op_kind::leaf) {
            vals[id] = cast_mat<double>(n.value);
            if (delta != 0.0 && id == leaf) vals[id].data[flat_index] += delta;
        } else {
            if (relu_sign_hash && n.kind == op_kind::relu)
                for (double v : vals[n.a].data)
                    hash = (hash ^ (v > 0.0 ? 0x9eull : 0x31ull)) * 1099511628211ull;
            const tensor2d* b = nullptr;
            if (n.kind == op_kind::matmul || n.kind == op_kind::add || n.kind == op_kind::sub ||
                n.kind == op_kind::add_bias_row)
                b = &vals[n.b];
            vals[id] = eval_op<double>(n.kind, vals[n.a], b, n.attr);
        }
    }
    if (relu_sign_hash) *relu_sign_hash = hash;
    return vals[root].at(0, 0);
}

} // namespace clsr
