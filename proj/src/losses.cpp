#include "clsr/losses.hpp"

#include <algorithm>
#include <cmath>

namespace clsr::losses {

namespace {

constexpr double kNormEps = 1e-12;

std::vector<double> row_norms(const tensor2& m) {
    std::vector<double> n(m.rows);
    for (size_t i = 0; i < m.rows; ++i) {
        double acc = 0;
        for (size_t j = 0; j < m.cols; ++j) acc += double(m.at(i, j)) * m.at(i, j);
        n[i] = std::max(std::sqrt(acc), kNormEps);
    }
    return n;
}

double row_dot(const tensor2& x, size_t i, const tensor2& y, size_t j) {
    double acc = 0;
    for (size_t c = 0; c < x.cols; ++c) acc += double(x.at(i, c)) * y.at(j, c);
    return acc;
}

} // namespace

void validate(const loss_weights& w) {
    if (!(w.alpha >= 0) || !std::isfinite(w.alpha))
        fail(errc::config, "loss weight alpha must be >= 0, got " + std::to_string(w.alpha));
    if (!(w.beta >= 0) || !std::isfinite(w.beta))
        fail(errc::config, "loss weight beta must be >= 0, got " + std::to_string(w.beta));
    if (!(w.tau0 > 0) || !std::isfinite(w.tau0))
        fail(errc::config, "base temperature tau0 must be > 0, got " + std::to_string(w.tau0));
    if (!(w.gamma > 0) || !std::isfinite(w.gamma))
        fail(errc::config, "temperature base gamma must be > 0, got " + std::to_string(w.gamma));
}

tensor2d cosine_sim_matrix(const tensor2& x, const tensor2& y) {
    if (x.cols != y.cols)
        fail(errc::dimension, "cosine operands have different widths: " + shape_str(x) + " vs " +
                                  shape_str(y));
    auto nx = row_norms(x);
    auto ny = row_norms(y);
    tensor2d s(x.rows, y.rows);
    for (size_t i = 0; i < x.rows; ++i)
        for (size_t j = 0; j < y.rows; ++j)
            s.at(i, j) = std::clamp(row_dot(x, i, y, j) / (nx[i] * ny[j]), -1.0, 1.0);
    return s;
}

double asymmetry_penalty_value(const tensor2d& s) {
    if (s.rows != s.cols)
        fail(errc::dimension, "asymmetry penalty needs a square matrix, got " + shape_str(s));
    double acc = 0;
    for (size_t i = 0; i < s.rows; ++i)
        for (size_t j = 0; j < s.cols; ++j) {
            double d = s.at(i, j) - s.at(j, i);
            acc += d * d;
        }
    return acc;
}

temperature adaptive_temperature(const tensor2& z_a, const tensor2& z_t, double tau0,
                                 double gamma) {
    if (!z_a.same_shape(z_t))
        fail(errc::dimension, "temperature operands have different shapes: " + shape_str(z_a) +
                                  " vs " + shape_str(z_t));
    if (z_a.rows == 0) fail(errc::empty, "temperature over an empty batch");
    if (!(tau0 > 0) || !(gamma > 0))
        fail(errc::config, "temperature parameters must be positive");

    auto na = row_norms(z_a);
    auto nt = row_norms(z_t);
    double conf = 0;
    for (size_t i = 0; i < z_a.rows; ++i) conf += row_dot(z_a, i, z_t, i) / (na[i] * nt[i]);
    conf = std::clamp(conf / double(z_a.rows), -1.0, 1.0);
    return {tau0 * std::pow(gamma, conf), conf};
}

node_id contrastive_directional(graph& g, node_id q, node_id k, double tau) {
    const tensor2& qv = g.value(q);
    const tensor2& kv = g.value(k);
    if (qv.rows < 2)
        fail(errc::contract,
             "contrastive batch needs at least 2 rows, got " + std::to_string(qv.rows));
    if (!qv.same_shape(kv))
        fail(errc::dimension, "contrastive operands have different shapes: " + shape_str(qv) +
                                  " vs " + shape_str(kv));
    if (!(tau > 0) || !std::isfinite(tau))
        fail(errc::config, "temperature must be positive, got " + std::to_string(tau));

    // S/tau, then mean over rows of (logsumexp(row) - diagonal). The kernel
    // subtracts the row max before exponentiating, so tau as small as 1e-3
    // stays finite.
    node_id st = g.scale(g.matmul(q, g.transpose(k)), 1.0 / tau);
    node_id lse_sum = g.sum_all(g.row_logsumexp(st));
    return g.scale(g.sub(lse_sum, g.trace(st)), 1.0 / double(qv.rows));
}

double contrastive_directional_value(const tensor2& q, const tensor2& k, double tau) {
    graph g;
    node_id loss = contrastive_directional(g, g.leaf(q), g.leaf(k), tau);
    return g.value(loss).at(0, 0);
}

contrastive_nodes contrastive_total(graph& g, node_id z_a, node_id z_t, double tau,
                                    bool intra_terms) {
    contrastive_nodes n;
    n.a2t = contrastive_directional(g, z_a, z_t, tau);
    n.t2a = contrastive_directional(g, z_t, z_a, tau);
    if (intra_terms) {
        n.a2a = contrastive_directional(g, z_a, z_a, tau);
        n.t2t = contrastive_directional(g, z_t, z_t, tau);
        n.con = g.add(g.add(n.a2t, n.t2a), g.add(n.a2a, n.t2t));
    } else {
        n.con = g.add(n.a2t, n.t2a);
    }
    return n;
}

node_id semantic_consistency(graph& g, node_id z_a, node_id z_t) {
    const tensor2& av = g.value(z_a);
    const tensor2& tv = g.value(z_t);
    if (!av.same_shape(tv))
        fail(errc::dimension, "semantic consistency operands have different shapes: " +
                                  shape_str(av) + " vs " + shape_str(tv));
    node_id s = g.matmul(g.l2_normalize_rows(z_a), g.transpose(g.l2_normalize_rows(z_t)));
    return g.frobenius_sq(g.sub(s, g.transpose(s)));
}

double semantic_consistency_value(const tensor2& z_a, const tensor2& z_t) {
    return asymmetry_penalty_value(cosine_sim_matrix(z_a, z_t));
}

node_id reconstruction(graph& g, node_id f_a, node_id f_t, node_id h_a, node_id h_t) {
    node_id text_term = g.frobenius_sq(g.sub(f_t, h_t));
    node_id audio_term = g.frobenius_sq(g.sub(f_a, h_a));
    return g.add(text_term, audio_term);
}

loss_result total_loss(model::forward_state& fs, const loss_config& cfg) {
    validate(cfg.weights);
    graph& g = fs.g;

    // Temperature is a per-batch constant: computed from the embedding values,
    // never differentiated through.
    temperature sched = adaptive_temperature(g.value(fs.z_a), g.value(fs.z_t),
                                             cfg.weights.tau0, cfg.weights.gamma);
    double tau = cfg.adaptive_tau ? sched.tau : cfg.weights.tau0;

    auto cn = contrastive_total(g, fs.z_a, fs.z_t, tau, cfg.intra_terms);

    loss_result res;
    loss_breakdown& b = res.breakdown;
    b.a2t = g.value(cn.a2t).at(0, 0);
    b.t2a = g.value(cn.t2a).at(0, 0);
    if (cfg.intra_terms) {
        b.a2a = g.value(cn.a2a).at(0, 0);
        b.t2t = g.value(cn.t2t).at(0, 0);
    }
    b.con = b.a2t + b.t2a + b.a2a + b.t2t;

    node_id root = cn.con;
    if (cfg.weights.alpha > 0) {
        node_id sem = semantic_consistency(g, fs.z_a, fs.z_t);
        b.sem = g.value(sem).at(0, 0);
        root = g.add(root, g.scale(sem, cfg.weights.alpha));
    }
    if (cfg.weights.beta > 0) {
        node_id rec = reconstruction(g, fs.f_a, fs.f_t, fs.h_a, fs.h_t);
        b.rec = g.value(rec).at(0, 0);
        root = g.add(root, g.scale(rec, cfg.weights.beta));
    }
    b.total = b.con + cfg.weights.alpha * b.sem + cfg.weights.beta * b.rec;
    b.tau_realized = tau;
    b.alignment_confidence = sched.confidence;
    res.root = root;
    return res;
}

} // namespace clsr::losses
