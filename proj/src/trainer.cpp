#include "clsr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "clsr/eval.hpp"

namespace clsr::trainer {

namespace {

void append_csv_double(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

} // namespace

void validate(const train_config& cfg) {
    if (!(cfg.base_lr > 0) || !std::isfinite(cfg.base_lr))
        fail(errc::config, "base_lr must be > 0, got " + std::to_string(cfg.base_lr));
    if (!(cfg.lr_decay_factor > 0) || cfg.lr_decay_factor > 1.0)
        fail(errc::config,
             "lr_decay_factor must be in (0, 1], got " + std::to_string(cfg.lr_decay_factor));
    if (cfg.lr_decay_every < 1) fail(errc::config, "lr_decay_every must be >= 1");
    if (cfg.batch_size < 2)
        fail(errc::config, "batch_size must be >= 2, got " + std::to_string(cfg.batch_size));
    if (!(cfg.adam_beta1 >= 0) || cfg.adam_beta1 >= 1.0)
        fail(errc::config, "adam_beta1 must be in [0, 1)");
    if (!(cfg.adam_beta2 >= 0) || cfg.adam_beta2 >= 1.0)
        fail(errc::config, "adam_beta2 must be in [0, 1)");
    if (!(cfg.adam_eps > 0)) fail(errc::config, "adam_eps must be > 0");
    if (!(cfg.val_fraction >= 0) || cfg.val_fraction >= 1.0)
        fail(errc::config,
             "val_fraction must be in [0, 1), got " + std::to_string(cfg.val_fraction));
    if (cfg.dims.d_a == 0 || cfg.dims.d_t == 0 || cfg.dims.hidden == 0 || cfg.dims.c == 0)
        fail(errc::config, "model dims must all be positive");
    losses::validate(cfg.loss.weights);
}

double lr_at(uint32_t epoch, double base_lr, double decay_factor, uint32_t decay_every) {
    if (decay_every == 0) fail(errc::config, "lr decay interval must be >= 1");
    return base_lr * std::pow(decay_factor, double(epoch / decay_every));
}

optimizer_state init_optimizer(const model::model_params& params, const train_config& cfg) {
    optimizer_state st;
    st.kind = cfg.optimizer;
    st.beta1 = cfg.adam_beta1;
    st.beta2 = cfg.adam_beta2;
    st.eps = cfg.adam_eps;
    if (st.kind == optimizer_kind::adam) {
        for (const auto& nt : params.tensors()) {
            st.m.emplace_back(nt.t->rows, nt.t->cols);
            st.v.emplace_back(nt.t->rows, nt.t->cols);
        }
    }
    return st;
}

void optimizer_step(model::model_params& params, const std::vector<const tensor2*>& grads,
                    optimizer_state& state, double lr) {
    auto ts = params.tensors();
    if (grads.size() != ts.size())
        fail(errc::dimension, "got " + std::to_string(grads.size()) + " gradients for " +
                                  std::to_string(ts.size()) + " tensors");

    // Validate everything before touching anything: a numeric abort must
    // leave the parameters exactly as they were. A null gradient means the
    // tensor was unreachable from the loss (its term is disabled) -> skip.
    for (size_t i = 0; i < ts.size(); ++i) {
        if (!grads[i]) continue;
        if (!grads[i]->same_shape(*ts[i].t))
            fail(errc::dimension, "gradient shape " + shape_str(*grads[i]) +
                                      " does not match tensor \"" + ts[i].name + "\" " +
                                      shape_str(*ts[i].t));
        if (!grads[i]->all_finite())
            fail(errc::numeric, "non-finite gradient in tensor \"" + ts[i].name + "\"");
    }

    state.step++;
    if (state.kind == optimizer_kind::sgd) {
        for (size_t i = 0; i < ts.size(); ++i) {
            if (!grads[i]) continue;
            tensor2& p = *ts[i].t;
            for (size_t k = 0; k < p.size(); ++k)
                p.data[k] = static_cast<float>(double(p.data[k]) - lr * grads[i]->data[k]);
        }
        return;
    }

    double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
    double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
    for (size_t i = 0; i < ts.size(); ++i) {
        if (!grads[i]) continue;
        tensor2& p = *ts[i].t;
        tensor2& m = state.m[i];
        tensor2& v = state.v[i];
        for (size_t k = 0; k < p.size(); ++k) {
            double g = grads[i]->data[k];
            double mk = state.beta1 * m.data[k] + (1.0 - state.beta1) * g;
            double vk = state.beta2 * v.data[k] + (1.0 - state.beta2) * g * g;
            m.data[k] = static_cast<float>(mk);
            v.data[k] = static_cast<float>(vk);
            double update = lr * (mk / bc1) / (std::sqrt(vk / bc2) + state.eps);
            p.data[k] = static_cast<float>(double(p.data[k]) - update);
        }
    }
}

train_result train(const train_config& cfg, const data::feature_bank& audio,
                   const data::feature_bank& text, const data::manifest& m,
                   std::ostream* progress) {
    validate(cfg);
    data::validate_manifest_ids(m, audio, text);
    if (audio.dim() != cfg.dims.d_a)
        fail(errc::config, "audio bank dim " + std::to_string(audio.dim()) +
                               " does not match configured d_a " + std::to_string(cfg.dims.d_a));
    if (text.dim() != cfg.dims.d_t)
        fail(errc::config, "text bank dim " + std::to_string(text.dim()) +
                               " does not match configured d_t " + std::to_string(cfg.dims.d_t));

    auto split = data::split_pairs(m, cfg.val_fraction, cfg.seed);
    train_result res;
    res.params = model::init_params(cfg.dims, cfg.seed);
    res.best_params = res.params;

    if (cfg.epochs > 0 && split.train.pairs.size() < cfg.batch_size)
        fail(errc::empty, "training split holds " + std::to_string(split.train.pairs.size()) +
                              " pairs, fewer than one batch of " +
                              std::to_string(cfg.batch_size));
    res.dropped_pairs_per_epoch = split.train.pairs.size() % cfg.batch_size;

    optimizer_state opt = init_optimizer(res.params, cfg);
    bool validated_any = false;

    try {
        for (uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
            double lr = lr_at(epoch, cfg.base_lr, cfg.lr_decay_factor, cfg.lr_decay_every);
            auto batches = data::sample_batches(audio, text, split.train, cfg.batch_size,
                                                cfg.seed, epoch);
            double tau_min = 0, tau_max = 0, tau_sum = 0;
            for (uint32_t step = 0; step < batches.size(); ++step) {
                const data::batch& b = batches[step];
                auto fs = model::forward(res.params, b.audio_features, b.text_features);
                auto loss = losses::total_loss(fs, cfg.loss);
                fs.g.backward(loss.root);

                std::vector<const tensor2*> grads;
                grads.reserve(fs.param_leaves.size());
                for (node_id leaf : fs.param_leaves)
                    grads.push_back(fs.g.grad_defined(leaf) ? &fs.g.grad(leaf) : nullptr);
                optimizer_step(res.params, grads, opt, lr);

                res.log.push_back({epoch, step, loss.breakdown});
                double tau = loss.breakdown.tau_realized;
                tau_min = step == 0 ? tau : std::min(tau_min, tau);
                tau_max = step == 0 ? tau : std::max(tau_max, tau);
                tau_sum += tau;
                if (progress) {
                    char line[128];
                    std::snprintf(line, sizeof line, "epoch %u step %u total=%.6f tau=%.6f\n",
                                  epoch, step, loss.breakdown.total, tau);
                    *progress << line;
                }
            }
            if (progress && !batches.empty()) {
                char line[160];
                std::snprintf(line, sizeof line,
                              "epoch %u tau min=%.6f mean=%.6f max=%.6f dropped=%zu\n", epoch,
                              tau_min, tau_sum / double(batches.size()), tau_max,
                              res.dropped_pairs_per_epoch);
                *progress << line;
            }

            if (!split.val.pairs.empty()) {
                auto report = eval::evaluate_retrieval(res.params, audio, text, split.val);
                epoch_validation ev;
                ev.epoch = epoch;
                ev.r1_a2t = report.a2t.r1;
                ev.r1_t2a = report.t2a.r1;
                ev.r1_sum = ev.r1_a2t + ev.r1_t2a;
                res.validations.push_back(ev);
                validated_any = true;
                if (ev.r1_sum > res.best_metric) {
                    res.best_metric = ev.r1_sum;
                    res.best_epoch = epoch;
                    res.best_params = res.params;
                }
                if (progress) {
                    char line[128];
                    std::snprintf(line, sizeof line, "epoch %u val r1_a2t=%.4f r1_t2a=%.4f\n",
                                  epoch, ev.r1_a2t, ev.r1_t2a);
                    *progress << line;
                }
            }
        }
    } catch (const error& e) {
        if (e.code() != errc::numeric) throw;
        res.aborted = true;
        res.abort_reason = e.what();
        if (progress) *progress << "aborted: " << e.what() << "\n";
    }

    if (!validated_any && !res.aborted) {
        res.best_params = res.params;
        res.best_epoch = cfg.epochs == 0 ? 0 : cfg.epochs - 1;
    }
    return res;
}

std::string format_log_csv(const std::vector<step_log>& log) {
    std::string out = "epoch,step,a2t,t2a,a2a,t2t,sem,rec,total,tau,confidence\n";
    for (const auto& s : log) {
        out += std::to_string(s.epoch) + ',' + std::to_string(s.step);
        const auto& b = s.loss;
        for (double v : {b.a2t, b.t2a, b.a2a, b.t2t, b.sem, b.rec, b.total, b.tau_realized,
                         b.alignment_confidence}) {
            out += ',';
            append_csv_double(out, v);
        }
        out += '\n';
    }
    return out;
}

} // namespace clsr::trainer
