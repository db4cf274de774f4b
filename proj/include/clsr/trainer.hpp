#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "clsr/data.hpp"
#include "clsr/losses.hpp"
#include "clsr/model.hpp"

namespace clsr::trainer {

enum class optimizer_kind : uint8_t { adam, sgd };

struct train_config {
    uint32_t epochs = 50;
    double base_lr = 1e-4;
    double lr_decay_factor = 0.1; // multiplied in every lr_decay_every epochs
    uint32_t lr_decay_every = 20;
    uint32_t batch_size = 32;
    optimizer_kind optimizer = optimizer_kind::adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 0;
    double val_fraction = 0.1; // pair-level holdout for model selection
    losses::loss_config loss;
    model::model_dims dims;
};

// epochs >= 1 (0 allowed: degenerate no-op run); base_lr > 0; batch_size >= 2;
// decay factor in (0, 1]; betas in [0, 1); val_fraction in [0, 1).
void validate(const train_config& cfg);

// Step-decay schedule: base_lr * factor^floor(epoch / every).
double lr_at(uint32_t epoch, double base_lr, double decay_factor, uint32_t decay_every);

// Moment buffers mirror model_params::tensors() order. SGD keeps none.
struct optimizer_state {
    optimizer_kind kind = optimizer_kind::adam;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    uint64_t step = 0;
    std::vector<tensor2> m, v;
};

optimizer_state init_optimizer(const model::model_params& params, const train_config& cfg);

// One update over all parameter tensors; grads aligned with tensors(). All
// gradients are scanned for non-finite values BEFORE any tensor is touched,
// so a numeric abort leaves params exactly as they were.
void optimizer_step(model::model_params& params, const std::vector<const tensor2*>& grads,
                    optimizer_state& state, double lr);

struct step_log {
    uint32_t epoch = 0;
    uint32_t step = 0; // step index within the epoch
    losses::loss_breakdown loss;
};

struct epoch_validation {
    uint32_t epoch = 0;
    double r1_a2t = 0, r1_t2a = 0;
    double r1_sum = 0; // model-selection metric
};

struct train_result {
    model::model_params params;      // after the last completed step
    model::model_params best_params; // best validation r1_sum (final if no val)
    uint32_t best_epoch = 0;
    double best_metric = -1.0;
    std::vector<step_log> log;
    std::vector<epoch_validation> validations;
    size_t dropped_pairs_per_epoch = 0; // short-tail pairs excluded by batching
    bool aborted = false;              // non-finite loss or gradient
    std::string abort_reason;
};

// Full training loop: per epoch, shuffled batches of
// forward -> total loss -> backward -> optimizer step, then a validation pass
// over the held-out split. A non-finite value anywhere in the step aborts the
// run, retaining the last good parameters (aborted/abort_reason set, no
// throw). progress, when given, receives human-readable status lines.
train_result train(const train_config& cfg, const data::feature_bank& audio,
                   const data::feature_bank& text, const data::manifest& m,
                   std::ostream* progress = nullptr);

// CSV rendering of the step log:
// epoch,step,a2t,t2a,a2a,t2t,sem,rec,total,tau,confidence
std::string format_log_csv(const std::vector<step_log>& log);

} // namespace clsr::trainer
