#pragma once

#include <cstdint>
#include <string>

#include "clsr/data.hpp"
#include "clsr/dsp.hpp"
#include "clsr/trainer.hpp"

namespace clsr::config {

// Flat key space shared by the JSON config file and the CLI flags. Every
// field below is a JSON key of the same name; unknown keys in a file are
// rejected so typos cannot silently fall back to defaults. out_dir is
// run-local plumbing and is excluded from the resolved snapshot, which is
// what keeps re-runs from a snapshot byte-identical.
struct run_config {
    uint64_t seed = 0;
    std::string out_dir;
    std::string audio_bank;
    std::string text_bank;
    std::string manifest;

    uint32_t epochs = 50;
    double base_lr = 1e-4;
    double lr_decay_factor = 0.1;
    uint32_t lr_decay_every = 20;
    uint32_t batch_size = 32; // desk-scale default, not dictated by the method
    std::string optimizer = "adam";
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double val_fraction = 0.1;
    uint32_t embed_dim = 1024;
    uint32_t hidden_dim = 512; // adapter/head hidden width, free parameter

    double alpha = 1.0;
    double beta = 0.1;
    double tau0 = 0.07;
    double gamma = 1.2;
    bool intra_terms = true;
    bool adaptive_tau = true;

    uint32_t sample_rate = 32000;
    double fmin = 50.0;
    double fmax = 14000.0;

    uint64_t synth_pairs = 200;
    uint32_t synth_latent_dim = 8;
    uint32_t synth_d_a = 32;
    uint32_t synth_d_t = 32;
    double synth_noise_sigma = 0.1;
    uint32_t synth_captions = 1;

    bool operator==(const run_config&) const = default;
};

// Parse a JSON object. Missing keys keep defaults; unknown keys, wrong
// types, and out-of-range values raise errc::config naming the key. When
// the file does not set "seed", seed_was_set reports that so the caller
// can apply lower-precedence sources.
run_config parse_run_config(const std::string& json_text, bool* seed_was_set = nullptr);

// Read and parse a config file. A missing file raises errc::config with
// the path in the message. Seed precedence here: file > CLSR_SEED
// environment variable > default 0. CLI flag overrides sit above all of
// these and are applied by the caller afterwards.
run_config load_run_config(const std::string& path);

// Deterministic JSON snapshot of every field except out_dir, suitable for
// writing as run.json. parse_run_config(resolved_json(c)) recovers c
// exactly (modulo out_dir).
std::string resolved_json(const run_config& cfg);

trainer::train_config to_train_config(const run_config& cfg, uint32_t d_a, uint32_t d_t);
data::synthetic_config to_synth_config(const run_config& cfg);
dsp::dsp_params to_dsp_params(const run_config& cfg);

} // namespace clsr::config
