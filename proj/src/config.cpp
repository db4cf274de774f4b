#include "clsr/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace clsr::config {

namespace {

using nlohmann::json;

[[noreturn]] void bad_key(const std::string& key, const std::string& why) {
    fail(errc::config, "config key \"" + key + "\" " + why);
}

double get_double(const json& v, const std::string& key) {
    if (!v.is_number()) bad_key(key, "must be a number");
    return v.get<double>();
}

bool get_bool(const json& v, const std::string& key) {
    if (!v.is_boolean()) bad_key(key, "must be true or false");
    return v.get<bool>();
}

std::string get_string(const json& v, const std::string& key) {
    if (!v.is_string()) bad_key(key, "must be a string");
    return v.get<std::string>();
}

uint64_t get_u64(const json& v, const std::string& key) {
    // The parser stores non-negative integer literals as unsigned.
    if (!v.is_number_unsigned()) bad_key(key, "must be a non-negative integer");
    return v.get<uint64_t>();
}

uint32_t get_u32(const json& v, const std::string& key) {
    uint64_t u = get_u64(v, key);
    if (u > UINT32_MAX) bad_key(key, "is out of range");
    return static_cast<uint32_t>(u);
}

} // namespace

run_config parse_run_config(const std::string& json_text, bool* seed_was_set) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        fail(errc::config, std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) fail(errc::config, "config root must be a JSON object");

    run_config cfg;
    bool seed_set = false;
    for (const auto& [key, v] : doc.items()) {
        if (key == "seed") {
            cfg.seed = get_u64(v, key);
            seed_set = true;
        } else if (key == "out_dir") {
            cfg.out_dir = get_string(v, key);
        } else if (key == "audio_bank") {
            cfg.audio_bank = get_string(v, key);
        } else if (key == "text_bank") {
            cfg.text_bank = get_string(v, key);
        } else if (key == "manifest") {
            cfg.manifest = get_string(v, key);
        } else if (key == "epochs") {
            cfg.epochs = get_u32(v, key);
        } else if (key == "base_lr") {
            cfg.base_lr = get_double(v, key);
        } else if (key == "lr_decay_factor") {
            cfg.lr_decay_factor = get_double(v, key);
        } else if (key == "lr_decay_every") {
            cfg.lr_decay_every = get_u32(v, key);
        } else if (key == "batch_size") {
            cfg.batch_size = get_u32(v, key);
        } else if (key == "optimizer") {
            cfg.optimizer = get_string(v, key);
            if (cfg.optimizer != "adam" && cfg.optimizer != "sgd")
                bad_key(key, "must be \"adam\" or \"sgd\"");
        } else if (key == "adam_beta1") {
            cfg.adam_beta1 = get_double(v, key);
        } else if (key == "adam_beta2") {
            cfg.adam_beta2 = get_double(v, key);
        } else if (key == "adam_eps") {
            cfg.adam_eps = get_double(v, key);
        } else if (key == "val_fraction") {
            cfg.val_fraction = get_double(v, key);
        } else if (key == "embed_dim") {
            cfg.embed_dim = get_u32(v, key);
        } else if (key == "hidden_dim") {
            cfg.hidden_dim = get_u32(v, key);
        } else if (key == "alpha") {
            cfg.alpha = get_double(v, key);
        } else if (key == "beta") {
            cfg.beta = get_double(v, key);
        } else if (key == "tau0") {
            cfg.tau0 = get_double(v, key);
        } else if (key == "gamma") {
            cfg.gamma = get_double(v, key);
        } else if (key == "intra_terms") {
            cfg.intra_terms = get_bool(v, key);
        } else if (key == "adaptive_tau") {
            cfg.adaptive_tau = get_bool(v, key);
        } else if (key == "sample_rate") {
            cfg.sample_rate = get_u32(v, key);
        } else if (key == "fmin") {
            cfg.fmin = get_double(v, key);
        } else if (key == "fmax") {
            cfg.fmax = get_double(v, key);
        } else if (key == "synth_pairs") {
            cfg.synth_pairs = get_u64(v, key);
        } else if (key == "synth_latent_dim") {
            cfg.synth_latent_dim = get_u32(v, key);
        } else if (key == "synth_d_a") {
            cfg.synth_d_a = get_u32(v, key);
        } else if (key == "synth_d_t") {
            cfg.synth_d_t = get_u32(v, key);
        } else if (key == "synth_noise_sigma") {
            cfg.synth_noise_sigma = get_double(v, key);
        } else if (key == "synth_captions") {
            cfg.synth_captions = get_u32(v, key);
        } else {
            fail(errc::config, "unknown config key \"" + key + "\"");
        }
    }
    if (seed_was_set) *seed_was_set = seed_set;
    return cfg;
}

run_config load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(errc::config, "config file not found: " + path);
    std::ostringstream text;
    text << in.rdbuf();

    bool seed_set = false;
    run_config cfg = parse_run_config(text.str(), &seed_set);
    if (!seed_set) {
        if (const char* env = std::getenv("CLSR_SEED")) {
            std::string s(env);
            char* end = nullptr;
            errno = 0;
            unsigned long long v = std::strtoull(s.c_str(), &end, 10);
            if (s.empty() || end != s.c_str() + s.size() || errno != 0 || s[0] == '-')
                fail(errc::config, "CLSR_SEED must be a non-negative integer, got \"" + s + "\"");
            cfg.seed = v;
        }
    }
    return cfg;
}

std::string resolved_json(const run_config& cfg) {
    json doc;
    doc["seed"] = cfg.seed;
    doc["audio_bank"] = cfg.audio_bank;
    doc["text_bank"] = cfg.text_bank;
    doc["manifest"] = cfg.manifest;
    doc["epochs"] = cfg.epochs;
    doc["base_lr"] = cfg.base_lr;
    doc["lr_decay_factor"] = cfg.lr_decay_factor;
    doc["lr_decay_every"] = cfg.lr_decay_every;
    doc["batch_size"] = cfg.batch_size;
    doc["optimizer"] = cfg.optimizer;
    doc["adam_beta1"] = cfg.adam_beta1;
    doc["adam_beta2"] = cfg.adam_beta2;
    doc["adam_eps"] = cfg.adam_eps;
    doc["val_fraction"] = cfg.val_fraction;
    doc["embed_dim"] = cfg.embed_dim;
    doc["hidden_dim"] = cfg.hidden_dim;
    doc["alpha"] = cfg.alpha;
    doc["beta"] = cfg.beta;
    doc["tau0"] = cfg.tau0;
    doc["gamma"] = cfg.gamma;
    doc["intra_terms"] = cfg.intra_terms;
    doc["adaptive_tau"] = cfg.adaptive_tau;
    doc["sample_rate"] = cfg.sample_rate;
    doc["fmin"] = cfg.fmin;
    doc["fmax"] = cfg.fmax;
    doc["synth_pairs"] = cfg.synth_pairs;
    doc["synth_latent_dim"] = cfg.synth_latent_dim;
    doc["synth_d_a"] = cfg.synth_d_a;
    doc["synth_d_t"] = cfg.synth_d_t;
    doc["synth_noise_sigma"] = cfg.synth_noise_sigma;
    doc["synth_captions"] = cfg.synth_captions;
    return doc.dump(2) + "\n";
}

trainer::train_config to_train_config(const run_config& cfg, uint32_t d_a, uint32_t d_t) {
    trainer::train_config t;
    t.epochs = cfg.epochs;
    t.base_lr = cfg.base_lr;
    t.lr_decay_factor = cfg.lr_decay_factor;
    t.lr_decay_every = cfg.lr_decay_every;
    t.batch_size = cfg.batch_size;
    t.optimizer = cfg.optimizer == "sgd" ? trainer::optimizer_kind::sgd
                                         : trainer::optimizer_kind::adam;
    t.adam_beta1 = cfg.adam_beta1;
    t.adam_beta2 = cfg.adam_beta2;
    t.adam_eps = cfg.adam_eps;
    t.seed = cfg.seed;
    t.val_fraction = cfg.val_fraction;
    t.loss.weights = {.alpha = cfg.alpha, .beta = cfg.beta, .tau0 = cfg.tau0,
                      .gamma = cfg.gamma};
    t.loss.intra_terms = cfg.intra_terms;
    t.loss.adaptive_tau = cfg.adaptive_tau;
    t.dims = {.d_a = d_a, .d_t = d_t, .hidden = cfg.hidden_dim, .c = cfg.embed_dim};
    return t;
}

data::synthetic_config to_synth_config(const run_config& cfg) {
    data::synthetic_config s;
    s.n_pairs = cfg.synth_pairs;
    s.latent_dim = cfg.synth_latent_dim;
    s.d_a = cfg.synth_d_a;
    s.d_t = cfg.synth_d_t;
    s.noise_sigma = cfg.synth_noise_sigma;
    s.seed = cfg.seed;
    s.captions_per_audio = cfg.synth_captions;
    return s;
}

dsp::dsp_params to_dsp_params(const run_config& cfg) {
    dsp::dsp_params p;
    p.sample_rate = cfg.sample_rate;
    p.fmin = cfg.fmin;
    p.fmax = cfg.fmax;
    return p;
}

} // namespace clsr::config
