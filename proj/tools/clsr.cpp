#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "clsr/config.hpp"
#include "clsr/data.hpp"
#include "clsr/dsp.hpp"
#include "clsr/eval.hpp"
#include "clsr/model.hpp"
#include "clsr/trainer.hpp"

namespace fs = std::filesystem;
using namespace clsr;

namespace {

int exit_code_for(errc c) {
    switch (c) {
        case errc::numeric: return 3;
        case errc::dimension:
        case errc::contract: return 4;
        default: return 2; // config, format, unsupported, empty
    }
}

void write_text_file(const fs::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(errc::config, "cannot write " + path.string());
    out << body;
    if (!out) fail(errc::config, "write failed for " + path.string());
}

fs::path prepare_out_dir(const config::run_config& cfg) {
    if (cfg.out_dir.empty())
        fail(errc::config, "an output directory is required (config out_dir or --out)");
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) fail(errc::config, "cannot create output directory " + cfg.out_dir);
    return cfg.out_dir;
}

struct loaded_dataset {
    data::feature_bank audio;
    data::feature_bank text;
    data::manifest m;
};

loaded_dataset load_dataset(const config::run_config& cfg) {
    if (cfg.audio_bank.empty() || cfg.text_bank.empty() || cfg.manifest.empty())
        fail(errc::config, "audio_bank, text_bank, and manifest paths are all required");
    loaded_dataset d;
    d.audio = data::read_feature_bank(cfg.audio_bank);
    d.text = data::read_feature_bank(cfg.text_bank);
    d.m = data::read_manifest(cfg.manifest);
    data::validate_manifest_ids(d.m, d.audio, d.text);
    return d;
}

// The held-out side of the seeded split when one exists, the whole manifest
// otherwise. Shared by eval and ablate so their reports are comparable.
data::manifest eval_manifest(const config::run_config& cfg, const data::manifest& m) {
    auto split = data::split_pairs(m, cfg.val_fraction, cfg.seed);
    return split.val.pairs.empty() ? m : split.val;
}

void print_report(const eval::retrieval_report& r) {
    std::printf("%s  r1 %.4f  r5 %.4f  r10 %.4f  (%zu queries, gallery %zu)\n",
                r.direction.c_str(), r.r1, r.r5, r.r10, static_cast<size_t>(r.n_queries),
                static_cast<size_t>(r.gallery_size));
}

int cmd_synth(const config::run_config& cfg) {
    auto out = prepare_out_dir(cfg);
    auto ds = data::make_synthetic_dataset(config::to_synth_config(cfg));
    data::write_feature_bank(ds.audio, (out / "audio.clsrfb").string());
    data::write_feature_bank(ds.text, (out / "text.clsrfb").string());
    data::write_manifest(ds.pairs, (out / "manifest.json").string());
    write_text_file(out / "run.json", config::resolved_json(cfg));
    std::printf("synth: %zu pairs, audio dim %u, text dim %u -> %s\n", ds.pairs.pairs.size(),
                ds.audio.dim(), ds.text.dim(), out.string().c_str());
    return 0;
}

int cmd_train(const config::run_config& cfg) {
    auto out = prepare_out_dir(cfg);
    auto d = load_dataset(cfg);
    auto tcfg = config::to_train_config(cfg, d.audio.dim(), d.text.dim());

    write_text_file(out / "run.json", config::resolved_json(cfg));
    auto res = trainer::train(tcfg, d.audio, d.text, d.m, &std::cout);
    write_text_file(out / "train_log.csv", trainer::format_log_csv(res.log));
    if (res.aborted) {
        std::cerr << "clsr: training aborted: " << res.abort_reason << "\n";
        return 3;
    }
    model::save_checkpoint(res.params, cfg.seed, cfg.epochs, (out / "final.ckpt").string());
    model::save_checkpoint(res.best_params, cfg.seed, res.best_epoch,
                           (out / "best.ckpt").string());
    std::printf("train: wrote final.ckpt, best.ckpt (epoch %u), train_log.csv -> %s\n",
                res.best_epoch, out.string().c_str());
    return 0;
}

int cmd_eval(const config::run_config& cfg, const std::string& checkpoint_path) {
    auto out = prepare_out_dir(cfg);
    auto d = load_dataset(cfg);
    auto ckpt = model::load_checkpoint(checkpoint_path);
    auto m = eval_manifest(cfg, d.m);

    auto res = eval::evaluate_retrieval(ckpt.params, d.audio, d.text, m);
    write_text_file(out / "retrieval.csv", eval::format_report_csv(res));
    write_text_file(out / "run.json", config::resolved_json(cfg));
    print_report(res.a2t);
    print_report(res.t2a);
    return 0;
}

int cmd_ablate(const config::run_config& cfg, const std::string& variants_csv) {
    auto out = prepare_out_dir(cfg);
    std::vector<eval::variant> variants;
    std::string token;
    for (std::istringstream in(variants_csv); std::getline(in, token, ',');)
        variants.push_back(eval::variant_from_name(token));
    if (variants.empty()) fail(errc::config, "--variants needs at least one name");

    auto d = load_dataset(cfg);
    auto base = config::to_train_config(cfg, d.audio.dim(), d.text.dim());
    auto table = eval::ablation_run(base, variants, d.audio, d.text, d.m, &std::cout);
    write_text_file(out / "ablation.csv", eval::format_ablation_csv(table));
    write_text_file(out / "run.json", config::resolved_json(cfg));
    std::cout << eval::format_ablation_table(table);
    return 0;
}

int cmd_featurize(const std::string& wav_dir, const std::string& out_path,
                  const dsp::dsp_params& params) {
    if (!fs::is_directory(wav_dir)) fail(errc::config, "not a directory: " + wav_dir);

    std::vector<fs::path> wavs;
    for (const auto& entry : fs::directory_iterator(wav_dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
        if (ext == ".wav") wavs.push_back(entry.path());
    }
    std::sort(wavs.begin(), wavs.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
    if (wavs.empty()) fail(errc::empty, "no wav files in " + wav_dir);

    data::feature_bank bank(data::modality::audio, static_cast<uint32_t>(params.n_mels));
    size_t failures = 0;
    for (const auto& path : wavs) {
        try {
            auto clip = dsp::load_wav(path.string());
            auto mel = dsp::log_mel(clip, params);
            std::vector<float> pooled(params.n_mels, 0.f);
            for (size_t f = 0; f < mel.frames(); ++f)
                for (size_t b = 0; b < mel.mel_bins(); ++b)
                    pooled[b] += mel.values.at(f, b);
            for (auto& v : pooled) v /= static_cast<float>(mel.frames());
            bank.add(path.stem().string(), pooled);
        } catch (const error& e) {
            ++failures;
            std::cerr << "featurize: " << path.string() << ": " << e.what() << "\n";
        }
    }
    if (bank.size() == 0)
        fail(errc::format, "all " + std::to_string(failures) + " wav files failed");

    data::write_feature_bank(bank, out_path);
    std::printf("featurize: %zu of %zu files -> %s (dim %zu)\n", bank.size(), wavs.size(),
                out_path.c_str(), params.n_mels);
    return 0;
}

// Flags override file values; the tracking pointers tell us which flags
// were actually passed.
struct config_flags {
    std::string config_path;
    std::string out_dir, audio_bank, text_bank, manifest;
    uint64_t seed = 0;
    uint32_t epochs = 0, batch_size = 0, embed_dim = 0, hidden_dim = 0;
    double base_lr = 0, val_fraction = 0, noise_sigma = 0;
    std::string optimizer;
    uint64_t pairs = 0;
    uint32_t captions = 0;

    CLI::Option *o_out = nullptr, *o_audio = nullptr, *o_text = nullptr, *o_manifest = nullptr;
    CLI::Option *o_seed = nullptr, *o_epochs = nullptr, *o_batch = nullptr;
    CLI::Option *o_embed = nullptr, *o_hidden = nullptr, *o_lr = nullptr, *o_val = nullptr;
    CLI::Option *o_opt = nullptr, *o_pairs = nullptr, *o_sigma = nullptr, *o_captions = nullptr;

    void attach(CLI::App* sub, bool with_train_flags, bool with_synth_flags) {
        sub->add_option("--config", config_path, "JSON run config")->required();
        o_out = sub->add_option("--out", out_dir, "output directory");
        o_seed = sub->add_option("--seed", seed, "RNG seed override");
        o_audio = sub->add_option("--audio-bank", audio_bank, "audio feature bank path");
        o_text = sub->add_option("--text-bank", text_bank, "text feature bank path");
        o_manifest = sub->add_option("--manifest", manifest, "pairing manifest path");
        if (with_train_flags) {
            o_epochs = sub->add_option("--epochs", epochs, "training epochs");
            o_batch = sub->add_option("--batch-size", batch_size, "contrastive batch size");
            o_lr = sub->add_option("--lr", base_lr, "base learning rate");
            o_opt = sub->add_option("--optimizer", optimizer, "adam or sgd");
            o_embed = sub->add_option("--embed-dim", embed_dim, "shared embedding dim");
            o_hidden = sub->add_option("--hidden-dim", hidden_dim, "MLP hidden width");
            o_val = sub->add_option("--val-fraction", val_fraction, "held-out fraction");
        }
        if (with_synth_flags) {
            o_pairs = sub->add_option("--pairs", pairs, "synthetic pair count");
            o_sigma = sub->add_option("--noise-sigma", noise_sigma, "synthetic noise level");
            o_captions = sub->add_option("--captions", captions, "captions per audio");
        }
    }

    config::run_config resolve() const {
        auto cfg = config::load_run_config(config_path);
        auto set = [](CLI::Option* o) { return o && o->count() > 0; };
        if (set(o_out)) cfg.out_dir = out_dir;
        if (set(o_seed)) cfg.seed = seed;
        if (set(o_audio)) cfg.audio_bank = audio_bank;
        if (set(o_text)) cfg.text_bank = text_bank;
        if (set(o_manifest)) cfg.manifest = manifest;
        if (set(o_epochs)) cfg.epochs = epochs;
        if (set(o_batch)) cfg.batch_size = batch_size;
        if (set(o_lr)) cfg.base_lr = base_lr;
        if (set(o_val)) cfg.val_fraction = val_fraction;
        if (set(o_embed)) cfg.embed_dim = embed_dim;
        if (set(o_hidden)) cfg.hidden_dim = hidden_dim;
        if (set(o_pairs)) cfg.synth_pairs = pairs;
        if (set(o_sigma)) cfg.synth_noise_sigma = noise_sigma;
        if (set(o_captions)) cfg.synth_captions = captions;
        if (set(o_opt)) {
            if (optimizer != "adam" && optimizer != "sgd")
                fail(errc::config, "--optimizer must be adam or sgd");
            cfg.optimizer = optimizer;
        }
        return cfg;
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Contrastive audio-text retrieval laboratory"};
    app.require_subcommand(1);

    auto* sc_featurize =
        app.add_subcommand("featurize", "Mean-pooled log-mel features for a directory of WAVs");
    std::string wav_dir, feat_out;
    dsp::dsp_params dsp_params;
    sc_featurize->add_option("--wav-dir", wav_dir, "directory of PCM16 WAV files")->required();
    sc_featurize->add_option("--out", feat_out, "output .clsrfb path")->required();
    sc_featurize->add_option("--sample-rate", dsp_params.sample_rate, "expected sample rate");
    sc_featurize->add_option("--fmin", dsp_params.fmin, "mel filterbank low edge (Hz)");
    sc_featurize->add_option("--fmax", dsp_params.fmax, "mel filterbank high edge (Hz)");

    auto* sc_synth = app.add_subcommand("synth", "Generate a paired synthetic dataset");
    config_flags f_synth;
    f_synth.attach(sc_synth, false, true);

    auto* sc_train = app.add_subcommand("train", "Train the dual-encoder model");
    config_flags f_train;
    f_train.attach(sc_train, true, false);

    auto* sc_eval = app.add_subcommand("eval", "Score retrieval for a checkpoint");
    config_flags f_eval;
    f_eval.attach(sc_eval, false, false);
    std::string checkpoint_path;
    sc_eval->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();

    auto* sc_ablate = app.add_subcommand("ablate", "Train and score loss-component variants");
    config_flags f_ablate;
    f_ablate.attach(sc_ablate, true, false);
    std::string variants_csv = "full,s,t,k,m";
    sc_ablate->add_option("--variants", variants_csv, "comma list from full,s,t,k,m");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (sc_featurize->parsed()) return cmd_featurize(wav_dir, feat_out, dsp_params);
        if (sc_synth->parsed()) return cmd_synth(f_synth.resolve());
        if (sc_train->parsed()) return cmd_train(f_train.resolve());
        if (sc_eval->parsed()) return cmd_eval(f_eval.resolve(), checkpoint_path);
        if (sc_ablate->parsed()) return cmd_ablate(f_ablate.resolve(), variants_csv);
    } catch (const error& e) {
        std::cerr << "clsr: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "clsr: " << e.what() << "\n";
        return 4;
    }
    return 2;
}
