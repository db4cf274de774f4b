#include "clsr/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "clsr/common.hpp"
#include "clsr/rng.hpp"

namespace clsr::data {

namespace {

constexpr char kMagic[9] = "CLSRFB01";
constexpr uint64_t kSplitStream = 1000;

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(v & 0xff);
    out.push_back((v >> 8) & 0xff);
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
}

void put_f32(std::vector<uint8_t>& out, float f) { put_u32(out, std::bit_cast<uint32_t>(f)); }

// Bounds-checked little-endian reader; any overrun is a format error.
struct cursor {
    const uint8_t* p;
    size_t len;
    size_t off = 0;
    std::string what;

    void need(size_t n) const {
        if (off + n > len)
            fail(errc::format, what + ": truncated (need " + std::to_string(n) +
                                   " bytes at offset " + std::to_string(off) + ")");
    }
    uint8_t u8() {
        need(1);
        return p[off++];
    }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint16_t>(p[off] | (p[off + 1] << 8));
        off += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[off + i]) << (8 * i);
        off += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p + off), n);
        off += n;
        return s;
    }
};

} // namespace

void feature_bank::add(const std::string& id, const std::vector<float>& vec) {
    if (vec.size() != dim_)
        fail(errc::dimension, "bank dim is " + std::to_string(dim_) + ", item '" + id +
                                  "' has " + std::to_string(vec.size()));
    if (index_.count(id))
        fail(errc::contract, "duplicate item id '" + id + "'");
    for (float v : vec)
        if (!std::isfinite(v)) fail(errc::numeric, "non-finite feature in item '" + id + "'");
    index_.emplace(id, ids_.size());
    ids_.push_back(id);
    values_.insert(values_.end(), vec.begin(), vec.end());
}

size_t feature_bank::index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) fail(errc::config, "id '" + id + "' not present in bank");
    return it->second;
}

std::vector<uint8_t> serialize_bank(const feature_bank& bank) {
    if (bank.dim() == 0) fail(errc::contract, "cannot serialize a bank with dim 0");
    std::vector<uint8_t> out;
    out.reserve(17 + bank.size() * (8 + bank.dim() * 4));
    for (size_t i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(kMagic[i]));
    out.push_back(static_cast<uint8_t>(bank.kind()));
    put_u32(out, static_cast<uint32_t>(bank.size()));
    put_u32(out, bank.dim());
    for (size_t i = 0; i < bank.size(); ++i) {
        const std::string& id = bank.id_at(i);
        if (id.size() > 0xffff)
            fail(errc::contract, "item id longer than 65535 bytes");
        put_u16(out, static_cast<uint16_t>(id.size()));
        for (char ch : id) out.push_back(static_cast<uint8_t>(ch));
        const float* row = bank.row(i);
        for (uint32_t j = 0; j < bank.dim(); ++j) put_f32(out, row[j]);
    }
    return out;
}

feature_bank parse_bank(const uint8_t* bytes, size_t len) {
    cursor c{bytes, len, 0, "feature bank"};
    std::string magic = c.str(8);
    if (magic != std::string(kMagic, 8))
        fail(errc::format, "feature bank magic mismatch (got '" + magic + "')");
    uint8_t tag = c.u8();
    if (tag > 1)
        fail(errc::format, "unknown modality tag " + std::to_string(tag));
    uint32_t count = c.u32();
    uint32_t dim = c.u32();
    if (dim == 0) fail(errc::format, "feature bank dim must be positive");

    feature_bank bank(static_cast<modality>(tag), dim);
    std::vector<float> row(dim);
    for (uint32_t i = 0; i < count; ++i) {
        uint16_t id_len = c.u16();
        std::string id = c.str(id_len);
        for (uint32_t j = 0; j < dim; ++j) row[j] = c.f32();
        if (bank.contains(id))
            fail(errc::format, "duplicate item id '" + id + "' in feature bank");
        for (float v : row)
            if (!std::isfinite(v))
                fail(errc::numeric, "non-finite feature in item '" + id + "'");
        bank.add(id, row);
    }
    if (c.off != len)
        fail(errc::format, "feature bank has " + std::to_string(len - c.off) +
                               " trailing bytes after the last item");
    return bank;
}

void write_feature_bank(const feature_bank& bank, const std::string& path) {
    auto bytes = serialize_bank(bank);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(errc::config, "cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(errc::config, "write failed: " + path);
}

feature_bank read_feature_bank(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(errc::config, "cannot open feature bank: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return parse_bank(bytes.data(), bytes.size());
}

const std::vector<std::string>* manifest::captions_of(const std::string& audio_id) const {
    for (const auto& [aid, group] : caption_groups)
        if (aid == audio_id) return &group;
    return nullptr;
}

manifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(errc::config, "cannot open manifest: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(errc::format, path + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) fail(errc::format, path + ": manifest root must be an object");
    for (const auto& [key, _] : j.items())
        if (key != "pairs" && key != "captions")
            fail(errc::format, path + ": unknown manifest key '" + key + "'");
    if (!j.contains("pairs") || !j.contains("captions"))
        fail(errc::format, path + ": manifest needs 'pairs' and 'captions'");

    manifest m;
    if (!j["pairs"].is_array()) fail(errc::format, path + ": 'pairs' must be an array");
    for (const auto& p : j["pairs"]) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_string() || !p[1].is_string())
            fail(errc::format, path + ": each pair must be [audio_id, text_id]");
        m.pairs.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
    }
    if (!j["captions"].is_object()) fail(errc::format, path + ": 'captions' must be an object");
    for (const auto& [aid, group] : j["captions"].items()) {
        if (!group.is_array()) fail(errc::format, path + ": caption group must be an array");
        std::vector<std::string> texts;
        for (const auto& t : group) {
            if (!t.is_string()) fail(errc::format, path + ": caption ids must be strings");
            texts.push_back(t.get<std::string>());
        }
        m.caption_groups.push_back({aid, std::move(texts)});
    }
    std::sort(m.caption_groups.begin(), m.caption_groups.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    for (const auto& [aid, tid] : m.pairs) {
        const auto* group = m.captions_of(aid);
        if (group == nullptr || std::find(group->begin(), group->end(), tid) == group->end())
            fail(errc::format, path + ": pair (" + aid + ", " + tid +
                                   ") is not backed by its caption group");
    }
    return m;
}

void write_manifest(const manifest& m, const std::string& path) {
    nlohmann::json j;
    j["pairs"] = nlohmann::json::array();
    for (const auto& [aid, tid] : m.pairs) j["pairs"].push_back({aid, tid});
    j["captions"] = nlohmann::json::object();
    for (const auto& [aid, group] : m.caption_groups) j["captions"][aid] = group;
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(errc::config, "cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

void validate_manifest_ids(const manifest& m, const feature_bank& audio,
                           const feature_bank& text) {
    for (const auto& [aid, tid] : m.pairs) {
        if (!audio.contains(aid))
            fail(errc::config, "manifest references audio id '" + aid + "' absent from bank");
        if (!text.contains(tid))
            fail(errc::config, "manifest references text id '" + tid + "' absent from bank");
    }
    for (const auto& [aid, group] : m.caption_groups) {
        if (!audio.contains(aid))
            fail(errc::config, "caption group audio id '" + aid + "' absent from bank");
        for (const auto& tid : group)
            if (!text.contains(tid))
                fail(errc::config, "caption text id '" + tid + "' absent from bank");
    }
}

synthetic_dataset make_synthetic_dataset(const synthetic_config& cfg) {
    if (cfg.n_pairs == 0) fail(errc::config, "synthetic dataset needs n_pairs >= 1");
    if (cfg.latent_dim == 0 || cfg.latent_dim > std::min(cfg.d_a, cfg.d_t))
        fail(errc::config, "latent_dim must satisfy 1 <= latent_dim <= min(d_a, d_t)");
    if (cfg.noise_sigma < 0.0) fail(errc::config, "noise_sigma must be >= 0");
    if (cfg.captions_per_audio == 0) fail(errc::config, "captions_per_audio must be >= 1");

    rng r(cfg.seed);
    synthetic_dataset ds;
    ds.mix_audio = tensor2(cfg.d_a, cfg.latent_dim);
    ds.mix_text = tensor2(cfg.d_t, cfg.latent_dim);
    for (auto& v : ds.mix_audio.data) v = static_cast<float>(r.gaussian());
    for (auto& v : ds.mix_text.data) v = static_cast<float>(r.gaussian());

    ds.audio = feature_bank(modality::audio, cfg.d_a);
    ds.text = feature_bank(modality::text, cfg.d_t);
    ds.audio_latents = tensor2(cfg.n_pairs, cfg.latent_dim);
    ds.text_latents = tensor2(cfg.n_pairs * cfg.captions_per_audio, cfg.latent_dim);

    auto mix = [&](const tensor2& p, const float* u, double sigma, rng& noise_src,
                   std::vector<float>& out) {
        out.resize(p.rows);
        for (size_t j = 0; j < p.rows; ++j) {
            double acc = 0.0;
            for (size_t l = 0; l < p.cols; ++l)
                acc += static_cast<double>(p.at(j, l)) * static_cast<double>(u[l]);
            acc += sigma * noise_src.gaussian();
            out[j] = static_cast<float>(acc);
        }
    };

    char buf[32];
    std::vector<float> feat;
    for (size_t i = 0; i < cfg.n_pairs; ++i) {
        for (size_t l = 0; l < cfg.latent_dim; ++l)
            ds.audio_latents.at(i, l) = static_cast<float>(r.gaussian());

        std::snprintf(buf, sizeof(buf), "a%05zu", i);
        std::string aid(buf);
        mix(ds.mix_audio, &ds.audio_latents.at(i, 0), cfg.noise_sigma, r, feat);
        ds.audio.add(aid, feat);

        std::vector<std::string> group;
        for (size_t k = 0; k < cfg.captions_per_audio; ++k) {
            size_t trow = i * cfg.captions_per_audio + k;
            for (size_t l = 0; l < cfg.latent_dim; ++l) {
                float jitter = cfg.captions_per_audio > 1
                                   ? static_cast<float>(cfg.noise_sigma * r.gaussian())
                                   : 0.f;
                ds.text_latents.at(trow, l) = ds.audio_latents.at(i, l) + jitter;
            }
            std::string tid;
            if (cfg.captions_per_audio == 1) {
                std::snprintf(buf, sizeof(buf), "t%05zu", i);
                tid = buf;
            } else {
                std::snprintf(buf, sizeof(buf), "t%05zu_%zu", i, k);
                tid = buf;
            }
            mix(ds.mix_text, &ds.text_latents.at(trow, 0), cfg.noise_sigma, r, feat);
            ds.text.add(tid, feat);
            ds.pairs.pairs.emplace_back(aid, tid);
            group.push_back(tid);
        }
        ds.pairs.caption_groups.push_back({aid, std::move(group)});
    }
    return ds;
}

std::vector<size_t> epoch_permutation(size_t n, uint64_t seed, uint32_t epoch) {
    std::vector<size_t> perm(n);
    for (size_t i = 0; i < n; ++i) perm[i] = i;
    rng r(derive_seed(seed, epoch));
    shuffle_indices(perm, r);
    return perm;
}

std::vector<batch> sample_batches(const feature_bank& audio, const feature_bank& text,
                                  const manifest& m, size_t batch_size, uint64_t seed,
                                  uint32_t epoch) {
    if (batch_size < 2)
        fail(errc::config, "batch_size must be >= 2 (the loss needs at least one negative)");
    auto perm = epoch_permutation(m.pairs.size(), seed, epoch);

    std::vector<batch> out;
    size_t full = m.pairs.size() / batch_size;
    out.reserve(full);
    for (size_t b = 0; b < full; ++b) {
        batch bt;
        bt.audio_features = tensor2(batch_size, audio.dim());
        bt.text_features = tensor2(batch_size, text.dim());
        bt.indices.resize(batch_size);
        for (size_t rrow = 0; rrow < batch_size; ++rrow) {
            size_t pair_idx = perm[b * batch_size + rrow];
            bt.indices[rrow] = pair_idx;
            const auto& [aid, tid] = m.pairs[pair_idx];
            const float* arow = audio.row(audio.index_of(aid));
            const float* trow = text.row(text.index_of(tid));
            std::copy(arow, arow + audio.dim(), &bt.audio_features.at(rrow, 0));
            std::copy(trow, trow + text.dim(), &bt.text_features.at(rrow, 0));
        }
        out.push_back(std::move(bt));
    }
    return out;
}

manifest_split split_pairs(const manifest& m, double val_fraction, uint64_t seed) {
    if (val_fraction < 0.0 || val_fraction >= 1.0)
        fail(errc::config, "val_fraction must be in [0, 1)");
    size_t n = m.pairs.size();
    size_t n_val = static_cast<size_t>(static_cast<double>(n) * val_fraction);

    std::vector<size_t> perm(n);
    for (size_t i = 0; i < n; ++i) perm[i] = i;
    rng r(derive_seed(seed, kSplitStream));
    shuffle_indices(perm, r);

    std::vector<char> is_val(n, 0);
    for (size_t i = 0; i < n_val; ++i) is_val[perm[i]] = 1;

    auto build = [&](bool pick_val) {
        manifest side;
        std::vector<std::pair<std::string, std::vector<std::string>>> groups;
        for (size_t i = 0; i < n; ++i) {
            if (static_cast<bool>(is_val[i]) != pick_val) continue;
            side.pairs.push_back(m.pairs[i]);
            auto it = std::find_if(groups.begin(), groups.end(),
                                   [&](const auto& g) { return g.first == m.pairs[i].first; });
            if (it == groups.end())
                groups.push_back({m.pairs[i].first, {m.pairs[i].second}});
            else
                it->second.push_back(m.pairs[i].second);
        }
        std::sort(groups.begin(), groups.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        side.caption_groups = std::move(groups);
        return side;
    };

    manifest_split split;
    split.val = build(true);
    split.train = build(false);
    return split;
}

} // namespace clsr::data
