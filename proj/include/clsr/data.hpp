#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "clsr/tensor.hpp"

namespace clsr::data {

enum class modality : uint8_t { audio = 0, text = 1 };

// Ordered collection of (id, feature vector) rows, one modality per bank.
// Order is part of the identity: serialization round-trips bit-exactly.
class feature_bank {
  public:
    feature_bank() = default;
    feature_bank(modality kind, uint32_t dim) : kind_(kind), dim_(dim) {}

    modality kind() const { return kind_; }
    uint32_t dim() const { return dim_; }
    size_t size() const { return ids_.size(); }

    // Appends one item. Duplicate ids and wrong-length or non-finite vectors
    // are contract violations.
    void add(const std::string& id, const std::vector<float>& vec);

    const std::string& id_at(size_t i) const { return ids_[i]; }
    const float* row(size_t i) const { return values_.data() + i * dim_; }
    bool contains(const std::string& id) const { return index_.count(id) != 0; }
    size_t index_of(const std::string& id) const; // errc::config if absent
    const std::vector<float>& flat_values() const { return values_; }

  private:
    modality kind_ = modality::audio;
    uint32_t dim_ = 0;
    std::vector<std::string> ids_;
    std::vector<float> values_; // size() * dim_, row-major
    std::unordered_map<std::string, size_t> index_;
};

// Binary bank format, little-endian throughout:
//   magic "CLSRFB01" (8 bytes), u8 modality (0 audio, 1 text), u32 item
//   count, u32 dim, then per item: u16 id byte length, UTF-8 id bytes,
//   dim x f32. parse(serialize(bank)) is the identity, bit for bit.
std::vector<uint8_t> serialize_bank(const feature_bank& bank);
feature_bank parse_bank(const uint8_t* bytes, size_t len);
void write_feature_bank(const feature_bank& bank, const std::string& path);
feature_bank read_feature_bank(const std::string& path);

// Pairing manifest. pairs lists positive (audio_id, text_id) pairs;
// caption_groups maps each audio id to all of its caption text ids.
struct manifest {
    std::vector<std::pair<std::string, std::string>> pairs;
    std::vector<std::pair<std::string, std::vector<std::string>>> caption_groups; // sorted by audio id

    const std::vector<std::string>* captions_of(const std::string& audio_id) const;
};

// JSON: {"pairs": [[aid, tid], ...], "captions": {aid: [tid, ...]}}.
// Unknown top-level keys and pairs missing from their caption group are
// format errors.
manifest read_manifest(const std::string& path);
void write_manifest(const manifest& m, const std::string& path);

// Every id referenced by the manifest must exist in its bank (errc::config).
void validate_manifest_ids(const manifest& m, const feature_bank& audio,
                           const feature_bank& text);

struct synthetic_config {
    size_t n_pairs = 0;
    size_t latent_dim = 0;
    uint32_t d_a = 0;
    uint32_t d_t = 0;
    double noise_sigma = 0.0;
    uint64_t seed = 0;
    size_t captions_per_audio = 1;
};

// Paired data with a shared latent per pair: audio = P_a u + sigma e_a,
// text = P_t u + sigma e_t, with P entries standard normal. When
// captions_per_audio > 1 each caption jitters the latent by sigma before
// mixing. Ground truth (latents and mixing maps) is returned for tests; the
// CLI persists only banks and manifest. Draw order per pair: latent, audio
// noise, then per caption (jitter if multi-caption, text noise); mixers are
// drawn first, P_a then P_t, row-major, all from one splitmix64 stream
// seeded directly with cfg.seed.
struct synthetic_dataset {
    feature_bank audio;
    feature_bank text;
    manifest pairs;
    tensor2 audio_latents; // n_pairs x latent_dim
    tensor2 text_latents;  // (n_pairs * captions) x latent_dim
    tensor2 mix_audio;     // d_a x latent_dim
    tensor2 mix_text;      // d_t x latent_dim
};

synthetic_dataset make_synthetic_dataset(const synthetic_config& cfg);

struct batch {
    tensor2 audio_features; // b x d_a
    tensor2 text_features;  // b x d_t
    std::vector<size_t> indices; // source pair indices into manifest.pairs
};

// Fisher-Yates permutation of 0..n-1 driven by splitmix64 seeded with
// derive_seed(seed, epoch); the documented epoch shuffle.
std::vector<size_t> epoch_permutation(size_t n, uint64_t seed, uint32_t epoch);

// One shuffled pass over manifest pairs, cut into batch_size slices; a final
// slice shorter than batch_size is dropped (callers log the dropped count).
std::vector<batch> sample_batches(const feature_bank& audio, const feature_bank& text,
                                  const manifest& m, size_t batch_size, uint64_t seed,
                                  uint32_t epoch);

// Seeded pair-level holdout; val gets floor(n * val_fraction) pairs. Both
// sides keep original pair order and rebuild caption groups from their own
// pairs. Stream id 1000 of the user seed.
struct manifest_split {
    manifest train;
    manifest val;
};
manifest_split split_pairs(const manifest& m, double val_fraction, uint64_t seed);

} // namespace clsr::data
