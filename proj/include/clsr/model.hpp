#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clsr/graph.hpp"
#include "clsr/tensor.hpp"

namespace clsr::model {

// One dense layer: y = x W + b, with W [in x out] and b [1 x out].
struct dense_layer {
    tensor2 w;
    tensor2 b;
};

// Two-layer perceptron: relu(x W_h + b_h) W_o + b_o.
struct mlp {
    dense_layer hidden;
    dense_layer out;
};

struct model_dims {
    uint32_t d_a = 0;   // audio base feature dim
    uint32_t d_t = 0;   // text base feature dim
    uint32_t hidden = 0;
    uint32_t c = 0;     // shared embedding dim
};

// Six parameter groups: per-modality adapters (d_k -> d_k), embedding heads
// (d_k -> c), and cross-modal decoders (decoder_a: c -> d_t, decoder_t:
// c -> d_a; the audio-side decoder reconstructs the TEXT feature space).
struct model_params {
    model_dims dims;
    mlp adapter_a, adapter_t, head_a, head_t, decoder_a, decoder_t;

    struct named_tensor {
        std::string name;
        tensor2* t;
    };
    struct named_tensor_const {
        std::string name;
        const tensor2* t;
    };
    // Fixed enumeration order (adapter_a, adapter_t, head_a, head_t,
    // decoder_a, decoder_t; within each: hidden.w, hidden.b, out.w, out.b).
    // This is also the init draw order and the checkpoint layout.
    std::vector<named_tensor> tensors();
    std::vector<named_tensor_const> tensors() const;
};

// Glorot-uniform weights, s = sqrt(6/(fan_in+fan_out)), zero biases. Seeded
// on stream 2000 of the user seed so it never collides with data streams.
model_params init_params(const model_dims& dims, uint64_t seed);

// Full differentiable forward pass over one aligned batch.
struct forward_state {
    graph g;
    node_id input_a = 0, input_t = 0;
    node_id f_a = 0, f_t = 0; // adapter outputs
    node_id z_a = 0, z_t = 0; // row-normalized embeddings, b x c
    node_id h_t = 0, h_a = 0; // decoder outputs: h_t from decoder_a(z_a)
    std::vector<node_id> param_leaves; // aligned with model_params::tensors()
};

forward_state forward(const model_params& params, const tensor2& audio_features,
                      const tensor2& text_features);

// Embedding-only paths for evaluation; same graph kernels, no gradient use.
tensor2 embed_audio(const model_params& params, const tensor2& audio_features);
tensor2 embed_text(const model_params& params, const tensor2& text_features);

// Checkpoint bytes: u32 JSON header length + header {dims, seed, epoch},
// u32 tensor count, then per tensor: u16 name length + name + u32 rows +
// u32 cols + rows*cols f32, all little-endian.
std::vector<uint8_t> serialize_checkpoint(const model_params& params, uint64_t seed,
                                          uint32_t epoch);

struct checkpoint {
    model_params params;
    uint64_t seed = 0;
    uint32_t epoch = 0;
};

checkpoint parse_checkpoint(const uint8_t* bytes, size_t len);
void save_checkpoint(const model_params& params, uint64_t seed, uint32_t epoch,
                     const std::string& path);
checkpoint load_checkpoint(const std::string& path);

} // namespace clsr::model
