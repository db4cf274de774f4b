#include "clsr/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "clsr/rng.hpp"

namespace clsr::model {

namespace {

void check_dims(const model_dims& d) {
    if (d.d_a == 0 || d.d_t == 0 || d.hidden == 0 || d.c == 0)
        fail(errc::config, "model dims must all be positive, got d_a=" + std::to_string(d.d_a) +
                               " d_t=" + std::to_string(d.d_t) +
                               " hidden=" + std::to_string(d.hidden) +
                               " c=" + std::to_string(d.c));
}

// Allocates every tensor at its canonical shape so tensors() enumerates a
// fully formed parameter set. All values start at zero.
model_params shaped_params(const model_dims& d) {
    check_dims(d);
    model_params p;
    p.dims = d;
    auto make = [](mlp& m, uint32_t in, uint32_t hidden, uint32_t out) {
        m.hidden.w = tensor2(in, hidden);
        m.hidden.b = tensor2(1, hidden);
        m.out.w = tensor2(hidden, out);
        m.out.b = tensor2(1, out);
    };
    make(p.adapter_a, d.d_a, d.hidden, d.d_a);
    make(p.adapter_t, d.d_t, d.hidden, d.d_t);
    make(p.head_a, d.d_a, d.hidden, d.c);
    make(p.head_t, d.d_t, d.hidden, d.c);
    make(p.decoder_a, d.c, d.hidden, d.d_t);
    make(p.decoder_t, d.c, d.hidden, d.d_a);
    return p;
}

template <typename Params, typename NT>
std::vector<NT> enumerate_tensors(Params& p) {
    std::vector<NT> out;
    out.reserve(24);
    auto add = [&](const char* prefix, auto& m) {
        out.push_back({std::string(prefix) + ".hidden.w", &m.hidden.w});
        out.push_back({std::string(prefix) + ".hidden.b", &m.hidden.b});
        out.push_back({std::string(prefix) + ".out.w", &m.out.w});
        out.push_back({std::string(prefix) + ".out.b", &m.out.b});
    };
    add("adapter_a", p.adapter_a);
    add("adapter_t", p.adapter_t);
    add("head_a", p.head_a);
    add("head_t", p.head_t);
    add("decoder_a", p.decoder_a);
    add("decoder_t", p.decoder_t);
    return out;
}

node_id apply_mlp(graph& g, node_id x, node_id wh, node_id bh, node_id wo, node_id bo) {
    node_id h = g.relu(g.add_bias_row(g.matmul(x, wh), bh));
    return g.add_bias_row(g.matmul(h, wo), bo);
}

void append_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>(v >> 8));
}

void append_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

struct cursor {
    const uint8_t* p;
    size_t len;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > len) fail(errc::format, "checkpoint truncated");
    }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint16_t>(p[pos] | (p[pos + 1] << 8));
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p + pos), n);
        pos += n;
        return s;
    }
};

} // namespace

std::vector<model_params::named_tensor> model_params::tensors() {
    return enumerate_tensors<model_params, named_tensor>(*this);
}

std::vector<model_params::named_tensor_const> model_params::tensors() const {
    return enumerate_tensors<const model_params, named_tensor_const>(*this);
}

model_params init_params(const model_dims& dims, uint64_t seed) {
    model_params p = shaped_params(dims);
    rng r(derive_seed(seed, 2000));
    for (auto& nt : p.tensors()) {
        if (nt.name.ends_with(".b")) continue; // biases stay zero, no draws consumed
        double s = std::sqrt(6.0 / static_cast<double>(nt.t->rows + nt.t->cols));
        for (auto& v : nt.t->data) v = static_cast<float>(r.uniform(-s, s));
    }
    return p;
}

forward_state forward(const model_params& params, const tensor2& audio_features,
                      const tensor2& text_features) {
    const model_dims& d = params.dims;
    check_dims(d);
    if (audio_features.cols != d.d_a)
        fail(errc::dimension, "audio features are " + shape_str(audio_features) +
                                  ", expected cols = " + std::to_string(d.d_a));
    if (text_features.cols != d.d_t)
        fail(errc::dimension, "text features are " + shape_str(text_features) +
                                  ", expected cols = " + std::to_string(d.d_t));
    if (audio_features.rows != text_features.rows)
        fail(errc::dimension, "batch rows differ: audio " + shape_str(audio_features) +
                                  " vs text " + shape_str(text_features));
    if (audio_features.rows == 0) fail(errc::empty, "forward pass on an empty batch");

    forward_state fs;
    graph& g = fs.g;
    fs.input_a = g.leaf(audio_features);
    fs.input_t = g.leaf(text_features);
    for (const auto& nt : params.tensors()) fs.param_leaves.push_back(g.leaf(*nt.t));

    const auto& L = fs.param_leaves;
    fs.f_a = apply_mlp(g, fs.input_a, L[0], L[1], L[2], L[3]);
    fs.f_t = apply_mlp(g, fs.input_t, L[4], L[5], L[6], L[7]);
    fs.z_a = g.l2_normalize_rows(apply_mlp(g, fs.f_a, L[8], L[9], L[10], L[11]));
    fs.z_t = g.l2_normalize_rows(apply_mlp(g, fs.f_t, L[12], L[13], L[14], L[15]));
    fs.h_t = apply_mlp(g, fs.z_a, L[16], L[17], L[18], L[19]); // decoder_a: audio -> text space
    fs.h_a = apply_mlp(g, fs.z_t, L[20], L[21], L[22], L[23]); // decoder_t: text -> audio space
    return fs;
}

namespace {

// Inference path shares the exact graph kernels so embeddings match the
// training forward bit for bit.
tensor2 embed_one(const mlp& adapter, const mlp& head, const tensor2& x) {
    graph g;
    node_id in = g.leaf(x);
    node_id f = apply_mlp(g, in, g.leaf(adapter.hidden.w), g.leaf(adapter.hidden.b),
                          g.leaf(adapter.out.w), g.leaf(adapter.out.b));
    node_id z = g.l2_normalize_rows(apply_mlp(g, f, g.leaf(head.hidden.w), g.leaf(head.hidden.b),
                                              g.leaf(head.out.w), g.leaf(head.out.b)));
    return g.value(z);
}

} // namespace

tensor2 embed_audio(const model_params& params, const tensor2& audio_features) {
    if (audio_features.cols != params.dims.d_a)
        fail(errc::dimension, "audio features are " + shape_str(audio_features) +
                                  ", expected cols = " + std::to_string(params.dims.d_a));
    if (audio_features.rows == 0) fail(errc::empty, "embedding an empty batch");
    return embed_one(params.adapter_a, params.head_a, audio_features);
}

tensor2 embed_text(const model_params& params, const tensor2& text_features) {
    if (text_features.cols != params.dims.d_t)
        fail(errc::dimension, "text features are " + shape_str(text_features) +
                                  ", expected cols = " + std::to_string(params.dims.d_t));
    if (text_features.rows == 0) fail(errc::empty, "embedding an empty batch");
    return embed_one(params.adapter_t, params.head_t, text_features);
}

std::vector<uint8_t> serialize_checkpoint(const model_params& params, uint64_t seed,
                                          uint32_t epoch) {
    check_dims(params.dims);
    nlohmann::json header = {
        {"dims",
         {{"d_a", params.dims.d_a},
          {"d_t", params.dims.d_t},
          {"hidden", params.dims.hidden},
          {"c", params.dims.c}}},
        {"seed", seed},
        {"epoch", epoch},
    };
    std::string hs = header.dump(); // nlohmann emits sorted keys: stable bytes

    std::vector<uint8_t> out;
    append_u32(out, static_cast<uint32_t>(hs.size()));
    for (char ch : hs) out.push_back(static_cast<uint8_t>(ch));

    auto ts = params.tensors();
    append_u32(out, static_cast<uint32_t>(ts.size()));
    for (const auto& nt : ts) {
        if (nt.name.size() > 0xffff) fail(errc::contract, "tensor name too long");
        append_u16(out, static_cast<uint16_t>(nt.name.size()));
        for (char ch : nt.name) out.push_back(static_cast<uint8_t>(ch));
        append_u32(out, static_cast<uint32_t>(nt.t->rows));
        append_u32(out, static_cast<uint32_t>(nt.t->cols));
        for (float v : nt.t->data) append_u32(out, std::bit_cast<uint32_t>(v));
    }
    return out;
}

checkpoint parse_checkpoint(const uint8_t* bytes, size_t len) {
    cursor c{bytes, len};
    uint32_t hlen = c.u32();
    std::string hs = c.str(hlen);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        fail(errc::format, std::string("checkpoint header is not valid JSON: ") + e.what());
    }

    checkpoint ck;
    model_dims dims;
    try {
        const auto& jd = header.at("dims");
        dims.d_a = jd.at("d_a").get<uint32_t>();
        dims.d_t = jd.at("d_t").get<uint32_t>();
        dims.hidden = jd.at("hidden").get<uint32_t>();
        dims.c = jd.at("c").get<uint32_t>();
        ck.seed = header.at("seed").get<uint64_t>();
        ck.epoch = header.at("epoch").get<uint32_t>();
    } catch (const nlohmann::json::exception& e) {
        fail(errc::format, std::string("checkpoint header is missing fields: ") + e.what());
    }

    ck.params = shaped_params(dims);
    auto ts = ck.params.tensors();
    uint32_t count = c.u32();
    if (count != ts.size())
        fail(errc::format, "checkpoint holds " + std::to_string(count) + " tensors, expected " +
                               std::to_string(ts.size()));
    for (auto& nt : ts) {
        std::string name = c.str(c.u16());
        if (name != nt.name)
            fail(errc::format, "checkpoint tensor order: got \"" + name + "\", expected \"" +
                                   nt.name + "\"");
        uint32_t rows = c.u32();
        uint32_t cols = c.u32();
        if (rows != nt.t->rows || cols != nt.t->cols)
            fail(errc::format, "checkpoint tensor \"" + name + "\" is " + shape_str(rows, cols) +
                                   ", expected " + shape_str(*nt.t));
        for (auto& v : nt.t->data) v = c.f32();
        if (!nt.t->all_finite())
            fail(errc::numeric, "checkpoint tensor \"" + name + "\" holds non-finite values");
    }
    if (c.pos != len) fail(errc::format, "checkpoint has trailing bytes");
    return ck;
}

void save_checkpoint(const model_params& params, uint64_t seed, uint32_t epoch,
                     const std::string& path) {
    auto bytes = serialize_checkpoint(params, seed, epoch);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(errc::config, "cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(errc::config, "write failed: " + path);
}

checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(errc::config, "cannot open checkpoint: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return parse_checkpoint(bytes.data(), bytes.size());
}

} // namespace clsr::model
