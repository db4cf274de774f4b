#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "clsr/model.hpp"
#include "clsr/rng.hpp"

using namespace clsr;
namespace fs = std::filesystem;

namespace {

model::model_dims small_dims() { return {.d_a = 5, .d_t = 4, .hidden = 6, .c = 3}; }

void set_layer(model::dense_layer& l, const tensor2& w, const tensor2& b) {
    l.w = w;
    l.b = b;
}

tensor2 eye2(float scale = 1.f) { return tensor2{{scale, 0.f}, {0.f, scale}}; }

// All-identity toy net in 2 dimensions used for the hand-computed forward.
model::model_params toy_params() {
    model::model_params p;
    p.dims = {.d_a = 2, .d_t = 2, .hidden = 2, .c = 2};
    tensor2 zero{{0.f, 0.f}};
    set_layer(p.adapter_a.hidden, eye2(), zero);
    set_layer(p.adapter_a.out, eye2(), tensor2{{1.f, 1.f}});
    set_layer(p.adapter_t.hidden, eye2(), zero);
    set_layer(p.adapter_t.out, eye2(), zero);
    set_layer(p.head_a.hidden, eye2(), zero);
    set_layer(p.head_a.out, eye2(), zero);
    set_layer(p.head_t.hidden, eye2(), zero);
    set_layer(p.head_t.out, eye2(), zero);
    set_layer(p.decoder_a.hidden, eye2(2.f), zero);
    set_layer(p.decoder_a.out, eye2(), tensor2{{0.5f, 0.5f}});
    set_layer(p.decoder_t.hidden, eye2(3.f), zero);
    set_layer(p.decoder_t.out, eye2(), zero);
    return p;
}

} // namespace

TEST_CASE("init determinism, zero biases, glorot bounds") {
    auto dims = small_dims();
    auto p1 = model::init_params(dims, 31337);
    auto p2 = model::init_params(dims, 31337);
    auto p3 = model::init_params(dims, 31338);

    auto t1 = p1.tensors();
    auto t2 = p2.tensors();
    auto t3 = p3.tensors();
    REQUIRE(t1.size() == 24);
    bool any_diff_seed31338 = false;
    for (size_t i = 0; i < t1.size(); ++i) {
        REQUIRE(t1[i].t->size() == t2[i].t->size());
        CHECK(std::memcmp(t1[i].t->data.data(), t2[i].t->data.data(),
                          t1[i].t->size() * sizeof(float)) == 0);
        if (std::memcmp(t1[i].t->data.data(), t3[i].t->data.data(),
                        t1[i].t->size() * sizeof(float)) != 0)
            any_diff_seed31338 = true;

        bool is_bias = t1[i].name.ends_with(".b");
        if (is_bias) {
            for (float v : t1[i].t->data) CHECK(v == 0.f);
        } else {
            double s = std::sqrt(6.0 / static_cast<double>(t1[i].t->rows + t1[i].t->cols));
            for (float v : t1[i].t->data) {
                CHECK(std::abs(v) <= s);
            }
        }
    }
    CHECK(any_diff_seed31338);
}

TEST_CASE("forward shapes and unit-norm embeddings") {
    auto dims = small_dims();
    auto p = model::init_params(dims, 7);
    rng r(55);
    tensor2 xa(4, dims.d_a), xt(4, dims.d_t);
    for (auto& v : xa.data) v = static_cast<float>(r.gaussian());
    for (auto& v : xt.data) v = static_cast<float>(r.gaussian());

    auto fs = model::forward(p, xa, xt);
    CHECK(fs.g.value(fs.f_a).rows == 4);
    CHECK(fs.g.value(fs.f_a).cols == dims.d_a);
    CHECK(fs.g.value(fs.f_t).cols == dims.d_t);
    CHECK(fs.g.value(fs.z_a).cols == dims.c);
    CHECK(fs.g.value(fs.z_t).cols == dims.c);
    CHECK(fs.g.value(fs.h_t).cols == dims.d_t); // decoder_a output lives in text space
    CHECK(fs.g.value(fs.h_a).cols == dims.d_a);
    CHECK(fs.param_leaves.size() == 24);

    // Unit rows within 1e-5, except an all-dead relu row: with zero biases the
    // head can emit an exact zero row, which the eps guard keeps at zero.
    size_t unit_rows = 0, zero_rows = 0;
    for (node_id z : {fs.z_a, fs.z_t}) {
        const tensor2& zv = fs.g.value(z);
        for (size_t i = 0; i < zv.rows; ++i) {
            double norm = 0.0;
            for (size_t j = 0; j < zv.cols; ++j)
                norm += static_cast<double>(zv.at(i, j)) * zv.at(i, j);
            norm = std::sqrt(norm);
            if (norm == 0.0)
                ++zero_rows;
            else {
                CHECK(std::abs(norm - 1.0) < 1e-5);
                ++unit_rows;
            }
        }
    }
    CHECK(unit_rows >= 6); // at most the rare dead row deviates
}

TEST_CASE("dead head rows normalize to exact zero") {
    model::model_dims d{.d_a = 2, .d_t = 2, .hidden = 2, .c = 2};
    auto p = model::init_params(d, 1);
    // Zero hidden weights force relu output to zero; zero out bias keeps the
    // head output at exactly zero, exercising the eps-guarded normalize path.
    for (auto& v : p.head_a.hidden.w.data) v = 0.f;
    tensor2 xa{{1.f, 2.f}, {3.f, 4.f}};
    auto za = model::embed_audio(p, xa);
    for (float v : za.data) CHECK(v == 0.f);
}

TEST_CASE("hand-computed toy forward") {
    auto p = toy_params();
    tensor2 xa{{3.f, 4.f}, {1.f, 0.f}};
    tensor2 xt{{1.f, 0.f}, {0.f, 1.f}};
    auto fs = model::forward(p, xa, xt);

    // adapter_a: relu(x I + 0) I + [1,1] = x + 1 elementwise here.
    const tensor2& fa = fs.g.value(fs.f_a);
    CHECK(fa.at(0, 0) == doctest::Approx(4.0));
    CHECK(fa.at(0, 1) == doctest::Approx(5.0));
    CHECK(fa.at(1, 0) == doctest::Approx(2.0));
    CHECK(fa.at(1, 1) == doctest::Approx(1.0));

    // head_a is identity, so z_a = normalize(f_a).
    const tensor2& za = fs.g.value(fs.z_a);
    CHECK(za.at(0, 0) == doctest::Approx(0.6246950475544243).epsilon(1e-6));
    CHECK(za.at(0, 1) == doctest::Approx(0.7808688094430304).epsilon(1e-6));
    CHECK(za.at(1, 0) == doctest::Approx(0.8944271909999159).epsilon(1e-6));
    CHECK(za.at(1, 1) == doctest::Approx(0.4472135954999579).epsilon(1e-6));

    // h_t comes from decoder_a: relu(z_a * 2I) I + 0.5 = 2 z_a + 0.5.
    const tensor2& ht = fs.g.value(fs.h_t);
    CHECK(ht.at(0, 0) == doctest::Approx(1.7493900951088487).epsilon(1e-6));
    CHECK(ht.at(0, 1) == doctest::Approx(2.0617376188860608).epsilon(1e-6));
    CHECK(ht.at(1, 0) == doctest::Approx(2.2888543819998317).epsilon(1e-6));
    CHECK(ht.at(1, 1) == doctest::Approx(1.3944271909999157).epsilon(1e-6));

    // h_a comes from decoder_t: 3 z_t (identity out, zero bias).
    const tensor2& zt = fs.g.value(fs.z_t);
    const tensor2& ha = fs.g.value(fs.h_a);
    for (size_t i = 0; i < 2; ++i)
        for (size_t j = 0; j < 2; ++j)
            CHECK(ha.at(i, j) == doctest::Approx(3.0 * zt.at(i, j)).epsilon(1e-6));
}

TEST_CASE("cross-pairing: decoder_a feeds h_t only") {
    auto dims = small_dims();
    auto p = model::init_params(dims, 99);
    rng r(101);
    tensor2 xa(3, dims.d_a), xt(3, dims.d_t);
    for (auto& v : xa.data) v = static_cast<float>(r.gaussian());
    for (auto& v : xt.data) v = static_cast<float>(r.gaussian());

    auto base = model::forward(p, xa, xt);
    auto p2 = p;
    p2.decoder_a.hidden.w.at(0, 0) += 0.25f;
    auto bumped = model::forward(p2, xa, xt);

    CHECK(std::memcmp(bumped.g.value(bumped.h_a).data.data(),
                      base.g.value(base.h_a).data.data(),
                      base.g.value(base.h_a).size() * sizeof(float)) == 0);
    CHECK(std::memcmp(bumped.g.value(bumped.h_t).data.data(),
                      base.g.value(base.h_t).data.data(),
                      base.g.value(base.h_t).size() * sizeof(float)) != 0);

    auto p3 = p;
    p3.decoder_t.out.w.at(0, 0) += 0.25f;
    auto bumped_t = model::forward(p3, xa, xt);
    CHECK(std::memcmp(bumped_t.g.value(bumped_t.h_t).data.data(),
                      base.g.value(base.h_t).data.data(),
                      base.g.value(base.h_t).size() * sizeof(float)) == 0);
    CHECK(std::memcmp(bumped_t.g.value(bumped_t.h_a).data.data(),
                      base.g.value(base.h_a).data.data(),
                      base.g.value(base.h_a).size() * sizeof(float)) != 0);
}

TEST_CASE("permuting batch rows permutes all state rows identically") {
    auto dims = small_dims();
    auto p = model::init_params(dims, 5);
    rng r(66);
    tensor2 xa(4, dims.d_a), xt(4, dims.d_t);
    for (auto& v : xa.data) v = static_cast<float>(r.gaussian());
    for (auto& v : xt.data) v = static_cast<float>(r.gaussian());

    size_t perm[4] = {2, 0, 3, 1};
    tensor2 xa_p(4, dims.d_a), xt_p(4, dims.d_t);
    for (size_t i = 0; i < 4; ++i) {
        std::memcpy(&xa_p.at(i, 0), &xa.at(perm[i], 0), dims.d_a * sizeof(float));
        std::memcpy(&xt_p.at(i, 0), &xt.at(perm[i], 0), dims.d_t * sizeof(float));
    }

    auto base = model::forward(p, xa, xt);
    auto permuted = model::forward(p, xa_p, xt_p);
    auto rows_match = [&](node_id a, node_id b) {
        const tensor2& va = base.g.value(a);
        const tensor2& vb = permuted.g.value(b);
        for (size_t i = 0; i < 4; ++i)
            if (std::memcmp(&vb.at(i, 0), &va.at(perm[i], 0), va.cols * sizeof(float)) != 0)
                return false;
        return true;
    };
    CHECK(rows_match(base.f_a, permuted.f_a));
    CHECK(rows_match(base.z_a, permuted.z_a));
    CHECK(rows_match(base.z_t, permuted.z_t));
    CHECK(rows_match(base.h_t, permuted.h_t));
    CHECK(rows_match(base.h_a, permuted.h_a));
}

TEST_CASE("embed paths match the training forward") {
    auto dims = small_dims();
    auto p = model::init_params(dims, 12);
    rng r(13);
    tensor2 xa(3, dims.d_a), xt(3, dims.d_t);
    for (auto& v : xa.data) v = static_cast<float>(r.gaussian());
    for (auto& v : xt.data) v = static_cast<float>(r.gaussian());

    auto fs = model::forward(p, xa, xt);
    auto za = model::embed_audio(p, xa);
    auto zt = model::embed_text(p, xt);
    CHECK(std::memcmp(za.data.data(), fs.g.value(fs.z_a).data.data(),
                      za.size() * sizeof(float)) == 0);
    CHECK(std::memcmp(zt.data.data(), fs.g.value(fs.z_t).data.data(),
                      zt.size() * sizeof(float)) == 0);
}

TEST_CASE("dimension mismatches are rejected") {
    auto dims = small_dims();
    auto p = model::init_params(dims, 3);
    tensor2 bad(2, dims.d_a + 1), ok(2, dims.d_t);
    CHECK_THROWS_AS(model::forward(p, bad, ok), error);
}

TEST_CASE("checkpoint roundtrip is bit-exact") {
    auto dims = small_dims();
    auto p = model::init_params(dims, 2026);
    auto bytes = model::serialize_checkpoint(p, 2026, 17);
    auto ck = model::parse_checkpoint(bytes.data(), bytes.size());
    CHECK(ck.seed == 2026);
    CHECK(ck.epoch == 17);
    CHECK(ck.params.dims.d_a == dims.d_a);
    CHECK(ck.params.dims.c == dims.c);

    auto bytes2 = model::serialize_checkpoint(ck.params, ck.seed, ck.epoch);
    CHECK(bytes2 == bytes);

    auto t1 = p.tensors();
    auto t2 = ck.params.tensors();
    for (size_t i = 0; i < t1.size(); ++i)
        CHECK(std::memcmp(t1[i].t->data.data(), t2[i].t->data.data(),
                          t1[i].t->size() * sizeof(float)) == 0);

    auto path = fs::temp_directory_path() / "clsr_ck_test.clsrck";
    model::save_checkpoint(p, 2026, 17, path.string());
    auto loaded = model::load_checkpoint(path.string());
    CHECK(model::serialize_checkpoint(loaded.params, loaded.seed, loaded.epoch) == bytes);

    SUBCASE("corrupted checkpoint fails") {
        auto bad = bytes;
        bad[4] = 'X'; // inside the JSON header
        CHECK_THROWS_AS(model::parse_checkpoint(bad.data(), bad.size()), error);
    }
}
