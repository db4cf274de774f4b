#include "clsr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace clsr::eval {

namespace {

std::vector<double> unit_row_norms(const tensor2& m) {
    std::vector<double> n(m.rows);
    for (size_t i = 0; i < m.rows; ++i) {
        double acc = 0;
        for (size_t j = 0; j < m.cols; ++j) acc += double(m.at(i, j)) * m.at(i, j);
        n[i] = std::max(std::sqrt(acc), 1e-12);
    }
    return n;
}

void append_csv_double(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

} // namespace

std::vector<std::vector<uint32_t>> rank_queries(const tensor2& queries, const tensor2& gallery) {
    if (gallery.rows == 0) fail(errc::empty, "ranking against an empty gallery");
    if (queries.cols != gallery.cols)
        fail(errc::dimension, "query dim " + std::to_string(queries.cols) +
                                  " does not match gallery dim " + std::to_string(gallery.cols));

    auto qn = unit_row_norms(queries);
    auto gn = unit_row_norms(gallery);
    std::vector<std::vector<uint32_t>> ranks(queries.rows);
    std::vector<double> score(gallery.rows);
    for (size_t q = 0; q < queries.rows; ++q) {
        for (size_t g = 0; g < gallery.rows; ++g) {
            double dot = 0;
            for (size_t c = 0; c < queries.cols; ++c)
                dot += double(queries.at(q, c)) * gallery.at(g, c);
            score[g] = dot / (qn[q] * gn[g]);
        }
        std::vector<uint32_t> order(gallery.rows);
        std::iota(order.begin(), order.end(), 0u);
        // stable sort on descending score keeps ascending index among ties
        std::stable_sort(order.begin(), order.end(),
                         [&](uint32_t a, uint32_t b) { return score[a] > score[b]; });
        ranks[q] = std::move(order);
    }
    return ranks;
}

double recall_at_k(const std::vector<std::vector<uint32_t>>& ranks,
                   const std::vector<std::vector<uint32_t>>& relevant, uint32_t k) {
    if (k < 1) fail(errc::config, "recall needs k >= 1");
    if (ranks.size() != relevant.size())
        fail(errc::dimension, "rank rows " + std::to_string(ranks.size()) +
                                  " vs relevant sets " + std::to_string(relevant.size()));
    if (ranks.empty()) fail(errc::empty, "recall over zero queries");

    size_t hits = 0;
    for (size_t q = 0; q < ranks.size(); ++q) {
        if (relevant[q].empty())
            fail(errc::config, "query " + std::to_string(q) + " has no relevant items");
        size_t top = std::min<size_t>(k, ranks[q].size());
        bool hit = false;
        for (size_t r = 0; r < top && !hit; ++r)
            for (uint32_t rel : relevant[q])
                if (ranks[q][r] == rel) {
                    hit = true;
                    break;
                }
        hits += hit ? 1 : 0;
    }
    return double(hits) / double(ranks.size());
}

namespace {

retrieval_report score_direction(const char* name,
                                 const std::vector<std::vector<uint32_t>>& ranks,
                                 const std::vector<std::vector<uint32_t>>& relevant,
                                 size_t gallery_size) {
    retrieval_report rep;
    rep.direction = name;
    rep.n_queries = ranks.size();
    rep.gallery_size = gallery_size;
    rep.r1 = recall_at_k(ranks, relevant, 1);
    rep.r5 = recall_at_k(ranks, relevant, 5);
    rep.r10 = recall_at_k(ranks, relevant, 10);
    rep.rank_histogram.assign(gallery_size, 0);
    for (size_t q = 0; q < ranks.size(); ++q)
        for (size_t r = 0; r < ranks[q].size(); ++r) {
            bool found = false;
            for (uint32_t rel : relevant[q])
                if (ranks[q][r] == rel) {
                    found = true;
                    break;
                }
            if (found) {
                rep.rank_histogram[r]++;
                break;
            }
        }
    return rep;
}

} // namespace

retrieval_result evaluate_retrieval(const model::model_params& params,
                                    const data::feature_bank& audio,
                                    const data::feature_bank& text, const data::manifest& m) {
    data::validate_manifest_ids(m, audio, text);
    if (m.caption_groups.empty()) fail(errc::empty, "manifest has no caption groups");

    // Canonical galleries: audios in caption-group order (sorted by id),
    // captions concatenated per group in listed order.
    std::vector<size_t> audio_rows;
    std::vector<size_t> text_rows;
    std::vector<std::vector<uint32_t>> a2t_relevant;   // per audio: caption gallery indices
    std::vector<std::vector<uint32_t>> t2a_relevant;   // per caption: its audio gallery index
    for (const auto& [aid, captions] : m.caption_groups) {
        uint32_t audio_index = static_cast<uint32_t>(audio_rows.size());
        audio_rows.push_back(audio.index_of(aid));
        std::vector<uint32_t> group;
        for (const auto& tid : captions) {
            group.push_back(static_cast<uint32_t>(text_rows.size()));
            text_rows.push_back(text.index_of(tid));
            t2a_relevant.push_back({audio_index});
        }
        if (group.empty())
            fail(errc::config, "audio id \"" + aid + "\" has an empty caption group");
        a2t_relevant.push_back(std::move(group));
    }

    tensor2 audio_feats(audio_rows.size(), audio.dim());
    for (size_t i = 0; i < audio_rows.size(); ++i)
        std::copy_n(audio.row(audio_rows[i]), audio.dim(), &audio_feats.at(i, 0));
    tensor2 text_feats(text_rows.size(), text.dim());
    for (size_t i = 0; i < text_rows.size(); ++i)
        std::copy_n(text.row(text_rows[i]), text.dim(), &text_feats.at(i, 0));

    tensor2 za = model::embed_audio(params, audio_feats);
    tensor2 zt = model::embed_text(params, text_feats);

    retrieval_result res;
    res.a2t = score_direction("A2T", rank_queries(za, zt), a2t_relevant, zt.rows);
    res.t2a = score_direction("T2A", rank_queries(zt, za), t2a_relevant, za.rows);
    return res;
}

std::string format_report_csv(const retrieval_result& r) {
    std::string out = "direction,r1,r5,r10,n_queries\n";
    for (const retrieval_report* rep : {&r.a2t, &r.t2a}) {
        out += rep->direction;
        for (double v : {rep->r1, rep->r5, rep->r10}) {
            out += ',';
            append_csv_double(out, v);
        }
        out += ',' + std::to_string(rep->n_queries) + '\n';
    }
    return out;
}

const char* variant_name(variant v) {
    switch (v) {
        case variant::full: return "full";
        case variant::s: return "s";
        case variant::t: return "t";
        case variant::k: return "k";
        case variant::m: return "m";
    }
    fail(errc::contract, "unknown ablation variant");
}

variant variant_from_name(const std::string& name) {
    if (name == "full") return variant::full;
    if (name == "s") return variant::s;
    if (name == "t") return variant::t;
    if (name == "k") return variant::k;
    if (name == "m") return variant::m;
    fail(errc::config, "unknown ablation variant \"" + name + "\" (expected full|s|t|k|m)");
}

losses::loss_config apply_variant(const losses::loss_config& base, variant v) {
    losses::loss_config cfg = base;
    switch (v) {
        case variant::full: break;
        case variant::s: cfg.intra_terms = false; break;
        case variant::t: cfg.adaptive_tau = false; break;
        case variant::k: cfg.weights.alpha = 0.0; break;
        case variant::m: cfg.weights.beta = 0.0; break;
    }
    return cfg;
}

ablation_table ablation_run(const trainer::train_config& base,
                            const std::vector<variant>& variants,
                            const data::feature_bank& audio, const data::feature_bank& text,
                            const data::manifest& m, std::ostream* progress) {
    if (variants.empty()) fail(errc::config, "ablation needs at least one variant");

    auto split = data::split_pairs(m, base.val_fraction, base.seed);
    const data::manifest& eval_m = split.val.pairs.empty() ? m : split.val;

    ablation_table table;
    for (variant v : variants) {
        trainer::train_config cfg = base;
        cfg.loss = apply_variant(base.loss, v);
        if (progress) *progress << "variant " << variant_name(v) << "\n";
        ablation_row row;
        row.v = v;
        row.outcome = trainer::train(cfg, audio, text, m, progress);
        row.report = evaluate_retrieval(row.outcome.best_params, audio, text, eval_m);
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string format_ablation_table(const ablation_table& t) {
    std::string out = "variant    A2T R@1   R@5   R@10    T2A R@1   R@5   R@10\n";
    for (const auto& row : t.rows) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%-8s %9.3f %5.3f %6.3f %10.3f %5.3f %6.3f\n",
                      variant_name(row.v), row.report.a2t.r1, row.report.a2t.r5,
                      row.report.a2t.r10, row.report.t2a.r1, row.report.t2a.r5,
                      row.report.t2a.r10);
        out += buf;
    }
    return out;
}

std::string format_ablation_csv(const ablation_table& t) {
    std::string out = "variant,a2t_r1,a2t_r5,a2t_r10,t2a_r1,t2a_r5,t2a_r10\n";
    for (const auto& row : t.rows) {
        out += variant_name(row.v);
        for (double v : {row.report.a2t.r1, row.report.a2t.r5, row.report.a2t.r10,
                         row.report.t2a.r1, row.report.t2a.r5, row.report.t2a.r10}) {
            out += ',';
            append_csv_double(out, v);
        }
        out += '\n';
    }
    return out;
}

} // namespace clsr::eval
