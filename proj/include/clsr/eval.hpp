#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "clsr/data.hpp"
#include "clsr/model.hpp"
#include "clsr/trainer.hpp"

namespace clsr::eval {

// Per query: gallery indices sorted by descending cosine similarity, ties
// broken by ascending gallery index so runs agree bit-for-bit everywhere.
std::vector<std::vector<uint32_t>> rank_queries(const tensor2& queries, const tensor2& gallery);

// Fraction of queries whose top-k ranks contain ANY index of their relevant
// set. k past the gallery end saturates at the full gallery. Every query must
// have a nonempty relevant set.
double recall_at_k(const std::vector<std::vector<uint32_t>>& ranks,
                   const std::vector<std::vector<uint32_t>>& relevant, uint32_t k);

struct retrieval_report {
    std::string direction; // "A2T" or "T2A"
    double r1 = 0, r5 = 0, r10 = 0;
    size_t n_queries = 0;
    size_t gallery_size = 0;
    // histogram[r-1] = queries whose best-ranked relevant item sits at rank r
    std::vector<size_t> rank_histogram;
};

struct retrieval_result {
    retrieval_report a2t; // audio query, caption gallery; hit = any caption
    retrieval_report t2a; // one query per caption; hit = its audio
};

// Embeds every item referenced by the manifest and scores both directions.
// A2T treats an audio's whole caption group as relevant; T2A treats each
// caption as an independent query with a single relevant audio.
retrieval_result evaluate_retrieval(const model::model_params& params,
                                    const data::feature_bank& audio,
                                    const data::feature_bank& text, const data::manifest& m);

// CSV rendering: direction,r1,r5,r10,n_queries
std::string format_report_csv(const retrieval_result& r);

enum class variant : uint8_t { full, s, t, k, m };

const char* variant_name(variant v);
variant variant_from_name(const std::string& name); // errc::config on unknown

// Loss-config edit each variant applies to the baseline:
// s: drop intra-modal contrastive terms; t: freeze tau at tau0;
// k: alpha = 0 (no semantic consistency); m: beta = 0 (no reconstruction);
// full: identity.
losses::loss_config apply_variant(const losses::loss_config& base, variant v);

struct ablation_row {
    variant v;
    trainer::train_result outcome;
    retrieval_result report; // best_params evaluated on the held-out split
};

struct ablation_table {
    std::vector<ablation_row> rows;
};

// Trains every variant from the identical seed/init (only the loss config
// differs) and evaluates each best checkpoint on the same held-out split the
// trainer used for model selection (val_fraction = 0 evaluates on the full
// manifest). The `full` row is byte-identical to a plain train + eval.
ablation_table ablation_run(const trainer::train_config& base,
                            const std::vector<variant>& variants,
                            const data::feature_bank& audio, const data::feature_bank& text,
                            const data::manifest& m, std::ostream* progress = nullptr);

// Aligned-text grid, one row per variant, R@1/5/10 for both directions.
std::string format_ablation_table(const ablation_table& t);
// CSV: variant,a2t_r1,a2t_r5,a2t_r10,t2a_r1,t2a_r5,t2a_r10
std::string format_ablation_csv(const ablation_table& t);

} // namespace clsr::eval
