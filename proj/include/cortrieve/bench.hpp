#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "cortrieve/bpr.hpp"
#include "cortrieve/corpus.hpp"
#include "cortrieve/models.hpp"
#include "cortrieve/warp.hpp"

namespace cortrieve {

/// One per-epoch row of the learner comparison. Sampling seconds and draws
/// are accumulated from epoch 1, the quantities the cost comparison plots.
struct LearnerEpochRow {
    int epoch = 0;
    std::string learner;
    double accumulated_sampling_seconds = 0.0;
    int64_t total_draws = 0;
    double recall_at_30 = 0.0;
};

struct ComparisonReport {
    std::vector<LearnerEpochRow> rows;
    double bpr_best_recall = 0.0;
    double warp_best_recall = 0.0;
};

namespace detail {
inline void append_rows(ComparisonReport& report, const std::vector<EpochStats>& history,
                        const char* learner) {
    double acc_seconds = 0.0;
    int64_t acc_draws = 0;
    for (const auto& h : history) {
        acc_seconds += h.sampling_seconds;
        acc_draws += h.draws;
        report.rows.push_back({h.epoch, learner, acc_seconds, acc_draws, h.recall});
    }
}
}  // namespace detail

/// Trains the same model kind with both learners from identically seeded
/// banks and collects per-epoch sampling cost and recall@30 for each. The
/// shared bank is initialized from the single-negative config's seed, n and
/// init range; both validation monitors run at k=30.
template <class Bank>
ComparisonReport compare_learners_from(Bank start, const Corpus& train, const Corpus& validation,
                                       LearnerConfig bpr_cfg, WarpConfig warp_cfg) {
    bpr_cfg.eval_k = 30;
    warp_cfg.eval_k = 30;
    ComparisonReport report;
    auto bpr_result = train_bpr(start, train, validation, bpr_cfg);
    auto warp_result = train_warp(std::move(start), train, validation, warp_cfg);
    detail::append_rows(report, bpr_result.history, "bpr");
    detail::append_rows(report, warp_result.history, "warp");
    report.bpr_best_recall = bpr_result.best_recall;
    report.warp_best_recall = warp_result.best_recall;
    return report;
}

inline ComparisonReport compare_learners(ModelKind kind, const Corpus& train,
                                         const Corpus& validation, const LearnerConfig& bpr_cfg,
                                         const WarpConfig& warp_cfg) {
    if (bpr_cfg.n != warp_cfg.n)
        throw UsageError("learner configs disagree on the embedding dimension");
    Dims dims{train.n_queries(), train.n_users(), train.n_items(), bpr_cfg.n};
    if (kind == ModelKind::pitf) {
        PitfBank bank = init_pitf_bank(dims, bpr_cfg.init_low, bpr_cfg.init_high, bpr_cfg.seed);
        return compare_learners_from(std::move(bank), train, validation, bpr_cfg, warp_cfg);
    }
    if (kind == ModelKind::lcr || kind == ModelKind::ilcr) {
        ParamBank bank = init_param_bank(kind, dims, bpr_cfg.init_low, bpr_cfg.init_high,
                                         bpr_cfg.seed);
        return compare_learners_from(std::move(bank), train, validation, bpr_cfg, warp_cfg);
    }
    throw UsageError("learner comparison supports lcr, ilcr and pitf models");
}

inline void write_comparison_csv(const ComparisonReport& report, std::ostream& os) {
    os << "epoch,learner,accumulated_sampling_seconds,total_draws,recall_at_30\r\n";
    for (const auto& r : report.rows)
        os << r.epoch << "," << r.learner << "," << r.accumulated_sampling_seconds << ","
           << r.total_draws << "," << r.recall_at_30 << "\r\n";
}

}  // namespace cortrieve
