#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cortrieve/bpr.hpp"
#include "cortrieve/corpus.hpp"
#include "cortrieve/errors.hpp"
#include "cortrieve/eval.hpp"
#include "cortrieve/models.hpp"
#include "cortrieve/rng.hpp"
#include "cortrieve/training.hpp"

namespace cortrieve {

struct WarpConfig {
    double alpha = 0.05;  // learning rate
    double C = 1.0;       // norm constraint radius
    int max_epochs = 100;
    int patience = 5;
    int eval_k = 10;
    uint64_t seed = 1;
    /// Candidate-draw cap per step; 0 means |A| - 1. A step that exhausts the
    /// cap without finding a violator is skipped.
    int64_t max_sampling_attempts = 0;

    int n = 10;
    double init_low = -0.02;
    double init_high = 0.02;

    void validate() const {
        if (!(alpha > 0.0)) throw UsageError("alpha must be positive");
        if (!(C > 0.0)) throw UsageError("norm constraint C must be positive");
        if (max_sampling_attempts < 0) throw UsageError("max_sampling_attempts must be >= 1 (or 0 for the default)");
        if (patience < 1) throw UsageError("patience must be at least 1");
        if (max_epochs < 0) throw UsageError("max_epochs must be nonnegative");
        if (eval_k < 1) throw UsageError("eval_k must be at least 1");
        if (n < 1) throw UsageError("embedding dimension must be at least 1");
        if (!(init_low < init_high)) throw UsageError("init range requires low < high");
    }
};

/// Record of one rank-sampling step.
struct WarpStepTrace {
    int64_t attempts = 0;  // candidates drawn (K when a violator was found)
    bool violator_found = false;
    int64_t estimated_rank = 0;
    double loss_weight = 0.0;
    double sampling_seconds = 0.0;
};

/// L(k) = sum_{i=1..k} 1/i; the rank weight that emphasizes top positions.
inline double harmonic_weight(int64_t k) {
    if (k < 0) throw UsageError("harmonic_weight requires k >= 0");
    double s = 0.0;
    for (int64_t i = 1; i <= k; ++i) s += 1.0 / static_cast<double>(i);
    return s;
}

/// Margin rank of the positive item: the number of other items scoring
/// within a unit margin, ties included. O(|A|); used as a test oracle.
template <class Bank>
int64_t exact_margin_rank(const Bank& bank, int32_t q, int32_t u, int32_t a) {
    const int32_t n_items = bank.dims().n_items;
    detail::check_index(a, n_items, "item");
    std::vector<double> scores(static_cast<size_t>(n_items));
    score_all_items_into(bank, q, u, scores);
    const double fa = scores[static_cast<size_t>(a)];
    int64_t rank = 0;
    for (int32_t b = 0; b < n_items; ++b) {
        if (b == a) continue;
        if (1.0 + scores[static_cast<size_t>(b)] >= fa) ++rank;
    }
    return rank;
}

struct ViolatorDraw {
    int32_t item = 0;
    int64_t attempts = 0;
};

/// Draws items uniformly from A \ {a} (with replacement) until one scores
/// within a unit margin above the positive, or the attempt cap is hit.
template <class Bank>
std::optional<ViolatorDraw> sample_violator(const Bank& bank, int32_t q, int32_t u, int32_t a,
                                            Rng& rng, int64_t max_attempts) {
    const int32_t n_items = bank.dims().n_items;
    if (n_items < 2) throw UsageError("violator sampling requires at least two items");
    detail::check_index(a, n_items, "item");
    auto scorer = make_item_scorer(bank, q, u);
    const double fa = scorer(a);
    if (!std::isfinite(fa)) throw DivergenceError("non-finite score for the positive item");
    for (int64_t k = 1; k <= max_attempts; ++k) {
        auto idx = static_cast<int32_t>(rng.index(static_cast<uint64_t>(n_items - 1)));
        int32_t b = idx >= a ? idx + 1 : idx;  // uniform over A \ {a}
        double fb = scorer(b);
        if (!std::isfinite(fb)) throw DivergenceError("non-finite score for a sampled candidate");
        if (1.0 + fb > fa) return ViolatorDraw{b, k};
    }
    return std::nullopt;
}

/// Sampled-rank estimate: floor((|A| - 1) / K).
inline int64_t estimate_rank(int64_t attempts, int64_t n_items) {
    if (attempts < 1) throw UsageError("estimate_rank requires at least one attempt");
    if (n_items < 2) throw UsageError("estimate_rank requires at least two items");
    return (n_items - 1) / attempts;
}

namespace detail {

inline void warp_apply(ParamBank& bank, const PairwiseSample& s, double scale, double c) {
    const auto n = static_cast<size_t>(bank.n);
    const bool item_based = bank.has_item_encoders();

    auto sq = copy_row(bank.S.row(static_cast<size_t>(s.query)));
    auto vu = copy_row(bank.V.row(static_cast<size_t>(s.user)));
    auto ta = copy_row(bank.T.row(static_cast<size_t>(s.pos_item)));
    auto tb = copy_row(bank.T.row(static_cast<size_t>(s.neg_item)));
    auto uu = copy_row(bank.encoder(s.user));
    std::vector<double> aa, ab, enc_diff;
    if (item_based) {
        aa = copy_row(bank.item_encoder(s.pos_item));
        ab = copy_row(bank.item_encoder(s.neg_item));
        enc_diff.resize(n * n);
        for (size_t i = 0; i < n * n; ++i) enc_diff[i] = aa[i] - ab[i];
    }

    std::vector<double> d(n), proj(n), tdir(n), grad_s(n), grad_v(n);
    for (size_t j = 0; j < n; ++j) d[j] = ta[j] - tb[j];
    project_through(sq, uu, proj);
    for (size_t i = 0; i < n; ++i) {
        double g = 0.0;
        for (size_t j = 0; j < n; ++j) g += uu[i * n + j] * d[j];
        if (item_based)
            for (size_t j = 0; j < n; ++j) g += enc_diff[i * n + j] * vu[j];
        grad_s[i] = g;
    }
    for (size_t j = 0; j < n; ++j) {
        double g = d[j];
        if (item_based)
            for (size_t i = 0; i < n; ++i) g += sq[i] * enc_diff[i * n + j];
        grad_v[j] = g;
    }
    for (size_t j = 0; j < n; ++j) tdir[j] = proj[j] + vu[j];

    auto S_q = bank.S.row(static_cast<size_t>(s.query));
    auto V_u = bank.V.row(static_cast<size_t>(s.user));
    auto T_a = bank.T.row(static_cast<size_t>(s.pos_item));
    auto T_b = bank.T.row(static_cast<size_t>(s.neg_item));
    auto U_u = bank.user_enc.row(static_cast<size_t>(s.user));
    for (size_t i = 0; i < n; ++i) S_q[i] = sq[i] + scale * grad_s[i];
    for (size_t j = 0; j < n; ++j) V_u[j] = vu[j] + scale * grad_v[j];
    for (size_t j = 0; j < n; ++j) T_a[j] = ta[j] + scale * tdir[j];
    for (size_t j = 0; j < n; ++j) T_b[j] = tb[j] - scale * tdir[j];
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) U_u[i * n + j] = uu[i * n + j] + scale * sq[i] * d[j];

    clamp_norm(S_q, c);
    clamp_norm(V_u, c);
    clamp_norm(T_a, c);
    clamp_norm(T_b, c);
    clamp_norm(U_u, c);  // encoders constrained in Frobenius norm

    if (item_based) {
        auto A_a = bank.item_enc.row(static_cast<size_t>(s.pos_item));
        auto A_b = bank.item_enc.row(static_cast<size_t>(s.neg_item));
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < n; ++j) {
                double outer = sq[i] * vu[j];
                A_a[i * n + j] = aa[i * n + j] + scale * outer;
                A_b[i * n + j] = ab[i * n + j] - scale * outer;
            }
        clamp_norm(A_a, c);
        clamp_norm(A_b, c);
        check_rows_finite({{A_a, "A[" + std::to_string(s.pos_item) + "]"},
                           {A_b, "A[" + std::to_string(s.neg_item) + "]"}});
    }
    check_rows_finite({{S_q, "S[" + std::to_string(s.query) + "]"},
                       {V_u, "V[" + std::to_string(s.user) + "]"},
                       {T_a, "T[" + std::to_string(s.pos_item) + "]"},
                       {T_b, "T[" + std::to_string(s.neg_item) + "]"},
                       {U_u, "U[" + std::to_string(s.user) + "]"}});
}

inline void warp_apply(PitfBank& bank, const PairwiseSample& s, double scale, double c) {
    const auto n = static_cast<size_t>(bank.n);
    auto uu = copy_row(bank.user_emb.row(static_cast<size_t>(s.user)));
    auto qq = copy_row(bank.query_emb.row(static_cast<size_t>(s.query)));
    auto iua = copy_row(bank.item_user.row(static_cast<size_t>(s.pos_item)));
    auto iub = copy_row(bank.item_user.row(static_cast<size_t>(s.neg_item)));
    auto iqa = copy_row(bank.item_query.row(static_cast<size_t>(s.pos_item)));
    auto iqb = copy_row(bank.item_query.row(static_cast<size_t>(s.neg_item)));

    auto U = bank.user_emb.row(static_cast<size_t>(s.user));
    auto Q = bank.query_emb.row(static_cast<size_t>(s.query));
    auto IUa = bank.item_user.row(static_cast<size_t>(s.pos_item));
    auto IUb = bank.item_user.row(static_cast<size_t>(s.neg_item));
    auto IQa = bank.item_query.row(static_cast<size_t>(s.pos_item));
    auto IQb = bank.item_query.row(static_cast<size_t>(s.neg_item));
    for (size_t j = 0; j < n; ++j) {
        U[j] = uu[j] + scale * (iua[j] - iub[j]);
        Q[j] = qq[j] + scale * (iqa[j] - iqb[j]);
        IUa[j] = iua[j] + scale * uu[j];
        IUb[j] = iub[j] - scale * uu[j];
        IQa[j] = iqa[j] + scale * qq[j];
        IQb[j] = iqb[j] - scale * qq[j];
    }
    for (auto row : {U, Q, IUa, IUb, IQa, IQb}) clamp_norm(row, c);
    check_rows_finite({{U, "user_emb[" + std::to_string(s.user) + "]"},
                       {Q, "query_emb[" + std::to_string(s.query) + "]"},
                       {IUa, "item_user[" + std::to_string(s.pos_item) + "]"},
                       {IUb, "item_user[" + std::to_string(s.neg_item) + "]"},
                       {IQa, "item_query[" + std::to_string(s.pos_item) + "]"},
                       {IQb, "item_query[" + std::to_string(s.neg_item) + "]"}});
}

}  // namespace detail

/// One rank-weighted step: sample a violator, estimate the margin rank from
/// the attempt count, take a gradient step on the weighted hinge, then
/// project every touched row back into the norm ball of radius C. Steps that
/// find no violator leave the bank unchanged.
template <class Bank>
WarpStepTrace warp_step(Bank& bank, int32_t q, int32_t u, int32_t a, const WarpConfig& cfg,
                        Rng& rng) {
    const int32_t n_items = bank.dims().n_items;
    const int64_t max_attempts =
        cfg.max_sampling_attempts > 0 ? cfg.max_sampling_attempts : static_cast<int64_t>(n_items) - 1;

    WarpStepTrace trace;
    auto t0 = std::chrono::steady_clock::now();
    auto draw = sample_violator(bank, q, u, a, rng, max_attempts);
    trace.sampling_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (!draw) {
        trace.attempts = max_attempts;
        trace.violator_found = false;
        return trace;
    }
    trace.attempts = draw->attempts;
    trace.violator_found = true;
    trace.estimated_rank = estimate_rank(draw->attempts, n_items);
    trace.loss_weight = harmonic_weight(trace.estimated_rank);

    detail::warp_apply(bank, {u, q, a, draw->item}, cfg.alpha * trace.loss_weight, cfg.C);
    return trace;
}

/// Optional per-step trace consumer for instrumented runs.
using WarpTraceSink = std::function<void(int64_t step, const WarpStepTrace&)>;

template <class Bank>
EpochStats run_warp_epoch(Bank& bank, const Corpus& train, const WarpConfig& cfg, Rng& rng,
                          int64_t* step_counter = nullptr, const WarpTraceSink& sink = {}) {
    EpochStats stats;
    const auto n = static_cast<size_t>(train.size());
    auto t0 = std::chrono::steady_clock::now();

    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);

    for (size_t step = 0; step < n; ++step) {
        const auto& x = train.interactions[order[step]];
        WarpStepTrace trace = warp_step(bank, x.query, x.user, x.item, cfg, rng);
        ++stats.steps;
        stats.draws += trace.attempts;
        stats.sampling_seconds += trace.sampling_seconds;
        if (!trace.violator_found) ++stats.skipped_steps;
        if (sink) {
            int64_t id = step_counter ? (*step_counter)++ : static_cast<int64_t>(step);
            sink(id, trace);
        } else if (step_counter) {
            ++*step_counter;
        }
    }
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return stats;
}

/// Trains with the rank-weighted pairwise loss; same epoch/early-stop shape
/// as the single-negative learner, with violator-search instrumentation in
/// the history.
template <class Bank>
TrainResult<Bank> train_warp(Bank bank, const Corpus& train, const Corpus& validation,
                             const WarpConfig& cfg, const WarpTraceSink& sink = {}) {
    cfg.validate();
    TrainResult<Bank> result;
    if (cfg.max_epochs == 0) {
        result.bank = std::move(bank);
        return result;
    }
    if (train.size() == 0) throw DataError("training corpus is empty");
    if (validation.size() == 0) throw DataError("validation corpus is empty");
    if (train.n_queries() != validation.n_queries() || train.n_users() != validation.n_users() ||
        train.n_items() != validation.n_items())
        throw DataError("train and validation corpora have incompatible index spaces");

    Rng rng(derive_seed(cfg.seed, "warp-train"));
    Bank best = bank;
    double best_recall = -1.0;
    int best_epoch = 0;
    int stale = 0;
    int64_t step_counter = 0;
    const int k_list[1] = {cfg.eval_k};

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        EpochStats stats = run_warp_epoch(bank, train, cfg, rng, &step_counter, sink);
        stats.epoch = epoch;
        stats.recall = recall_at_k(bank, validation, k_list).recall_at.begin()->second;
        result.history.push_back(stats);
        if (stats.recall > best_recall) {
            best_recall = stats.recall;
            best_epoch = epoch;
            best = bank;
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }
    result.bank = std::move(best);
    result.best_epoch = best_epoch;
    result.best_recall = best_recall;
    return result;
}

inline void write_warp_trace_header(std::ostream& os) {
    os << "step,attempts,violator_found,estimated_rank,loss_weight\r\n";
}
inline void write_warp_trace_row(std::ostream& os, int64_t step, const WarpStepTrace& t) {
    os << step << "," << t.attempts << "," << (t.violator_found ? 1 : 0) << "," << t.estimated_rank
       << "," << t.loss_weight << "\r\n";
}

}  // namespace cortrieve
