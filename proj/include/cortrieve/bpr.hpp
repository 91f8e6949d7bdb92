#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cortrieve/corpus.hpp"
#include "cortrieve/errors.hpp"
#include "cortrieve/eval.hpp"
#include "cortrieve/models.hpp"
#include "cortrieve/rng.hpp"
#include "cortrieve/training.hpp"

namespace cortrieve {

/// Numerically stable logistic function; no overflow for any finite x.
inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

/// log(sigmoid(x)) without intermediate overflow or underflow-to-zero.
inline double log_sigmoid(double x) {
    if (x >= 0.0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

struct LearnerConfig {
    double alpha = 0.05;   // learning rate
    double lambda = 0.01;  // regularization weight
    int max_epochs = 100;
    int patience = 5;  // epochs without validation improvement before stopping
    int eval_k = 10;   // k for the validation recall monitor
    uint64_t seed = 1;

    // run description
    int n = 10;  // embedding dimension for bank initialization
    double init_low = -0.02;
    double init_high = 0.02;
    /// Draw positives i.i.d. instead of sweeping a shuffled pass over the
    /// training set. The sweep is the default.
    bool iid_positives = false;

    void validate() const {
        if (!(alpha > 0.0)) throw UsageError("alpha must be positive");
        if (lambda < 0.0) throw UsageError("lambda must be nonnegative");
        if (patience < 1) throw UsageError("patience must be at least 1");
        if (max_epochs < 0) throw UsageError("max_epochs must be nonnegative");
        if (eval_k < 1) throw UsageError("eval_k must be at least 1");
        if (n < 1) throw UsageError("embedding dimension must be at least 1");
        if (!(init_low < init_high)) throw UsageError("init range requires low < high");
    }
};

/// One positive triple paired with one sampled negative item.
struct PairwiseSample {
    int32_t user = 0;
    int32_t query = 0;
    int32_t pos_item = 0;
    int32_t neg_item = 0;
};

/// Uniform draw over the items not observed for (user, query), by rejection
/// against the corpus index.
inline int32_t sample_negative(const Corpus& corpus, int32_t user, int32_t query, Rng& rng) {
    const int32_t n_items = corpus.n_items();
    if (n_items < 1) throw DataError("cannot sample a negative from an empty item vocabulary");
    const auto* pos = corpus.positive_items(user, query);
    if (pos && static_cast<int32_t>(pos->size()) >= n_items)
        throw DataError("exhausted negatives: every item is a positive for this (user,query)");
    const int64_t cap = 100ll * n_items;
    for (int64_t attempt = 0; attempt < cap; ++attempt) {
        auto b = static_cast<int32_t>(rng.index(static_cast<uint64_t>(n_items)));
        if (!pos || !std::binary_search(pos->begin(), pos->end(), b)) return b;
    }
    throw DataError("exhausted negatives: rejection sampling cap reached");
}

/// Full-enumeration pairwise objective: sum over all (positive, negative)
/// pairs of log sigmoid(score difference), minus lambda times the sum of
/// squares of every parameter. Intended as a test oracle on small corpora.
template <class Bank>
double bpr_objective(const Bank& bank, const Corpus& train, double lambda,
                     int64_t max_pairs = 2000000) {
    const int32_t n_items = bank.dims().n_items;
    auto pairs = train.user_query_pairs();
    int64_t total = 0;
    for (const auto& [u, q] : pairs) {
        auto n_pos = static_cast<int64_t>(train.positive_items(u, q)->size());
        total += n_pos * (n_items - n_pos);
    }
    if (total > max_pairs)
        throw DataError("objective enumeration too large: " + std::to_string(total) + " pairs (cap " +
                        std::to_string(max_pairs) + ")");

    double obj = 0.0;
    std::vector<double> scores(static_cast<size_t>(n_items));
    for (const auto& [u, q] : pairs) {
        score_all_items_into(bank, q, u, scores);
        const auto* pos = train.positive_items(u, q);
        for (int32_t a : *pos) {
            for (int32_t b = 0; b < n_items; ++b) {
                if (std::binary_search(pos->begin(), pos->end(), b)) continue;
                obj += log_sigmoid(scores[static_cast<size_t>(a)] - scores[static_cast<size_t>(b)]);
            }
        }
    }
    return obj - lambda * sum_squares(bank);
}

// ---------------------------------------------------------------------------
// Per-sample gradient-ascent steps. All gradients are evaluated at the
// pre-update parameter values and applied together.
// ---------------------------------------------------------------------------

namespace detail {

inline void check_sample(const PairwiseSample& s, const Dims& d) {
    check_index(s.query, d.n_queries, "query");
    check_index(s.user, d.n_users, "user");
    check_index(s.pos_item, d.n_items, "positive item");
    check_index(s.neg_item, d.n_items, "negative item");
    if (s.pos_item == s.neg_item)
        throw UsageError("pairwise sample has identical positive and negative items");
}

inline void check_rows_finite(
    std::initializer_list<std::pair<std::span<const double>, std::string>> rows) {
    for (const auto& [row, name] : rows) {
        if (!all_finite(row))
            throw DivergenceError("non-finite values in parameter row " + name);
    }
}

inline std::vector<double> copy_row(std::span<const double> row) {
    return std::vector<double>(row.begin(), row.end());
}

}  // namespace detail

/// One ascent step for the user-encoder model without item encoders.
inline void bpr_step_lcr(ParamBank& bank, const PairwiseSample& s, const LearnerConfig& cfg) {
    detail::check_sample(s, bank.dims());
    const auto n = static_cast<size_t>(bank.n);
    const double alpha = cfg.alpha, lambda = cfg.lambda;

    auto sq = detail::copy_row(bank.S.row(static_cast<size_t>(s.query)));
    auto vu = detail::copy_row(bank.V.row(static_cast<size_t>(s.user)));
    auto ta = detail::copy_row(bank.T.row(static_cast<size_t>(s.pos_item)));
    auto tb = detail::copy_row(bank.T.row(static_cast<size_t>(s.neg_item)));
    auto uu = detail::copy_row(bank.encoder(s.user));

    const double xhat = score_lcr(bank, s.query, s.user, s.pos_item) -
                        score_lcr(bank, s.query, s.user, s.neg_item);
    if (!std::isfinite(xhat)) {
        detail::check_rows_finite({{sq, "S[" + std::to_string(s.query) + "]"},
                                   {vu, "V[" + std::to_string(s.user) + "]"},
                                   {ta, "T[" + std::to_string(s.pos_item) + "]"},
                                   {tb, "T[" + std::to_string(s.neg_item) + "]"},
                                   {uu, "U[" + std::to_string(s.user) + "]"}});
        throw DivergenceError("non-finite score difference");
    }
    const double loss = 1.0 - sigmoid(xhat);

    std::vector<double> d(n), proj(n), tdir(n), grad_s(n);
    for (size_t j = 0; j < n; ++j) d[j] = ta[j] - tb[j];
    detail::project_through(sq, uu, proj);  // S_q through the user encoder
    for (size_t i = 0; i < n; ++i) {
        double g = 0.0;
        for (size_t j = 0; j < n; ++j) g += uu[i * n + j] * d[j];
        grad_s[i] = g;
    }
    for (size_t j = 0; j < n; ++j) tdir[j] = proj[j] + vu[j];

    auto S_q = bank.S.row(static_cast<size_t>(s.query));
    auto V_u = bank.V.row(static_cast<size_t>(s.user));
    auto T_a = bank.T.row(static_cast<size_t>(s.pos_item));
    auto T_b = bank.T.row(static_cast<size_t>(s.neg_item));
    auto U_u = bank.user_enc.row(static_cast<size_t>(s.user));
    for (size_t i = 0; i < n; ++i) S_q[i] = sq[i] + alpha * (loss * grad_s[i] - lambda * sq[i]);
    for (size_t j = 0; j < n; ++j) V_u[j] = vu[j] + alpha * (loss * d[j] - lambda * vu[j]);
    for (size_t j = 0; j < n; ++j) T_a[j] = ta[j] + alpha * (loss * tdir[j] - lambda * ta[j]);
    for (size_t j = 0; j < n; ++j) T_b[j] = tb[j] - alpha * (loss * tdir[j] + lambda * tb[j]);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
            U_u[i * n + j] = uu[i * n + j] + alpha * (loss * sq[i] * d[j] - lambda * uu[i * n + j]);

    detail::check_rows_finite({{S_q, "S[" + std::to_string(s.query) + "]"},
                               {V_u, "V[" + std::to_string(s.user) + "]"},
                               {T_a, "T[" + std::to_string(s.pos_item) + "]"},
                               {T_b, "T[" + std::to_string(s.neg_item) + "]"},
                               {U_u, "U[" + std::to_string(s.user) + "]"}});
}

/// One ascent step for the item-based model: the five updates above plus the
/// extra score-difference terms and the rank-one item-encoder updates.
inline void bpr_step_ilcr(ParamBank& bank, const PairwiseSample& s, const LearnerConfig& cfg) {
    if (!bank.has_item_encoders()) throw UsageError("bpr_step_ilcr requires an ilcr bank");
    detail::check_sample(s, bank.dims());
    const auto n = static_cast<size_t>(bank.n);
    const double alpha = cfg.alpha, lambda = cfg.lambda;

    auto sq = detail::copy_row(bank.S.row(static_cast<size_t>(s.query)));
    auto vu = detail::copy_row(bank.V.row(static_cast<size_t>(s.user)));
    auto ta = detail::copy_row(bank.T.row(static_cast<size_t>(s.pos_item)));
    auto tb = detail::copy_row(bank.T.row(static_cast<size_t>(s.neg_item)));
    auto uu = detail::copy_row(bank.encoder(s.user));
    auto aa = detail::copy_row(bank.item_encoder(s.pos_item));
    auto ab = detail::copy_row(bank.item_encoder(s.neg_item));

    const double xhat = score_ilcr(bank, s.query, s.user, s.pos_item) -
                        score_ilcr(bank, s.query, s.user, s.neg_item);
    if (!std::isfinite(xhat)) {
        detail::check_rows_finite({{sq, "S[" + std::to_string(s.query) + "]"},
                                   {vu, "V[" + std::to_string(s.user) + "]"},
                                   {ta, "T[" + std::to_string(s.pos_item) + "]"},
                                   {tb, "T[" + std::to_string(s.neg_item) + "]"},
                                   {uu, "U[" + std::to_string(s.user) + "]"},
                                   {aa, "A[" + std::to_string(s.pos_item) + "]"},
                                   {ab, "A[" + std::to_string(s.neg_item) + "]"}});
        throw DivergenceError("non-finite score difference");
    }
    const double loss = 1.0 - sigmoid(xhat);

    std::vector<double> d(n), proj(n), tdir(n), grad_s(n), grad_v(n), enc_diff(n * n);
    for (size_t j = 0; j < n; ++j) d[j] = ta[j] - tb[j];
    for (size_t i = 0; i < n * n; ++i) enc_diff[i] = aa[i] - ab[i];
    detail::project_through(sq, uu, proj);
    for (size_t i = 0; i < n; ++i) {
        double g = 0.0;
        for (size_t j = 0; j < n; ++j) g += uu[i * n + j] * d[j];
        for (size_t j = 0; j < n; ++j) g += enc_diff[i * n + j] * vu[j];
        grad_s[i] = g;
    }
    for (size_t j = 0; j < n; ++j) {
        double g = 0.0;
        for (size_t i = 0; i < n; ++i) g += sq[i] * enc_diff[i * n + j];
        grad_v[j] = d[j] + g;
    }
    for (size_t j = 0; j < n; ++j) tdir[j] = proj[j] + vu[j];

    auto S_q = bank.S.row(static_cast<size_t>(s.query));
    auto V_u = bank.V.row(static_cast<size_t>(s.user));
    auto T_a = bank.T.row(static_cast<size_t>(s.pos_item));
    auto T_b = bank.T.row(static_cast<size_t>(s.neg_item));
    auto U_u = bank.user_enc.row(static_cast<size_t>(s.user));
    auto A_a = bank.item_enc.row(static_cast<size_t>(s.pos_item));
    auto A_b = bank.item_enc.row(static_cast<size_t>(s.neg_item));
    for (size_t i = 0; i < n; ++i) S_q[i] = sq[i] + alpha * (loss * grad_s[i] - lambda * sq[i]);
    for (size_t j = 0; j < n; ++j) V_u[j] = vu[j] + alpha * (loss * grad_v[j] - lambda * vu[j]);
    for (size_t j = 0; j < n; ++j) T_a[j] = ta[j] + alpha * (loss * tdir[j] - lambda * ta[j]);
    for (size_t j = 0; j < n; ++j) T_b[j] = tb[j] - alpha * (loss * tdir[j] + lambda * tb[j]);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
            U_u[i * n + j] = uu[i * n + j] + alpha * (loss * sq[i] * d[j] - lambda * uu[i * n + j]);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
            double outer = sq[i] * vu[j];
            A_a[i * n + j] = aa[i * n + j] + alpha * (loss * outer - lambda * aa[i * n + j]);
            A_b[i * n + j] = ab[i * n + j] - alpha * (loss * outer + lambda * ab[i * n + j]);
        }

    detail::check_rows_finite({{S_q, "S[" + std::to_string(s.query) + "]"},
                               {V_u, "V[" + std::to_string(s.user) + "]"},
                               {T_a, "T[" + std::to_string(s.pos_item) + "]"},
                               {T_b, "T[" + std::to_string(s.neg_item) + "]"},
                               {U_u, "U[" + std::to_string(s.user) + "]"},
                               {A_a, "A[" + std::to_string(s.pos_item) + "]"},
                               {A_b, "A[" + std::to_string(s.neg_item) + "]"}});
}

/// One ascent step for the pairwise-interaction model: the four touched
/// embedding rows per item side.
inline void bpr_step_pitf(PitfBank& bank, const PairwiseSample& s, const LearnerConfig& cfg) {
    detail::check_sample(s, bank.dims());
    const auto n = static_cast<size_t>(bank.n);
    const double alpha = cfg.alpha, lambda = cfg.lambda;

    auto uu = detail::copy_row(bank.user_emb.row(static_cast<size_t>(s.user)));
    auto qq = detail::copy_row(bank.query_emb.row(static_cast<size_t>(s.query)));
    auto iua = detail::copy_row(bank.item_user.row(static_cast<size_t>(s.pos_item)));
    auto iub = detail::copy_row(bank.item_user.row(static_cast<size_t>(s.neg_item)));
    auto iqa = detail::copy_row(bank.item_query.row(static_cast<size_t>(s.pos_item)));
    auto iqb = detail::copy_row(bank.item_query.row(static_cast<size_t>(s.neg_item)));

    const double xhat = score_pitf(bank, s.query, s.user, s.pos_item) -
                        score_pitf(bank, s.query, s.user, s.neg_item);
    if (!std::isfinite(xhat)) throw DivergenceError("non-finite score difference");
    const double loss = 1.0 - sigmoid(xhat);

    auto U = bank.user_emb.row(static_cast<size_t>(s.user));
    auto Q = bank.query_emb.row(static_cast<size_t>(s.query));
    auto IUa = bank.item_user.row(static_cast<size_t>(s.pos_item));
    auto IUb = bank.item_user.row(static_cast<size_t>(s.neg_item));
    auto IQa = bank.item_query.row(static_cast<size_t>(s.pos_item));
    auto IQb = bank.item_query.row(static_cast<size_t>(s.neg_item));
    for (size_t j = 0; j < n; ++j) {
        U[j] = uu[j] + alpha * (loss * (iua[j] - iub[j]) - lambda * uu[j]);
        Q[j] = qq[j] + alpha * (loss * (iqa[j] - iqb[j]) - lambda * qq[j]);
        IUa[j] = iua[j] + alpha * (loss * uu[j] - lambda * iua[j]);
        IUb[j] = iub[j] - alpha * (loss * uu[j] + lambda * iub[j]);
        IQa[j] = iqa[j] + alpha * (loss * qq[j] - lambda * iqa[j]);
        IQb[j] = iqb[j] - alpha * (loss * qq[j] + lambda * iqb[j]);
    }

    detail::check_rows_finite({{U, "user_emb[" + std::to_string(s.user) + "]"},
                               {Q, "query_emb[" + std::to_string(s.query) + "]"},
                               {IUa, "item_user[" + std::to_string(s.pos_item) + "]"},
                               {IUb, "item_user[" + std::to_string(s.neg_item) + "]"},
                               {IQa, "item_query[" + std::to_string(s.pos_item) + "]"},
                               {IQb, "item_query[" + std::to_string(s.neg_item) + "]"}});
}

inline void bpr_step(ParamBank& bank, const PairwiseSample& s, const LearnerConfig& cfg) {
    if (bank.kind == ModelKind::ilcr)
        bpr_step_ilcr(bank, s, cfg);
    else
        bpr_step_lcr(bank, s, cfg);
}
inline void bpr_step(PitfBank& bank, const PairwiseSample& s, const LearnerConfig& cfg) {
    bpr_step_pitf(bank, s, cfg);
}

// ---------------------------------------------------------------------------
// Epoch loop and training driver
// ---------------------------------------------------------------------------

/// One pass over the training triples (a seeded shuffle, or i.i.d. draws when
/// configured), drawing one negative per positive. Returns per-epoch stats.
template <class Bank>
EpochStats run_bpr_epoch(Bank& bank, const Corpus& train, const LearnerConfig& cfg, Rng& rng) {
    EpochStats stats;
    const auto n = static_cast<size_t>(train.size());
    auto t0 = std::chrono::steady_clock::now();
    int64_t sampling_ns = 0;

    std::vector<size_t> order;
    if (!cfg.iid_positives) {
        order.resize(n);
        for (size_t i = 0; i < n; ++i) order[i] = i;
        rng.shuffle(order);
    }

    for (size_t step = 0; step < n; ++step) {
        size_t idx = cfg.iid_positives ? static_cast<size_t>(rng.index(n)) : order[step];
        const auto& x = train.interactions[idx];
        auto s0 = std::chrono::steady_clock::now();
        int32_t b = sample_negative(train, x.user, x.query, rng);
        sampling_ns +=
            std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - s0)
                .count();
        bpr_step(bank, {x.user, x.query, x.item, b}, cfg);
        ++stats.steps;
        ++stats.draws;  // exactly one negative draw per step
    }

    stats.sampling_seconds = static_cast<double>(sampling_ns) * 1e-9;
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return stats;
}

/// Trains a bank by stochastic gradient ascent on the pairwise objective,
/// monitoring validation recall@eval_k after each epoch. Stops at max_epochs
/// or after `patience` epochs without improvement, and returns the bank
/// snapshot from the best validation epoch.
template <class Bank>
TrainResult<Bank> train_bpr(Bank bank, const Corpus& train, const Corpus& validation,
                            const LearnerConfig& cfg) {
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

    Rng rng(derive_seed(cfg.seed, "bpr-train"));
    Bank best = bank;
    double best_recall = -1.0;
    int best_epoch = 0;
    int stale = 0;
    const int k_list[1] = {cfg.eval_k};

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        EpochStats stats = run_bpr_epoch(bank, train, cfg, rng);
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

}  // namespace cortrieve
