#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "cortrieve/corpus.hpp"
#include "cortrieve/errors.hpp"
#include "cortrieve/models.hpp"

namespace cortrieve {

/// Mean recall@k over a test corpus, plus optional per-triple ranks.
struct EvalReport {
    std::map<int, double> recall_at;
    int64_t n_test = 0;
    std::vector<int32_t> per_triple_ranks;  // filled when requested
    double seconds = 0.0;                   // wall time of the evaluation
};

struct EvalOptions {
    bool keep_ranks = false;
    /// Removes the user's training positives from the candidate list. Off by
    /// default: every item is ranked.
    bool exclude_train_positives = false;
    const Corpus* train = nullptr;  // required when exclude_train_positives
    int n_threads = 0;              // 0 = auto
};

/// Zero-based rank of `item` when all items are sorted by descending score,
/// ties broken by ascending item index.
inline int32_t rank_of_item(std::span<const double> scores, int32_t item) {
    const double target = scores[static_cast<size_t>(item)];
    int32_t rank = 0;
    for (size_t b = 0; b < scores.size(); ++b) {
        if (static_cast<int32_t>(b) == item) continue;
        if (scores[b] > target || (scores[b] == target && static_cast<int32_t>(b) < item)) ++rank;
    }
    return rank;
}

/// Ranks every item for each test triple and reports, for each requested k,
/// the fraction of triples whose positive lands in the top k.
template <class Bank>
EvalReport recall_at_k(const Bank& bank, const Corpus& test, std::span<const int> ks,
                       const EvalOptions& opts = {}) {
    if (ks.empty()) throw UsageError("recall_at_k needs at least one k");
    for (int k : ks)
        if (k <= 0) throw UsageError("recall_at_k requires k >= 1, got " + std::to_string(k));
    if (opts.exclude_train_positives && opts.train == nullptr)
        throw UsageError("exclude_train_positives requires a train corpus");

    const int32_t n_items = bank.dims().n_items;
    if (n_items != test.n_items())
        throw DataError("bank/corpus item dimension mismatch: bank has " +
                        std::to_string(n_items) + " items, corpus has " +
                        std::to_string(test.n_items()));

    std::vector<int> clamped(ks.begin(), ks.end());
    for (int& k : clamped) {
        if (k > n_items) {
            std::fprintf(stderr, "warning: recall k=%d exceeds item count %d, clamping\n", k,
                         n_items);
            k = n_items;
        }
    }

    const auto n = static_cast<size_t>(test.size());
    EvalReport report;
    report.n_test = static_cast<int64_t>(n);
    for (size_t i = 0; i < ks.size(); ++i) report.recall_at[ks[i]] = 0.0;
    if (n == 0) return report;

    auto start = std::chrono::steady_clock::now();

    std::vector<int32_t> ranks(n, 0);
    // Triples are scored in blocks with the item loop outermost, so each
    // item's rows are loaded once per block instead of once per triple.
    auto worker = [&](size_t begin, size_t end) {
        using Scorer = decltype(make_item_scorer(bank, int32_t{0}, int32_t{0}));
        constexpr size_t kBlock = 48;
        std::vector<Scorer> scorers;
        scorers.reserve(kBlock);
        std::vector<double> scores(kBlock * static_cast<size_t>(n_items));
        for (size_t block_begin = begin; block_begin < end; block_begin += kBlock) {
            const size_t block_end = std::min(end, block_begin + kBlock);
            const size_t width = block_end - block_begin;
            scorers.clear();
            for (size_t i = block_begin; i < block_end; ++i) {
                const auto& x = test.interactions[i];
                scorers.push_back(make_item_scorer(bank, x.query, x.user));
            }
            for (int32_t a = 0; a < n_items; ++a)
                for (size_t t = 0; t < width; ++t)
                    scores[t * static_cast<size_t>(n_items) + static_cast<size_t>(a)] =
                        scorers[t](a);
            for (size_t i = block_begin; i < block_end; ++i) {
                const auto& x = test.interactions[i];
                std::span<const double> row{
                    scores.data() + (i - block_begin) * static_cast<size_t>(n_items),
                    static_cast<size_t>(n_items)};
                int32_t rank;
                if (opts.exclude_train_positives) {
                    const auto* pos = opts.train->positive_items(x.user, x.query);
                    const double target = row[static_cast<size_t>(x.item)];
                    rank = 0;
                    for (int32_t b = 0; b < n_items; ++b) {
                        if (b == x.item) continue;
                        if (pos && std::binary_search(pos->begin(), pos->end(), b)) continue;
                        if (row[static_cast<size_t>(b)] > target ||
                            (row[static_cast<size_t>(b)] == target && b < x.item))
                            ++rank;
                    }
                } else {
                    rank = rank_of_item(row, x.item);
                }
                ranks[i] = rank;
            }
        }
    };

    int n_threads = opts.n_threads;
    if (n_threads <= 0) {
        unsigned hw = std::thread::hardware_concurrency();
        n_threads = static_cast<int>(hw == 0 ? 1 : std::min(hw, 8u));
        // threading only pays off for sizeable evaluations
        if (n * static_cast<size_t>(n_items) < (1u << 18)) n_threads = 1;
    }
    if (n_threads <= 1 || n < 2) {
        worker(0, n);
    } else {
        std::vector<std::thread> pool;
        size_t chunk = (n + static_cast<size_t>(n_threads) - 1) / static_cast<size_t>(n_threads);
        for (int t = 0; t < n_threads; ++t) {
            size_t begin = static_cast<size_t>(t) * chunk;
            size_t end = std::min(n, begin + chunk);
            if (begin >= end) break;
            pool.emplace_back(worker, begin, end);
        }
        for (auto& th : pool) th.join();
    }

    for (size_t ki = 0; ki < ks.size(); ++ki) {
        int64_t hits = 0;
        for (size_t i = 0; i < n; ++i)
            if (ranks[i] < clamped[ki]) ++hits;
        report.recall_at[ks[ki]] = static_cast<double>(hits) / static_cast<double>(n);
    }
    if (opts.keep_ranks) report.per_triple_ranks = std::move(ranks);
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

inline void write_recall_csv(const EvalReport& report, std::ostream& os) {
    os << "k,mean_recall\r\n";
    for (const auto& [k, r] : report.recall_at) os << k << "," << r << "\r\n";
}

}  // namespace cortrieve
