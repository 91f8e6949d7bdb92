#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>

#include "cortrieve/bench.hpp"
#include "cortrieve/eval.hpp"
#include "test_helpers.hpp"

using namespace cortrieve;

namespace tabletest {

/// Test-only bank backed by a literal score table: row q holds the score of
/// every item for any user.
struct TableBank {
    cortrieve::Matrix scores;

    cortrieve::Dims dims() const {
        return {static_cast<int32_t>(scores.rows()), 1, static_cast<int32_t>(scores.cols()), 1};
    }
};

struct TableScorer {
    const TableBank* bank;
    int32_t query;
    double operator()(int32_t item) const {
        return bank->scores.at(static_cast<size_t>(query), static_cast<size_t>(item));
    }
};

inline TableScorer make_item_scorer(const TableBank& bank, int32_t query, int32_t /*user*/) {
    return TableScorer{&bank, query};
}

}  // namespace tabletest

namespace {

Corpus corpus_for_table(int n_rows, int n_items, const std::vector<int32_t>& positives) {
    Corpus c;
    for (int i = 0; i < n_rows; ++i) c.queries.add("q" + std::to_string(i));
    c.users.add("u0");
    for (int i = 0; i < n_items; ++i) c.items.add("a" + std::to_string(i));
    for (int i = 0; i < n_rows; ++i) c.add(i, 0, positives[static_cast<size_t>(i)]);
    c.finalize();
    return c;
}

/// Exhaustive-sort oracle: rank by stable sort on (score desc, index asc).
int32_t sort_rank(const std::vector<double>& scores, int32_t item) {
    std::vector<int32_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int32_t x, int32_t y) {
        if (scores[static_cast<size_t>(x)] != scores[static_cast<size_t>(y)])
            return scores[static_cast<size_t>(x)] > scores[static_cast<size_t>(y)];
        return x < y;
    });
    return static_cast<int32_t>(std::find(idx.begin(), idx.end(), item) - idx.begin());
}

}  // namespace

TEST_CASE("recall threshold sits exactly at the positive's rank") {
    tabletest::TableBank bank;
    bank.scores = Matrix(1, 6);
    // positive (item 0) ranked third: two items above it
    bank.scores.at(0, 0) = 5.0;
    bank.scores.at(0, 1) = 9.0;
    bank.scores.at(0, 2) = 7.0;
    bank.scores.at(0, 3) = 1.0;
    bank.scores.at(0, 4) = 0.0;
    bank.scores.at(0, 5) = -2.0;
    Corpus test = corpus_for_table(1, 6, {0});
    const int ks[2] = {2, 5};
    EvalReport report = recall_at_k(bank, test, ks);
    CHECK(report.recall_at[2] == 0.0);
    CHECK(report.recall_at[5] == 1.0);
}

TEST_CASE("ties break by ascending item index") {
    tabletest::TableBank bank;
    bank.scores = Matrix(1, 4, 1.0);  // all scores equal
    Corpus test = corpus_for_table(1, 4, {0});
    const int ks[1] = {1};
    CHECK(recall_at_k(bank, test, ks).recall_at[1] == 1.0);

    Corpus test_last = corpus_for_table(1, 4, {3});
    CHECK(recall_at_k(bank, test_last, ks).recall_at[1] == 0.0);
    const int k4[1] = {4};
    CHECK(recall_at_k(bank, test_last, k4).recall_at[4] == 1.0);
}

TEST_CASE("a random scorer recalls about k over the item count") {
    const int n_items = 40;
    const int n_triples = 4000;
    Rng rng(71);
    tabletest::TableBank bank;
    bank.scores = Matrix(static_cast<size_t>(n_triples), n_items);
    for (double& v : bank.scores.data()) v = rng.uniform(-1.0, 1.0);
    std::vector<int32_t> positives;
    for (int i = 0; i < n_triples; ++i) positives.push_back(static_cast<int32_t>(rng.index(n_items)));
    Corpus test = corpus_for_table(n_triples, n_items, positives);
    const int ks[3] = {4, 10, 20};
    EvalReport report = recall_at_k(bank, test, ks);
    for (int k : ks) {
        double expected = static_cast<double>(k) / n_items;
        double se = std::sqrt(expected * (1.0 - expected) / n_triples);
        CHECK(report.recall_at[k] == Catch::Approx(expected).margin(3.0 * se));
    }
}

TEST_CASE("recall matches the exhaustive-sort oracle over randomized tables") {
    // 1000 random tables of up to 10 items, deliberately tie-heavy
    Rng rng(2025);
    const int cases = 1000;
    const int n_items = 10;
    tabletest::TableBank bank;
    bank.scores = Matrix(cases, n_items);
    std::vector<int32_t> positives;
    std::vector<std::vector<double>> tables(cases);
    for (int i = 0; i < cases; ++i) {
        auto row = bank.scores.row(static_cast<size_t>(i));
        for (double& v : row) v = static_cast<double>(rng.index(4));  // few distinct values
        positives.push_back(static_cast<int32_t>(rng.index(n_items)));
        tables[static_cast<size_t>(i)].assign(row.begin(), row.end());
    }
    Corpus test = corpus_for_table(cases, n_items, positives);
    std::vector<int> ks(n_items);
    std::iota(ks.begin(), ks.end(), 1);
    EvalOptions opts;
    opts.keep_ranks = true;
    EvalReport report = recall_at_k(bank, test, ks, opts);

    double prev = 0.0;
    for (int k = 1; k <= n_items; ++k) {
        int64_t hits = 0;
        for (int i = 0; i < cases; ++i) {
            int32_t rank = sort_rank(tables[static_cast<size_t>(i)], positives[static_cast<size_t>(i)]);
            CHECK(report.per_triple_ranks[static_cast<size_t>(i)] == rank);
            if (rank < k) ++hits;
        }
        double expected = static_cast<double>(hits) / cases;
        CHECK(report.recall_at[k] == expected);  // exact, both are hits/n
        CHECK(report.recall_at[k] >= prev);      // monotone in k
        prev = report.recall_at[k];
    }
}

TEST_CASE("evaluation order of test triples does not change the report") {
    ParamBank bank = init_param_bank(ModelKind::ilcr, {3, 4, 12, 3}, -0.5, 0.5, 7);
    Corpus test = testutil::make_planted_corpus(bank, 4);
    Corpus shuffled;
    shuffled.queries = test.queries;
    shuffled.users = test.users;
    shuffled.items = test.items;
    std::vector<Interaction> order = test.interactions;
    Rng rng(3);
    rng.shuffle(order);
    for (const auto& x : order) shuffled.add(x.query, x.user, x.item);
    shuffled.finalize();
    const int ks[3] = {1, 5, 10};
    EvalReport a = recall_at_k(bank, test, ks);
    EvalReport b = recall_at_k(bank, shuffled, ks);
    for (int k : ks) CHECK(a.recall_at[k] == b.recall_at[k]);
}

TEST_CASE("parallel and serial evaluation agree exactly") {
    ParamBank bank = init_param_bank(ModelKind::ilcr, {5, 30, 64, 4}, -0.5, 0.5, 17);
    Corpus test = testutil::make_planted_corpus(bank, 8);
    const int ks[2] = {3, 10};
    EvalOptions serial;
    serial.n_threads = 1;
    serial.keep_ranks = true;
    EvalOptions parallel;
    parallel.n_threads = 4;
    parallel.keep_ranks = true;
    EvalReport a = recall_at_k(bank, test, ks, serial);
    EvalReport b = recall_at_k(bank, test, ks, parallel);
    CHECK(a.per_triple_ranks == b.per_triple_ranks);
    for (int k : ks) CHECK(a.recall_at[k] == b.recall_at[k]);
}

TEST_CASE("k is validated and clamped") {
    tabletest::TableBank bank;
    bank.scores = Matrix(1, 3, 0.0);
    Corpus test = corpus_for_table(1, 3, {0});
    const int bad[1] = {0};
    CHECK_THROWS_AS(recall_at_k(bank, test, bad), UsageError);
    const int big[1] = {99};
    EvalReport report = recall_at_k(bank, test, big);  // clamped to 3 with a warning
    CHECK(report.recall_at[99] == 1.0);
    CHECK_THROWS_AS(recall_at_k(bank, test, std::span<const int>{}), UsageError);
}

TEST_CASE("bank and corpus item spaces must agree") {
    tabletest::TableBank bank;
    bank.scores = Matrix(1, 3, 0.0);
    Corpus test = corpus_for_table(1, 5, {0});
    const int ks[1] = {1};
    CHECK_THROWS_AS(recall_at_k(bank, test, ks), DataError);
}

TEST_CASE("training positives can be excluded from the candidate list") {
    tabletest::TableBank bank;
    bank.scores = Matrix(1, 5);
    for (int i = 0; i < 5; ++i) bank.scores.at(0, i) = 5.0 - i;  // descending by index
    // positive is item 2 (rank 2); items 0 and 1 are training positives
    Corpus test = corpus_for_table(1, 5, {2});
    Corpus train;
    train.queries = test.queries;
    train.users = test.users;
    train.items = test.items;
    train.add(0, 0, 0);
    train.add(0, 0, 1);
    train.finalize();
    const int ks[1] = {1};
    EvalReport plain = recall_at_k(bank, test, ks);
    CHECK(plain.recall_at[1] == 0.0);
    EvalOptions opts;
    opts.exclude_train_positives = true;
    opts.train = &train;
    EvalReport filtered = recall_at_k(bank, test, ks, opts);
    CHECK(filtered.recall_at[1] == 1.0);
}

TEST_CASE("learner comparison instruments draws for both learners") {
    ParamBank truth = init_param_bank(ModelKind::lcr, {3, 8, 40, 3}, -0.5, 0.5, 55);
    Corpus all = testutil::make_planted_corpus(truth, 6);
    SplitResult parts = split(all, {0.7, 0.15, 0.15, 2});
    LearnerConfig bpr_cfg;
    bpr_cfg.max_epochs = 3;
    bpr_cfg.patience = 100;
    bpr_cfg.n = 3;
    bpr_cfg.seed = 6;
    WarpConfig warp_cfg;
    warp_cfg.max_epochs = 3;
    warp_cfg.patience = 100;
    warp_cfg.n = 3;
    warp_cfg.seed = 6;
    ComparisonReport report =
        compare_learners(ModelKind::lcr, parts.train, parts.validation, bpr_cfg, warp_cfg);

    const int64_t steps_per_epoch = parts.train.size();
    int64_t prev_bpr_draws = 0;
    int64_t prev_warp_draws = 0;
    int bpr_rows = 0, warp_rows = 0;
    for (const auto& row : report.rows) {
        if (row.learner == "bpr") {
            ++bpr_rows;
            // exactly one draw per step, accumulated
            CHECK(row.total_draws - prev_bpr_draws == steps_per_epoch);
            prev_bpr_draws = row.total_draws;
        } else {
            ++warp_rows;
            CHECK(row.total_draws - prev_warp_draws >= 0);
            prev_warp_draws = row.total_draws;
        }
    }
    CHECK(bpr_rows == 3);
    CHECK(warp_rows == 3);
    // every step draws at least one candidate
    CHECK(prev_warp_draws >= 3 * steps_per_epoch);
}

TEST_CASE("comparison requires matching embedding dimensions") {
    Corpus c = testutil::make_synthetic_corpus(2, 2, 6, 8);
    LearnerConfig bpr_cfg;
    bpr_cfg.n = 3;
    WarpConfig warp_cfg;
    warp_cfg.n = 4;
    CHECK_THROWS_AS(compare_learners(ModelKind::lcr, c, c, bpr_cfg, warp_cfg), UsageError);
}
