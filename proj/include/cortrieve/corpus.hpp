#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cortrieve/errors.hpp"
#include "cortrieve/rng.hpp"
#include "cortrieve/serialize.hpp"

namespace cortrieve {

/// One observed (query, user, item) triple, in dense indices.
struct Interaction {
    int32_t query = 0;
    int32_t user = 0;
    int32_t item = 0;

    bool operator==(const Interaction&) const = default;
};

/// Bidirectional map between raw string labels and dense indices.
/// Indices are assigned in first-appearance order.
class Vocab {
public:
    int32_t add(std::string_view label) {
        auto it = index_.find(std::string(label));
        if (it != index_.end()) return it->second;
        int32_t idx = static_cast<int32_t>(labels_.size());
        labels_.emplace_back(label);
        index_.emplace(labels_.back(), idx);
        return idx;
    }

    std::optional<int32_t> find(std::string_view label) const {
        auto it = index_.find(std::string(label));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    const std::string& label(int32_t idx) const {
        if (idx < 0 || static_cast<size_t>(idx) >= labels_.size())
            throw DataError("vocab index out of range: " + std::to_string(idx));
        return labels_[static_cast<size_t>(idx)];
    }

    int32_t size() const { return static_cast<int32_t>(labels_.size()); }

private:
    std::unordered_map<std::string, int32_t> index_;
    std::vector<std::string> labels_;
};

/// Indexed triple store. Immutable once finalized; safe for concurrent reads.
class Corpus {
public:
    std::vector<Interaction> interactions;
    Vocab queries, users, items;

    int32_t n_queries() const { return queries.size(); }
    int32_t n_users() const { return users.size(); }
    int32_t n_items() const { return items.size(); }
    int64_t size() const { return static_cast<int64_t>(interactions.size()); }

    /// Adds a triple unless the exact (q,u,a) triple is already present.
    /// Returns false on duplicates.
    bool add(int32_t q, int32_t u, int32_t a) {
        auto& pos = positives_[key(u, q)];
        if (std::find(pos.begin(), pos.end(), a) != pos.end()) return false;
        pos.push_back(a);
        interactions.push_back({q, u, a});
        finalized_ = false;
        return true;
    }

    /// Sorts the per-pair item lists so membership tests can binary-search.
    void finalize() {
        for (auto& [k, v] : positives_) std::sort(v.begin(), v.end());
        finalized_ = true;
    }

    /// Observed items for a (user, query) pair, sorted. Null when none.
    const std::vector<int32_t>* positive_items(int32_t user, int32_t query) const {
        auto it = positives_.find(key(user, query));
        if (it == positives_.end()) return nullptr;
        return &it->second;
    }

    bool is_positive(int32_t user, int32_t query, int32_t item) const {
        const auto* pos = positive_items(user, query);
        if (!pos) return false;
        if (finalized_) return std::binary_search(pos->begin(), pos->end(), item);
        return std::find(pos->begin(), pos->end(), item) != pos->end();
    }

    /// Rebuilds the inverted index from the interaction list. Used by
    /// snapshot loading and by tests that verify index consistency.
    void rebuild_index() {
        positives_.clear();
        for (const auto& x : interactions) positives_[key(x.user, x.query)].push_back(x.item);
        finalize();
    }

    /// All (user, query) pairs with at least one positive, in sorted order.
    /// Sorted so that iteration order (and hence float accumulation order in
    /// oracles) is deterministic.
    std::vector<std::pair<int32_t, int32_t>> user_query_pairs() const {
        std::vector<std::pair<int32_t, int32_t>> out;
        out.reserve(positives_.size());
        for (const auto& [k, v] : positives_)
            out.emplace_back(static_cast<int32_t>(k >> 32), static_cast<int32_t>(k & 0xffffffffu));
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    static uint64_t key(int32_t user, int32_t query) {
        return (static_cast<uint64_t>(static_cast<uint32_t>(user)) << 32) |
               static_cast<uint32_t>(query);
    }

    std::unordered_map<uint64_t, std::vector<int32_t>> positives_;
    bool finalized_ = false;
};

/// Train/validation/test proportions for a per-triple uniform split.
struct SplitSpec {
    double train_fraction = 0.8;
    double validation_fraction = 0.1;
    double test_fraction = 0.1;
    uint64_t seed = 1;

    void validate() const {
        auto in_open_unit = [](double f) { return f > 0.0 && f < 1.0; };
        if (!in_open_unit(train_fraction) || !in_open_unit(validation_fraction) ||
            !in_open_unit(test_fraction))
            throw UsageError("split fractions must lie in (0,1)");
        double sum = train_fraction + validation_fraction + test_fraction;
        if (std::abs(sum - 1.0) > 1e-9)
            throw UsageError("split fractions must sum to 1, got " + std::to_string(sum));
    }
};

// ---------------------------------------------------------------------------
// Raw-log parsing. Logs are UTF-8 tab-separated. One header line is skipped
// when it fails to parse: wrong arity / empty field, or (for integer-keyed
// logs like the hetrec .dat files) a first line whose key columns are not
// integers while the second line's are.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    size_t start = 0;
    while (true) {
        size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    if (!fields.empty() && !fields.back().empty() && fields.back().back() == '\r')
        fields.back().pop_back();
    return fields;
}

inline bool is_integer(const std::string& s) {
    if (s.empty()) return false;
    size_t i = (s[0] == '-' || s[0] == '+') ? 1 : 0;
    if (i == s.size()) return false;
    for (; i < s.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    return true;
}

struct LogRow {
    std::vector<std::string> fields;
    int64_t line_number = 0;
};

/// Reads a tab-separated log. Rows must have at least `min_fields` non-empty
/// leading fields; extra columns are ignored (hetrec logs carry timestamps
/// and weights past the key columns).
inline std::vector<LogRow> read_log(const std::string& path, size_t min_fields,
                                    bool exact_arity = false) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open log file: " + path);

    auto row_ok = [&](const std::vector<std::string>& f) {
        if (exact_arity ? f.size() != min_fields : f.size() < min_fields) return false;
        for (size_t i = 0; i < min_fields; ++i)
            if (f[i].empty()) return false;
        return true;
    };
    auto keys_integer = [&](const std::vector<std::string>& f) {
        for (size_t i = 0; i < min_fields && i < f.size(); ++i)
            if (!is_integer(f[i])) return false;
        return true;
    };

    std::vector<LogRow> rows;
    std::string line;
    int64_t lineno = 0;
    bool first = true;
    bool saw_second = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto fields = split_tabs(line);
        if (first) {
            first = false;
            if (!row_ok(fields)) continue;  // malformed line 1 is a header
            // Peek ahead: an all-text first line over an integer-keyed log is
            // a header too.
            std::streampos here = in.tellg();
            std::string peek;
            std::vector<std::string> peek_fields;
            while (std::getline(in, peek)) {
                if (peek.empty() || peek == "\r") continue;
                peek_fields = split_tabs(peek);
                saw_second = true;
                break;
            }
            in.clear();
            in.seekg(here);
            if (saw_second && row_ok(peek_fields) && keys_integer(peek_fields) &&
                !keys_integer(fields))
                continue;
            rows.push_back({std::move(fields), lineno});
            continue;
        }
        if (!row_ok(fields))
            throw ParseError(path + ": malformed row at line " + std::to_string(lineno) +
                             " (expected " + (exact_arity ? "exactly " : "at least ") +
                             std::to_string(min_fields) + " non-empty fields, got " +
                             std::to_string(fields.size()) + ")");
        rows.push_back({std::move(fields), lineno});
    }
    return rows;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

/// Column order of a generic triples file: positions of the query, user and
/// item columns. Parsed from strings like "qui" (default) or "uqi".
struct ColumnOrder {
    int query = 0;
    int user = 1;
    int item = 2;

    static ColumnOrder parse(std::string_view s) {
        if (s.size() != 3) throw UsageError("column order must be a permutation of 'q','u','i'");
        ColumnOrder c;
        bool seen[3] = {false, false, false};
        for (int pos = 0; pos < 3; ++pos) {
            switch (s[static_cast<size_t>(pos)]) {
                case 'q': c.query = pos; seen[0] = true; break;
                case 'u': c.user = pos; seen[1] = true; break;
                case 'i': case 'a': c.item = pos; seen[2] = true; break;
                default: throw UsageError("column order must be a permutation of 'q','u','i'");
            }
        }
        if (!seen[0] || !seen[1] || !seen[2])
            throw UsageError("column order must name each of query, user, item once");
        return c;
    }
};

/// Ingests a generic triples log. Rows must have exactly three non-empty
/// fields; duplicates collapse to one interaction.
inline Corpus ingest_tsv(const std::string& path, ColumnOrder schema = {}) {
    auto rows = detail::read_log(path, 3, /*exact_arity=*/true);
    Corpus corpus;
    for (const auto& row : rows) {
        int32_t q = corpus.queries.add(row.fields[static_cast<size_t>(schema.query)]);
        int32_t u = corpus.users.add(row.fields[static_cast<size_t>(schema.user)]);
        int32_t a = corpus.items.add(row.fields[static_cast<size_t>(schema.item)]);
        corpus.add(q, u, a);
    }
    if (corpus.size() == 0) throw DataError(path + ": no interactions (empty corpus)");
    corpus.finalize();
    return corpus;
}

/// Builds a (tag, user, artist) corpus from listening and tagging logs.
///
/// Tag retention keeps the top_k_tags most used tags globally, breaking
/// frequency ties by lexicographic label order. For each listened (u, a)
/// pair: if u assigned retained tags to a, one triple per such tag; else if
/// any other user assigned retained tags to a, one triple per such tag; else
/// the pair is dropped.
inline Corpus ingest_lastfm(const std::string& tag_log, const std::string& listen_log,
                            int top_k_tags) {
    if (top_k_tags < 1) throw UsageError("top_k_tags must be at least 1");
    auto tag_rows = detail::read_log(tag_log, 3);
    auto listen_rows = detail::read_log(listen_log, 2);

    std::map<std::string, int64_t> tag_counts;
    for (const auto& r : tag_rows) ++tag_counts[r.fields[2]];

    std::vector<std::pair<std::string, int64_t>> ranked(tag_counts.begin(), tag_counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (ranked.size() > static_cast<size_t>(top_k_tags)) ranked.resize(static_cast<size_t>(top_k_tags));
    std::set<std::string> retained;
    for (const auto& [tag, count] : ranked) retained.insert(tag);

    // (user, artist) -> retained tags assigned by that user; artist -> retained
    // tags assigned by anyone. std::set keeps tag iteration order stable.
    std::map<std::pair<std::string, std::string>, std::set<std::string>> user_artist_tags;
    std::map<std::string, std::set<std::string>> artist_tags;
    for (const auto& r : tag_rows) {
        const std::string& tag = r.fields[2];
        if (!retained.count(tag)) continue;
        user_artist_tags[{r.fields[0], r.fields[1]}].insert(tag);
        artist_tags[r.fields[1]].insert(tag);
    }

    Corpus corpus;
    std::set<std::pair<std::string, std::string>> seen_pairs;
    for (const auto& r : listen_rows) {
        std::pair<std::string, std::string> pair{r.fields[0], r.fields[1]};
        if (!seen_pairs.insert(pair).second) continue;
        const std::set<std::string>* tags = nullptr;
        auto own = user_artist_tags.find(pair);
        if (own != user_artist_tags.end() && !own->second.empty()) {
            tags = &own->second;
        } else {
            auto any = artist_tags.find(pair.second);
            if (any != artist_tags.end() && !any->second.empty()) tags = &any->second;
        }
        if (!tags) continue;  // no retained tag from anyone: drop the pair
        for (const auto& tag : *tags) {
            int32_t q = corpus.queries.add(tag);
            int32_t u = corpus.users.add(pair.first);
            int32_t a = corpus.items.add(pair.second);
            corpus.add(q, u, a);
        }
    }
    corpus.finalize();
    return corpus;
}

/// Builds a (category, user, business) corpus from review and category logs.
/// Users with fewer than min_reviews review rows are dropped, along with
/// businesses left without any surviving review.
inline Corpus ingest_yelp(const std::string& review_log, const std::string& category_map,
                          int min_reviews) {
    if (min_reviews < 1) throw UsageError("min_reviews must be at least 1");
    auto review_rows = detail::read_log(review_log, 2);
    auto category_rows = detail::read_log(category_map, 2);

    std::map<std::string, int64_t> reviews_per_user;
    for (const auto& r : review_rows) ++reviews_per_user[r.fields[0]];

    // business -> categories in first-appearance order, deduplicated
    std::map<std::string, std::vector<std::string>> categories;
    for (const auto& r : category_rows) {
        auto& cats = categories[r.fields[0]];
        if (std::find(cats.begin(), cats.end(), r.fields[1]) == cats.end())
            cats.push_back(r.fields[1]);
    }

    Corpus corpus;
    std::set<std::pair<std::string, std::string>> seen_pairs;
    for (const auto& r : review_rows) {
        if (reviews_per_user[r.fields[0]] < min_reviews) continue;
        std::pair<std::string, std::string> pair{r.fields[0], r.fields[1]};
        if (!seen_pairs.insert(pair).second) continue;
        auto it = categories.find(r.fields[1]);
        if (it == categories.end()) continue;
        for (const auto& cat : it->second) {
            int32_t q = corpus.queries.add(cat);
            int32_t u = corpus.users.add(pair.first);
            int32_t a = corpus.items.add(pair.second);
            corpus.add(q, u, a);
        }
    }
    corpus.finalize();
    return corpus;
}

// ---------------------------------------------------------------------------
// Splitting and statistics
// ---------------------------------------------------------------------------

struct SplitResult {
    Corpus train;
    Corpus validation;
    Corpus test;
};

/// Partitions interactions by a seeded uniform shuffle. The validation and
/// test parts get floor(fraction * N) triples each; leftovers go to train.
/// All parts share the parent vocabularies.
inline SplitResult split(const Corpus& corpus, const SplitSpec& spec) {
    spec.validate();
    if (corpus.size() == 0) throw DataError("cannot split an empty corpus");

    const int64_t n = corpus.size();
    // floor(f*n), nudged so that products within 1e-9 of an integer (the same
    // tolerance the fraction sum uses) land on it.
    auto part_size = [n](double fraction) {
        return static_cast<int64_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
    };
    const int64_t n_valid = part_size(spec.validation_fraction);
    const int64_t n_test = part_size(spec.test_fraction);
    const int64_t n_train = n - n_valid - n_test;
    if (n_valid == 0 || n_test == 0 || n_train <= 0)
        throw DataError("degenerate split: a part would receive zero interactions (n=" +
                        std::to_string(n) + ")");

    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    Rng rng(derive_seed(spec.seed, "corpus-split"));
    rng.shuffle(order);

    SplitResult result;
    auto init_part = [&](Corpus& part) {
        part.queries = corpus.queries;
        part.users = corpus.users;
        part.items = corpus.items;
    };
    init_part(result.train);
    init_part(result.validation);
    init_part(result.test);

    for (int64_t i = 0; i < n; ++i) {
        const auto& x = corpus.interactions[static_cast<size_t>(order[static_cast<size_t>(i)])];
        Corpus& part = i < n_train ? result.train
                       : i < n_train + n_valid ? result.validation
                                               : result.test;
        part.add(x.query, x.user, x.item);
    }
    result.train.finalize();
    result.validation.finalize();
    result.test.finalize();
    return result;
}

/// Fraction of the |Q| x |U| x |A| tensor that is unobserved.
inline double sparsity(const Corpus& corpus) {
    if (corpus.n_queries() == 0 || corpus.n_users() == 0 || corpus.n_items() == 0)
        throw DataError("sparsity undefined: a vocabulary is empty");
    double cells = static_cast<double>(corpus.n_queries()) * static_cast<double>(corpus.n_users()) *
                   static_cast<double>(corpus.n_items());
    return 1.0 - static_cast<double>(corpus.size()) / cells;
}

/// key=value statistics lines, one per line, in fixed order.
inline std::string stats_lines(const Corpus& corpus) {
    std::ostringstream os;
    os << "queries=" << corpus.n_queries() << "\n";
    os << "users=" << corpus.n_users() << "\n";
    os << "items=" << corpus.n_items() << "\n";
    os << "samples=" << corpus.size() << "\n";
    if (corpus.n_queries() > 0 && corpus.n_users() > 0 && corpus.n_items() > 0) {
        os.precision(6);
        os << "sparsity=" << std::fixed << sparsity(corpus) << "\n";
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Snapshot serialization (versioned binary: vocab tables + triple list)
// ---------------------------------------------------------------------------

inline constexpr uint32_t kCorpusFormatVersion = 1;

inline void save_corpus(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open corpus snapshot for writing: " + path);
    out.write("CRPS", 4);
    put_u32(out, kCorpusFormatVersion);
    put_u32(out, static_cast<uint32_t>(corpus.n_queries()));
    put_u32(out, static_cast<uint32_t>(corpus.n_users()));
    put_u32(out, static_cast<uint32_t>(corpus.n_items()));
    put_u64(out, static_cast<uint64_t>(corpus.size()));
    for (int32_t i = 0; i < corpus.n_queries(); ++i) put_string(out, corpus.queries.label(i));
    for (int32_t i = 0; i < corpus.n_users(); ++i) put_string(out, corpus.users.label(i));
    for (int32_t i = 0; i < corpus.n_items(); ++i) put_string(out, corpus.items.label(i));
    for (const auto& x : corpus.interactions) {
        put_u32(out, static_cast<uint32_t>(x.query));
        put_u32(out, static_cast<uint32_t>(x.user));
        put_u32(out, static_cast<uint32_t>(x.item));
    }
    if (!out) throw DataError("failed while writing corpus snapshot: " + path);
}

inline Corpus load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open corpus snapshot: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string_view(magic, 4) != "CRPS")
        throw DataError(path + ": not a corpus snapshot (bad magic)");
    uint32_t version = get_u32(in);
    if (version != kCorpusFormatVersion)
        throw DataError(path + ": unsupported snapshot version " + std::to_string(version));
    uint32_t nq = get_u32(in), nu = get_u32(in), na = get_u32(in);
    uint64_t n = get_u64(in);
    Corpus corpus;
    for (uint32_t i = 0; i < nq; ++i) corpus.queries.add(get_string(in));
    for (uint32_t i = 0; i < nu; ++i) corpus.users.add(get_string(in));
    for (uint32_t i = 0; i < na; ++i) corpus.items.add(get_string(in));
    corpus.interactions.reserve(n);
    for (uint64_t i = 0; i < n; ++i) {
        auto q = static_cast<int32_t>(get_u32(in));
        auto u = static_cast<int32_t>(get_u32(in));
        auto a = static_cast<int32_t>(get_u32(in));
        if (q < 0 || q >= corpus.n_queries() || u < 0 || u >= corpus.n_users() || a < 0 ||
            a >= corpus.n_items())
            throw DataError(path + ": interaction index out of vocabulary range");
        corpus.interactions.push_back({q, u, a});
    }
    corpus.rebuild_index();
    return corpus;
}

}  // namespace cortrieve
