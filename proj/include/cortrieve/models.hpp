#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include "cortrieve/errors.hpp"
#include "cortrieve/linalg.hpp"
#include "cortrieve/rng.hpp"
#include "cortrieve/serialize.hpp"

namespace cortrieve {

enum class ModelKind { lcr, ilcr, pitf, nmf };

inline const char* to_string(ModelKind k) {
    switch (k) {
        case ModelKind::lcr: return "lcr";
        case ModelKind::ilcr: return "ilcr";
        case ModelKind::pitf: return "pitf";
        case ModelKind::nmf: return "nmf";
    }
    return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
    if (s == "lcr") return ModelKind::lcr;
    if (s == "ilcr") return ModelKind::ilcr;
    if (s == "pitf") return ModelKind::pitf;
    if (s == "nmf") return ModelKind::nmf;
    throw UsageError("unknown model kind: " + s);
}

struct Dims {
    int32_t n_queries = 0;
    int32_t n_users = 0;
    int32_t n_items = 0;
    int32_t n = 0;  // embedding dimension

    void validate() const {
        if (n_queries <= 0 || n_users <= 0 || n_items <= 0 || n <= 0)
            throw UsageError("all dimensions must be positive");
    }
    bool operator==(const Dims&) const = default;
};

namespace detail {
inline void check_index(int32_t i, int32_t bound, const char* what) {
    if (i < 0 || i >= bound)
        throw DataError(std::string(what) + " index " + std::to_string(i) +
                        " out of range [0," + std::to_string(bound) + ")");
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Parameter banks
// ---------------------------------------------------------------------------

/// Trainable parameters for the factorized retrieval scorers: row embeddings
/// S (queries), V (users), T (items), a per-user n x n encoder, and for the
/// item-based variant a per-item n x n encoder. Encoders are stored as rows
/// of length n*n, row-major.
struct ParamBank {
    ModelKind kind = ModelKind::lcr;
    int32_t n = 0;
    Matrix S;         // |Q| x n
    Matrix V;         // |U| x n
    Matrix T;         // |A| x n
    Matrix user_enc;  // |U| x n*n
    Matrix item_enc;  // |A| x n*n, allocated only for the item-based variant

    Dims dims() const {
        return {static_cast<int32_t>(S.rows()), static_cast<int32_t>(V.rows()),
                static_cast<int32_t>(T.rows()), n};
    }
    bool has_item_encoders() const { return !item_enc.empty(); }

    std::span<const double> encoder(int32_t user) const { return user_enc.row(static_cast<size_t>(user)); }
    std::span<const double> item_encoder(int32_t item) const {
        return item_enc.row(static_cast<size_t>(item));
    }
};

/// Pairwise-interaction factors: user and query embeddings plus two item
/// embedding tables, one facing users and one facing queries.
struct PitfBank {
    int32_t n = 0;
    Matrix user_emb;    // |U| x n
    Matrix query_emb;   // |Q| x n
    Matrix item_user;   // |A| x n
    Matrix item_query;  // |A| x n

    Dims dims() const {
        return {static_cast<int32_t>(query_emb.rows()), static_cast<int32_t>(user_emb.rows()),
                static_cast<int32_t>(item_user.rows()), n};
    }
};

/// Nonnegative factorization of the query x item count matrix; scores are
/// user-independent.
struct NmfBank {
    int32_t n = 0;
    Matrix W;  // |Q| x n
    Matrix H;  // n x |A|

    Dims dims() const {
        return {static_cast<int32_t>(W.rows()), 0, static_cast<int32_t>(H.cols()), n};
    }
};

namespace detail {
inline void fill_uniform(Matrix& m, Rng& rng, double low, double high) {
    for (double& v : m.data()) v = rng.uniform(low, high);
}
}  // namespace detail

/// Allocates an LCR or ILCR bank with every entry i.i.d. uniform on
/// [low, high). Identical seeds give identical banks.
inline ParamBank init_param_bank(ModelKind kind, Dims dims, double low, double high,
                                 uint64_t seed) {
    if (kind != ModelKind::lcr && kind != ModelKind::ilcr)
        throw UsageError("init_param_bank expects kind lcr or ilcr");
    dims.validate();
    if (!(low < high)) throw UsageError("init range requires low < high");
    ParamBank bank;
    bank.kind = kind;
    bank.n = dims.n;
    const auto n = static_cast<size_t>(dims.n);
    bank.S = Matrix(static_cast<size_t>(dims.n_queries), n);
    bank.V = Matrix(static_cast<size_t>(dims.n_users), n);
    bank.T = Matrix(static_cast<size_t>(dims.n_items), n);
    bank.user_enc = Matrix(static_cast<size_t>(dims.n_users), n * n);
    if (kind == ModelKind::ilcr) bank.item_enc = Matrix(static_cast<size_t>(dims.n_items), n * n);
    Rng rng(seed);
    detail::fill_uniform(bank.S, rng, low, high);
    detail::fill_uniform(bank.V, rng, low, high);
    detail::fill_uniform(bank.T, rng, low, high);
    detail::fill_uniform(bank.user_enc, rng, low, high);
    if (kind == ModelKind::ilcr) detail::fill_uniform(bank.item_enc, rng, low, high);
    return bank;
}

inline PitfBank init_pitf_bank(Dims dims, double low, double high, uint64_t seed) {
    dims.validate();
    if (!(low < high)) throw UsageError("init range requires low < high");
    PitfBank bank;
    bank.n = dims.n;
    const auto n = static_cast<size_t>(dims.n);
    bank.user_emb = Matrix(static_cast<size_t>(dims.n_users), n);
    bank.query_emb = Matrix(static_cast<size_t>(dims.n_queries), n);
    bank.item_user = Matrix(static_cast<size_t>(dims.n_items), n);
    bank.item_query = Matrix(static_cast<size_t>(dims.n_items), n);
    Rng rng(seed);
    detail::fill_uniform(bank.user_emb, rng, low, high);
    detail::fill_uniform(bank.query_emb, rng, low, high);
    detail::fill_uniform(bank.item_user, rng, low, high);
    detail::fill_uniform(bank.item_query, rng, low, high);
    return bank;
}

// ---------------------------------------------------------------------------
// Scoring. A per-(query,user) item scorer caches whatever does not depend on
// the item; per-triple scorers delegate to it so that the pointwise and
// all-items paths produce bit-identical values.
// ---------------------------------------------------------------------------

namespace detail {
/// Row-times-matrix: out[j] = sum_i row[i] * enc[i*n+j].
inline void project_through(std::span<const double> row, std::span<const double> enc,
                            std::span<double> out) {
    const size_t n = row.size();
    for (size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (size_t i = 0; i < n; ++i) s += row[i] * enc[i * n + j];
        out[j] = s;
    }
}

/// out[i*n+j] = left[i] * right[j], the flattened outer product.
inline void outer_product(std::span<const double> left, std::span<const double> right,
                          std::span<double> out) {
    const size_t n = left.size();
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) out[i * n + j] = left[i] * right[j];
}

/// Bilinear form left * M * right^T with M an n x n row-major block, computed
/// as a dot against the flattened outer product so it is bit-identical to the
/// cached-scorer path.
inline double bilinear(std::span<const double> left, std::span<const double> block,
                       std::span<const double> right) {
    const size_t n = left.size();
    std::vector<double> outer(n * n);
    outer_product(left, right, outer);
    return dot(block, outer);
}
}  // namespace detail

struct ParamItemScorer {
    const ParamBank* bank;
    int32_t query, user;
    bool with_item_term;
    std::vector<double> projected;   // S_q through the user encoder
    std::vector<double> item_outer;  // flattened S_q (x) V_u, item-term path only

    double operator()(int32_t item) const {
        detail::check_index(item, static_cast<int32_t>(bank->T.rows()), "item");
        auto t = bank->T.row(static_cast<size_t>(item));
        double s = dot(projected, t) + dot(bank->V.row(static_cast<size_t>(user)), t);
        if (with_item_term) s += dot(bank->item_encoder(item), item_outer);
        return s;
    }
};

inline ParamItemScorer make_item_scorer(const ParamBank& bank, int32_t query, int32_t user,
                                        bool with_item_term) {
    detail::check_index(query, static_cast<int32_t>(bank.S.rows()), "query");
    detail::check_index(user, static_cast<int32_t>(bank.V.rows()), "user");
    if (with_item_term && !bank.has_item_encoders())
        throw UsageError("bank has no item encoders (lcr bank scored as ilcr)");
    const auto n = static_cast<size_t>(bank.n);
    ParamItemScorer scorer{&bank, query, user, with_item_term, std::vector<double>(n), {}};
    detail::project_through(bank.S.row(static_cast<size_t>(query)), bank.encoder(user),
                            scorer.projected);
    if (with_item_term) {
        scorer.item_outer.resize(n * n);
        detail::outer_product(bank.S.row(static_cast<size_t>(query)),
                              bank.V.row(static_cast<size_t>(user)), scorer.item_outer);
    }
    return scorer;
}

inline ParamItemScorer make_item_scorer(const ParamBank& bank, int32_t query, int32_t user) {
    return make_item_scorer(bank, query, user, bank.kind == ModelKind::ilcr);
}

struct PitfItemScorer {
    const PitfBank* bank;
    int32_t query, user;

    double operator()(int32_t item) const {
        detail::check_index(item, static_cast<int32_t>(bank->item_user.rows()), "item");
        return dot(bank->user_emb.row(static_cast<size_t>(user)),
                   bank->item_user.row(static_cast<size_t>(item))) +
               dot(bank->query_emb.row(static_cast<size_t>(query)),
                   bank->item_query.row(static_cast<size_t>(item)));
    }
};

inline PitfItemScorer make_item_scorer(const PitfBank& bank, int32_t query, int32_t user) {
    detail::check_index(query, static_cast<int32_t>(bank.query_emb.rows()), "query");
    detail::check_index(user, static_cast<int32_t>(bank.user_emb.rows()), "user");
    return PitfItemScorer{&bank, query, user};
}

struct NmfItemScorer {
    const NmfBank* bank;
    int32_t query;

    double operator()(int32_t item) const {
        detail::check_index(item, static_cast<int32_t>(bank->H.cols()), "item");
        const size_t r = static_cast<size_t>(bank->n);
        auto w = bank->W.row(static_cast<size_t>(query));
        double s = 0.0;
        for (size_t k = 0; k < r; ++k) s += w[k] * bank->H.at(k, static_cast<size_t>(item));
        return s;
    }
};

inline NmfItemScorer make_item_scorer(const NmfBank& bank, int32_t query, int32_t /*user*/) {
    detail::check_index(query, static_cast<int32_t>(bank.W.rows()), "query");
    return NmfItemScorer{&bank, query};
}

/// Relevance of one (query, user, item) triple under the query-through-user
/// factorization with the user preference term.
inline double score_lcr(const ParamBank& bank, int32_t q, int32_t u, int32_t a) {
    return make_item_scorer(bank, q, u, /*with_item_term=*/false)(a);
}

/// The item-based bilinear term alone.
inline double score_item_term(const ParamBank& bank, int32_t q, int32_t u, int32_t a) {
    detail::check_index(q, static_cast<int32_t>(bank.S.rows()), "query");
    detail::check_index(u, static_cast<int32_t>(bank.V.rows()), "user");
    detail::check_index(a, static_cast<int32_t>(bank.T.rows()), "item");
    if (!bank.has_item_encoders()) throw UsageError("bank has no item encoders");
    return detail::bilinear(bank.S.row(static_cast<size_t>(q)), bank.item_encoder(a),
                            bank.V.row(static_cast<size_t>(u)));
}

/// Full item-based score: score_lcr plus score_item_term, in that order.
inline double score_ilcr(const ParamBank& bank, int32_t q, int32_t u, int32_t a) {
    return make_item_scorer(bank, q, u, /*with_item_term=*/true)(a);
}

inline double score_pitf(const PitfBank& bank, int32_t q, int32_t u, int32_t a) {
    return make_item_scorer(bank, q, u)(a);
}

/// Kind-dispatched per-triple score.
inline double score(const ParamBank& bank, int32_t q, int32_t u, int32_t a) {
    return make_item_scorer(bank, q, u)(a);
}
inline double score(const PitfBank& bank, int32_t q, int32_t u, int32_t a) {
    return make_item_scorer(bank, q, u)(a);
}
inline double score(const NmfBank& bank, int32_t q, int32_t u, int32_t a) {
    return make_item_scorer(bank, q, u)(a);
}

template <class Bank>
void score_all_items_into(const Bank& bank, int32_t q, int32_t u, std::span<double> out) {
    auto scorer = make_item_scorer(bank, q, u);
    for (size_t a = 0; a < out.size(); ++a) out[a] = scorer(static_cast<int32_t>(a));
}

/// Scores every item for a fixed (query, user) pair. Element a equals the
/// per-triple scorer's value exactly.
template <class Bank>
std::vector<double> score_all_items(const Bank& bank, int32_t q, int32_t u) {
    std::vector<double> out(static_cast<size_t>(bank.dims().n_items));
    score_all_items_into(bank, q, u, out);
    return out;
}

inline double sum_squares(const ParamBank& b) {
    return sum_squares(b.S) + sum_squares(b.V) + sum_squares(b.T) + sum_squares(b.user_enc) +
           sum_squares(b.item_enc);
}
inline double sum_squares(const PitfBank& b) {
    return sum_squares(b.user_emb) + sum_squares(b.query_emb) + sum_squares(b.item_user) +
           sum_squares(b.item_query);
}
inline double sum_squares(const NmfBank& b) { return sum_squares(b.W) + sum_squares(b.H); }

// ---------------------------------------------------------------------------
// Bank serialization: versioned binary, header then matrices row-major as
// little-endian 64-bit floats.
// ---------------------------------------------------------------------------

using AnyBank = std::variant<ParamBank, PitfBank, NmfBank>;

inline ModelKind kind_of(const AnyBank& bank) {
    if (const auto* p = std::get_if<ParamBank>(&bank)) return p->kind;
    if (std::holds_alternative<PitfBank>(bank)) return ModelKind::pitf;
    return ModelKind::nmf;
}

inline Dims dims_of(const AnyBank& bank) {
    return std::visit([](const auto& b) { return b.dims(); }, bank);
}

inline constexpr uint32_t kBankFormatVersion = 1;

namespace detail {
inline void put_matrix(std::ostream& os, const Matrix& m) {
    for (double v : m.data()) put_f64(os, v);
}
inline Matrix get_matrix(std::istream& is, size_t rows, size_t cols) {
    Matrix m(rows, cols);
    for (double& v : m.data()) v = get_f64(is);
    return m;
}
}  // namespace detail

inline void save_bank(const AnyBank& bank, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open bank file for writing: " + path);
    out.write("CRBK", 4);
    put_u32(out, kBankFormatVersion);
    ModelKind kind = kind_of(bank);
    put_u32(out, static_cast<uint32_t>(kind));
    Dims d = dims_of(bank);
    put_u32(out, static_cast<uint32_t>(d.n_queries));
    put_u32(out, static_cast<uint32_t>(d.n_users));
    put_u32(out, static_cast<uint32_t>(d.n_items));
    put_u32(out, static_cast<uint32_t>(d.n));
    if (const auto* p = std::get_if<ParamBank>(&bank)) {
        detail::put_matrix(out, p->S);
        detail::put_matrix(out, p->V);
        detail::put_matrix(out, p->T);
        detail::put_matrix(out, p->user_enc);
        if (kind == ModelKind::ilcr) detail::put_matrix(out, p->item_enc);
    } else if (const auto* p2 = std::get_if<PitfBank>(&bank)) {
        detail::put_matrix(out, p2->user_emb);
        detail::put_matrix(out, p2->query_emb);
        detail::put_matrix(out, p2->item_user);
        detail::put_matrix(out, p2->item_query);
    } else {
        const auto& nb = std::get<NmfBank>(bank);
        detail::put_matrix(out, nb.W);
        detail::put_matrix(out, nb.H);
    }
    if (!out) throw DataError("failed while writing bank file: " + path);
}

inline AnyBank load_bank(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open bank file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string_view(magic, 4) != "CRBK")
        throw DataError(path + ": not a parameter bank (bad magic)");
    uint32_t version = get_u32(in);
    if (version != kBankFormatVersion)
        throw DataError(path + ": unsupported bank version " + std::to_string(version));
    auto kind = static_cast<ModelKind>(get_u32(in));
    auto nq = static_cast<size_t>(get_u32(in));
    auto nu = static_cast<size_t>(get_u32(in));
    auto na = static_cast<size_t>(get_u32(in));
    auto n = static_cast<size_t>(get_u32(in));
    switch (kind) {
        case ModelKind::lcr:
        case ModelKind::ilcr: {
            ParamBank b;
            b.kind = kind;
            b.n = static_cast<int32_t>(n);
            b.S = detail::get_matrix(in, nq, n);
            b.V = detail::get_matrix(in, nu, n);
            b.T = detail::get_matrix(in, na, n);
            b.user_enc = detail::get_matrix(in, nu, n * n);
            if (kind == ModelKind::ilcr) b.item_enc = detail::get_matrix(in, na, n * n);
            return b;
        }
        case ModelKind::pitf: {
            PitfBank b;
            b.n = static_cast<int32_t>(n);
            b.user_emb = detail::get_matrix(in, nu, n);
            b.query_emb = detail::get_matrix(in, nq, n);
            b.item_user = detail::get_matrix(in, na, n);
            b.item_query = detail::get_matrix(in, na, n);
            return b;
        }
        case ModelKind::nmf: {
            NmfBank b;
            b.n = static_cast<int32_t>(n);
            b.W = detail::get_matrix(in, nq, n);
            b.H = detail::get_matrix(in, n, na);
            return b;
        }
    }
    throw DataError(path + ": unknown bank kind");
}

}  // namespace cortrieve
