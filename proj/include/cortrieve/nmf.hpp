#pragma once

#include <cstdint>
#include <vector>

#include "cortrieve/corpus.hpp"
#include "cortrieve/errors.hpp"
#include "cortrieve/linalg.hpp"
#include "cortrieve/models.hpp"
#include "cortrieve/rng.hpp"

namespace cortrieve {

struct NmfResult {
    NmfBank bank;
    std::vector<double> errors;  // squared Frobenius reconstruction error per iteration
};

/// Factorizes a nonnegative |Q| x |A| matrix as W*H with multiplicative
/// updates on the squared Frobenius objective. Stops after max_iterations or
/// when the relative error improvement drops below tol.
inline NmfResult nmf_train(const Matrix& counts, int rank, int max_iterations, uint64_t seed,
                           double tol = 1e-5) {
    if (rank < 1) throw UsageError("nmf rank must be at least 1");
    if (max_iterations < 0) throw UsageError("nmf iteration count must be nonnegative");
    for (double v : counts.data())
        if (v < 0.0) throw DataError("nmf input matrix has a negative entry");

    const size_t m = counts.rows(), nc = counts.cols(), r = static_cast<size_t>(rank);
    const double eps = 1e-12;

    NmfResult result;
    result.bank.n = rank;
    result.bank.W = Matrix(m, r);
    result.bank.H = Matrix(r, nc);
    Rng rng(seed);
    for (double& v : result.bank.W.data()) v = rng.uniform(0.0, 1.0);
    for (double& v : result.bank.H.data()) v = rng.uniform(0.0, 1.0);

    Matrix& W = result.bank.W;
    Matrix& H = result.bank.H;

    auto reconstruction_error = [&]() {
        double err = 0.0;
        for (size_t i = 0; i < m; ++i) {
            for (size_t j = 0; j < nc; ++j) {
                double pred = 0.0;
                for (size_t k = 0; k < r; ++k) pred += W.at(i, k) * H.at(k, j);
                double d = counts.at(i, j) - pred;
                err += d * d;
            }
        }
        return err;
    };

    double prev_err = reconstruction_error();
    for (int iter = 0; iter < max_iterations; ++iter) {
        // H <- H .* (W'X) ./ (W'W H + eps)
        Matrix WtX(r, nc), WtW(r, r);
        for (size_t k = 0; k < r; ++k)
            for (size_t j = 0; j < nc; ++j) {
                double s = 0.0;
                for (size_t i = 0; i < m; ++i) s += W.at(i, k) * counts.at(i, j);
                WtX.at(k, j) = s;
            }
        for (size_t k = 0; k < r; ++k)
            for (size_t l = 0; l < r; ++l) {
                double s = 0.0;
                for (size_t i = 0; i < m; ++i) s += W.at(i, k) * W.at(i, l);
                WtW.at(k, l) = s;
            }
        for (size_t k = 0; k < r; ++k)
            for (size_t j = 0; j < nc; ++j) {
                double denom = eps;
                for (size_t l = 0; l < r; ++l) denom += WtW.at(k, l) * H.at(l, j);
                H.at(k, j) *= WtX.at(k, j) / denom;
            }

        // W <- W .* (X H') ./ (W H H' + eps)
        Matrix XHt(m, r), HHt(r, r);
        for (size_t i = 0; i < m; ++i)
            for (size_t k = 0; k < r; ++k) {
                double s = 0.0;
                for (size_t j = 0; j < nc; ++j) s += counts.at(i, j) * H.at(k, j);
                XHt.at(i, k) = s;
            }
        for (size_t k = 0; k < r; ++k)
            for (size_t l = 0; l < r; ++l) {
                double s = 0.0;
                for (size_t j = 0; j < nc; ++j) s += H.at(k, j) * H.at(l, j);
                HHt.at(k, l) = s;
            }
        for (size_t i = 0; i < m; ++i)
            for (size_t k = 0; k < r; ++k) {
                double denom = eps;
                for (size_t l = 0; l < r; ++l) denom += W.at(i, l) * HHt.at(l, k);
                W.at(i, k) *= XHt.at(i, k) / denom;
            }

        double err = reconstruction_error();
        result.errors.push_back(err);
        if (err == 0.0) break;
        if (prev_err > 0.0 && (prev_err - err) / prev_err < tol && err <= prev_err) break;
        prev_err = err;
    }
    return result;
}

/// Query x item interaction counts from a corpus, the NMF training input.
inline Matrix query_item_counts(const Corpus& corpus) {
    Matrix counts(static_cast<size_t>(corpus.n_queries()), static_cast<size_t>(corpus.n_items()));
    for (const auto& x : corpus.interactions)
        counts.at(static_cast<size_t>(x.query), static_cast<size_t>(x.item)) += 1.0;
    return counts;
}

}  // namespace cortrieve
