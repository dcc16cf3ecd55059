#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "residuum/dataspec.hpp"
#include "residuum/error.hpp"

namespace residuum {

/// Linear map from text embeddings to speech embeddings: speech_hat = weights * text + intercept.
template <typename Scalar>
struct ResidualModel {
    Matrix<Scalar> weights;     // d_s x d_t
    Vector<Scalar> intercept;   // d_s
    Scalar lambda{0};
    Vector<Scalar> text_mean;   // d_t
    Vector<Scalar> speech_mean; // d_s
    Scalar train_mse{0};        // mean squared residual per entry on the fitting rows

    Eigen::Index text_dims() const { return weights.cols(); }
    Eigen::Index speech_dims() const { return weights.rows(); }
};

struct FitReport {
    std::vector<double> lambda_grid;
    std::vector<double> cv_mse;
    double chosen_lambda = 0.0;
    Eigen::Index rank = 0;
    int folds = 0;
    std::uint64_t seed = 0;
};

namespace detail {

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
    if (!m.allFinite()) {
        throw DataError(std::string(what) + " contains non-finite values");
    }
}

} // namespace detail

/// Ridge solutions for every lambda from one SVD of the column-centered design.
///
/// With Xc = U S V^T, the coefficient matrix is V diag(s / (s^2 + lambda)) U^T Yc. Singular values
/// below the numerical rank threshold are treated as zero, so lambda = 0 gives the minimum-norm
/// least-squares fit on rank-deficient designs.
template <typename Scalar>
class RidgeSolver {
public:
    using MatrixType = Matrix<Scalar>;
    using VectorType = Vector<Scalar>;

    template <typename DerivedText, typename DerivedSpeech>
    RidgeSolver(const Eigen::MatrixBase<DerivedText>& text, const Eigen::MatrixBase<DerivedSpeech>& speech) {
        if (text.rows() != speech.rows()) {
            throw DataError("text and speech row counts differ (" + std::to_string(text.rows()) + " vs " +
                            std::to_string(speech.rows()) + ")");
        }
        if (text.rows() < 1) {
            throw DataError("ridge fit needs at least one row");
        }
        detail::require_finite(text, "text embeddings");
        detail::require_finite(speech, "speech embeddings");

        text_mean_ = text.colwise().mean().transpose();
        speech_mean_ = speech.colwise().mean().transpose();
        centered_text_ = text.rowwise() - text_mean_.transpose();
        centered_speech_ = speech.rowwise() - speech_mean_.transpose();

        Eigen::BDCSVD<MatrixType> svd(centered_text_, Eigen::ComputeThinU | Eigen::ComputeThinV);
        sigma_ = svd.singularValues();
        v_ = svd.matrixV();
        projected_ = svd.matrixU().transpose() * centered_speech_;

        const Scalar largest = sigma_.size() > 0 ? sigma_(0) : Scalar(0);
        const auto dim = std::max(centered_text_.rows(), centered_text_.cols());
        threshold_ = largest * static_cast<Scalar>(dim) * std::numeric_limits<Scalar>::epsilon();
        rank_ = 0;
        for (Eigen::Index i = 0; i < sigma_.size(); ++i) {
            if (sigma_(i) > threshold_) {
                ++rank_;
            }
        }
    }

    ResidualModel<Scalar> solve(Scalar lambda) const {
        if (!(lambda >= Scalar(0)) || !std::isfinite(static_cast<double>(lambda))) {
            throw UsageError("ridge lambda must be a finite nonnegative number");
        }
        VectorType shrink(sigma_.size());
        for (Eigen::Index i = 0; i < sigma_.size(); ++i) {
            const Scalar s = sigma_(i);
            shrink(i) = s > threshold_ ? s / (s * s + lambda) : Scalar(0);
        }
        // d_t x d_s coefficients, transposed into the d_s x d_t weight layout.
        const MatrixType coefficients = v_ * shrink.asDiagonal() * projected_;

        ResidualModel<Scalar> model;
        model.weights = coefficients.transpose();
        model.intercept = speech_mean_ - model.weights * text_mean_;
        model.lambda = lambda;
        model.text_mean = text_mean_;
        model.speech_mean = speech_mean_;
        const MatrixType residual = centered_speech_ - centered_text_ * coefficients;
        model.train_mse = residual.squaredNorm() / static_cast<Scalar>(residual.size());
        return model;
    }

    Eigen::Index rank() const { return rank_; }
    const VectorType& singular_values() const { return sigma_; }

private:
    VectorType text_mean_;
    VectorType speech_mean_;
    MatrixType centered_text_;
    MatrixType centered_speech_;
    VectorType sigma_;
    MatrixType v_;
    MatrixType projected_;
    Scalar threshold_{0};
    Eigen::Index rank_ = 0;
};

/// Minimizes ||speech - (text W^T + 1 b^T)||_F^2 + lambda ||W||_F^2 with an unpenalized intercept.
template <typename DerivedText, typename DerivedSpeech>
ResidualModel<typename DerivedText::Scalar> fit_ridge(const Eigen::MatrixBase<DerivedText>& text,
                                                      const Eigen::MatrixBase<DerivedSpeech>& speech,
                                                      typename DerivedText::Scalar lambda) {
    return RidgeSolver<typename DerivedText::Scalar>(text, speech).solve(lambda);
}

template <typename Scalar, typename Derived>
Matrix<Scalar> predict(const ResidualModel<Scalar>& model, const Eigen::MatrixBase<Derived>& text) {
    if (text.cols() != model.text_dims()) {
        throw DataError("text dimension " + std::to_string(text.cols()) + " does not match model dimension " +
                        std::to_string(model.text_dims()));
    }
    Matrix<Scalar> out = text * model.weights.transpose();
    out.rowwise() += model.intercept.transpose();
    return out;
}

template <typename Scalar, typename DerivedText, typename DerivedSpeech>
Matrix<Scalar> extract_residuals(const ResidualModel<Scalar>& model, const Eigen::MatrixBase<DerivedText>& text,
                                 const Eigen::MatrixBase<DerivedSpeech>& speech) {
    if (text.rows() != speech.rows()) {
        throw DataError("text and speech row counts differ");
    }
    if (speech.cols() != model.speech_dims()) {
        throw DataError("speech dimension " + std::to_string(speech.cols()) + " does not match model dimension " +
                        std::to_string(model.speech_dims()));
    }
    Matrix<Scalar> residual = speech - predict(model, text);
    detail::require_finite(residual, "residuals");
    return residual;
}

/// The fitting objective: squared Frobenius residual plus lambda ||W||_F^2.
template <typename Scalar, typename DerivedText, typename DerivedSpeech>
Scalar ridge_objective(const ResidualModel<Scalar>& model, const Eigen::MatrixBase<DerivedText>& text,
                       const Eigen::MatrixBase<DerivedSpeech>& speech) {
    return (speech - predict(model, text)).squaredNorm() + model.lambda * model.weights.squaredNorm();
}

/// Ten log-spaced values from 1e-3 to 1e3.
std::vector<double> default_lambda_grid();

inline constexpr int kDefaultFolds = 5;

/// K-fold selection of lambda by mean validation MSE; ties (relative 1e-12) go to the smaller
/// lambda. The returned model is refit on all rows with the chosen lambda.
template <typename DerivedText, typename DerivedSpeech>
std::pair<ResidualModel<typename DerivedText::Scalar>, FitReport>
fit_ridge_cv(const Eigen::MatrixBase<DerivedText>& text, const Eigen::MatrixBase<DerivedSpeech>& speech,
             std::span<const double> lambda_grid, int folds, std::uint64_t seed) {
    using Scalar = typename DerivedText::Scalar;
    if (lambda_grid.empty()) {
        throw UsageError("lambda grid is empty");
    }
    for (const double lambda : lambda_grid) {
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
            throw UsageError("lambda grid values must be finite and nonnegative");
        }
    }
    if (folds < 2) {
        throw UsageError("cross-validation needs at least two folds");
    }
    if (text.rows() != speech.rows()) {
        throw DataError("text and speech row counts differ");
    }
    const auto n = static_cast<std::size_t>(text.rows());
    const auto k = static_cast<std::size_t>(folds);
    if (n < k) {
        throw DataError("degenerate fold: " + std::to_string(n) + " rows cannot fill " + std::to_string(folds) +
                        " folds");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<double> cv_mse(lambda_grid.size(), 0.0);
    for (std::size_t fold = 0; fold < k; ++fold) {
        std::vector<Eigen::Index> train;
        std::vector<Eigen::Index> valid;
        for (std::size_t i = 0; i < n; ++i) {
            (i % k == fold ? valid : train).push_back(static_cast<Eigen::Index>(order[i]));
        }
        if (train.empty() || valid.empty()) {
            throw DataError("degenerate fold " + std::to_string(fold) + " (0 rows)");
        }
        const Matrix<Scalar> text_train = text(train, Eigen::all);
        const Matrix<Scalar> speech_train = speech(train, Eigen::all);
        const Matrix<Scalar> text_valid = text(valid, Eigen::all);
        const Matrix<Scalar> speech_valid = speech(valid, Eigen::all);

        const RidgeSolver<Scalar> solver(text_train, speech_train);
        for (std::size_t j = 0; j < lambda_grid.size(); ++j) {
            const auto model = solver.solve(static_cast<Scalar>(lambda_grid[j]));
            const Matrix<Scalar> error = speech_valid - predict(model, text_valid);
            cv_mse[j] += static_cast<double>(error.squaredNorm()) / static_cast<double>(error.size());
        }
    }
    for (auto& mse : cv_mse) {
        mse /= static_cast<double>(k);
    }

    std::vector<std::size_t> by_lambda(lambda_grid.size());
    std::iota(by_lambda.begin(), by_lambda.end(), std::size_t{0});
    std::stable_sort(by_lambda.begin(), by_lambda.end(),
                     [&](std::size_t a, std::size_t b) { return lambda_grid[a] < lambda_grid[b]; });
    std::size_t best = by_lambda.front();
    for (const std::size_t j : by_lambda) {
        const double tolerance = 1e-12 * std::max(std::abs(cv_mse[j]), std::abs(cv_mse[best]));
        if (cv_mse[j] < cv_mse[best] - tolerance) {
            best = j;
        }
    }

    const RidgeSolver<Scalar> full(text, speech);
    FitReport report;
    report.lambda_grid.assign(lambda_grid.begin(), lambda_grid.end());
    report.cv_mse = std::move(cv_mse);
    report.chosen_lambda = lambda_grid[best];
    report.rank = full.rank();
    report.folds = folds;
    report.seed = seed;
    return {full.solve(static_cast<Scalar>(report.chosen_lambda)), std::move(report)};
}

void write_residual_model(const ResidualModel<double>& model, const std::filesystem::path& path);
ResidualModel<double> read_residual_model(const std::filesystem::path& path);

void write_fit_report(const FitReport& report, const std::filesystem::path& path);

} // namespace residuum
