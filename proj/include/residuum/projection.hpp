#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "residuum/dataspec.hpp"
#include "residuum/error.hpp"

namespace residuum {

enum class ProjectionMethod { pca, tsne };

std::string_view to_string(ProjectionMethod method);

using Points2D = Eigen::Matrix<double, Eigen::Dynamic, 2>;

struct Projection2D {
    Points2D points;
    ProjectionMethod method = ProjectionMethod::pca;

    // pca
    Eigen::Vector2d explained_variance = Eigen::Vector2d::Zero();

    // tsne
    double perplexity = 0.0;
    int iterations = 0;
    std::uint64_t seed = 0;
    double kl_initial = std::numeric_limits<double>::quiet_NaN();
    double kl_final = std::numeric_limits<double>::quiet_NaN();
};

/// Projection onto the top two principal axes of the column-centered data. Each axis is signed so
/// its largest-magnitude loading is positive.
template <typename Derived>
Projection2D pca2(const Eigen::MatrixBase<Derived>& x) {
    if (x.rows() < 3 || x.cols() < 2) {
        throw DataError("PCA needs at least 3 rows and 2 columns");
    }
    if (!x.allFinite()) {
        throw DataError("PCA input contains non-finite values");
    }
    const Matrix<double> data = x.template cast<double>();
    const Matrix<double> centered = data.rowwise() - data.colwise().mean();

    Eigen::BDCSVD<Matrix<double>> svd(centered, Eigen::ComputeThinV);
    const Vector<double>& sigma = svd.singularValues();
    const double scale = data.cwiseAbs().maxCoeff();
    const auto dim = static_cast<double>(std::max(centered.rows(), centered.cols()));
    if (sigma(0) <= dim * std::numeric_limits<double>::epsilon() * scale) {
        throw DataError("PCA input has zero variance");
    }

    Eigen::Matrix<double, Eigen::Dynamic, 2> axes = svd.matrixV().leftCols(2);
    for (Eigen::Index j = 0; j < 2; ++j) {
        Eigen::Index largest = 0;
        for (Eigen::Index i = 1; i < axes.rows(); ++i) {
            if (std::abs(axes(i, j)) > std::abs(axes(largest, j))) {
                largest = i;
            }
        }
        if (axes(largest, j) < 0.0) {
            axes.col(j) = -axes.col(j);
        }
    }

    Projection2D out;
    out.method = ProjectionMethod::pca;
    out.points = centered * axes;
    const double total = sigma.squaredNorm();
    out.explained_variance << sigma(0) * sigma(0) / total, sigma(1) * sigma(1) / total;
    return out;
}

// ---------------------------------------------------------------------------
// Exact t-SNE
// ---------------------------------------------------------------------------

struct TsneOptions {
    double perplexity = 30.0;
    int iterations = 1000;
    std::uint64_t seed = kDefaultSeed;
    double learning_rate = 200.0;
    double exaggeration = 12.0;
    int exaggeration_iterations = 250;
    int momentum_switch_iteration = 250;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
};

/// Pairwise squared Euclidean distances between rows.
Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& x);

struct Bandwidths {
    Eigen::VectorXd beta;        // precision 1 / (2 sigma^2) per point
    Eigen::MatrixXd conditional; // row i holds p(j | i), zero diagonal
    Eigen::VectorXd entropy;     // natural-log entropy of each row
};

/// Binary search, per point, for the Gaussian precision whose conditional distribution has
/// entropy log(perplexity) within `tolerance`.
Bandwidths fit_bandwidths(const Eigen::MatrixXd& sq_dist, double perplexity, double tolerance = 1e-5);

/// Symmetrized joint probabilities (p(j|i) + p(i|j)) / 2n; sums to 1.
Eigen::MatrixXd joint_probabilities(const Eigen::MatrixXd& x, double perplexity);

/// KL(P || Q) where Q is the Student-t affinity of the embedding.
double kl_divergence(const Eigen::MatrixXd& p, const Points2D& y);

/// Exact O(n^2) t-SNE from a PCA start scaled to standard deviation 1e-4. The run does not draw
/// random numbers, so the seed is only recorded for reproducibility reports.
Projection2D tsne2(const Eigen::MatrixXd& x, const TsneOptions& options = {});

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

struct ProjectionRow {
    std::string id;
    std::string tone;
    std::string corpus;
    double x = 0.0;
    double y = 0.0;
    std::string method;
};

/// One-line summary of the projection parameters, written as a leading "#" line when requested.
std::string projection_meta_line(const Projection2D& projection);

/// CSV with columns id,tone,corpus,x,y,method.
void export_projection(const Projection2D& projection, const Manifest& manifest, const std::filesystem::path& path,
                       bool with_meta = false);
std::vector<ProjectionRow> read_projection_csv(const std::filesystem::path& path);

/// Static 800x600 scatter plot coloured by tone, with a legend.
void export_projection_svg(const Projection2D& projection, const Manifest& manifest,
                           const std::filesystem::path& path, const std::string& title);

} // namespace residuum
