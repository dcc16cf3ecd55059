#pragma once

// Shared fixtures and independent reference implementations for the test binaries.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Dense>

#include "residuum/classifiers.hpp"
#include "residuum/dataspec.hpp"
#include "residuum/regression.hpp"

namespace testing {

namespace fs = std::filesystem;

class TempDir {
  public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("residuum-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

  private:
    fs::path path_;
};

inline std::vector<std::uint8_t> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
}

inline Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) {
            m(i, j) = normal(rng);
        }
    }
    return m;
}

inline residuum::Manifest toy_manifest(const std::vector<std::string>& tones) {
    std::vector<residuum::UtteranceRecord> entries;
    for (std::size_t i = 0; i < tones.size(); ++i) {
        entries.push_back({"u" + std::to_string(i), residuum::Corpus::business, "t" + std::to_string(i / 2), tones[i],
                           "spk"});
    }
    return residuum::make_manifest(std::move(entries));
}

// ---------------------------------------------------------------------------
// Regression oracles
// ---------------------------------------------------------------------------

struct NormalEquationFit {
    Eigen::MatrixXd weights; // d_s x d_t
    Eigen::VectorXd intercept;
};

/// (Tc' Tc + lambda I)^-1 Tc' Sc by explicit inversion on column-centered data.
inline NormalEquationFit normal_equation_ridge(const Eigen::MatrixXd& text, const Eigen::MatrixXd& speech,
                                               double lambda) {
    const Eigen::RowVectorXd t_mean = text.colwise().mean();
    const Eigen::RowVectorXd s_mean = speech.colwise().mean();
    const Eigen::MatrixXd tc = text.rowwise() - t_mean;
    const Eigen::MatrixXd sc = speech.rowwise() - s_mean;
    const Eigen::MatrixXd gram =
        tc.transpose() * tc + lambda * Eigen::MatrixXd::Identity(text.cols(), text.cols());
    const Eigen::MatrixXd b = gram.inverse() * tc.transpose() * sc;
    NormalEquationFit fit;
    fit.weights = b.transpose();
    fit.intercept = s_mean.transpose() - fit.weights * t_mean.transpose();
    return fit;
}

// ---------------------------------------------------------------------------
// Logistic regression oracle
// ---------------------------------------------------------------------------

/// Central differences of logreg_loss over every weight and bias.
inline std::pair<Eigen::MatrixXd, Eigen::VectorXd>
finite_difference_gradient(const Eigen::MatrixXd& x, std::span<const std::size_t> y, const Eigen::MatrixXd& weights,
                           const Eigen::VectorXd& biases, double l2, double h = 1e-5) {
    Eigen::MatrixXd gw(weights.rows(), weights.cols());
    Eigen::VectorXd gb(biases.size());
    for (Eigen::Index i = 0; i < weights.rows(); ++i) {
        for (Eigen::Index j = 0; j < weights.cols(); ++j) {
            Eigen::MatrixXd plus = weights;
            Eigen::MatrixXd minus = weights;
            plus(i, j) += h;
            minus(i, j) -= h;
            gw(i, j) = (residuum::logreg_loss(x, y, plus, biases, l2) - residuum::logreg_loss(x, y, minus, biases, l2)) /
                       (2.0 * h);
        }
    }
    for (Eigen::Index i = 0; i < biases.size(); ++i) {
        Eigen::VectorXd plus = biases;
        Eigen::VectorXd minus = biases;
        plus(i) += h;
        minus(i) -= h;
        gb(i) = (residuum::logreg_loss(x, y, weights, plus, l2) - residuum::logreg_loss(x, y, weights, minus, l2)) /
                (2.0 * h);
    }
    return {gw, gb};
}

// ---------------------------------------------------------------------------
// Metric oracles
// ---------------------------------------------------------------------------

/// Exhaustive pair counting: wins + ties/2 over positive-negative pairs.
inline double brute_force_auc(std::span<const double> scores, std::span<const bool> positive) {
    double wins = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!positive[i]) {
            continue;
        }
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (positive[j]) {
                continue;
            }
            pairs += 1.0;
            if (scores[i] > scores[j]) {
                wins += 1.0;
            } else if (scores[i] == scores[j]) {
                wins += 0.5;
            }
        }
    }
    return wins / pairs;
}

// ---------------------------------------------------------------------------
// Forest oracle
// ---------------------------------------------------------------------------

struct BestSplit {
    Eigen::Index feature = -1;
    double low = 0.0;  // largest value going left
    double high = 0.0; // smallest value going right
    double impurity = 0.0;
};

inline double gini(const std::vector<double>& counts) {
    double total = 0.0;
    double sq = 0.0;
    for (const double c : counts) {
        total += c;
        sq += c * c;
    }
    return total > 0.0 ? 1.0 - sq / (total * total) : 0.0;
}

/// Enumerates every feature and every midpoint threshold; returns the split with the lowest
/// weighted child Gini impurity.
inline BestSplit brute_force_gini(const Eigen::MatrixXd& x, std::span<const std::size_t> y, std::size_t n_classes) {
    BestSplit best;
    best.impurity = std::numeric_limits<double>::infinity();
    const auto n = static_cast<double>(x.rows());
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
        std::vector<double> values(x.col(f).data(), x.col(f).data() + x.rows());
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        for (std::size_t k = 0; k + 1 < values.size(); ++k) {
            std::vector<double> left(n_classes, 0.0);
            std::vector<double> right(n_classes, 0.0);
            for (Eigen::Index i = 0; i < x.rows(); ++i) {
                (x(i, f) <= values[k] ? left : right)[y[static_cast<std::size_t>(i)]] += 1.0;
            }
            double nl = 0.0;
            for (const double c : left) {
                nl += c;
            }
            const double impurity = nl / n * gini(left) + (n - nl) / n * gini(right);
            if (impurity < best.impurity - 1e-15) {
                best = {f, values[k], values[k + 1], impurity};
            }
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Projection oracles
// ---------------------------------------------------------------------------

/// Entropy (nats) of the conditional distribution of point i under precision beta.
inline double conditional_entropy(const Eigen::MatrixXd& sq_dist, Eigen::Index i, double beta) {
    const Eigen::Index n = sq_dist.rows();
    double min_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
        if (j != i) {
            min_d = std::min(min_d, sq_dist(i, j));
        }
    }
    double sum = 0.0;
    double weighted = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) {
            continue;
        }
        const double w = std::exp(-beta * (sq_dist(i, j) - min_d));
        sum += w;
        weighted += w * beta * (sq_dist(i, j) - min_d);
    }
    return std::log(sum) + weighted / sum;
}

/// Scans sigma on a fine log grid and refines around the crossing of log(perplexity); returns the
/// precision 1/(2 sigma^2) that reaches the target entropy.
inline double entropy_scan_beta(const Eigen::MatrixXd& sq_dist, Eigen::Index i, double perplexity) {
    const double target = std::log(perplexity);
    double prev_sigma = 1e-6;
    double prev_h = conditional_entropy(sq_dist, i, 1.0 / (2.0 * prev_sigma * prev_sigma));
    for (int k = 1; k <= 4000; ++k) {
        const double sigma = 1e-6 * std::pow(10.0, k * 0.0025);
        const double h = conditional_entropy(sq_dist, i, 1.0 / (2.0 * sigma * sigma));
        if ((prev_h - target) * (h - target) <= 0.0) {
            double lo = prev_sigma;
            double hi = sigma;
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (lo + hi);
                const double hm = conditional_entropy(sq_dist, i, 1.0 / (2.0 * mid * mid));
                ((hm < target) ? lo : hi) = mid;
            }
            const double s = 0.5 * (lo + hi);
            return 1.0 / (2.0 * s * s);
        }
        prev_sigma = sigma;
        prev_h = h;
    }
    return std::numeric_limits<double>::quiet_NaN();
}

/// Mean silhouette coefficient under Euclidean distance.
inline double silhouette(const Eigen::MatrixXd& points, std::span<const std::size_t> labels) {
    const Eigen::Index n = points.rows();
    std::size_t n_clusters = 0;
    for (const auto l : labels) {
        n_clusters = std::max(n_clusters, l + 1);
    }
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        std::vector<double> sum(n_clusters, 0.0);
        std::vector<double> count(n_clusters, 0.0);
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) {
                continue;
            }
            const auto l = labels[static_cast<std::size_t>(j)];
            sum[l] += (points.row(i) - points.row(j)).norm();
            count[l] += 1.0;
        }
        const auto own = labels[static_cast<std::size_t>(i)];
        if (count[own] == 0.0) {
            continue;
        }
        const double a = sum[own] / count[own];
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < n_clusters; ++c) {
            if (c != own && count[c] > 0.0) {
                b = std::min(b, sum[c] / count[c]);
            }
        }
        total += (b - a) / std::max(a, b);
    }
    return total / static_cast<double>(n);
}

struct Clusters {
    Eigen::MatrixXd points;
    std::vector<std::size_t> labels;
};

/// Three isotropic Gaussian clusters whose centers are `separation` standard deviations apart.
inline Clusters three_clusters(int per_cluster, Eigen::Index dims, double separation, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Clusters out;
    out.points.resize(3 * per_cluster, dims);
    for (int c = 0; c < 3; ++c) {
        Eigen::VectorXd center = Eigen::VectorXd::Zero(dims);
        center(c % dims) = separation;
        for (int k = 0; k < per_cluster; ++k) {
            const Eigen::Index r = c * per_cluster + k;
            for (Eigen::Index j = 0; j < dims; ++j) {
                out.points(r, j) = center(j) + normal(rng);
            }
            out.labels.push_back(static_cast<std::size_t>(c));
        }
    }
    return out;
}

} // namespace testing
