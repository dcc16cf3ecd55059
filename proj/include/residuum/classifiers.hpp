#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "residuum/dataspec.hpp"

namespace residuum {

struct Prediction {
    std::size_t label = 0;
    Eigen::VectorXd probs;
};

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax_lowest(const Eigen::Ref<const Eigen::VectorXd>& values);

/// Stacks prediction probabilities into an n x C matrix.
Eigen::MatrixXd probability_matrix(std::span<const Prediction> predictions, std::size_t n_classes);
Labels predicted_labels(std::span<const Prediction> predictions);

// ---------------------------------------------------------------------------
// Multinomial logistic regression
// ---------------------------------------------------------------------------

struct LogRegOptions {
    double l2 = 1e-2;
    int max_iter = 500;
    double tol = 1e-6;
};

struct LogRegModel {
    Eigen::MatrixXd weights; // C x d
    Eigen::VectorXd biases;  // C
    double l2 = 0.0;
    LabelSet classes;
    bool converged = false;
    double final_loss = 0.0;
    int iterations = 0;
    std::vector<double> loss_history; // loss before the first step, then after every accepted step
};

/// Mean cross-entropy plus (l2 / 2) ||weights||_F^2; biases are not penalized.
double logreg_loss(const Eigen::MatrixXd& x, std::span<const std::size_t> y, const Eigen::MatrixXd& weights,
                   const Eigen::VectorXd& biases, double l2);

/// Analytic gradient of logreg_loss with respect to (weights, biases).
std::pair<Eigen::MatrixXd, Eigen::VectorXd> logreg_gradient(const Eigen::MatrixXd& x, std::span<const std::size_t> y,
                                                            const Eigen::MatrixXd& weights,
                                                            const Eigen::VectorXd& biases, double l2);

/// Full-batch gradient descent with Armijo backtracking from a zero start. The descent direction
/// is the gradient scaled per block by the inverse of a curvature bound (weights: 0.5 mean||x||^2
/// + l2, biases: 0.5), which keeps step sizes sane from tiny to huge l2.
LogRegModel fit_logreg(const Eigen::MatrixXd& x, std::span<const std::size_t> y, const LabelSet& classes,
                       const LogRegOptions& options = {});

std::vector<Prediction> predict_logreg(const LogRegModel& model, const Eigen::MatrixXd& x);

struct L2Selection {
    std::vector<double> grid;
    std::vector<double> cv_accuracy;
    double chosen = 0.0;
};

inline const std::vector<double> kDefaultL2Grid{1e-3, 1e-2, 1e-1, 1.0};

/// K-fold choice of the l2 strength by mean validation accuracy; ties go to the earlier grid entry.
L2Selection select_logreg_l2(const Eigen::MatrixXd& x, std::span<const std::size_t> y, const LabelSet& classes,
                             std::span<const double> grid, int folds, std::uint64_t seed,
                             const LogRegOptions& base = {});

void write_logreg_model(const LogRegModel& model, const std::filesystem::path& path);
LogRegModel read_logreg_model(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Random forest
// ---------------------------------------------------------------------------

enum class ForestVote { average, majority };

struct ForestOptions {
    int n_trees = 200;
    int max_depth = 0;          // 0 = unlimited
    int features_per_split = 0; // 0 = ceil(sqrt(d))
    int min_samples_split = 2;
    bool bootstrap = true;
    ForestVote vote = ForestVote::average;
    std::uint64_t seed = kDefaultSeed;
};

/// Flat node: leaves have feature == -1 and carry class counts.
struct TreeNode {
    int feature = -1;
    float threshold = 0.0f;
    int left = -1;
    int right = -1;
    std::vector<double> counts;

    bool is_leaf() const noexcept { return feature < 0; }
};

struct DecisionTree {
    std::vector<TreeNode> nodes; // root at 0

    const TreeNode& leaf_for(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

struct ForestModel {
    std::vector<DecisionTree> trees;
    ForestOptions options;
    LabelSet classes;
    Eigen::Index dims = 0;
};

ForestModel fit_forest(const Eigen::MatrixXd& x, std::span<const std::size_t> y, const LabelSet& classes,
                       const ForestOptions& options = {});

std::vector<Prediction> predict_forest(const ForestModel& model, const Eigen::MatrixXd& x);

std::vector<std::uint8_t> encode_forest_model(const ForestModel& model);
void write_forest_model(const ForestModel& model, const std::filesystem::path& path);
ForestModel read_forest_model(const std::filesystem::path& path);

} // namespace residuum
