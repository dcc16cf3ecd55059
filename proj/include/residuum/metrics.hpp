#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "residuum/classifiers.hpp"
#include "residuum/dataspec.hpp"

namespace residuum {

double accuracy(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred);

struct F1Scores {
    Eigen::VectorXd per_class;
    double macro = 0.0; // mean over classes present in y_true or y_pred
};

F1Scores f1_scores(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred, std::size_t n_classes);

/// Area under the ROC curve from the Mann-Whitney statistic with midranks for tied scores.
double auc_binary(std::span<const double> scores, std::span<const bool> positive);

struct AucScores {
    Eigen::VectorXd per_class;        // NaN for skipped classes
    double macro = 0.0;
    std::vector<std::size_t> skipped; // classes with no positives or no negatives
};

/// One-vs-rest AUC per class; the macro mean covers classes with both positives and negatives.
AucScores auc_ovr(std::span<const std::size_t> y_true, const Eigen::MatrixXd& probs, std::size_t n_classes);

Eigen::MatrixXi confusion_matrix(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred,
                                 std::size_t n_classes);

struct EvalReport {
    double accuracy = 0.0;
    Eigen::VectorXd f1_per_class;
    double f1_macro = 0.0;
    Eigen::VectorXd auc_per_class;
    double auc_macro = 0.0;
    Eigen::MatrixXi confusion; // rows: true class, columns: predicted class
    std::size_t n_test = 0;
    LabelSet classes;
};

EvalReport evaluate(std::span<const std::size_t> y_true, std::span<const Prediction> predictions,
                    const LabelSet& classes);

nlohmann::ordered_json to_json(const EvalReport& report);

/// Flat CSV columns, in this order: model,embedding,accuracy,f1_macro,auc_macro,n_test,n_classes
std::string eval_csv_header();
std::string eval_csv_row(const EvalReport& report, const std::string& model, const std::string& embedding);

} // namespace residuum
