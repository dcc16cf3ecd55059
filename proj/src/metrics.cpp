#include "residuum/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "residuum/error.hpp"
#include "residuum/log.hpp"

namespace residuum {

namespace {

void check_pair(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred) {
    if (y_true.size() != y_pred.size()) {
        throw DataError("label sequences differ in length (" + std::to_string(y_true.size()) + " vs " +
                        std::to_string(y_pred.size()) + ")");
    }
    if (y_true.empty()) {
        throw DataError("metrics need at least one sample");
    }
}

void check_range(std::span<const std::size_t> labels, std::size_t n_classes) {
    for (const auto label : labels) {
        if (label >= n_classes) {
            throw DataError("label index " + std::to_string(label) + " outside the label set");
        }
    }
}

} // namespace

double accuracy(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred) {
    check_pair(y_true, y_pred);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        hits += y_true[i] == y_pred[i] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(y_true.size());
}

Eigen::MatrixXi confusion_matrix(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred,
                                 std::size_t n_classes) {
    check_pair(y_true, y_pred);
    check_range(y_true, n_classes);
    check_range(y_pred, n_classes);
    const auto c = static_cast<Eigen::Index>(n_classes);
    Eigen::MatrixXi confusion = Eigen::MatrixXi::Zero(c, c);
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        ++confusion(static_cast<Eigen::Index>(y_true[i]), static_cast<Eigen::Index>(y_pred[i]));
    }
    return confusion;
}

F1Scores f1_scores(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred, std::size_t n_classes) {
    const Eigen::MatrixXi confusion = confusion_matrix(y_true, y_pred, n_classes);
    F1Scores scores;
    scores.per_class = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_classes));
    double sum = 0.0;
    int present = 0;
    for (Eigen::Index c = 0; c < confusion.rows(); ++c) {
        const int tp = confusion(c, c);
        const int actual = confusion.row(c).sum();
        const int predicted = confusion.col(c).sum();
        // F1 = 2 tp / (actual + predicted), which equals 2PR/(P+R) and is 0 when tp = 0.
        if (actual + predicted > 0) {
            scores.per_class(c) = 2.0 * tp / static_cast<double>(actual + predicted);
            sum += scores.per_class(c);
            ++present;
        }
    }
    scores.macro = present > 0 ? sum / present : 0.0;
    return scores;
}

double auc_binary(std::span<const double> scores, std::span<const bool> positive) {
    if (scores.size() != positive.size()) {
        throw DataError("scores and positive flags differ in length");
    }
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Midranks (1-based) over tied runs.
    double positive_rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t start = 0; start < n;) {
        std::size_t end = start;
        while (end + 1 < n && scores[order[end + 1]] == scores[order[start]]) {
            ++end;
        }
        const double midrank = 0.5 * static_cast<double>(start + end) + 1.0;
        for (std::size_t k = start; k <= end; ++k) {
            if (positive[order[k]]) {
                positive_rank_sum += midrank;
                ++n_pos;
            }
        }
        start = end + 1;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    const double np = static_cast<double>(n_pos);
    const double u = positive_rank_sum - np * (np + 1.0) / 2.0;
    return u / (np * static_cast<double>(n_neg));
}

AucScores auc_ovr(std::span<const std::size_t> y_true, const Eigen::MatrixXd& probs, std::size_t n_classes) {
    if (y_true.empty()) {
        throw DataError("AUC needs at least one sample");
    }
    if (static_cast<std::size_t>(probs.rows()) != y_true.size() ||
        static_cast<std::size_t>(probs.cols()) != n_classes) {
        throw DataError("probability matrix shape does not match labels and classes");
    }
    check_range(y_true, n_classes);
    const Eigen::VectorXd row_sums = probs.rowwise().sum();
    if (((row_sums.array() - 1.0).abs() > 1e-6).any()) {
        throw DataError("probability rows must sum to 1 within 1e-6");
    }

    AucScores out;
    out.per_class = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n_classes),
                                              std::numeric_limits<double>::quiet_NaN());
    std::vector<double> scores(y_true.size());
    const auto positive = std::make_unique<bool[]>(y_true.size());
    double sum = 0.0;
    int used = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        bool any_pos = false;
        bool any_neg = false;
        for (std::size_t i = 0; i < y_true.size(); ++i) {
            scores[i] = probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
            positive[i] = y_true[i] == c;
            (positive[i] ? any_pos : any_neg) = true;
        }
        if (!any_pos || !any_neg) {
            out.skipped.push_back(c);
            log().warn("AUC: class {} has no {}; skipped", c, any_pos ? "negatives" : "positives");
            continue;
        }
        const double auc = auc_binary(scores, std::span<const bool>(positive.get(), y_true.size()));
        out.per_class(static_cast<Eigen::Index>(c)) = auc;
        sum += auc;
        ++used;
    }
    if (used == 0) {
        throw DataError("AUC undefined: no class has both positives and negatives");
    }
    out.macro = sum / used;
    return out;
}

EvalReport evaluate(std::span<const std::size_t> y_true, std::span<const Prediction> predictions,
                    const LabelSet& classes) {
    if (y_true.size() != predictions.size()) {
        throw DataError("labels and predictions differ in length");
    }
    const auto y_pred = predicted_labels(predictions);
    EvalReport report;
    report.classes = classes;
    report.n_test = y_true.size();
    report.accuracy = accuracy(y_true, y_pred);
    const auto f1 = f1_scores(y_true, y_pred, classes.size());
    report.f1_per_class = f1.per_class;
    report.f1_macro = f1.macro;
    const auto auc = auc_ovr(y_true, probability_matrix(predictions, classes.size()), classes.size());
    report.auc_per_class = auc.per_class;
    report.auc_macro = auc.macro;
    report.confusion = confusion_matrix(y_true, y_pred, classes.size());
    return report;
}

nlohmann::ordered_json to_json(const EvalReport& report) {
    auto vector_json = [](const Eigen::VectorXd& v) {
        nlohmann::ordered_json out = nlohmann::ordered_json::array();
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            if (std::isnan(v(i))) {
                out.push_back(nullptr);
            } else {
                out.push_back(v(i));
            }
        }
        return out;
    };
    nlohmann::ordered_json doc;
    doc["n_test"] = report.n_test;
    doc["classes"] = report.classes.labels();
    doc["accuracy"] = report.accuracy;
    doc["f1_macro"] = report.f1_macro;
    doc["auc_macro"] = report.auc_macro;
    doc["f1_per_class"] = vector_json(report.f1_per_class);
    doc["auc_per_class"] = vector_json(report.auc_per_class);
    nlohmann::ordered_json confusion = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < report.confusion.rows(); ++r) {
        std::vector<int> row(report.confusion.cols());
        for (Eigen::Index c = 0; c < report.confusion.cols(); ++c) {
            row[static_cast<std::size_t>(c)] = report.confusion(r, c);
        }
        confusion.push_back(row);
    }
    doc["confusion"] = confusion;
    return doc;
}

std::string eval_csv_header() {
    return "model,embedding,accuracy,f1_macro,auc_macro,n_test,n_classes";
}

std::string eval_csv_row(const EvalReport& report, const std::string& model, const std::string& embedding) {
    std::ostringstream out;
    out << model << ',' << embedding << ',' << std::setprecision(17) << report.accuracy << ',' << report.f1_macro
        << ',' << report.auc_macro << ',' << report.n_test << ',' << report.classes.size();
    return out.str();
}

} // namespace residuum
