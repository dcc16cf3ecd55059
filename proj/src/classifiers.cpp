#include "residuum/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "residuum/container.hpp"
#include "residuum/error.hpp"
#include "validation.hpp"

namespace residuum {

namespace detail {

void validate_training_data(const Eigen::MatrixXd& x, std::span<const std::size_t> y, const LabelSet& classes) {
    if (classes.size() < 2) {
        throw DataError("classification needs at least two classes");
    }
    if (static_cast<std::size_t>(x.rows()) != y.size()) {
        throw DataError("feature rows (" + std::to_string(x.rows()) + ") and labels (" + std::to_string(y.size()) +
                        ") differ in length");
    }
    if (y.size() < classes.size()) {
        throw DataError("fewer training rows than classes");
    }
    if (!x.allFinite()) {
        throw DataError("features contain non-finite values");
    }
    std::set<std::size_t> present;
    for (const auto label : y) {
        if (label >= classes.size()) {
            throw DataError("label index " + std::to_string(label) + " outside the label set");
        }
        present.insert(label);
    }
    if (present.size() < 2) {
        throw DataError("training labels contain a single class");
    }
}

} // namespace detail

std::size_t argmax_lowest(const Eigen::Ref<const Eigen::VectorXd>& values) {
    std::size_t best = 0;
    for (Eigen::Index i = 1; i < values.size(); ++i) {
        if (values(i) > values(static_cast<Eigen::Index>(best))) {
            best = static_cast<std::size_t>(i);
        }
    }
    return best;
}

Eigen::MatrixXd probability_matrix(std::span<const Prediction> predictions, std::size_t n_classes) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(predictions.size()), static_cast<Eigen::Index>(n_classes));
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = predictions[i].probs.transpose();
    }
    return out;
}

Labels predicted_labels(std::span<const Prediction> predictions) {
    Labels out;
    out.reserve(predictions.size());
    for (const auto& p : predictions) {
        out.push_back(p.label);
    }
    return out;
}

namespace {

Eigen::MatrixXd logits(const Eigen::MatrixXd& x, const Eigen::MatrixXd& weights, const Eigen::VectorXd& biases) {
    Eigen::MatrixXd z = x * weights.transpose();
    z.rowwise() += biases.transpose();
    return z;
}

// Row-wise softmax, shifted by the row max.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& z) {
    Eigen::MatrixXd p = (z.colwise() - z.rowwise().maxCoeff()).array().exp().matrix();
    p.array().colwise() /= p.rowwise().sum().array();
    return p;
}

Eigen::MatrixXd one_hot(std::span<const std::size_t> y, Eigen::Index n_classes) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(y.size()), n_classes);
    for (std::size_t i = 0; i < y.size(); ++i) {
        out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(y[i])) = 1.0;
    }
    return out;
}

} // namespace

double logreg_loss(const Eigen::MatrixXd& x, std::span<const std::size_t> y, const Eigen::MatrixXd& weights,
                   const Eigen::VectorXd& biases, double l2) {
    const Eigen::MatrixXd z = logits(x, weights, biases);
    const Eigen::VectorXd row_max = z.rowwise().maxCoeff();
    double total = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double log_sum = row_max(i) + std::log((z.row(i).array() - row_max(i)).exp().sum());
        total += log_sum - z(i, static_cast<Eigen::Index>(y[static_cast<std::size_t>(i)]));
    }
    return total / static_cast<double>(z.rows()) + 0.5 * l2 * weights.squaredNorm();
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> logreg_gradient(const Eigen::MatrixXd& x, std::span<const std::size_t> y,
                                                            const Eigen::MatrixXd& weights,
                                                            const Eigen::VectorXd& biases, double l2) {
    const double n = static_cast<double>(x.rows());
    const Eigen::MatrixXd delta = softmax_rows(logits(x, weights, biases)) - one_hot(y, weights.rows());
    Eigen::MatrixXd grad_w = delta.transpose() * x / n + l2 * weights;
    Eigen::VectorXd grad_b = delta.colwise().sum().transpose() / n;
    return {std::move(grad_w), std::move(grad_b)};
}

LogRegModel fit_logreg(const Eigen::MatrixXd& x, std::span<const std::size_t> y, const LabelSet& classes,
                       const LogRegOptions& options) {
    detail::validate_training_data(x, y, classes);
    if (!(options.l2 >= 0.0) || options.max_iter < 0 || !(options.tol > 0.0)) {
        throw UsageError("logistic regression needs l2 >= 0, max_iter >= 0 and tol > 0");
    }

    const auto n_classes = static_cast<Eigen::Index>(classes.size());
    LogRegModel model;
    model.weights = Eigen::MatrixXd::Zero(n_classes, x.cols());
    model.biases = Eigen::VectorXd::Zero(n_classes);
    model.l2 = options.l2;
    model.classes = classes;

    const double mean_sq_norm = x.rowwise().squaredNorm().mean();
    const double weight_scale = 1.0 / (0.5 * mean_sq_norm + options.l2 + 1e-12);
    const double bias_scale = 2.0;
    constexpr double kArmijo = 1e-4;
    constexpr int kMaxHalvings = 60;

    double loss = logreg_loss(x, y, model.weights, model.biases, options.l2);
    model.loss_history.push_back(loss);

    for (int iter = 0; iter < options.max_iter; ++iter) {
        const auto [grad_w, grad_b] = logreg_gradient(x, y, model.weights, model.biases, options.l2);
        const double grad_inf = std::max(grad_w.cwiseAbs().maxCoeff(), grad_b.cwiseAbs().maxCoeff());
        if (grad_inf < options.tol) {
            model.converged = true;
            break;
        }
        const Eigen::MatrixXd dir_w = -weight_scale * grad_w;
        const Eigen::VectorXd dir_b = -bias_scale * grad_b;
        const double slope = grad_w.cwiseProduct(dir_w).sum() + grad_b.dot(dir_b);

        double step = 1.0;
        bool accepted = false;
        for (int h = 0; h < kMaxHalvings; ++h) {
            Eigen::MatrixXd trial_w = model.weights + step * dir_w;
            Eigen::VectorXd trial_b = model.biases + step * dir_b;
            const double trial = logreg_loss(x, y, trial_w, trial_b, options.l2);
            if (trial <= loss + kArmijo * step * slope) {
                model.weights = std::move(trial_w);
                model.biases = std::move(trial_b);
                loss = trial;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            break; // no decrease representable at this precision
        }
        model.iterations = iter + 1;
        model.loss_history.push_back(loss);
    }
    if (!model.converged) {
        const auto [grad_w, grad_b] = logreg_gradient(x, y, model.weights, model.biases, options.l2);
        model.converged = std::max(grad_w.cwiseAbs().maxCoeff(), grad_b.cwiseAbs().maxCoeff()) < options.tol;
    }
    model.final_loss = loss;
    return model;
}

std::vector<Prediction> predict_logreg(const LogRegModel& model, const Eigen::MatrixXd& x) {
    if (x.rows() == 0) {
        return {};
    }
    if (x.cols() != model.weights.cols()) {
        throw DataError("feature dimension " + std::to_string(x.cols()) + " does not match model dimension " +
                        std::to_string(model.weights.cols()));
    }
    const Eigen::MatrixXd probs = softmax_rows(logits(x, model.weights, model.biases));
    std::vector<Prediction> out;
    out.reserve(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        Prediction p;
        p.probs = probs.row(i).transpose();
        p.label = argmax_lowest(p.probs);
        out.push_back(std::move(p));
    }
    return out;
}

L2Selection select_logreg_l2(const Eigen::MatrixXd& x, std::span<const std::size_t> y, const LabelSet& classes,
                             std::span<const double> grid, int folds, std::uint64_t seed,
                             const LogRegOptions& base) {
    detail::validate_training_data(x, y, classes);
    if (grid.empty()) {
        throw UsageError("l2 grid is empty");
    }
    if (folds < 2 || static_cast<std::size_t>(folds) > y.size()) {
        throw UsageError("invalid fold count for l2 selection");
    }

    // Stratified fold assignment: shuffle each class, then deal its members round-robin.
    std::mt19937_64 rng(seed);
    std::vector<int> fold_of(y.size(), 0);
    int next = 0;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (y[i] == c) {
                members.push_back(i);
            }
        }
        std::shuffle(members.begin(), members.end(), rng);
        for (const auto i : members) {
            fold_of[i] = next;
            next = (next + 1) % folds;
        }
    }

    L2Selection selection;
    selection.grid.assign(grid.begin(), grid.end());
    selection.cv_accuracy.assign(grid.size(), 0.0);
    int used_folds = 0;
    for (int fold = 0; fold < folds; ++fold) {
        std::vector<std::size_t> train;
        std::vector<std::size_t> valid;
        for (std::size_t i = 0; i < y.size(); ++i) {
            (fold_of[i] == fold ? valid : train).push_back(i);
        }
        Labels y_train;
        for (const auto i : train) {
            y_train.push_back(y[i]);
        }
        if (valid.empty() || std::set<std::size_t>(y_train.begin(), y_train.end()).size() < 2) {
            continue;
        }
        const Eigen::MatrixXd x_train = select_rows(x, train);
        const Eigen::MatrixXd x_valid = select_rows(x, valid);
        for (std::size_t j = 0; j < grid.size(); ++j) {
            LogRegOptions options = base;
            options.l2 = grid[j];
            const auto model = fit_logreg(x_train, y_train, classes, options);
            const auto predictions = predict_logreg(model, x_valid);
            std::size_t hits = 0;
            for (std::size_t k = 0; k < valid.size(); ++k) {
                hits += predictions[k].label == y[valid[k]] ? 1 : 0;
            }
            selection.cv_accuracy[j] += static_cast<double>(hits) / static_cast<double>(valid.size());
        }
        ++used_folds;
    }
    if (used_folds == 0) {
        throw DataError("no usable fold for l2 selection");
    }
    std::size_t best = 0;
    for (std::size_t j = 0; j < grid.size(); ++j) {
        selection.cv_accuracy[j] /= used_folds;
        if (selection.cv_accuracy[j] > selection.cv_accuracy[best]) {
            best = j;
        }
    }
    selection.chosen = grid[best];
    return selection;
}

void write_logreg_model(const LogRegModel& model, const std::filesystem::path& path) {
    nlohmann::ordered_json meta;
    meta["classes"] = model.classes.labels();
    meta["l2"] = model.l2;
    meta["converged"] = model.converged;
    meta["final_loss"] = model.final_loss;
    meta["iterations"] = model.iterations;
    write_container(path, "logreg_model", meta,
                    {{"weights", model.weights}, {"biases", EmbeddingMatrix(model.biases.transpose())}});
}

LogRegModel read_logreg_model(const std::filesystem::path& path) {
    const auto container = read_container(path);
    if (container.kind != "logreg_model") {
        throw DataError(path.string() + " holds a '" + container.kind + "', not a logistic regression model");
    }
    LogRegModel model;
    try {
        model.classes = LabelSet(container.meta.at("classes").get<std::vector<std::string>>());
        model.l2 = container.meta.at("l2").get<double>();
        model.converged = container.meta.at("converged").get<bool>();
        model.final_loss = container.meta.at("final_loss").get<double>();
        model.iterations = container.meta.at("iterations").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": malformed model header: " + e.what());
    }
    model.weights = container.section("weights");
    model.biases = container.section("biases").row(0).transpose();
    if (model.weights.rows() != static_cast<Eigen::Index>(model.classes.size()) ||
        model.biases.size() != model.weights.rows()) {
        throw DataError(path.string() + ": model sections disagree with the class count");
    }
    return model;
}

} // namespace residuum
