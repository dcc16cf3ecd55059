#include "residuum/regression.hpp"

#include <fstream>

#include "residuum/container.hpp"

namespace residuum {

std::vector<double> default_lambda_grid() {
    std::vector<double> grid;
    for (int i = 0; i < 10; ++i) {
        grid.push_back(std::pow(10.0, -3.0 + 6.0 * i / 9.0));
    }
    return grid;
}

void write_residual_model(const ResidualModel<double>& model, const std::filesystem::path& path) {
    nlohmann::ordered_json meta;
    meta["text_dims"] = model.text_dims();
    meta["speech_dims"] = model.speech_dims();
    meta["lambda"] = model.lambda;
    meta["train_mse"] = model.train_mse;
    meta["text_mean"] = std::vector<double>(model.text_mean.begin(), model.text_mean.end());
    meta["speech_mean"] = std::vector<double>(model.speech_mean.begin(), model.speech_mean.end());
    write_container(path, "residual_model", meta,
                    {{"W", model.weights}, {"b", EmbeddingMatrix(model.intercept.transpose())}});
}

ResidualModel<double> read_residual_model(const std::filesystem::path& path) {
    const auto container = read_container(path);
    if (container.kind != "residual_model") {
        throw DataError(path.string() + " holds a '" + container.kind + "', not a residual model");
    }
    ResidualModel<double> model;
    model.weights = container.section("W");
    model.intercept = container.section("b").row(0).transpose();
    try {
        model.lambda = container.meta.at("lambda").get<double>();
        model.train_mse = container.meta.at("train_mse").get<double>();
        const auto text_mean = container.meta.at("text_mean").get<std::vector<double>>();
        const auto speech_mean = container.meta.at("speech_mean").get<std::vector<double>>();
        model.text_mean = Eigen::Map<const Eigen::VectorXd>(text_mean.data(), static_cast<Eigen::Index>(text_mean.size()));
        model.speech_mean =
            Eigen::Map<const Eigen::VectorXd>(speech_mean.data(), static_cast<Eigen::Index>(speech_mean.size()));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": malformed residual model header: " + e.what());
    }
    if (model.intercept.size() != model.weights.rows() || model.text_mean.size() != model.weights.cols() ||
        model.speech_mean.size() != model.weights.rows()) {
        throw DataError(path.string() + ": residual model sections have inconsistent shapes");
    }
    return model;
}

void write_fit_report(const FitReport& report, const std::filesystem::path& path) {
    nlohmann::ordered_json doc;
    doc["lambda_grid"] = report.lambda_grid;
    doc["cv_mse"] = report.cv_mse;
    doc["chosen_lambda"] = report.chosen_lambda;
    doc["rank"] = report.rank;
    doc["folds"] = report.folds;
    doc["seed"] = report.seed;
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << doc.dump(2) << '\n';
}

} // namespace residuum
