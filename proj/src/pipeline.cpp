#include "residuum/pipeline.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <spdlog/spdlog.h>

#include "residuum/error.hpp"
#include "residuum/log.hpp"

namespace residuum {

namespace {

constexpr std::array<EmbeddingChoice, 3> kEmbeddings{EmbeddingChoice::text, EmbeddingChoice::audio,
                                                     EmbeddingChoice::residual};
constexpr std::array<ClassifierChoice, 2> kClassifiers{ClassifierChoice::logreg, ClassifierChoice::forest};

fs::path in_dir(const fs::path& dir, std::string_view name) {
    return dir / fs::path(std::string(name));
}

void require_file(const fs::path& path, std::string_view hint) {
    if (!fs::exists(path)) {
        throw DataError("missing input " + path.string() + (hint.empty() ? "" : " (" + std::string(hint) + ")"));
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << text;
}

void check_split(const SplitPlan& plan, std::size_t n) {
    for (const auto* list : {&plan.train_indices, &plan.test_indices}) {
        for (const auto i : *list) {
            if (i >= n) {
                throw DataError("split index " + std::to_string(i) + " is out of range for " + std::to_string(n) +
                                " rows");
            }
        }
    }
    if (plan.train_indices.empty() || plan.test_indices.empty()) {
        throw DataError("split has an empty partition");
    }
}

Labels gather(const Labels& labels, const std::vector<std::size_t>& rows) {
    Labels out;
    out.reserve(rows.size());
    for (const auto i : rows) {
        out.push_back(labels[i]);
    }
    return out;
}

std::string display_name(ClassifierChoice choice) {
    return choice == ClassifierChoice::logreg ? "Logistic Regression" : "Random Forest";
}

std::string display_name(EmbeddingChoice choice) {
    switch (choice) {
    case EmbeddingChoice::text:
        return "Text";
    case EmbeddingChoice::audio:
        return "Audio";
    case EmbeddingChoice::residual:
        return "Residual";
    }
    return "";
}

} // namespace

std::string_view to_string(EmbeddingChoice choice) {
    switch (choice) {
    case EmbeddingChoice::text:
        return "text";
    case EmbeddingChoice::audio:
        return "audio";
    case EmbeddingChoice::residual:
        return "residual";
    }
    return "";
}

std::string_view to_string(ClassifierChoice choice) {
    return choice == ClassifierChoice::logreg ? "logreg" : "forest";
}

EmbeddingChoice parse_embedding(std::string_view name) {
    for (const auto choice : kEmbeddings) {
        if (to_string(choice) == name) {
            return choice;
        }
    }
    throw UsageError("unknown embedding '" + std::string(name) + "' (expected text, audio or residual)");
}

ClassifierChoice parse_classifier(std::string_view name) {
    for (const auto choice : kClassifiers) {
        if (to_string(choice) == name) {
            return choice;
        }
    }
    throw UsageError("unknown model '" + std::string(name) + "' (expected logreg or forest)");
}

fs::path embedding_path(const fs::path& dir, EmbeddingChoice choice) {
    switch (choice) {
    case EmbeddingChoice::text:
        return in_dir(dir, kTextFile);
    case EmbeddingChoice::audio:
        return in_dir(dir, kSpeechFile);
    case EmbeddingChoice::residual:
        return in_dir(dir, kResidualFile);
    }
    return {};
}

SplitPlan load_or_make_split(const fs::path& dir, const Manifest& manifest, std::uint64_t seed,
                             const SplitArgs& args) {
    const auto path = in_dir(dir, kSplitFile);
    SplitPlan plan = fs::exists(path) ? read_split(path)
                                      : make_split(manifest, args.ratio, derive_seed(seed, "split"), args.stratified,
                                                   args.group_by_transcript);
    check_split(plan, manifest.size());
    return plan;
}

// ---------------------------------------------------------------------------

SynthOutputs cmd_synth(const SynthArgs& args) {
    SynthConfig config = args.config;
    config.seed = derive_seed(args.seed, "synth");
    if (args.mixing) {
        config.mixing = read_embeddings(*args.mixing);
    }
    const auto data = generate(config);

    ensure_dir(args.out);
    SynthOutputs out{in_dir(args.out, kTextFile), in_dir(args.out, kSpeechFile), in_dir(args.out, kManifestFile)};
    write_embeddings(data.text, out.text);
    write_embeddings(data.speech, out.speech);

    Manifest manifest = data.manifest;
    const std::array<fs::path, 2> files{out.text, out.speech};
    manifest.meta->content_hash = content_hash(files);
    write_manifest(manifest, out.manifest);
    log().info("synth: {} rows, {} tones, dims text={} speech={}", data.text.rows(), manifest.label_set.size(),
               data.text.cols(), data.speech.cols());
    return out;
}

// ---------------------------------------------------------------------------

ResidualizeOutputs cmd_residualize(const ResidualizeArgs& args) {
    const auto text_path = in_dir(args.data, kTextFile);
    const auto speech_path = in_dir(args.data, kSpeechFile);
    const auto manifest_path = in_dir(args.data, kManifestFile);
    for (const auto& path : {text_path, speech_path, manifest_path}) {
        require_file(path, "");
    }
    const auto manifest = read_manifest(manifest_path);
    EmbeddingMatrix text = read_embeddings(text_path);
    EmbeddingMatrix speech = read_embeddings(speech_path);
    const std::array<fs::path, 2> files{text_path, speech_path};
    const std::array<const EmbeddingMatrix*, 2> matrices{&text, &speech};
    check_alignment(manifest, files, matrices);

    if (args.normalize) {
        text = normalize_rows(text);
        speech = normalize_rows(speech);
    }

    const auto plan = make_split(manifest, args.split.ratio, derive_seed(args.seed, "split"), args.split.stratified,
                                 args.split.group_by_transcript);
    check_split(plan, manifest.size());

    EmbeddingMatrix fit_text;
    EmbeddingMatrix fit_speech;
    if (args.fit_on == FitOn::train) {
        fit_text = select_rows(text, plan.train_indices);
        fit_speech = select_rows(speech, plan.train_indices);
    } else {
        fit_text = text;
        fit_speech = speech;
    }
    auto [model, report] = fit_ridge_cv(fit_text, fit_speech, args.lambdas, args.folds, derive_seed(args.seed, "ridge-cv"));
    const EmbeddingMatrix residual = extract_residuals(model, text, speech);

    ensure_dir(args.out);
    ResidualizeOutputs out;
    out.residual = in_dir(args.out, kResidualFile);
    out.model = in_dir(args.out, kResidualModelFile);
    out.fit_report = in_dir(args.out, kFitReportFile);
    out.split = in_dir(args.out, kSplitFile);
    write_embeddings(residual, out.residual);
    write_residual_model(model, out.model);
    write_fit_report(report, out.fit_report);
    write_split(plan, out.split);
    log().info("residualize: lambda={} rank={} train_mse={}", report.chosen_lambda, report.rank, model.train_mse);
    out.report = std::move(report);
    return out;
}

// ---------------------------------------------------------------------------

ClassifyOutputs cmd_classify(const ClassifyArgs& args) {
    const auto manifest_path = in_dir(args.data, kManifestFile);
    const auto features_path = embedding_path(args.data, args.embedding);
    require_file(manifest_path, "");
    require_file(features_path, args.embedding == EmbeddingChoice::residual ? "run residualize first" : "");

    const auto manifest = read_manifest(manifest_path);
    const EmbeddingMatrix features = read_embeddings(features_path);
    if (static_cast<std::size_t>(features.rows()) != manifest.size()) {
        throw DataError("row mismatch: " + features_path.string() + " has " + std::to_string(features.rows()) +
                        " rows, manifest has " + std::to_string(manifest.size()));
    }
    const auto plan = load_or_make_split(args.data, manifest, args.seed, args.split);
    const Labels labels = manifest.class_indices();
    const EmbeddingMatrix x_train = select_rows(features, plan.train_indices);
    const EmbeddingMatrix x_test = select_rows(features, plan.test_indices);
    const Labels y_train = gather(labels, plan.train_indices);
    const Labels y_test = gather(labels, plan.test_indices);
    const auto& classes = manifest.label_set;

    nlohmann::ordered_json params;
    std::vector<Prediction> predictions;
    if (args.model == ClassifierChoice::logreg) {
        LogRegOptions options = args.logreg;
        if (args.l2) {
            options.l2 = *args.l2;
        } else {
            const auto selection = select_logreg_l2(x_train, y_train, classes, args.l2_grid, args.cv_folds,
                                                    derive_seed(args.seed, "logreg-cv"), args.logreg);
            options.l2 = selection.chosen;
            params["l2_grid"] = selection.grid;
            params["l2_cv_accuracy"] = selection.cv_accuracy;
        }
        const auto model = fit_logreg(x_train, y_train, classes, options);
        params["l2"] = model.l2;
        params["max_iter"] = options.max_iter;
        params["tol"] = options.tol;
        params["iterations"] = model.iterations;
        params["converged"] = model.converged;
        params["final_loss"] = model.final_loss;
        predictions = predict_logreg(model, x_test);
    } else {
        ForestOptions options = args.forest;
        options.seed = derive_seed(args.seed, "forest");
        const auto model = fit_forest(x_train, y_train, classes, options);
        params["n_trees"] = model.options.n_trees;
        params["max_depth"] = model.options.max_depth;
        params["features_per_split"] = model.options.features_per_split;
        params["min_samples_split"] = model.options.min_samples_split;
        params["vote"] = model.options.vote == ForestVote::majority ? "majority" : "average";
        params["seed"] = model.options.seed;
        predictions = predict_forest(model, x_test);
    }

    ClassifyOutputs out;
    out.report = evaluate(y_test, predictions, classes);

    const auto runs = in_dir(args.out, kRunsDir);
    ensure_dir(runs);
    const std::string stem = std::string(to_string(args.model)) + "_" + std::string(to_string(args.embedding));
    out.json = runs / (stem + ".json");
    out.csv = runs / (stem + ".csv");

    nlohmann::ordered_json doc;
    doc["model"] = std::string(to_string(args.model));
    doc["embedding"] = std::string(to_string(args.embedding));
    doc["params"] = params;
    doc["metrics"] = to_json(out.report);
    write_text(out.json, doc.dump(2) + "\n");
    write_text(out.csv, eval_csv_header() + "\n" +
                            eval_csv_row(out.report, std::string(to_string(args.model)),
                                         std::string(to_string(args.embedding))) +
                            "\n");
    log().info("classify: {} on {}: accuracy={:.4f} f1={:.4f} auc={:.4f}", to_string(args.model),
               to_string(args.embedding), out.report.accuracy, out.report.f1_macro, out.report.auc_macro);
    return out;
}

// ---------------------------------------------------------------------------

std::vector<fs::path> cmd_project(const ProjectArgs& args) {
    const auto manifest_path = in_dir(args.data, kManifestFile);
    require_file(manifest_path, "");
    const auto manifest = read_manifest(manifest_path);

    TsneOptions tsne = args.tsne;
    tsne.seed = derive_seed(args.seed, "tsne");

    const auto dir = in_dir(args.out, kProjectionsDir);
    ensure_dir(dir);
    std::vector<fs::path> written;
    for (const auto embedding : kEmbeddings) {
        const auto path = embedding_path(args.data, embedding);
        require_file(path, embedding == EmbeddingChoice::residual ? "run residualize first" : "");
        const EmbeddingMatrix x = read_embeddings(path);
        if (static_cast<std::size_t>(x.rows()) != manifest.size()) {
            throw DataError("row mismatch between " + path.string() + " and the manifest");
        }
        for (const auto& projection : {pca2(x), tsne2(x, tsne)}) {
            const std::string stem = std::string(to_string(embedding)) + "_" + std::string(to_string(projection.method));
            const auto csv = dir / (stem + ".csv");
            export_projection(projection, manifest, csv, true);
            written.push_back(csv);
            if (args.svg) {
                const auto svg = dir / (stem + ".svg");
                const std::string method = projection.method == ProjectionMethod::pca ? "PCA" : "t-SNE";
                export_projection_svg(projection, manifest, svg, display_name(embedding) + " embeddings - " + method);
                written.push_back(svg);
            }
            log().info("project: {}", csv.string());
        }
    }
    return written;
}

// ---------------------------------------------------------------------------

ReportOutputs cmd_report(const fs::path& dir) {
    const auto runs = in_dir(dir, kRunsDir);
    std::vector<fs::path> files;
    if (fs::is_directory(runs)) {
        for (const auto& entry : fs::directory_iterator(runs)) {
            if (entry.is_regular_file() && entry.path().extension() == ".csv") {
                files.push_back(entry.path());
            }
        }
    }
    if (files.empty()) {
        throw DataError("no runs found in " + runs.string());
    }

    struct Row {
        int model_rank = 99;
        int embedding_rank = 99;
        std::string model;
        std::string embedding;
        std::string file;
        std::string cells;
        bool malformed = false;
    };

    auto rank_of = [](const std::string& value, auto choices) {
        for (std::size_t i = 0; i < choices.size(); ++i) {
            if (to_string(choices[i]) == value) {
                return static_cast<int>(i);
            }
        }
        return 99;
    };

    const std::vector<std::string> columns{"model", "embedding", "accuracy", "f1_macro", "auc_macro", "n_test",
                                           "n_classes"};
    std::vector<Row> rows;
    for (const auto& file : files) {
        Row row;
        row.file = file.filename().string();
        std::ifstream in(file);
        std::string header;
        std::string line;
        std::getline(in, header);
        std::getline(in, line);
        std::vector<std::string> fields;
        std::stringstream stream(line);
        for (std::string field; std::getline(stream, field, ',');) {
            fields.push_back(field);
        }
        fields.resize(std::max(fields.size(), columns.size()));
        row.model = fields[0];
        row.embedding = fields[1];
        row.model_rank = rank_of(row.model, kClassifiers);
        row.embedding_rank = rank_of(row.embedding, kEmbeddings);

        std::vector<std::string> problems;
        if (header != eval_csv_header()) {
            problems.push_back("unexpected header");
        }
        std::array<double, 3> metrics{};
        for (std::size_t k = 0; k < 3; ++k) {
            const auto& text = fields[2 + k];
            try {
                std::size_t used = 0;
                metrics[k] = std::stod(text, &used);
                if (used != text.size() || !(metrics[k] >= 0.0 && metrics[k] <= 1.0)) {
                    problems.push_back("invalid " + columns[2 + k]);
                }
            } catch (const std::exception&) {
                problems.push_back("missing " + columns[2 + k]);
            }
        }
        std::ostringstream cells;
        if (problems.empty()) {
            cells << std::fixed << std::setprecision(4) << metrics[0] << " | " << metrics[1] << " | " << metrics[2]
                  << " | " << fields[5];
        } else {
            row.malformed = true;
            std::string joined;
            for (const auto& p : problems) {
                joined += (joined.empty() ? "" : "; ") + p;
            }
            cells << "MALFORMED (" << row.file << ": " << joined << ") | | |";
            log().warn("report: {} is malformed: {}", row.file, joined);
        }
        row.cells = cells.str();
        rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        return std::tie(a.model_rank, a.model, a.embedding_rank, a.embedding, a.file) <
               std::tie(b.model_rank, b.model, b.embedding_rank, b.embedding, b.file);
    });

    std::ostringstream md;
    md << "# Tone classification results\n\n";
    md << "| Model | Embedding | Accuracy | F1 Score | AUC-ROC | n_test |\n";
    md << "|---|---|---|---|---|---|\n";
    ReportOutputs out;
    for (const auto& row : rows) {
        const std::string model = row.model_rank < 99 ? display_name(kClassifiers[static_cast<std::size_t>(row.model_rank)])
                                                      : row.model;
        const std::string embedding =
            row.embedding_rank < 99 ? display_name(kEmbeddings[static_cast<std::size_t>(row.embedding_rank)])
                                    : row.embedding;
        md << "| " << model << " | " << embedding << " | " << row.cells << " |\n";
        ++out.rows;
        out.malformed += row.malformed ? 1 : 0;
    }
    md << "\nF1 and AUC-ROC are macro averages; AUC-ROC is one-vs-rest.\n";

    out.markdown = in_dir(dir, kReportFile);
    write_text(out.markdown, md.str());
    return out;
}

// ---------------------------------------------------------------------------

ReportOutputs cmd_pipeline(const PipelineArgs& args) {
    const auto& dir = args.synth.out;
    const auto seed = args.synth.seed;
    cmd_synth(args.synth);

    ResidualizeArgs residualize = args.residualize;
    residualize.data = dir;
    residualize.out = dir;
    residualize.seed = seed;
    cmd_residualize(residualize);

    for (const auto model : kClassifiers) {
        for (const auto embedding : kEmbeddings) {
            ClassifyArgs classify = args.classify;
            classify.data = dir;
            classify.out = dir;
            classify.seed = seed;
            classify.model = model;
            classify.embedding = embedding;
            classify.split = residualize.split;
            cmd_classify(classify);
        }
    }

    if (!args.skip_project) {
        ProjectArgs project = args.project;
        project.data = dir;
        project.out = dir;
        project.seed = seed;
        cmd_project(project);
    }
    return cmd_report(dir);
}

} // namespace residuum
