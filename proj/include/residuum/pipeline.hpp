#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "residuum/classifiers.hpp"
#include "residuum/metrics.hpp"
#include "residuum/projection.hpp"
#include "residuum/regression.hpp"
#include "residuum/synthgen.hpp"

namespace residuum {

namespace fs = std::filesystem;

// File names inside a run directory.
inline constexpr std::string_view kTextFile = "text.embx";
inline constexpr std::string_view kSpeechFile = "speech.embx";
inline constexpr std::string_view kManifestFile = "manifest.jsonl";
inline constexpr std::string_view kResidualFile = "residual.embx";
inline constexpr std::string_view kResidualModelFile = "residual_model.rzc";
inline constexpr std::string_view kFitReportFile = "fit_report.json";
inline constexpr std::string_view kSplitFile = "split.json";
inline constexpr std::string_view kRunsDir = "runs";
inline constexpr std::string_view kProjectionsDir = "projections";
inline constexpr std::string_view kReportFile = "report.md";

enum class EmbeddingChoice { text, audio, residual };
enum class ClassifierChoice { logreg, forest };
enum class FitOn { train, all };

std::string_view to_string(EmbeddingChoice choice);
std::string_view to_string(ClassifierChoice choice);
EmbeddingChoice parse_embedding(std::string_view name);
ClassifierChoice parse_classifier(std::string_view name);

/// Location of the embedding file for a choice inside `dir`.
fs::path embedding_path(const fs::path& dir, EmbeddingChoice choice);

struct SplitArgs {
    double ratio = kDefaultTestRatio;
    bool stratified = true;
    bool group_by_transcript = false;
};

/// The split used by every stage: `dir`/split.json when present, otherwise a fresh split seeded
/// from the "split" stage.
SplitPlan load_or_make_split(const fs::path& dir, const Manifest& manifest, std::uint64_t seed,
                             const SplitArgs& args);

// ---------------------------------------------------------------------------

struct SynthArgs {
    SynthConfig config;
    std::uint64_t seed = kDefaultSeed; // generator seed is derived from it ("synth")
    fs::path out = ".";
    std::optional<fs::path> mixing;    // EMBX file holding a speech_dims x text_dims matrix
};

struct SynthOutputs {
    fs::path text;
    fs::path speech;
    fs::path manifest;
};

SynthOutputs cmd_synth(const SynthArgs& args);

// ---------------------------------------------------------------------------

struct ResidualizeArgs {
    fs::path data = ".";
    fs::path out = ".";
    std::uint64_t seed = kDefaultSeed;
    SplitArgs split;
    FitOn fit_on = FitOn::train;
    bool normalize = false;
    std::vector<double> lambdas = default_lambda_grid();
    int folds = kDefaultFolds;
};

struct ResidualizeOutputs {
    fs::path residual;
    fs::path model;
    fs::path fit_report;
    fs::path split;
    FitReport report;
};

ResidualizeOutputs cmd_residualize(const ResidualizeArgs& args);

// ---------------------------------------------------------------------------

struct ClassifyArgs {
    fs::path data = ".";
    fs::path out = ".";
    std::uint64_t seed = kDefaultSeed;
    EmbeddingChoice embedding = EmbeddingChoice::residual;
    ClassifierChoice model = ClassifierChoice::logreg;
    SplitArgs split;
    std::optional<double> l2;                 // fixed l2; otherwise chosen by cross-validation
    std::vector<double> l2_grid = kDefaultL2Grid;
    int cv_folds = 5;
    LogRegOptions logreg;
    ForestOptions forest;
};

struct ClassifyOutputs {
    fs::path json;
    fs::path csv;
    EvalReport report;
};

ClassifyOutputs cmd_classify(const ClassifyArgs& args);

// ---------------------------------------------------------------------------

struct ProjectArgs {
    fs::path data = ".";
    fs::path out = ".";
    std::uint64_t seed = kDefaultSeed;
    TsneOptions tsne;
    bool svg = false;
};

std::vector<fs::path> cmd_project(const ProjectArgs& args);

// ---------------------------------------------------------------------------

struct ReportOutputs {
    fs::path markdown;
    std::size_t rows = 0;
    std::size_t malformed = 0;
};

/// Aggregates `dir`/runs/*.csv into `dir`/report.md.
ReportOutputs cmd_report(const fs::path& dir);

// ---------------------------------------------------------------------------

struct PipelineArgs {
    SynthArgs synth;
    ResidualizeArgs residualize;
    ClassifyArgs classify;    // embedding and model are iterated over
    ProjectArgs project;
    bool skip_project = false;
};

/// synth, residualize, classify for all six (model, embedding) pairs, project, report.
ReportOutputs cmd_pipeline(const PipelineArgs& args);

} // namespace residuum
