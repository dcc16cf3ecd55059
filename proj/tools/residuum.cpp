#include <algorithm>
#include <cstdint>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "residuum/error.hpp"
#include "residuum/pipeline.hpp"

namespace {

using namespace residuum;

// JSON config files: top-level keys are global options, nested objects hold subcommand options.
class JsonConfig : public CLI::Config {
  public:
    std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
        return dump(app, default_also).dump(2) + "\n";
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(input);
        } catch (const nlohmann::json::exception& e) {
            throw CLI::ConversionError("config is not valid JSON: " + std::string(e.what()));
        }
        if (!doc.is_object()) {
            throw CLI::ConversionError("config must be a JSON object");
        }
        std::vector<CLI::ConfigItem> items;
        flatten(doc, {}, items);
        return items;
    }

  private:
    static std::string scalar(const nlohmann::json& value) {
        if (value.is_string()) {
            return value.get<std::string>();
        }
        if (value.is_boolean()) {
            return value.get<bool>() ? "true" : "false";
        }
        return value.dump();
    }

    static void flatten(const nlohmann::json& object, const std::vector<std::string>& parents,
                        std::vector<CLI::ConfigItem>& items) {
        for (const auto& [key, value] : object.items()) {
            std::string name = key;
            std::replace(name.begin(), name.end(), '_', '-');
            if (value.is_object()) {
                auto nested = parents;
                nested.push_back(name);
                flatten(value, nested, items);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = name;
            if (value.is_array()) {
                for (const auto& element : value) {
                    item.inputs.push_back(scalar(element));
                }
            } else {
                item.inputs.push_back(scalar(value));
            }
            items.push_back(std::move(item));
        }
    }

    static nlohmann::json dump(const CLI::App* app, bool default_also) {
        nlohmann::json out = nlohmann::json::object();
        for (const CLI::Option* option : app->get_options()) {
            if (!option->get_configurable() || option->get_lnames().empty()) {
                continue;
            }
            const auto& name = option->get_lnames().front();
            if (name == "help" || name == "config") {
                continue;
            }
            if (option->count() > 0) {
                const auto& results = option->results();
                out[name] = results.size() == 1 ? nlohmann::json(results.front()) : nlohmann::json(results);
            } else if (default_also && !option->get_default_str().empty()) {
                out[name] = option->get_default_str();
            }
        }
        for (const CLI::App* sub : app->get_subcommands({})) {
            auto nested = dump(sub, default_also);
            if (!nested.empty()) {
                out[sub->get_name()] = std::move(nested);
            }
        }
        return out;
    }
};

struct Globals {
    std::uint64_t seed = kDefaultSeed;
    fs::path out = ".";
    std::optional<fs::path> data;

    fs::path data_dir() const { return data.value_or(out); }
};

void add_data_option(CLI::App* sub, Globals& globals) {
    sub->add_option("--data", globals.data, "Directory holding the inputs (default: --out)");
}

void add_split_options(CLI::App* sub, SplitArgs& split) {
    sub->add_option("--ratio", split.ratio, "Fraction of rows held out for testing")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    sub->add_flag("!--no-stratify", split.stratified, "Do not stratify the split by tone");
    sub->add_flag("--group-by-transcript", split.group_by_transcript,
                  "Keep every rendition of a transcript on the same side of the split");
}

void add_synth_options(CLI::App* sub, SynthArgs& args) {
    auto& c = args.config;
    sub->add_option("--sentences", c.n_sentences, "Number of sentences")->capture_default_str();
    sub->add_option("--tones", c.n_tones, "Number of tones")->capture_default_str();
    sub->add_option("--text-dims", c.text_dims, "Text embedding dimension")->capture_default_str();
    sub->add_option("--speech-dims", c.speech_dims, "Speech embedding dimension")->capture_default_str();
    sub->add_option("--tone-scale", c.tone_scale, "Norm of every tone offset")->capture_default_str();
    sub->add_option("--noise-scale", c.noise_scale, "Standard deviation of the speech noise")->capture_default_str();
    sub->add_option("--min-tone-angle", c.min_tone_angle_degrees, "Minimum pairwise angle between tone offsets")
        ->capture_default_str();
    sub->add_option("--mixing", args.mixing, "EMBX file with a speech_dims x text_dims mixing matrix");
}

void add_residualize_options(CLI::App* sub, ResidualizeArgs& args, std::string& fit_on) {
    add_split_options(sub, args.split);
    sub->add_option("--fit-on", fit_on, "Rows used to fit the regression")
        ->check(CLI::IsMember({"train", "all"}))
        ->capture_default_str();
    sub->add_flag("--normalize", args.normalize, "L2-normalize rows before fitting");
    sub->add_option("--lambdas", args.lambdas, "Ridge penalty grid")->delimiter(',');
    sub->add_option("--folds", args.folds, "Cross-validation folds")->check(CLI::Range(2, 1000))->capture_default_str();
}

void add_classifier_options(CLI::App* sub, ClassifyArgs& args, std::optional<double>& l2, std::string& vote) {
    sub->add_option("--l2", l2, "Fixed logistic regression l2 strength (skips cross-validation)")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--l2-grid", args.l2_grid, "Cross-validation grid for l2")->delimiter(',');
    sub->add_option("--cv-folds", args.cv_folds, "Folds for the l2 search")->check(CLI::Range(2, 1000))->capture_default_str();
    sub->add_option("--max-iter", args.logreg.max_iter, "Logistic regression iterations")->capture_default_str();
    sub->add_option("--tol", args.logreg.tol, "Gradient tolerance")->capture_default_str();
    sub->add_option("--trees", args.forest.n_trees, "Number of trees")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--max-depth", args.forest.max_depth, "Tree depth limit, 0 for none")->capture_default_str();
    sub->add_option("--features-per-split", args.forest.features_per_split,
                    "Features tried at each split, 0 for ceil(sqrt(d))")
        ->capture_default_str();
    sub->add_option("--min-samples-split", args.forest.min_samples_split, "Smallest node that may be split")
        ->capture_default_str();
    sub->add_flag("!--no-bootstrap", args.forest.bootstrap, "Grow every tree on the full training set");
    sub->add_option("--vote", vote, "Forest vote")->check(CLI::IsMember({"average", "majority"}))->capture_default_str();
}

void add_project_options(CLI::App* sub, ProjectArgs& args) {
    sub->add_option("--perplexity", args.tsne.perplexity, "t-SNE perplexity")->capture_default_str();
    sub->add_option("--iterations", args.tsne.iterations, "t-SNE iterations")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_flag("--svg", args.svg, "Also write SVG scatter plots");
}

FitOn parse_fit_on(const std::string& name) {
    return name == "all" ? FitOn::all : FitOn::train;
}

ForestVote parse_vote(const std::string& name) {
    return name == "majority" ? ForestVote::majority : ForestVote::average;
}

void print_paths(const std::vector<fs::path>& paths) {
    for (const auto& path : paths) {
        std::cout << path.string() << "\n";
    }
}

int run(int argc, char** argv) {
    CLI::App app{"Tone residuals: separate speaking tone from content in speech embeddings"};
    app.require_subcommand(1);
    app.fallthrough();
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "JSON file with option values");

    Globals globals;
    app.add_option("--seed", globals.seed, "Master seed; every stage derives its own")->capture_default_str();
    app.add_option("--out", globals.out, "Output directory")->capture_default_str();

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset with known tone offsets");
    add_synth_options(synth_cmd, synth);

    ResidualizeArgs residualize;
    std::string fit_on = "train";
    auto* residualize_cmd = app.add_subcommand("residualize", "Regress speech on text and write the residuals");
    add_data_option(residualize_cmd, globals);
    add_residualize_options(residualize_cmd, residualize, fit_on);

    ClassifyArgs classify;
    std::string embedding;
    std::string model = "logreg";
    std::optional<double> l2;
    std::string vote = "average";
    auto* classify_cmd = app.add_subcommand("classify", "Train a tone classifier and evaluate it on the test split");
    add_data_option(classify_cmd, globals);
    classify_cmd->add_option("--embedding", embedding, "text, audio or residual")->required();
    classify_cmd->add_option("--model", model, "logreg or forest")->capture_default_str();
    add_split_options(classify_cmd, classify.split);
    add_classifier_options(classify_cmd, classify, l2, vote);

    ProjectArgs project;
    auto* project_cmd = app.add_subcommand("project", "PCA and t-SNE projections of every embedding");
    add_data_option(project_cmd, globals);
    add_project_options(project_cmd, project);

    auto* report_cmd = app.add_subcommand("report", "Collect classification runs into a markdown table");
    add_data_option(report_cmd, globals);

    PipelineArgs pipeline;
    std::string pipeline_fit_on = "train";
    std::optional<double> pipeline_l2;
    std::string pipeline_vote = "average";
    auto* pipeline_cmd = app.add_subcommand("pipeline", "synth, residualize, classify x6, project and report");
    add_synth_options(pipeline_cmd, pipeline.synth);
    add_residualize_options(pipeline_cmd, pipeline.residualize, pipeline_fit_on);
    add_classifier_options(pipeline_cmd, pipeline.classify, pipeline_l2, pipeline_vote);
    add_project_options(pipeline_cmd, pipeline.project);
    pipeline_cmd->add_flag("--skip-project", pipeline.skip_project, "Skip the projections");

    for (auto* sub : app.get_subcommands({})) {
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    if (synth_cmd->parsed()) {
        synth.seed = globals.seed;
        synth.out = globals.out;
        const auto out = cmd_synth(synth);
        print_paths({out.text, out.speech, out.manifest});
    } else if (residualize_cmd->parsed()) {
        residualize.data = globals.data_dir();
        residualize.out = globals.out;
        residualize.seed = globals.seed;
        residualize.fit_on = parse_fit_on(fit_on);
        const auto out = cmd_residualize(residualize);
        print_paths({out.residual, out.model, out.fit_report, out.split});
    } else if (classify_cmd->parsed()) {
        classify.data = globals.data_dir();
        classify.out = globals.out;
        classify.seed = globals.seed;
        classify.embedding = parse_embedding(embedding);
        classify.model = parse_classifier(model);
        classify.l2 = l2;
        classify.forest.vote = parse_vote(vote);
        const auto out = cmd_classify(classify);
        print_paths({out.json, out.csv});
    } else if (project_cmd->parsed()) {
        project.data = globals.data_dir();
        project.out = globals.out;
        project.seed = globals.seed;
        print_paths(cmd_project(project));
    } else if (report_cmd->parsed()) {
        const auto out = cmd_report(globals.data_dir());
        print_paths({out.markdown});
        if (out.malformed > 0) {
            std::cerr << out.malformed << " malformed run(s) flagged in the report\n";
        }
    } else if (pipeline_cmd->parsed()) {
        pipeline.synth.seed = globals.seed;
        pipeline.synth.out = globals.out;
        pipeline.residualize.fit_on = parse_fit_on(pipeline_fit_on);
        pipeline.classify.l2 = pipeline_l2;
        pipeline.classify.forest.vote = parse_vote(pipeline_vote);
        const auto out = cmd_pipeline(pipeline);
        print_paths({out.markdown});
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const residuum::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const residuum::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
