// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cstdio>
#include <memory>
#include <sstream>

#include "residuum/log.hpp"
#include "residuum/metrics.hpp"
#include "residuum/pipeline.hpp"
#include "support.hpp"

#include <spdlog/spdlog.h>

using namespace residuum;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict {
    bool pass = true;
    std::ostringstream detail;
};

int failures = 0;

void report(const std::string& name, const Verdict& v) {
    std::printf("%s  %-24s %s\n", v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.str().c_str());
    std::fflush(stdout);
    failures += v.pass ? 0 : 1;
}

double max_abs(const Eigen::MatrixXd& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

double run_accuracy(const fs::path& dir, const std::string& model, const std::string& embedding) {
    const auto doc = nlohmann::json::parse(testing::read_text(dir / "runs" / (model + "_" + embedding + ".json")));
    return doc["metrics"]["accuracy"].get<double>();
}

// ---------------------------------------------------------------------------

void ridge_oracle() {
    Verdict v;
    std::mt19937_64 rng(1001);
    double worst = 0.0;
    const auto start = Clock::now();
    for (int trial = 0; trial < 100; ++trial) {
        const auto n = static_cast<Eigen::Index>(2 + rng() % 49);
        const auto dt = static_cast<Eigen::Index>(1 + rng() % 8);
        const auto ds = static_cast<Eigen::Index>(1 + rng() % 8);
        const double lambda = std::pow(10.0, -2.0 + 4.0 * static_cast<double>(rng() % 1000) / 1000.0);
        const Eigen::MatrixXd t = testing::gaussian(n, dt, rng);
        const Eigen::MatrixXd s = testing::gaussian(n, ds, rng);
        const auto model = fit_ridge(t, s, lambda);
        const auto oracle = testing::normal_equation_ridge(t, s, lambda);
        worst = std::max({worst, max_abs(model.weights - oracle.weights), max_abs(model.intercept - oracle.intercept)});
    }
    const double elapsed = seconds_since(start);
    v.pass = worst <= 1e-9 && elapsed < 5.0;
    v.detail << "100 instances, max |diff| " << worst << " (tol 1e-9), " << elapsed << " s (limit 5 s)";
    report("ridge-oracle", v);
}

void decomposition_identity(const fs::path& pipeline_dir) {
    Verdict v;
    std::mt19937_64 rng(1002);
    double worst = 0.0;
    int datasets = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto n = static_cast<Eigen::Index>(2 + rng() % 60);
        const auto dt = static_cast<Eigen::Index>(1 + rng() % 10);
        const auto ds = static_cast<Eigen::Index>(1 + rng() % 10);
        const Eigen::MatrixXd t = testing::gaussian(n, dt, rng);
        const Eigen::MatrixXd s = testing::gaussian(n, ds, rng, 5.0);
        const auto model = fit_ridge(t, s, trial % 4 == 0 ? 0.0 : 0.01 * trial);
        worst = std::max(worst, max_abs(predict(model, t) + extract_residuals(model, t, s) - s));
        ++datasets;
    }
    const auto text = read_embeddings(pipeline_dir / kTextFile);
    const auto speech = read_embeddings(pipeline_dir / kSpeechFile);
    const auto model = read_residual_model(pipeline_dir / kResidualModelFile);
    worst = std::max(worst, max_abs(predict(model, text) + extract_residuals(model, text, speech) - speech));
    ++datasets;
    v.pass = worst <= 1e-12;
    v.detail << datasets << " fitted datasets, max |E_hat + R - E_s| " << worst << " (tol 1e-12)";
    report("decomposition-identity", v);
}

void ols_orthogonality() {
    Verdict v;
    std::mt19937_64 rng(1003);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto dt = static_cast<Eigen::Index>(1 + rng() % 8);
        const auto n = dt + 2 + static_cast<Eigen::Index>(rng() % 40);
        const auto ds = static_cast<Eigen::Index>(1 + rng() % 8);
        const Eigen::MatrixXd t = testing::gaussian(n, dt, rng);
        const Eigen::MatrixXd s = testing::gaussian(n, ds, rng, 3.0);
        const auto model = fit_ridge(t, s, 0.0);
        const Eigen::MatrixXd r = extract_residuals(model, t, s);
        const Eigen::MatrixXd tc = t.rowwise() - t.colwise().mean();
        worst = std::max(worst, max_abs(tc.transpose() * r));
    }
    v.pass = worst <= 1e-8;
    v.detail << "100 full-rank instances, max |Tc' R| " << worst << " (tol 1e-8)";
    report("ols-orthogonality", v);
}

void logreg_gradient_and_monotonicity() {
    Verdict v;
    std::mt19937_64 rng(1004);
    double worst = 0.0;
    int non_monotone = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto n = static_cast<Eigen::Index>(10 + rng() % 30);
        const auto d = static_cast<Eigen::Index>(1 + rng() % 6);
        const auto c = static_cast<std::size_t>(2 + rng() % 4);
        const Eigen::MatrixXd x = testing::gaussian(n, d, rng);
        Labels y;
        for (Eigen::Index i = 0; i < n; ++i) {
            y.push_back(static_cast<std::size_t>(i) < c ? static_cast<std::size_t>(i) : rng() % c);
        }
        const Eigen::MatrixXd w = testing::gaussian(static_cast<Eigen::Index>(c), d, rng, 0.5);
        const Eigen::VectorXd b = testing::gaussian(static_cast<Eigen::Index>(c), 1, rng, 0.5);
        const double l2 = 1e-2 * static_cast<double>(trial % 3);
        const auto [gw, gb] = logreg_gradient(x, y, w, b, l2);
        const auto [fw, fb] = testing::finite_difference_gradient(x, y, w, b, l2);
        const double scale = std::max({1.0, max_abs(fw), max_abs(fb)});
        worst = std::max(worst, std::max(max_abs(gw - fw), max_abs(gb - fb)) / scale);

        std::vector<std::string> names;
        for (std::size_t k = 0; k < c; ++k) {
            names.push_back("c" + std::to_string(k));
        }
        const auto model = fit_logreg(x, y, LabelSet(names), {std::max(l2, 1e-3), 500, 1e-6});
        for (std::size_t k = 1; k < model.loss_history.size(); ++k) {
            if (model.loss_history[k] > model.loss_history[k - 1]) {
                ++non_monotone;
                break;
            }
        }
    }
    v.pass = worst <= 1e-6 && non_monotone == 0;
    v.detail << "20 instances, max relative gradient error " << worst << " (tol 1e-6), " << non_monotone
             << " fits with a loss increase";
    report("logreg-gradient", v);
}

void metric_oracles() {
    Verdict v;
    std::mt19937_64 rng(1005);
    int mismatches = 0;
    int cases = 0;
    for (std::size_t n = 2; n <= 200; ++n) {
        for (int rep = 0; rep < 3; ++rep) {
            const int levels = 1 + static_cast<int>(rng() % 20);
            std::vector<double> scores(n);
            auto positive = std::make_unique<bool[]>(n);
            for (std::size_t i = 0; i < n; ++i) {
                scores[i] = static_cast<double>(rng() % static_cast<std::uint64_t>(levels)) / levels;
                positive[i] = rng() % 2 == 0;
            }
            positive[0] = true;
            positive[n - 1] = false;
            const std::span<const bool> flags(positive.get(), n);
            mismatches += auc_binary(scores, flags) == testing::brute_force_auc(scores, flags) ? 0 : 1;
            ++cases;
        }
    }
    const auto f1 = f1_scores(Labels{0, 0, 1}, Labels{0, 1, 1}, 2);
    const bool f1_exact = f1.per_class(0) == 2.0 / 3.0 && f1.per_class(1) == 2.0 / 3.0 && f1.macro == 2.0 / 3.0;
    v.pass = mismatches == 0 && f1_exact;
    v.detail << cases << " AUC cases (n = 2..200, with ties), " << mismatches << " differ from pair counting; F1 example "
             << f1.macro << (f1_exact ? " == 2/3" : " != 2/3");
    report("metric-oracles", v);
}

void trend(const fs::path& dir, double elapsed) {
    Verdict v;
    const double residual = run_accuracy(dir, "logreg", "residual");
    const double audio = run_accuracy(dir, "logreg", "audio");
    const double text = run_accuracy(dir, "logreg", "text");
    v.pass = residual > audio && audio > text && residual - audio >= 0.05 && elapsed < 120.0;
    v.detail << "logreg accuracy residual " << residual << " > audio " << audio << " > text " << text
             << ", residual - audio " << residual - audio << " (min 0.05), full pipeline " << elapsed
             << " s (limit 120 s)";
    report("trend", v);
}

// The gap is read as a magnitude: |forest - logreg| on residuals must not exceed the same gap on
// audio for any seed. The signed values are printed as well.
void forest_gap(const fs::path& root) {
    Verdict v;
    std::ostringstream signed_form;
    bool signed_holds = true;
    for (std::uint64_t seed = 42; seed < 47; ++seed) {
        const auto dir = root / ("seed-" + std::to_string(seed));
        PipelineArgs args;
        args.synth.out = dir;
        args.synth.seed = seed;
        args.skip_project = true;
        cmd_pipeline(args);
        const double gap_residual = run_accuracy(dir, "forest", "residual") - run_accuracy(dir, "logreg", "residual");
        const double gap_audio = run_accuracy(dir, "forest", "audio") - run_accuracy(dir, "logreg", "audio");
        const bool narrows = std::abs(gap_residual) <= std::abs(gap_audio);
        v.pass = v.pass && narrows;
        signed_holds = signed_holds && gap_residual <= gap_audio;
        v.detail << "seed " << seed << ": |" << gap_residual << "| vs |" << gap_audio << "|; ";
    }
    v.detail << "signed form (residual gap <= audio gap) " << (signed_holds ? "holds" : "does not hold");
    report("forest-gap", v);
}

void projection_checks() {
    Verdict v;
    std::mt19937_64 rng(1006);
    double pca_worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto d = static_cast<Eigen::Index>(2 + trial % 5);
        const Eigen::MatrixXd x = testing::gaussian(50, d, rng) * testing::gaussian(d, d, rng);
        const auto p = pca2(x);
        const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c.transpose() * c);
        const Eigen::VectorXd values = eig.eigenvalues().reverse();
        pca_worst = std::max({pca_worst, std::abs(p.explained_variance(0) - values(0) / values.sum()),
                              std::abs(p.explained_variance(1) - values(1) / values.sum())});
    }

    const auto clusters = testing::three_clusters(20, 5, 10.0, 1007);
    const auto p = joint_probabilities(clusters.points, 10.0);
    const double p_err = std::abs(p.sum() - 1.0);
    TsneOptions options;
    options.perplexity = 10.0;
    const auto tsne = tsne2(clusters.points, options);
    const double sil = testing::silhouette(tsne.points, clusters.labels);

    v.pass = pca_worst <= 1e-8 && p_err <= 1e-9 && tsne.kl_final < tsne.kl_initial && sil > 0.6;
    v.detail << "PCA explained variance max |diff| " << pca_worst << " (tol 1e-8); |sum P - 1| " << p_err
             << " (tol 1e-9); KL " << tsne.kl_initial << " -> " << tsne.kl_final << "; silhouette " << sil
             << " (min 0.6)";
    report("projection", v);
}

std::vector<fs::path> report_and_csvs(const fs::path& dir) {
    std::vector<fs::path> files{"report.md"};
    for (const auto* sub : {"runs", "projections"}) {
        for (const auto& entry : fs::directory_iterator(dir / sub)) {
            if (entry.path().extension() == ".csv") {
                files.push_back(fs::relative(entry.path(), dir));
            }
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

void determinism(const fs::path& first, const fs::path& second) {
    Verdict v;
    PipelineArgs args;
    args.synth.out = second;
    cmd_pipeline(args);
    const auto a = report_and_csvs(first);
    const auto b = report_and_csvs(second);
    int differing = 0;
    if (a != b) {
        differing = -1;
    } else {
        for (const auto& name : a) {
            differing += testing::read_bytes(first / name) == testing::read_bytes(second / name) ? 0 : 1;
        }
    }
    v.pass = differing == 0;
    v.detail << a.size() << " files (report + run and projection CSVs) compared across two seed-42 runs, "
             << (differing < 0 ? std::string("file sets differ") : std::to_string(differing) + " differ");
    report("determinism", v);
}

} // namespace

int main() {
    log().set_level(spdlog::level::warn);
    testing::TempDir root;
    const auto main_run = root / "pipeline";

    ridge_oracle();
    ols_orthogonality();
    logreg_gradient_and_monotonicity();
    metric_oracles();
    projection_checks();

    PipelineArgs args;
    args.synth.out = main_run;
    const auto start = Clock::now();
    cmd_pipeline(args);
    const double elapsed = seconds_since(start);

    decomposition_identity(main_run);
    trend(main_run, elapsed);
    forest_gap(root / "gap");
    determinism(main_run, root / "pipeline-again");

    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
