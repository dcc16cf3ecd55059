#include <doctest.h>

#include "residuum/error.hpp"
#include "residuum/projection.hpp"
#include "support.hpp"

using namespace residuum;

namespace {

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& x) {
    const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
    return c.transpose() * c / static_cast<double>(x.rows() - 1);
}

Manifest manifest_for(Eigen::Index n) {
    std::vector<std::string> tones;
    for (Eigen::Index i = 0; i < n; ++i) {
        tones.push_back(i % 2 ? "calm" : "angry");
    }
    return testing::toy_manifest(tones);
}

} // namespace

TEST_SUITE("pca") {
    TEST_CASE("planar data is fully explained by two components") {
        std::mt19937_64 rng(61);
        const Eigen::MatrixXd basis = testing::gaussian(2, 5, rng);
        const Eigen::MatrixXd x = testing::gaussian(30, 2, rng) * basis + Eigen::MatrixXd::Ones(30, 5);
        const auto p = pca2(x);
        CHECK(std::abs(p.explained_variance.sum() - 1.0) < 1e-10);
    }

    TEST_CASE("projection variances match the covariance eigen-oracle") {
        std::mt19937_64 rng(62);
        for (int trial = 0; trial < 10; ++trial) {
            const auto d = static_cast<Eigen::Index>(2 + trial % 5);
            const Eigen::MatrixXd x = testing::gaussian(40, d, rng) * testing::gaussian(d, d, rng);
            const auto p = pca2(x);
            const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sample_covariance(x));
            const Eigen::VectorXd values = eig.eigenvalues().reverse();
            const Eigen::MatrixXd proj_cov = sample_covariance(p.points);
            CHECK(std::abs(proj_cov(0, 0) - values(0)) <= 1e-8 * values(0));
            CHECK(std::abs(proj_cov(1, 1) - values(1)) <= 1e-8 * values(0));
            CHECK(std::abs(proj_cov(0, 1)) <= 1e-8 * values(0));
            CHECK(std::abs(p.explained_variance(0) - values(0) / values.sum()) < 1e-8);
            CHECK(std::abs(p.explained_variance(1) - values(1) / values.sum()) < 1e-8);
            CHECK(p.explained_variance(0) >= p.explained_variance(1));
            CHECK(p.explained_variance(1) >= 0.0);
        }
    }

    TEST_CASE("duplicated rows project identically") {
        std::mt19937_64 rng(63);
        const Eigen::MatrixXd x = testing::gaussian(10, 4, rng);
        Eigen::MatrixXd doubled(20, 4);
        doubled << x, x;
        const auto p = pca2(doubled);
        CHECK((p.points.topRows(10) - p.points.bottomRows(10)).cwiseAbs().maxCoeff() < 1e-12);
    }

    TEST_CASE("orthogonal rotation of the input keeps pairwise distances") {
        std::mt19937_64 rng(64);
        const Eigen::MatrixXd x = testing::gaussian(25, 4, rng) * Eigen::Vector4d(3, 2, 1, 0.5).asDiagonal();
        const Eigen::HouseholderQR<Eigen::MatrixXd> qr(testing::gaussian(4, 4, rng));
        const Eigen::MatrixXd q = qr.householderQ();
        const auto a = pca2(x).points;
        const auto b = pca2(Eigen::MatrixXd(x * q)).points;
        const auto da = squared_distances(a);
        const auto db = squared_distances(b);
        CHECK((da.cwiseSqrt() - db.cwiseSqrt()).cwiseAbs().maxCoeff() < 1e-8);
    }

    TEST_CASE("sign convention puts the largest loading positive") {
        std::mt19937_64 rng(65);
        const Eigen::MatrixXd x = testing::gaussian(20, 3, rng) * Eigen::Vector3d(5, 2, 0.5).asDiagonal();
        const auto a = pca2(x);
        const auto b = pca2(Eigen::MatrixXd(-x));
        // flipping the data flips the loadings, which the convention undoes; scores flip sign
        CHECK((a.points + b.points).cwiseAbs().maxCoeff() < 1e-10);
    }

    TEST_CASE("errors") {
        CHECK_THROWS_AS(pca2(Eigen::MatrixXd::Ones(5, 3)), DataError);
        CHECK_THROWS_AS(pca2(Eigen::MatrixXd::Random(2, 3)), DataError);
        CHECK_THROWS_AS(pca2(Eigen::MatrixXd::Random(5, 1)), DataError);
    }
}

TEST_SUITE("tsne") {
    TEST_CASE("joint probabilities are symmetric, nonnegative and sum to one") {
        std::mt19937_64 rng(66);
        const Eigen::MatrixXd x = testing::gaussian(40, 5, rng);
        const auto p = joint_probabilities(x, 10.0);
        CHECK((p - p.transpose()).cwiseAbs().maxCoeff() == 0.0);
        CHECK(p.minCoeff() >= 0.0);
        CHECK(std::abs(p.sum() - 1.0) < 1e-9);
        CHECK(p.diagonal().cwiseAbs().maxCoeff() == 0.0);
    }

    TEST_CASE("bandwidths hit the target entropy and agree with a sigma scan") {
        std::mt19937_64 rng(67);
        const Eigen::MatrixXd x = testing::gaussian(30, 4, rng);
        const auto d = squared_distances(x);
        for (const double perplexity : {3.0, 5.0, 9.0}) {
            const auto bw = fit_bandwidths(d, perplexity);
            for (Eigen::Index i = 0; i < 30; ++i) {
                CHECK(std::abs(bw.entropy(i) - std::log(perplexity)) < 1e-4);
                CHECK(std::abs(testing::conditional_entropy(d, i, bw.beta(i)) - std::log(perplexity)) < 1e-4);
                const double scanned = testing::entropy_scan_beta(d, i, perplexity);
                CHECK(std::abs(bw.beta(i) - scanned) <= 1e-3 * scanned);
                CHECK(std::abs(bw.conditional.row(i).sum() - 1.0) < 1e-12);
            }
        }
    }

    TEST_CASE("separated clusters stay separated") {
        const auto clusters = testing::three_clusters(20, 5, 10.0, 68);
        TsneOptions options;
        options.perplexity = 10.0;
        const auto p = tsne2(clusters.points, options);
        CHECK(p.kl_final < p.kl_initial);
        CHECK(std::isfinite(p.kl_final));
        CHECK(testing::silhouette(p.points, clusters.labels) > 0.6);
    }

    TEST_CASE("runs are bit-identical") {
        std::mt19937_64 rng(69);
        const Eigen::MatrixXd x = testing::gaussian(30, 3, rng);
        TsneOptions options;
        options.perplexity = 5.0;
        options.iterations = 300;
        const auto a = tsne2(x, options);
        const auto b = tsne2(x, options);
        CHECK(a.points == b.points);
        CHECK(a.kl_final == b.kl_final);
        CHECK(a.seed == options.seed);
    }

    TEST_CASE("KL stays finite throughout") {
        std::mt19937_64 rng(70);
        const Eigen::MatrixXd x = testing::gaussian(24, 3, rng);
        const auto p = joint_probabilities(x, 4.0);
        TsneOptions options;
        options.perplexity = 4.0;
        for (const int iterations : {0, 1, 50, 250, 400}) {
            options.iterations = iterations;
            const auto out = tsne2(x, options);
            CHECK(std::isfinite(kl_divergence(p, out.points)));
        }
    }

    TEST_CASE("infeasible perplexity") {
        const Eigen::MatrixXd x = Eigen::MatrixXd::Random(20, 3);
        TsneOptions options;
        options.perplexity = 7.0;
        CHECK_THROWS_AS(tsne2(x, options), DataError);
        options.perplexity = 1.5;
        CHECK_THROWS_AS(tsne2(x, options), UsageError);
    }
}

TEST_SUITE("export") {
    TEST_CASE("two points give a three-line csv") {
        testing::TempDir dir;
        Projection2D p;
        p.points.resize(2, 2);
        p.points << 0.5, -1.25, 3.0, 4.0;
        export_projection(p, manifest_for(2), dir / "p.csv");
        const auto text = testing::read_text(dir / "p.csv");
        CHECK(std::count(text.begin(), text.end(), '\n') == 3);
        CHECK(text.rfind("id,tone,corpus,x,y,method\n", 0) == 0);
    }

    TEST_CASE("round-trip recovers coordinates to float32 precision") {
        testing::TempDir dir;
        std::mt19937_64 rng(71);
        const Eigen::MatrixXd x = testing::gaussian(12, 4, rng) * 1000.0;
        auto p = pca2(x);
        export_projection(p, manifest_for(12), dir / "p.csv", true);
        const auto rows = read_projection_csv(dir / "p.csv");
        REQUIRE(rows.size() == 12);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            CHECK(rows[i].x == doctest::Approx(p.points(k, 0)).epsilon(1e-7));
            CHECK(rows[i].y == doctest::Approx(p.points(k, 1)).epsilon(1e-7));
            CHECK(rows[i].method == "pca");
        }
        CHECK(rows[3].tone == "calm");
    }

    TEST_CASE("t-SNE metadata line records the seed") {
        testing::TempDir dir;
        std::mt19937_64 rng(72);
        TsneOptions options;
        options.perplexity = 3.0;
        options.iterations = 50;
        options.seed = 1234;
        const auto p = tsne2(testing::gaussian(12, 3, rng), options);
        export_projection(p, manifest_for(12), dir / "t.csv", true);
        const auto text = testing::read_text(dir / "t.csv");
        CHECK(text.rfind("# method=tsne", 0) == 0);
        CHECK(text.find("seed=1234") != std::string::npos);
        CHECK(read_projection_csv(dir / "t.csv").size() == 12);
    }

    TEST_CASE("manifest length mismatch") {
        testing::TempDir dir;
        Projection2D p;
        p.points = Points2D::Zero(3, 2);
        CHECK_THROWS_AS(export_projection(p, manifest_for(2), dir / "p.csv"), DataError);
        CHECK_THROWS_AS(export_projection_svg(p, manifest_for(2), dir / "p.svg", "t"), DataError);
    }

    TEST_CASE("svg has a circle per point and a legend") {
        testing::TempDir dir;
        std::mt19937_64 rng(73);
        const auto p = pca2(testing::gaussian(10, 3, rng));
        export_projection_svg(p, manifest_for(10), dir / "p.svg", "Test");
        const auto text = testing::read_text(dir / "p.svg");
        CHECK(text.find("width=\"800\"") != std::string::npos);
        CHECK(text.find("height=\"600\"") != std::string::npos);
        std::size_t circles = 0;
        for (std::size_t pos = 0; (pos = text.find("<circle", pos)) != std::string::npos; ++pos) {
            ++circles;
        }
        CHECK(circles >= 10);
        CHECK(text.find("angry") != std::string::npos);
        CHECK(text.find("calm") != std::string::npos);
    }
}
