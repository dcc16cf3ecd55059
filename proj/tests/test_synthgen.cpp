#include <doctest.h>

#include "residuum/error.hpp"
#include "residuum/regression.hpp"
#include "residuum/synthgen.hpp"
#include "support.hpp"

using namespace residuum;

TEST_CASE("default shape mirrors the 1584-row dataset") {
    const auto data = generate(SynthConfig{});
    CHECK(data.text.rows() == 1584);
    CHECK(data.text.cols() == 32);
    CHECK(data.speech.rows() == 1584);
    CHECK(data.speech.cols() == 48);
    CHECK(data.manifest.size() == 1584);
    CHECK(data.manifest.label_set.size() == 12);
    CHECK(data.manifest.entries[0].corpus == Corpus::synthetic);
}

TEST_CASE("text rows repeat across the tones of a sentence") {
    SynthConfig config;
    config.n_sentences = 5;
    config.n_tones = 4;
    const auto data = generate(config);
    for (int s = 0; s < 5; ++s) {
        for (int t = 1; t < 4; ++t) {
            CHECK(data.text.row(4 * s + t) == data.text.row(4 * s));
            CHECK(data.manifest.entries[static_cast<std::size_t>(4 * s + t)].transcript_key ==
                  data.manifest.entries[static_cast<std::size_t>(4 * s)].transcript_key);
        }
        CHECK(data.text.row(4 * s).norm() == doctest::Approx(1.0));
    }
}

TEST_CASE("tone offsets have the requested norm and angle floor") {
    SynthConfig config;
    config.tone_scale = 2.5;
    const auto data = generate(config);
    for (Eigen::Index a = 0; a < 12; ++a) {
        CHECK(data.tone_offsets.row(a).norm() == doctest::Approx(2.5));
        for (Eigen::Index b = a + 1; b < 12; ++b) {
            const double cos = data.tone_offsets.row(a).dot(data.tone_offsets.row(b)) / (2.5 * 2.5);
            CHECK(cos <= 0.5 + 1e-12);
        }
    }
}

TEST_CASE("noise-free toneless data is exactly linear") {
    SynthConfig config;
    config.noise_scale = 0.0;
    config.tone_scale = 0.0;
    config.n_sentences = 40;
    config.n_tones = 3;
    const auto data = generate(config);
    CHECK((data.speech - data.text * data.mixing.transpose()).cwiseAbs().maxCoeff() == 0.0);
    const auto model = fit_ridge(data.text, data.speech, 0.0);
    CHECK(extract_residuals(model, data.text, data.speech).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("ground truth recovery from tone-averaged rows") {
    SynthConfig config;
    config.noise_scale = 0.0;
    config.n_sentences = 60;
    const auto data = generate(config);
    const auto n_tones = config.n_tones;
    Eigen::MatrixXd text(config.n_sentences, config.text_dims);
    Eigen::MatrixXd speech(config.n_sentences, config.speech_dims);
    for (int s = 0; s < config.n_sentences; ++s) {
        text.row(s) = data.text.row(s * n_tones);
        speech.row(s) = data.speech.middleRows(s * n_tones, n_tones).colwise().mean();
    }
    const auto model = fit_ridge(text, speech, 0.0);
    CHECK((model.weights - data.mixing).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("residuals cluster by tone") {
    const auto data = generate(SynthConfig{});
    const auto model = fit_ridge(data.text, data.speech, 1e-3);
    Eigen::MatrixXd r = extract_residuals(model, data.text, data.speech);
    r = r.rowwise().normalized();
    const Eigen::MatrixXd cos = r * r.transpose();
    const auto labels = data.manifest.class_indices();
    double within = 0.0;
    double between = 0.0;
    double n_within = 0.0;
    double n_between = 0.0;
    for (Eigen::Index i = 0; i < r.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < r.rows(); ++j) {
            if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)]) {
                within += cos(i, j);
                n_within += 1.0;
            } else {
                between += cos(i, j);
                n_between += 1.0;
            }
        }
    }
    CHECK(within / n_within > between / n_between);
}

TEST_CASE("same seed gives bit-identical output; other seeds differ") {
    SynthConfig config;
    config.n_sentences = 10;
    const auto a = generate(config);
    const auto b = generate(config);
    CHECK(a.text == b.text);
    CHECK(a.speech == b.speech);
    config.seed = 43;
    CHECK(generate(config).speech != a.speech);
}

TEST_CASE("supplied mixing matrix is used") {
    SynthConfig config;
    config.n_sentences = 4;
    config.n_tones = 2;
    config.text_dims = 3;
    config.speech_dims = 2;
    config.noise_scale = 0.0;
    config.tone_scale = 0.0;
    config.mixing = Eigen::MatrixXd::Identity(2, 3);
    const auto data = generate(config);
    CHECK(data.speech == data.text.leftCols(2));
}

TEST_CASE("invalid configs") {
    SynthConfig config;
    config.text_dims = 1;
    CHECK_THROWS_AS(generate(config), UsageError);
    config = SynthConfig{};
    config.n_tones = 1;
    CHECK_THROWS_AS(generate(config), UsageError);
    config = SynthConfig{};
    config.noise_scale = -1.0;
    CHECK_THROWS_AS(generate(config), UsageError);
    config = SynthConfig{};
    config.mixing = Eigen::MatrixXd::Ones(3, 3);
    CHECK_THROWS_AS(generate(config), UsageError);
}

TEST_CASE("impossible angle floor reports the attempt count") {
    SynthConfig config;
    config.speech_dims = 2;
    config.text_dims = 2;
    config.n_tones = 12;
    config.max_attempts_per_tone = 50;
    try {
        generate(config);
        FAIL("expected an error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("50") != std::string::npos);
    }
}

TEST_CASE("tone names") {
    CHECK(tone_name(0) == "formal");
    CHECK(tone_name(11) == "whispering");
    CHECK(tone_name(12) == "tone_12");
}
