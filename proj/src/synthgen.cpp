#include "residuum/synthgen.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "residuum/error.hpp"

namespace residuum {

namespace {

constexpr std::array<const char*, 12> kToneNames{"formal",   "conversational", "promotional", "meditative",
                                                 "furious",  "angry",          "cheerful",    "sad",
                                                 "excited",  "calm",           "sarcastic",   "whispering"};

Eigen::VectorXd gaussian_vector(Eigen::Index size, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd v(size);
    for (Eigen::Index i = 0; i < size; ++i) {
        v(i) = normal(rng);
    }
    return v;
}

Eigen::VectorXd unit_vector(Eigen::Index size, std::mt19937_64& rng) {
    for (;;) {
        Eigen::VectorXd v = gaussian_vector(size, rng);
        const double norm = v.norm();
        if (norm > 0.0) {
            return v / norm;
        }
    }
}

std::string padded(int value) {
    char buffer[16];
    std::snprintf(buffer, sizeof(buffer), "%04d", value);
    return buffer;
}

} // namespace

void validate(const SynthConfig& config) {
    if (config.n_sentences < 2 || config.n_tones < 2) {
        throw UsageError("synthetic data needs at least 2 sentences and 2 tones");
    }
    if (config.text_dims < 2 || config.speech_dims < 2) {
        throw UsageError("synthetic embedding dimensions must be at least 2");
    }
    if (!(config.tone_scale >= 0.0) || !(config.noise_scale >= 0.0) || !std::isfinite(config.tone_scale) ||
        !std::isfinite(config.noise_scale)) {
        throw UsageError("tone and noise scales must be finite and nonnegative");
    }
    if (config.mixing && (config.mixing->rows() != config.speech_dims || config.mixing->cols() != config.text_dims ||
                          !config.mixing->allFinite())) {
        throw UsageError("mixing matrix must be a finite speech_dims x text_dims matrix");
    }
    if (config.max_attempts_per_tone < 1) {
        throw UsageError("max_attempts_per_tone must be positive");
    }
}

std::string tone_name(int index) {
    if (index >= 0 && index < static_cast<int>(kToneNames.size())) {
        return kToneNames[static_cast<std::size_t>(index)];
    }
    return "tone_" + std::to_string(index);
}

SynthDataset generate(const SynthConfig& config) {
    validate(config);
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    SynthDataset out;
    if (config.mixing) {
        out.mixing = *config.mixing;
    } else {
        out.mixing.resize(config.speech_dims, config.text_dims);
        for (Eigen::Index c = 0; c < out.mixing.cols(); ++c) {
            for (Eigen::Index r = 0; r < out.mixing.rows(); ++r) {
                out.mixing(r, c) = normal(rng);
            }
        }
    }

    Eigen::MatrixXd sentences(config.n_sentences, config.text_dims);
    for (int j = 0; j < config.n_sentences; ++j) {
        sentences.row(j) = unit_vector(config.text_dims, rng).transpose();
    }

    // Tone directions with a pairwise angle floor, resampled until they fit.
    const double max_cos = std::cos(config.min_tone_angle_degrees * std::numbers::pi / 180.0);
    out.tone_offsets.resize(config.n_tones, config.speech_dims);
    for (int c = 0; c < config.n_tones; ++c) {
        int attempts = 0;
        for (;;) {
            if (attempts == config.max_attempts_per_tone) {
                throw DataError("could not place tone " + std::to_string(c) + " at least " +
                                std::to_string(config.min_tone_angle_degrees) + " degrees from the others after " +
                                std::to_string(attempts) + " attempts");
            }
            ++attempts;
            const Eigen::VectorXd direction = unit_vector(config.speech_dims, rng);
            bool separated = true;
            for (int k = 0; k < c && separated; ++k) {
                separated = out.tone_offsets.row(k).dot(direction) <= max_cos;
            }
            if (separated) {
                out.tone_offsets.row(c) = direction.transpose();
                break;
            }
        }
    }
    out.tone_offsets *= config.tone_scale;

    const Eigen::Index rows = static_cast<Eigen::Index>(config.n_sentences) * config.n_tones;
    out.text.resize(rows, config.text_dims);
    out.speech.resize(rows, config.speech_dims);
    std::vector<UtteranceRecord> records;
    records.reserve(static_cast<std::size_t>(rows));
    Eigen::Index r = 0;
    for (int j = 0; j < config.n_sentences; ++j) {
        const Eigen::VectorXd content = out.mixing * sentences.row(j).transpose();
        for (int c = 0; c < config.n_tones; ++c, ++r) {
            out.text.row(r) = sentences.row(j);
            Eigen::VectorXd speech = content + out.tone_offsets.row(c).transpose();
            if (config.noise_scale > 0.0) {
                speech += config.noise_scale * gaussian_vector(config.speech_dims, rng);
            }
            out.speech.row(r) = speech.transpose();

            UtteranceRecord record;
            record.tone = tone_name(c);
            record.id = "s" + padded(j) + "_" + record.tone;
            record.corpus = Corpus::synthetic;
            record.transcript_key = "sentence_" + padded(j);
            record.speaker = "synthetic_speaker";
            records.push_back(std::move(record));
        }
    }
    DatasetMeta meta;
    meta.speech_model = "synthetic";
    meta.text_model = "synthetic";
    out.manifest = make_manifest(std::move(records), meta);
    return out;
}

} // namespace residuum
