#pragma once

#include <cstdint>
#include <optional>

#include <Eigen/Dense>

#include "residuum/dataspec.hpp"

namespace residuum {

/// Additive generative model: speech = mixing * text + tone_offset[tone] + noise.
struct SynthConfig {
    int n_sentences = 132;
    int n_tones = 12;
    int text_dims = 32;
    int speech_dims = 48;
    std::optional<Eigen::MatrixXd> mixing; // speech_dims x text_dims; standard normal entries when unset
    double tone_scale = 1.0;               // norm of every tone offset
    double noise_scale = 0.1;              // standard deviation of the isotropic noise
    std::uint64_t seed = kDefaultSeed;
    double min_tone_angle_degrees = 60.0;
    int max_attempts_per_tone = 10000;
};

struct SynthDataset {
    EmbeddingMatrix text;   // one row per (sentence, tone), sentence-major
    EmbeddingMatrix speech;
    Manifest manifest;
    Eigen::MatrixXd mixing;       // speech_dims x text_dims
    Eigen::MatrixXd tone_offsets; // n_tones x speech_dims
};

/// Throws UsageError on out-of-range fields.
void validate(const SynthConfig& config);

/// Tone names used for the first tones; later ones are named tone_<index>.
std::string tone_name(int index);

SynthDataset generate(const SynthConfig& config);

} // namespace residuum
