#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace residuum {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// One row per utterance. Stored on disk as float32, computed on in double.
using EmbeddingMatrix = Matrix<double>;

/// Class indices into a LabelSet, one per row.
using Labels = std::vector<std::size_t>;

// ---------------------------------------------------------------------------
// EMBX binary format
//
//   bytes 0-3    magic "EMBX"
//   byte  4      version (1)
//   bytes 5-8    rows, uint32 little-endian
//   bytes 9-12   cols, uint32 little-endian
//   bytes 13-16  reserved, zero
//   then rows*cols IEEE-754 float32 little-endian values, row-major
// ---------------------------------------------------------------------------

inline constexpr std::size_t kEmbxHeaderSize = 17;
inline constexpr std::uint8_t kEmbxVersion = 1;

/// Throws DataError unless the matrix is non-empty and finite.
void validate_embeddings(const EmbeddingMatrix& matrix);

std::vector<std::uint8_t> encode_embx(const EmbeddingMatrix& matrix);
EmbeddingMatrix decode_embx(std::span<const std::uint8_t> bytes);

EmbeddingMatrix read_embeddings(const std::filesystem::path& path);
void write_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path);

/// Gathers rows in the given order.
EmbeddingMatrix select_rows(const EmbeddingMatrix& matrix, std::span<const std::size_t> rows);

/// Scales every row to unit L2 norm (zero rows are left untouched).
EmbeddingMatrix normalize_rows(const EmbeddingMatrix& matrix);

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

enum class Corpus { business, positive_conversational, negative_conversational, synthetic };

std::string_view to_string(Corpus corpus);
Corpus parse_corpus(std::string_view name);

struct UtteranceRecord {
    std::string id;
    Corpus corpus = Corpus::synthetic;
    std::string transcript_key;
    std::string tone;
    std::string speaker;
};

/// Ordered distinct class names; the class index of a label is its position.
class LabelSet {
public:
    LabelSet() = default;
    explicit LabelSet(std::vector<std::string> labels);

    /// Distinct values in order of first appearance.
    static LabelSet from_first_appearance(std::span<const std::string> values);

    std::size_t size() const noexcept { return labels_.size(); }
    bool empty() const noexcept { return labels_.empty(); }
    const std::string& operator[](std::size_t index) const { return labels_.at(index); }
    const std::vector<std::string>& labels() const noexcept { return labels_; }

    bool contains(std::string_view label) const noexcept;
    std::size_t index_of(std::string_view label) const;

    friend bool operator==(const LabelSet&, const LabelSet&) = default;

private:
    std::vector<std::string> labels_;
};

/// Dataset-level metadata carried by the optional "#" header line.
struct DatasetMeta {
    std::string speech_model;
    std::string text_model;
    std::string content_hash;
};

struct Manifest {
    std::vector<UtteranceRecord> entries;
    LabelSet label_set;
    std::optional<DatasetMeta> meta;

    std::size_t size() const noexcept { return entries.size(); }
    Labels class_indices() const;
    std::vector<std::string> transcript_keys() const;
};

/// Builds the label set and checks id uniqueness and required fields.
Manifest make_manifest(std::vector<UtteranceRecord> entries, std::optional<DatasetMeta> meta = std::nullopt);

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// Lowercase hex SHA-256 over the concatenated bytes of the given files.
std::string content_hash(std::span<const std::filesystem::path> files);

/// Checks row counts against the manifest, and the content hash when the manifest carries one.
void check_alignment(const Manifest& manifest,
                     std::span<const std::filesystem::path> embedding_files,
                     std::span<const EmbeddingMatrix* const> matrices);

// ---------------------------------------------------------------------------
// Train/test split
// ---------------------------------------------------------------------------

struct SplitPlan {
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
    std::uint64_t seed = 0;
    double ratio = 0.2;
    bool stratified = true;
    bool grouped = false;
    std::vector<std::string> warnings;
};

inline constexpr double kDefaultTestRatio = 0.2;
inline constexpr std::uint64_t kDefaultSeed = 42;

/// Number of test items for a pool of `size` items: round(size * ratio), at least one and at most
/// size - 1 whenever size >= 2, and zero for a single item.
std::size_t test_count(std::size_t size, double ratio);

/// Deterministic split of manifest rows; `ratio` is the test fraction. With `group_by_transcript`
/// every rendition of a transcript lands on the same side and stratification is not applied.
SplitPlan make_split(const Manifest& manifest, double ratio, std::uint64_t seed, bool stratified,
                     bool group_by_transcript = false);

void write_split(const SplitPlan& plan, const std::filesystem::path& path);
SplitPlan read_split(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Seeds
// ---------------------------------------------------------------------------

/// Derives an independent stream seed for a named pipeline stage from the global seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage);

} // namespace residuum
