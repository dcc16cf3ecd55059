#include "residuum/dataspec.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "residuum/error.hpp"
#include "residuum/log.hpp"

namespace residuum {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr std::array<char, 4> kMagic{'E', 'M', 'B', 'X'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t value) {
    for (int shift = 0; shift < 32; shift += 8) {
        out.push_back(static_cast<std::uint8_t>((value >> shift) & 0xffu));
    }
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
    std::uint32_t value = 0;
    for (int i = 3; i >= 0; --i) {
        value = (value << 8) | bytes[offset + static_cast<std::size_t>(i)];
    }
    return value;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw EmbxError(EmbxError::Kind::Io, "cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::string required_string(const json& record, const char* key, std::size_t line) {
    const auto it = record.find(key);
    if (it == record.end()) {
        throw DataError("manifest line " + std::to_string(line) + ": missing key '" + key + "'");
    }
    if (!it->is_string()) {
        throw DataError("manifest line " + std::to_string(line) + ": key '" + key + "' is not a string");
    }
    return it->get<std::string>();
}

} // namespace

// ---------------------------------------------------------------------------
// EMBX
// ---------------------------------------------------------------------------

void validate_embeddings(const EmbeddingMatrix& matrix) {
    if (matrix.rows() < 1 || matrix.cols() < 1) {
        throw EmbxError(EmbxError::Kind::BadShape, "embedding matrix must have at least one row and one column");
    }
    if (!matrix.allFinite()) {
        throw EmbxError(EmbxError::Kind::NonFinite, "embedding matrix contains non-finite values");
    }
}

std::vector<std::uint8_t> encode_embx(const EmbeddingMatrix& matrix) {
    validate_embeddings(matrix);
    constexpr auto kMax = static_cast<Eigen::Index>(std::numeric_limits<std::uint32_t>::max());
    if (matrix.rows() > kMax || matrix.cols() > kMax) {
        throw EmbxError(EmbxError::Kind::BadShape, "embedding matrix too large for EMBX");
    }

    std::vector<std::uint8_t> out;
    out.reserve(kEmbxHeaderSize + static_cast<std::size_t>(matrix.size()) * 4);
    out.insert(out.end(), kMagic.begin(), kMagic.end());
    out.push_back(kEmbxVersion);
    put_u32(out, static_cast<std::uint32_t>(matrix.rows()));
    put_u32(out, static_cast<std::uint32_t>(matrix.cols()));
    put_u32(out, 0);

    for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
        for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
            const auto value = static_cast<float>(matrix(r, c));
            if (!std::isfinite(value)) {
                throw EmbxError(EmbxError::Kind::NonFinite,
                                "value at row " + std::to_string(r) + " overflows float32");
            }
            put_u32(out, std::bit_cast<std::uint32_t>(value));
        }
    }
    return out;
}

EmbeddingMatrix decode_embx(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kEmbxHeaderSize) {
        throw EmbxError(EmbxError::Kind::Truncated, "EMBX header truncated");
    }
    if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
        throw EmbxError(EmbxError::Kind::BadMagic, "not an EMBX file (bad magic)");
    }
    if (bytes[4] != kEmbxVersion) {
        throw EmbxError(EmbxError::Kind::VersionMismatch,
                        "unsupported EMBX version " + std::to_string(bytes[4]));
    }
    const std::uint32_t rows = get_u32(bytes, 5);
    const std::uint32_t cols = get_u32(bytes, 9);
    if (get_u32(bytes, 13) != 0) {
        throw EmbxError(EmbxError::Kind::BadReserved, "EMBX reserved bytes are not zero");
    }
    if (rows == 0 || cols == 0) {
        throw EmbxError(EmbxError::Kind::BadShape, "EMBX declares an empty matrix");
    }
    const std::uint64_t count = std::uint64_t{rows} * cols;
    const std::uint64_t expected = kEmbxHeaderSize + count * 4;
    if (bytes.size() < expected) {
        throw EmbxError(EmbxError::Kind::Truncated,
                        "EMBX payload truncated: expected " + std::to_string(count) + " values, found " +
                            std::to_string((bytes.size() - kEmbxHeaderSize) / 4));
    }
    if (bytes.size() > expected) {
        throw EmbxError(EmbxError::Kind::TrailingBytes, "EMBX has trailing bytes after payload");
    }

    EmbeddingMatrix matrix(rows, cols);
    std::size_t offset = kEmbxHeaderSize;
    for (std::uint32_t r = 0; r < rows; ++r) {
        for (std::uint32_t c = 0; c < cols; ++c) {
            const auto value = std::bit_cast<float>(get_u32(bytes, offset));
            if (!std::isfinite(value)) {
                throw EmbxError(EmbxError::Kind::NonFinite,
                                "non-finite value at row " + std::to_string(r) + ", column " + std::to_string(c));
            }
            matrix(r, c) = value;
            offset += 4;
        }
    }
    return matrix;
}

EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    try {
        return decode_embx(bytes);
    } catch (const EmbxError& e) {
        throw EmbxError(e.kind(), path.string() + ": " + e.what());
    }
}

void write_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path) {
    const auto bytes = encode_embx(matrix);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw EmbxError(EmbxError::Kind::Io, "cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw EmbxError(EmbxError::Kind::Io, "write failed for " + path.string());
    }
}

EmbeddingMatrix select_rows(const EmbeddingMatrix& matrix, std::span<const std::size_t> rows) {
    EmbeddingMatrix out(static_cast<Eigen::Index>(rows.size()), matrix.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= static_cast<std::size_t>(matrix.rows())) {
            throw DataError("row index " + std::to_string(rows[i]) + " out of range for " +
                            std::to_string(matrix.rows()) + " rows");
        }
        out.row(static_cast<Eigen::Index>(i)) = matrix.row(static_cast<Eigen::Index>(rows[i]));
    }
    return out;
}

EmbeddingMatrix normalize_rows(const EmbeddingMatrix& matrix) {
    EmbeddingMatrix out = matrix;
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        const double norm = out.row(r).norm();
        if (norm > 0.0) {
            out.row(r) /= norm;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

std::string_view to_string(Corpus corpus) {
    switch (corpus) {
    case Corpus::business:
        return "business";
    case Corpus::positive_conversational:
        return "positive_conversational";
    case Corpus::negative_conversational:
        return "negative_conversational";
    case Corpus::synthetic:
        return "synthetic";
    }
    return "synthetic";
}

Corpus parse_corpus(std::string_view name) {
    for (auto corpus : {Corpus::business, Corpus::positive_conversational, Corpus::negative_conversational,
                        Corpus::synthetic}) {
        if (to_string(corpus) == name) {
            return corpus;
        }
    }
    throw DataError("unknown corpus '" + std::string(name) + "'");
}

LabelSet::LabelSet(std::vector<std::string> labels) : labels_(std::move(labels)) {
    std::unordered_set<std::string> seen;
    for (const auto& label : labels_) {
        if (label.empty()) {
            throw DataError("empty class label");
        }
        if (!seen.insert(label).second) {
            throw DataError("duplicate class label '" + label + "'");
        }
    }
}

LabelSet LabelSet::from_first_appearance(std::span<const std::string> values) {
    std::vector<std::string> labels;
    std::unordered_set<std::string> seen;
    for (const auto& value : values) {
        if (seen.insert(value).second) {
            labels.push_back(value);
        }
    }
    return LabelSet(std::move(labels));
}

bool LabelSet::contains(std::string_view label) const noexcept {
    return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
}

std::size_t LabelSet::index_of(std::string_view label) const {
    const auto it = std::find(labels_.begin(), labels_.end(), label);
    if (it == labels_.end()) {
        throw DataError("label '" + std::string(label) + "' is not in the label set");
    }
    return static_cast<std::size_t>(it - labels_.begin());
}

Labels Manifest::class_indices() const {
    std::unordered_map<std::string, std::size_t> lookup;
    for (std::size_t i = 0; i < label_set.size(); ++i) {
        lookup.emplace(label_set[i], i);
    }
    Labels out;
    out.reserve(entries.size());
    for (const auto& entry : entries) {
        out.push_back(lookup.at(entry.tone));
    }
    return out;
}

std::vector<std::string> Manifest::transcript_keys() const {
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (const auto& entry : entries) {
        out.push_back(entry.transcript_key);
    }
    return out;
}

Manifest make_manifest(std::vector<UtteranceRecord> entries, std::optional<DatasetMeta> meta) {
    std::unordered_set<std::string> ids;
    std::vector<std::string> tones;
    tones.reserve(entries.size());
    for (const auto& entry : entries) {
        if (entry.id.empty()) {
            throw DataError("manifest record with empty id");
        }
        if (entry.tone.empty()) {
            throw DataError("manifest record '" + entry.id + "' has an empty tone");
        }
        if (!ids.insert(entry.id).second) {
            throw DataError("duplicate manifest id '" + entry.id + "'");
        }
        tones.push_back(entry.tone);
    }
    Manifest manifest;
    manifest.label_set = LabelSet::from_first_appearance(tones);
    manifest.entries = std::move(entries);
    manifest.meta = std::move(meta);
    return manifest;
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open manifest " + path.string());
    }

    std::vector<UtteranceRecord> entries;
    std::optional<DatasetMeta> meta;
    std::unordered_set<std::string> ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        if (line.front() == '#') {
            if (line_no != 1) {
                throw DataError("manifest line " + std::to_string(line_no) + ": metadata line must come first");
            }
            const auto body = line.substr(1);
            if (body.find_first_not_of(" \t") == std::string::npos) {
                continue;
            }
            json header;
            try {
                header = json::parse(body);
            } catch (const json::parse_error& e) {
                throw DataError("manifest line 1: malformed metadata: " + std::string(e.what()));
            }
            if (!header.is_object()) {
                throw DataError("manifest line 1: metadata must be a JSON object");
            }
            DatasetMeta m;
            m.speech_model = header.value("speech_model", "");
            m.text_model = header.value("text_model", "");
            m.content_hash = header.value("content_hash", "");
            meta = m;
            continue;
        }

        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError("manifest line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
        }
        if (!record.is_object()) {
            throw DataError("manifest line " + std::to_string(line_no) + ": expected a JSON object");
        }

        UtteranceRecord entry;
        entry.id = required_string(record, "id", line_no);
        try {
            entry.corpus = parse_corpus(required_string(record, "corpus", line_no));
        } catch (const DataError& e) {
            throw DataError("manifest line " + std::to_string(line_no) + ": " + e.what());
        }
        entry.transcript_key = required_string(record, "transcript_key", line_no);
        entry.tone = required_string(record, "tone", line_no);
        entry.speaker = required_string(record, "speaker", line_no);
        if (entry.id.empty() || entry.tone.empty()) {
            throw DataError("manifest line " + std::to_string(line_no) + ": id and tone must be nonempty");
        }
        if (!ids.insert(entry.id).second) {
            throw DataError("manifest line " + std::to_string(line_no) + ": duplicate id '" + entry.id + "'");
        }
        entries.push_back(std::move(entry));
    }
    if (entries.empty()) {
        throw DataError("manifest " + path.string() + " has no records");
    }
    return make_manifest(std::move(entries), std::move(meta));
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("cannot write manifest " + path.string());
    }
    if (manifest.meta) {
        ordered_json header;
        header["speech_model"] = manifest.meta->speech_model;
        header["text_model"] = manifest.meta->text_model;
        header["content_hash"] = manifest.meta->content_hash;
        out << "# " << header.dump() << '\n';
    }
    for (const auto& entry : manifest.entries) {
        ordered_json record;
        record["id"] = entry.id;
        record["corpus"] = std::string(to_string(entry.corpus));
        record["transcript_key"] = entry.transcript_key;
        record["tone"] = entry.tone;
        record["speaker"] = entry.speaker;
        out << record.dump() << '\n';
    }
    if (!out) {
        throw DataError("write failed for manifest " + path.string());
    }
}

std::string content_hash(std::span<const std::filesystem::path> files) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 initialisation failed");
    }
    for (const auto& file : files) {
        std::ifstream in(file, std::ios::binary);
        if (!in) {
            throw DataError("cannot open " + file.string());
        }
        std::array<char, 1 << 16> buffer{};
        while (in) {
            in.read(buffer.data(), buffer.size());
            const auto got = in.gcount();
            if (got > 0) {
                EVP_DigestUpdate(ctx.get(), buffer.data(), static_cast<std::size_t>(got));
            }
        }
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int length = 0;
    EVP_DigestFinal_ex(ctx.get(), digest.data(), &length);

    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < length; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xf]);
    }
    return out;
}

void check_alignment(const Manifest& manifest,
                     std::span<const std::filesystem::path> embedding_files,
                     std::span<const EmbeddingMatrix* const> matrices) {
    for (std::size_t i = 0; i < matrices.size(); ++i) {
        const auto rows = static_cast<std::size_t>(matrices[i]->rows());
        if (rows != manifest.size()) {
            const std::string name = i < embedding_files.size() ? embedding_files[i].string() : std::to_string(i);
            throw DataError("row mismatch: " + name + " has " + std::to_string(rows) + " rows, manifest has " +
                            std::to_string(manifest.size()));
        }
    }
    if (manifest.meta && !manifest.meta->content_hash.empty()) {
        const auto actual = content_hash(embedding_files);
        if (actual != manifest.meta->content_hash) {
            throw DataError("content hash mismatch: manifest says " + manifest.meta->content_hash + ", files hash to " +
                            actual);
        }
    }
}

// ---------------------------------------------------------------------------
// Split
// ---------------------------------------------------------------------------

std::size_t test_count(std::size_t size, double ratio) {
    if (size < 2) {
        return 0;
    }
    const auto rounded = static_cast<std::size_t>(std::llround(static_cast<double>(size) * ratio));
    return std::clamp<std::size_t>(rounded, 1, size - 1);
}

SplitPlan make_split(const Manifest& manifest, double ratio, std::uint64_t seed, bool stratified,
                     bool group_by_transcript) {
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw UsageError("split ratio must lie strictly between 0 and 1");
    }
    const std::size_t n = manifest.size();
    if (n < 2) {
        throw DataError("at least two samples are required to split");
    }

    SplitPlan plan;
    plan.seed = seed;
    plan.ratio = ratio;
    plan.stratified = stratified && !group_by_transcript;
    plan.grouped = group_by_transcript;

    std::mt19937_64 rng(seed);
    std::vector<bool> in_test(n, false);

    if (group_by_transcript) {
        if (stratified) {
            plan.warnings.emplace_back("stratification is not applied when grouping by transcript");
        }
        const auto keys = manifest.transcript_keys();
        const auto groups = LabelSet::from_first_appearance(keys);
        if (groups.size() < 2) {
            throw DataError("grouped split needs at least two distinct transcripts");
        }
        std::vector<std::size_t> order(groups.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<bool> group_in_test(groups.size(), false);
        const std::size_t k = test_count(groups.size(), ratio);
        for (std::size_t i = 0; i < k; ++i) {
            group_in_test[order[i]] = true;
        }
        for (std::size_t i = 0; i < n; ++i) {
            in_test[i] = group_in_test[groups.index_of(keys[i])];
        }
    } else if (stratified) {
        const auto classes = manifest.class_indices();
        for (std::size_t c = 0; c < manifest.label_set.size(); ++c) {
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < n; ++i) {
                if (classes[i] == c) {
                    members.push_back(i);
                }
            }
            if (members.size() == 1) {
                plan.warnings.push_back("class '" + manifest.label_set[c] +
                                        "' has a single member; it is placed in the training split");
            }
            std::shuffle(members.begin(), members.end(), rng);
            const std::size_t k = test_count(members.size(), ratio);
            for (std::size_t i = 0; i < k; ++i) {
                in_test[members[i]] = true;
            }
        }
    } else {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        const std::size_t k = test_count(n, ratio);
        for (std::size_t i = 0; i < k; ++i) {
            in_test[order[i]] = true;
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        (in_test[i] ? plan.test_indices : plan.train_indices).push_back(i);
    }
    for (const auto& warning : plan.warnings) {
        log().warn("{}", warning);
    }
    return plan;
}

void write_split(const SplitPlan& plan, const std::filesystem::path& path) {
    ordered_json doc;
    doc["seed"] = plan.seed;
    doc["ratio"] = plan.ratio;
    doc["stratified"] = plan.stratified;
    doc["grouped"] = plan.grouped;
    doc["train_indices"] = plan.train_indices;
    doc["test_indices"] = plan.test_indices;
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << doc.dump(2) << '\n';
}

SplitPlan read_split(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    try {
        const auto doc = json::parse(in);
        SplitPlan plan;
        plan.seed = doc.at("seed").get<std::uint64_t>();
        plan.ratio = doc.at("ratio").get<double>();
        plan.stratified = doc.at("stratified").get<bool>();
        plan.grouped = doc.value("grouped", false);
        plan.train_indices = doc.at("train_indices").get<std::vector<std::size_t>>();
        plan.test_indices = doc.at("test_indices").get<std::vector<std::size_t>>();
        return plan;
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": malformed split file: " + e.what());
    }
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage) {
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (const char ch : stage) {
        hash ^= static_cast<std::uint8_t>(ch);
        hash *= 0x100000001b3ull;
    }
    return splitmix64(seed ^ hash);
}

} // namespace residuum
