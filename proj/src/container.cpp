#include "residuum/container.hpp"

#include <array>
#include <fstream>
#include <iterator>

#include "residuum/error.hpp"

namespace residuum {

namespace {

constexpr std::array<char, 4> kMagic{'R', 'Z', 'C', 'T'};
constexpr std::uint8_t kVersion = 1;
constexpr std::size_t kPreamble = 9;

} // namespace

const EmbeddingMatrix& Container::section(const std::string& name) const {
    const auto it = sections.find(name);
    if (it == sections.end()) {
        throw DataError("container has no section '" + name + "'");
    }
    return it->second;
}

std::vector<std::uint8_t> encode_container(const std::string& kind, const nlohmann::json& meta,
                                           const std::vector<std::pair<std::string, EmbeddingMatrix>>& sections) {
    std::vector<std::uint8_t> payload;
    nlohmann::ordered_json index = nlohmann::ordered_json::array();
    for (const auto& [name, matrix] : sections) {
        const auto blob = encode_embx(matrix);
        index.push_back({{"name", name}, {"offset", payload.size()}, {"length", blob.size()}});
        payload.insert(payload.end(), blob.begin(), blob.end());
    }

    nlohmann::ordered_json header;
    header["kind"] = kind;
    header["meta"] = meta;
    header["sections"] = index;
    const std::string text = header.dump();

    std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
    out.push_back(kVersion);
    const auto length = static_cast<std::uint32_t>(text.size());
    for (int shift = 0; shift < 32; shift += 8) {
        out.push_back(static_cast<std::uint8_t>((length >> shift) & 0xffu));
    }
    out.insert(out.end(), text.begin(), text.end());
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

Container decode_container(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kPreamble || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
        throw DataError("not a model container (bad magic)");
    }
    if (bytes[4] != kVersion) {
        throw DataError("unsupported container version " + std::to_string(bytes[4]));
    }
    std::uint32_t length = 0;
    for (int i = 3; i >= 0; --i) {
        length = (length << 8) | bytes[5 + static_cast<std::size_t>(i)];
    }
    if (bytes.size() < kPreamble + length) {
        throw DataError("container header truncated");
    }
    const auto body = bytes.subspan(kPreamble + length);

    Container container;
    try {
        const auto header = nlohmann::json::parse(bytes.begin() + kPreamble, bytes.begin() + kPreamble + length);
        container.kind = header.at("kind").get<std::string>();
        container.meta = header.at("meta");
        for (const auto& entry : header.at("sections")) {
            const auto offset = entry.at("offset").get<std::size_t>();
            const auto size = entry.at("length").get<std::size_t>();
            if (offset + size > body.size()) {
                throw DataError("container section '" + entry.at("name").get<std::string>() + "' out of bounds");
            }
            container.sections.emplace(entry.at("name").get<std::string>(), decode_embx(body.subspan(offset, size)));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed container header: ") + e.what());
    }
    return container;
}

void write_container(const std::filesystem::path& path, const std::string& kind, const nlohmann::json& meta,
                     const std::vector<std::pair<std::string, EmbeddingMatrix>>& sections) {
    const auto bytes = encode_container(kind, meta, sections);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Container read_container(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return decode_container(bytes);
}

} // namespace residuum
