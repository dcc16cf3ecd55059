#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "residuum/dataspec.hpp"

namespace residuum {

// Model container file:
//
//   bytes 0-3   magic "RZCT"
//   byte  4     version (1)
//   bytes 5-8   JSON header length H, uint32 little-endian
//   bytes 9..   H bytes of UTF-8 JSON header
//   then the sections, each a complete EMBX blob
//
// The header holds "kind", a free-form "meta" object and a "sections" array of
// {"name", "offset", "length"} where offsets count from the first byte after the header.

struct Container {
    std::string kind;
    nlohmann::json meta;
    std::map<std::string, EmbeddingMatrix> sections;

    const EmbeddingMatrix& section(const std::string& name) const;
};

std::vector<std::uint8_t> encode_container(const std::string& kind, const nlohmann::json& meta,
                                           const std::vector<std::pair<std::string, EmbeddingMatrix>>& sections);
Container decode_container(std::span<const std::uint8_t> bytes);

void write_container(const std::filesystem::path& path, const std::string& kind, const nlohmann::json& meta,
                     const std::vector<std::pair<std::string, EmbeddingMatrix>>& sections);
Container read_container(const std::filesystem::path& path);

} // namespace residuum
