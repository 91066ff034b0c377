#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snnkit/network.hpp"
#include "snnkit/snn.hpp"

namespace snnkit {

// IEEE CRC-32 (the zlib/PNG polynomial), over raw bytes.
std::uint32_t crc32(const void* data, std::size_t len);
std::uint32_t file_crc32(const std::string& path);  // ArtifactError if unreadable

// Binary weight container ("SNNW", little-endian, trailing CRC-32).
// Layout documented in docs/weight_format.md. Any structural or checksum
// failure raises ArtifactError.
void save_dnn_weights(const std::string& path, const NetworkSpec& net);
NetworkSpec load_dnn_weights(const std::string& path);

struct SnnArtifact {
    snn::SpikingNetwork net;
    std::uint32_t T = 0;
    snn::ConversionMode mode = snn::ConversionMode::naive;
};

void save_snn_weights(const std::string& path, const snn::SpikingNetwork& net, std::uint32_t T,
                      snn::ConversionMode mode);
SnnArtifact load_snn_weights(const std::string& path);

}  // namespace snnkit
