#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snnkit/tensor.hpp"

namespace snnkit {

struct Dataset {
    std::vector<Tensor> inputs;
    std::vector<int> labels;
    std::size_t num_classes = 0;

    std::size_t size() const { return inputs.size(); }
    bool empty() const { return inputs.empty(); }
};

// IDX binary files (big-endian dims). Supported payloads: unsigned byte
// (0x08, optionally scaled to [0,1]) and double (0x0E, verbatim).
Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path,
                         bool normalize = true);
void save_idx_images(const std::string& path, const std::vector<Tensor>& images);
void save_idx_labels(const std::string& path, const std::vector<int>& labels);

// Seeded synthetic classification sets.
struct BlobsConfig {
    std::size_t classes = 4;
    std::size_t dim = 8;
    std::size_t count = 1000;
    double separation = 3.0;
    double noise = 0.5;
    std::uint64_t seed = 1;            // sampling noise
    std::uint64_t structure_seed = 1;  // class centers; share across train/test splits
};
Dataset make_blobs(const BlobsConfig& cfg);

struct ArcsConfig {
    std::size_t count = 1000;
    std::size_t dim = 2;  // first two dims carry the arcs, extras carry noise
    double noise = 0.1;
    std::uint64_t seed = 1;
};
Dataset make_arcs(const ArcsConfig& cfg);

}  // namespace snnkit
