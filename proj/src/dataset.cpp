#include "snnkit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>

#include "snnkit/errors.hpp"

namespace snnkit {

namespace {

constexpr std::uint8_t kTypeU8 = 0x08;
constexpr std::uint8_t kTypeF64 = 0x0E;

std::vector<char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArtifactError("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const unsigned char* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void write_be32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

struct IdxContent {
    std::uint8_t dtype = 0;
    std::vector<std::size_t> dims;
    const unsigned char* payload = nullptr;
    std::size_t payload_len = 0;
};

IdxContent parse_idx(const std::vector<char>& bytes, const std::string& path) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 4 || p[0] != 0 || p[1] != 0) {
        throw ArtifactError(path + ": not an IDX file");
    }
    IdxContent c;
    c.dtype = p[2];
    std::size_t ndims = p[3];
    if (bytes.size() < 4 + 4 * ndims) throw ArtifactError(path + ": truncated IDX header");
    std::size_t count = 1;
    for (std::size_t i = 0; i < ndims; ++i) {
        c.dims.push_back(read_be32(p + 4 + 4 * i));
        count *= c.dims.back();
    }
    std::size_t elem = c.dtype == kTypeU8 ? 1 : c.dtype == kTypeF64 ? 8 : 0;
    if (elem == 0) throw ArtifactError(path + ": unsupported IDX element type");
    c.payload = p + 4 + 4 * ndims;
    c.payload_len = bytes.size() - 4 - 4 * ndims;
    if (c.payload_len != count * elem) throw ArtifactError(path + ": IDX payload size mismatch");
    return c;
}

double read_be_f64(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits = (bits << 8) | p[i];
    double v;
    static_assert(sizeof(v) == 8);
    std::memcpy(&v, &bits, 8);
    return v;
}

void write_be_f64(std::ofstream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 7; i >= 0; --i) {
        b[i] = static_cast<unsigned char>(bits & 0xFF);
        bits >>= 8;
    }
    out.write(reinterpret_cast<const char*>(b), 8);
}

}  // namespace

Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path,
                         bool normalize) {
    auto img_bytes = read_file(images_path);
    auto lab_bytes = read_file(labels_path);
    IdxContent img = parse_idx(img_bytes, images_path);
    IdxContent lab = parse_idx(lab_bytes, labels_path);
    if (img.dims.empty()) throw ArtifactError(images_path + ": image file has no dimensions");
    if (lab.dims.size() != 1) throw ArtifactError(labels_path + ": labels must be 1-D");
    if (lab.dtype != kTypeU8) throw ArtifactError(labels_path + ": labels must be unsigned bytes");
    std::size_t n = img.dims[0];
    if (lab.dims[0] != n) {
        throw ArtifactError("image/label count mismatch: " + std::to_string(n) + " vs " +
                            std::to_string(lab.dims[0]));
    }
    std::vector<std::size_t> item_shape(img.dims.begin() + 1, img.dims.end());
    if (item_shape.empty()) item_shape = {1};
    std::size_t item = shape_size(item_shape);

    Dataset ds;
    ds.inputs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor t = Tensor::zeros(item_shape);
        if (img.dtype == kTypeU8) {
            const unsigned char* row = img.payload + i * item;
            double scale = normalize ? 1.0 / 255.0 : 1.0;
            for (std::size_t k = 0; k < item; ++k) t.data[k] = row[k] * scale;
        } else {
            const unsigned char* row = img.payload + i * item * 8;
            for (std::size_t k = 0; k < item; ++k) t.data[k] = read_be_f64(row + k * 8);
        }
        ds.inputs.push_back(std::move(t));
    }
    int max_label = 0;
    ds.labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        int l = lab.payload[i];
        max_label = std::max(max_label, l);
        ds.labels.push_back(l);
    }
    ds.num_classes = static_cast<std::size_t>(max_label) + 1;
    return ds;
}

void save_idx_images(const std::string& path, const std::vector<Tensor>& images) {
    if (images.empty()) throw ArgumentError("save_idx_images: empty set");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ArtifactError("cannot write " + path);
    const auto& shape = images.front().shape;
    for (const auto& t : images) {
        if (t.shape != shape) throw DimensionError("save_idx_images: inhomogeneous shapes");
    }
    unsigned char header[4] = {0, 0, kTypeF64, static_cast<unsigned char>(shape.size() + 1)};
    out.write(reinterpret_cast<const char*>(header), 4);
    write_be32(out, static_cast<std::uint32_t>(images.size()));
    for (std::size_t d : shape) write_be32(out, static_cast<std::uint32_t>(d));
    for (const auto& t : images) {
        for (double v : t.data) write_be_f64(out, v);
    }
    if (!out) throw ArtifactError("write failed for " + path);
}

void save_idx_labels(const std::string& path, const std::vector<int>& labels) {
    if (labels.empty()) throw ArgumentError("save_idx_labels: empty set");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ArtifactError("cannot write " + path);
    unsigned char header[4] = {0, 0, kTypeU8, 1};
    out.write(reinterpret_cast<const char*>(header), 4);
    write_be32(out, static_cast<std::uint32_t>(labels.size()));
    for (int l : labels) {
        if (l < 0 || l > 255) throw ArgumentError("label out of byte range");
        auto b = static_cast<unsigned char>(l);
        out.write(reinterpret_cast<const char*>(&b), 1);
    }
    if (!out) throw ArtifactError("write failed for " + path);
}

Dataset make_blobs(const BlobsConfig& cfg) {
    if (cfg.classes < 2 || cfg.dim == 0 || cfg.count == 0) {
        throw ArgumentError("make_blobs: need >=2 classes, dim >= 1, count >= 1");
    }
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Class centers come from their own RNG so two splits with the same
    // structure_seed describe the same classification problem while their
    // sampling seeds vary the noise.
    std::mt19937_64 center_rng(cfg.structure_seed);
    std::vector<std::vector<double>> centers(cfg.classes, std::vector<double>(cfg.dim));
    for (auto& c : centers) {
        double norm = 0.0;
        for (double& v : c) {
            v = gauss(center_rng);
            norm += v * v;
        }
        norm = std::sqrt(std::max(norm, 1e-12));
        for (double& v : c) v = v / norm * cfg.separation;
    }

    Dataset ds;
    ds.num_classes = cfg.classes;
    ds.inputs.reserve(cfg.count);
    ds.labels.reserve(cfg.count);
    for (std::size_t i = 0; i < cfg.count; ++i) {
        int label = static_cast<int>(i % cfg.classes);
        Tensor t = Tensor::zeros({cfg.dim});
        for (std::size_t k = 0; k < cfg.dim; ++k) {
            t.data[k] = centers[label][k] + cfg.noise * gauss(rng);
        }
        ds.inputs.push_back(std::move(t));
        ds.labels.push_back(label);
    }
    return ds;
}

Dataset make_arcs(const ArcsConfig& cfg) {
    if (cfg.dim < 2 || cfg.count == 0) {
        throw ArgumentError("make_arcs: need dim >= 2 and count >= 1");
    }
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);

    Dataset ds;
    ds.num_classes = 2;
    ds.inputs.reserve(cfg.count);
    ds.labels.reserve(cfg.count);
    for (std::size_t i = 0; i < cfg.count; ++i) {
        int label = static_cast<int>(i % 2);
        double th = angle(rng);
        double x, y;
        if (label == 0) {
            x = std::cos(th);
            y = std::sin(th);
        } else {
            x = 1.0 - std::cos(th);
            y = 0.5 - std::sin(th);
        }
        Tensor t = Tensor::zeros({cfg.dim});
        t.data[0] = x + cfg.noise * gauss(rng);
        t.data[1] = y + cfg.noise * gauss(rng);
        for (std::size_t k = 2; k < cfg.dim; ++k) t.data[k] = cfg.noise * gauss(rng);
        ds.inputs.push_back(std::move(t));
        ds.labels.push_back(label);
    }
    return ds;
}

}  // namespace snnkit
