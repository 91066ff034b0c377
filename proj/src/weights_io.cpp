#include "snnkit/weights_io.hpp"

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <vector>

#include "snnkit/errors.hpp"

namespace snnkit {

namespace {

std::array<std::uint32_t, 256> make_crc_table() {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
        t[i] = c;
    }
    return t;
}

const std::array<std::uint32_t, 256>& crc_table() {
    static const auto table = make_crc_table();
    return table;
}

constexpr char kMagic[4] = {'S', 'N', 'N', 'W'};
constexpr std::uint16_t kVersion = 1;

class Writer {
  public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u16(std::uint16_t v) { le(v); }
    void u32(std::uint32_t v) { le(v); }
    void u64(std::uint64_t v) { le(v); }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        le(bits);
    }

    void finish(const std::string& path) {
        std::uint32_t crc = crc32(buf_.data(), buf_.size());
        le(crc);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw ArtifactError("cannot open '" + path + "' for writing");
        out.write(reinterpret_cast<const char*>(buf_.data()),
                  static_cast<std::streamsize>(buf_.size()));
        if (!out) throw ArtifactError("short write to '" + path + "'");
    }

  private:
    template <typename T>
    void le(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            u8(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    std::vector<std::uint8_t> buf_;
};

class Reader {
  public:
    Reader(std::vector<std::uint8_t> buf, std::string path)
        : buf_(std::move(buf)), path_(std::move(path)) {}

    void bytes(void* p, std::size_t n) {
        if (pos_ + n > buf_.size()) throw ArtifactError("'" + path_ + "' is truncated");
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint16_t u16() { return le<std::uint16_t>(); }
    std::uint32_t u32() { return le<std::uint32_t>(); }
    std::uint64_t u64() { return le<std::uint64_t>(); }
    double f64() {
        std::uint64_t bits = le<std::uint64_t>();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::size_t remaining() const { return buf_.size() - pos_; }

  private:
    template <typename T>
    T le() {
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            v |= static_cast<T>(static_cast<T>(u8()) << (8 * i));
        }
        return v;
    }
    std::vector<std::uint8_t> buf_;
    std::string path_;
    std::size_t pos_ = 0;
};

std::uint8_t layer_tag(LayerKind kind) {
    switch (kind) {
        case LayerKind::dense: return 0;
        case LayerKind::conv2d: return 1;
        case LayerKind::maxpool2d: return 2;
        case LayerKind::dropout: return 3;
    }
    throw ArtifactError("unknown layer kind");
}

LayerKind tag_layer(std::uint8_t tag, const std::string& path) {
    switch (tag) {
        case 0: return LayerKind::dense;
        case 1: return LayerKind::conv2d;
        case 2: return LayerKind::maxpool2d;
        case 3: return LayerKind::dropout;
    }
    throw ArtifactError("'" + path + "': unknown layer tag " + std::to_string(tag));
}

void write_layer(Writer& w, const LayerSpec& l) {
    w.u8(layer_tag(l.kind));
    w.u8(l.mu.has_value() ? 1 : 0);
    w.u16(0);  // reserved
    std::uint64_t a = 0, b = 0, c = 0;
    if (l.kind == LayerKind::conv2d) {
        a = l.stride;
        b = l.pad;
    } else if (l.kind == LayerKind::maxpool2d) {
        a = l.pool_h;
        b = l.pool_w;
        c = l.pool_stride;
    }
    w.u64(a);
    w.u64(b);
    w.u64(c);
    w.f64(l.dropout_rate);
    w.f64(l.mu.value_or(0.0));
    if (l.kind == LayerKind::dense || l.kind == LayerKind::conv2d) {
        w.u32(static_cast<std::uint32_t>(l.weight.shape.size()));
        for (std::size_t d : l.weight.shape) w.u64(d);
        for (double v : l.weight.data) w.f64(v);
    } else {
        w.u32(0);
    }
}

LayerSpec read_layer(Reader& r, const std::string& path) {
    LayerSpec l;
    l.kind = tag_layer(r.u8(), path);
    const std::uint8_t flags = r.u8();
    r.u16();  // reserved
    const std::uint64_t a = r.u64();
    const std::uint64_t b = r.u64();
    const std::uint64_t c = r.u64();
    if (l.kind == LayerKind::conv2d) {
        l.stride = static_cast<std::size_t>(a);
        l.pad = static_cast<std::size_t>(b);
    } else if (l.kind == LayerKind::maxpool2d) {
        l.pool_h = static_cast<std::size_t>(a);
        l.pool_w = static_cast<std::size_t>(b);
        l.pool_stride = static_cast<std::size_t>(c);
    }
    l.dropout_rate = r.f64();
    const double mu = r.f64();
    if (flags & 1) l.mu = mu;
    const std::uint32_t wrank = r.u32();
    if (l.kind == LayerKind::dense || l.kind == LayerKind::conv2d) {
        std::vector<std::size_t> shape(wrank);
        for (auto& d : shape) d = static_cast<std::size_t>(r.u64());
        l.weight = Tensor::zeros(shape);
        for (double& v : l.weight.data) v = r.f64();
    } else if (wrank != 0) {
        throw ArtifactError("'" + path + "': weight block on a weightless layer");
    }
    return l;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArtifactError("cannot open '" + path + "'");
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
    return buf;
}

// Checks magic + CRC and returns a reader positioned past the magic, with the
// trailing checksum stripped.
Reader open_container(const std::string& path) {
    std::vector<std::uint8_t> buf = read_file(path);
    if (buf.size() < 4 + 4 || std::memcmp(buf.data(), kMagic, 4) != 0) {
        throw ArtifactError("'" + path + "' is not a weight container");
    }
    const std::size_t body = buf.size() - 4;
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(buf[body + i]) << (8 * i);
    if (crc32(buf.data(), body) != stored) {
        throw ArtifactError("'" + path + "': checksum mismatch");
    }
    buf.resize(body);
    Reader r(std::move(buf), path);
    char magic[4];
    r.bytes(magic, 4);
    return r;
}

struct Header {
    std::uint8_t kind;
    std::uint8_t conv_mode;
    std::uint32_t T;
    std::vector<std::size_t> input_shape;
    std::uint32_t layer_count;
};

Header read_header(Reader& r, const std::string& path) {
    Header h;
    const std::uint16_t version = r.u16();
    if (version != kVersion) {
        throw ArtifactError("'" + path + "': unsupported container version " +
                            std::to_string(version));
    }
    h.kind = r.u8();
    h.conv_mode = r.u8();
    h.T = r.u32();
    const std::uint32_t rank = r.u32();
    h.input_shape.resize(rank);
    for (auto& d : h.input_shape) d = static_cast<std::size_t>(r.u64());
    h.layer_count = r.u32();
    return h;
}

void write_header(Writer& w, std::uint8_t kind, std::uint8_t conv_mode, std::uint32_t T,
                  const std::vector<std::size_t>& input_shape, std::size_t layer_count) {
    w.bytes(kMagic, 4);
    w.u16(kVersion);
    w.u8(kind);
    w.u8(conv_mode);
    w.u32(T);
    w.u32(static_cast<std::uint32_t>(input_shape.size()));
    for (std::size_t d : input_shape) w.u64(d);
    w.u32(static_cast<std::uint32_t>(layer_count));
}

}  // namespace

std::uint32_t crc32(const void* data, std::size_t len) {
    const auto& table = crc_table();
    const auto* p = static_cast<const std::uint8_t*>(data);
    std::uint32_t c = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i) c = table[(c ^ p[i]) & 0xFF] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

std::uint32_t file_crc32(const std::string& path) {
    std::vector<std::uint8_t> buf = read_file(path);
    return crc32(buf.data(), buf.size());
}

void save_dnn_weights(const std::string& path, const NetworkSpec& net) {
    validate_network(net);
    Writer w;
    write_header(w, 0, 255, 0, net.input_shape, net.layers.size());
    for (const auto& l : net.layers) write_layer(w, l);
    w.finish(path);
}

NetworkSpec load_dnn_weights(const std::string& path) {
    Reader r = open_container(path);
    Header h = read_header(r, path);
    if (h.kind != 0) throw ArtifactError("'" + path + "' holds spiking weights, not a DNN");
    NetworkSpec net;
    net.input_shape = h.input_shape;
    net.layers.reserve(h.layer_count);
    for (std::uint32_t i = 0; i < h.layer_count; ++i) net.layers.push_back(read_layer(r, path));
    if (r.remaining() != 0) throw ArtifactError("'" + path + "': trailing bytes");
    try {
        validate_network(net);
    } catch (const Error& e) {
        throw ArtifactError("'" + path + "': invalid network: " + e.what());
    }
    return net;
}

void save_snn_weights(const std::string& path, const snn::SpikingNetwork& net, std::uint32_t T,
                      snn::ConversionMode mode) {
    snn::validate_spiking_network(net);
    Writer w;
    write_header(w, 1, static_cast<std::uint8_t>(mode), T, net.input_shape, net.layers.size());
    for (const auto& l : net.layers) {
        write_layer(w, l.spec);
        w.f64(l.vth);
        w.f64(l.beta);
        w.f64(l.lam);
        w.f64(l.delta);
    }
    w.finish(path);
}

SnnArtifact load_snn_weights(const std::string& path) {
    Reader r = open_container(path);
    Header h = read_header(r, path);
    if (h.kind != 1) throw ArtifactError("'" + path + "' holds DNN weights, not an SNN");
    if (h.conv_mode > 2) {
        throw ArtifactError("'" + path + "': unknown conversion mode tag " +
                            std::to_string(h.conv_mode));
    }
    SnnArtifact art;
    art.T = h.T;
    art.mode = static_cast<snn::ConversionMode>(h.conv_mode);
    art.net.input_shape = h.input_shape;
    art.net.layers.reserve(h.layer_count);
    for (std::uint32_t i = 0; i < h.layer_count; ++i) {
        snn::SpikingLayer l;
        l.spec = read_layer(r, path);
        l.vth = r.f64();
        l.beta = r.f64();
        l.lam = r.f64();
        l.delta = r.f64();
        art.net.layers.push_back(std::move(l));
    }
    if (r.remaining() != 0) throw ArtifactError("'" + path + "': trailing bytes");
    try {
        snn::validate_spiking_network(art.net);
    } catch (const Error& e) {
        throw ArtifactError("'" + path + "': invalid network: " + e.what());
    }
    return art;
}

}  // namespace snnkit
