#include "pap/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace pap {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

class Reader {
public:
    explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    void raw(void* dst, std::size_t n) {
        need(n);
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint: truncated file");
    }
    std::span<const unsigned char> bytes_;
    std::size_t pos_ = 0;
};

template <typename Params>
CheckpointBlob blob_from(const char* magic, std::vector<std::uint32_t> config, const Params& params) {
    CheckpointBlob blob{magic, std::move(config), {}};
    for (const auto* p : params) {
        blob.tensors.push_back(p->weights);
        blob.tensors.push_back(p->bias);
    }
    return blob;
}

template <typename Params>
void restore_into(const CheckpointBlob& blob, Params params) {
    if (blob.tensors.size() != 2 * params.size()) {
        throw CheckpointError("checkpoint: expected " + std::to_string(2 * params.size()) + " tensors, found " +
                              std::to_string(blob.tensors.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        const Tensor& w = blob.tensors[2 * i];
        const Tensor& b = blob.tensors[2 * i + 1];
        if (!(w.shape() == p.weights.shape()) || !(b.shape() == p.bias.shape())) {
            throw CheckpointError("checkpoint: shape mismatch in layer " + p.name);
        }
        p.weights = w;
        p.bias = b;
    }
}

void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("checkpoint: cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("checkpoint: write failed for " + path.string());
}

CheckpointBlob read_file(const std::filesystem::path& path, const char* magic) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CheckpointBlob blob = decode_checkpoint(bytes);
    if (blob.magic != magic) {
        throw CheckpointError("checkpoint: " + path.string() + " has magic " + blob.magic + ", expected " + magic);
    }
    return blob;
}

}  // namespace

std::vector<unsigned char> encode_checkpoint(const CheckpointBlob& blob) {
    if (blob.magic.size() != 8) throw CheckpointError("checkpoint: magic must be 8 bytes");
    std::vector<unsigned char> out(blob.magic.begin(), blob.magic.end());
    put_u32(out, static_cast<std::uint32_t>(blob.config.size()));
    for (auto v : blob.config) put_u32(out, v);
    put_u32(out, static_cast<std::uint32_t>(blob.tensors.size()));
    for (const auto& t : blob.tensors) {
        const auto dims = t.shape().dims();
        put_u32(out, static_cast<std::uint32_t>(dims.size()));
        for (int d : dims) put_u32(out, static_cast<std::uint32_t>(d));
        const auto* p = reinterpret_cast<const unsigned char*>(t.data());
        out.insert(out.end(), p, p + t.size() * sizeof(float));
    }
    return out;
}

CheckpointBlob decode_checkpoint(std::span<const unsigned char> bytes) {
    Reader r(bytes);
    CheckpointBlob blob;
    blob.magic.resize(8);
    r.raw(blob.magic.data(), 8);
    const std::uint32_t nconfig = r.u32();
    if (nconfig > 64) throw CheckpointError("checkpoint: implausible config length");
    for (std::uint32_t i = 0; i < nconfig; ++i) blob.config.push_back(r.u32());
    const std::uint32_t ntensors = r.u32();
    if (ntensors > 4096) throw CheckpointError("checkpoint: implausible tensor count");
    for (std::uint32_t i = 0; i < ntensors; ++i) {
        const std::uint32_t rank = r.u32();
        if (rank < 1 || rank > Shape::kMaxRank) throw CheckpointError("checkpoint: bad tensor rank");
        std::vector<int> dims;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::uint32_t e = r.u32();
            if (e == 0 || e > (1u << 28)) throw CheckpointError("checkpoint: bad tensor extent");
            dims.push_back(static_cast<int>(e));
        }
        Tensor t{Shape(std::span<const int>(dims))};
        r.raw(t.data(), t.size() * sizeof(float));
        blob.tensors.push_back(std::move(t));
    }
    if (!r.done()) throw CheckpointError("checkpoint: trailing bytes");
    return blob;
}

void save_unet(const UNet& model, const std::filesystem::path& path) {
    const auto& c = model.config();
    write_file(path, encode_checkpoint(blob_from(kUNetMagic,
                                                 {static_cast<std::uint32_t>(c.base_width),
                                                  static_cast<std::uint32_t>(c.in_channels)},
                                                 model.params())));
}

UNet load_unet(const std::filesystem::path& path) {
    const CheckpointBlob blob = read_file(path, kUNetMagic);
    if (blob.config.size() != 2) throw CheckpointError("checkpoint: U-Net header needs 2 config values");
    UNet model(UNetConfig{static_cast<int>(blob.config[0]), static_cast<int>(blob.config[1])}, 0);
    restore_into(blob, model.params());
    return model;
}

void save_classifier(const Classifier& model, const std::filesystem::path& path) {
    const auto& c = model.config();
    const std::vector<std::uint32_t> config = {
        static_cast<std::uint32_t>(c.input_size), static_cast<std::uint32_t>(c.in_channels),
        static_cast<std::uint32_t>(c.filters[0]), static_cast<std::uint32_t>(c.filters[1]),
        static_cast<std::uint32_t>(c.filters[2]), static_cast<std::uint32_t>(c.dense_units),
        static_cast<std::uint32_t>(c.classes),
        static_cast<std::uint32_t>(std::lround(c.dropout_rate * 1e6))};
    write_file(path, encode_checkpoint(blob_from(kClassifierMagic, config, model.params())));
}

Classifier load_classifier(const std::filesystem::path& path) {
    const CheckpointBlob blob = read_file(path, kClassifierMagic);
    if (blob.config.size() != 8) throw CheckpointError("checkpoint: classifier header needs 8 config values");
    ClassifierConfig c;
    c.input_size = static_cast<int>(blob.config[0]);
    c.in_channels = static_cast<int>(blob.config[1]);
    c.filters = {static_cast<int>(blob.config[2]), static_cast<int>(blob.config[3]), static_cast<int>(blob.config[4])};
    c.dense_units = static_cast<int>(blob.config[5]);
    c.classes = static_cast<int>(blob.config[6]);
    c.dropout_rate = static_cast<double>(blob.config[7]) / 1e6;
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(std::string("checkpoint: ") + e.what());
    }
    Classifier model(c, 0);
    restore_into(blob, model.params());
    return model;
}

}  // namespace pap
