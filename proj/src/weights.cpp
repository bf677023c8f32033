#include "slim/weights.hpp"

#include <cstring>
#include <fstream>

#include "slim/errors.hpp"
#include "slim/graph.hpp"

namespace slim {

namespace {

class ByteReader {
public:
    ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    template <typename T>
    T take(const std::string& what) {
        if (pos_ + sizeof(T) > bytes_.size())
            throw ParseError("weight stream underflow while reading " + what);
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::vector<float> take_floats(size_t n, const std::string& what) {
        if (pos_ + 4 * n > bytes_.size())
            throw ParseError("weight stream underflow while reading " + what);
        std::vector<float> out(n);
        std::memcpy(out.data(), bytes_.data() + pos_, 4 * n);
        pos_ += 4 * n;
        return out;
    }

    size_t remaining() const { return bytes_.size() - pos_; }

private:
    const std::vector<std::uint8_t>& bytes_;
    size_t pos_ = 0;
};

template <typename T>
void append(std::vector<std::uint8_t>& out, T v) {
    size_t at = out.size();
    out.resize(at + sizeof(T));
    std::memcpy(out.data() + at, &v, sizeof(T));
}

void append_floats(std::vector<std::uint8_t>& out, const std::vector<float>& v) {
    size_t at = out.size();
    out.resize(at + 4 * v.size());
    std::memcpy(out.data() + at, v.data(), 4 * v.size());
}

std::int64_t kernel_size(const ConvolutionalSpec& conv, int in_c) {
    return static_cast<std::int64_t>(conv.filters) * in_c * conv.size * conv.size;
}

} // namespace

std::int64_t float_count(const NetworkDef& def) {
    ShapeInfo shapes = infer_shapes(def);
    std::int64_t total = 0;
    for (size_t i = 0; i < def.layers.size(); ++i) {
        const LayerSpec& layer = def.layers[i];
        if (layer.kind != LayerKind::Convolutional) continue;
        int per_filter = layer.conv.batch_normalize ? 4 : 1;
        total += static_cast<std::int64_t>(per_filter) * layer.conv.filters +
                 kernel_size(layer.conv, shapes.conv_in_channels[i]);
    }
    return total;
}

WeightStore read_weights(const std::vector<std::uint8_t>& bytes, const NetworkDef& def) {
    ShapeInfo shapes = infer_shapes(def);
    ByteReader in(bytes);

    WeightStore store;
    store.major = in.take<std::int32_t>("header");
    store.minor = in.take<std::int32_t>("header");
    store.revision = in.take<std::int32_t>("header");
    if (store.major * 10 + store.minor >= 2)
        store.seen = in.take<std::uint64_t>("sample counter");
    else
        store.seen = in.take<std::uint32_t>("sample counter");

    store.layers.resize(def.layers.size());
    for (size_t i = 0; i < def.layers.size(); ++i) {
        const LayerSpec& layer = def.layers[i];
        if (layer.kind != LayerKind::Convolutional) continue;
        std::string at = "layer " + std::to_string(i);
        ConvWeights& w = store.layers[i];
        size_t n = static_cast<size_t>(layer.conv.filters);
        w.biases = in.take_floats(n, at + " biases");
        if (layer.conv.batch_normalize) {
            w.scales = in.take_floats(n, at + " scales");
            w.rolling_mean = in.take_floats(n, at + " rolling mean");
            w.rolling_variance = in.take_floats(n, at + " rolling variance");
        }
        w.kernel = in.take_floats(
            static_cast<size_t>(kernel_size(layer.conv, shapes.conv_in_channels[i])),
            at + " kernel");
    }
    if (in.remaining() != 0)
        throw ParseError("weight stream has " + std::to_string(in.remaining()) +
                         " trailing bytes");
    check_alignment(store, def);
    return store;
}

std::vector<std::uint8_t> write_weights(const WeightStore& store, const NetworkDef& def) {
    check_alignment(store, def);
    std::vector<std::uint8_t> out;
    append<std::int32_t>(out, 0);
    append<std::int32_t>(out, 2);
    append<std::int32_t>(out, 0);
    append<std::uint64_t>(out, store.seen);
    for (size_t i = 0; i < def.layers.size(); ++i) {
        if (def.layers[i].kind != LayerKind::Convolutional) continue;
        const ConvWeights& w = store.layers[i];
        append_floats(out, w.biases);
        if (def.layers[i].conv.batch_normalize) {
            append_floats(out, w.scales);
            append_floats(out, w.rolling_mean);
            append_floats(out, w.rolling_variance);
        }
        append_floats(out, w.kernel);
    }
    return out;
}

WeightStore load_weights(const std::string& path, const NetworkDef& def) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open weight file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return read_weights(bytes, def);
}

void save_weights(const WeightStore& store, const NetworkDef& def, const std::string& path) {
    auto bytes = write_weights(store, def);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ArgumentError("cannot write weight file: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

void check_alignment(const WeightStore& store, const NetworkDef& def) {
    if (store.layers.size() != def.layers.size())
        throw ValidationError("weight store has " + std::to_string(store.layers.size()) +
                              " layer records for " + std::to_string(def.layers.size()) +
                              " layers");
    ShapeInfo shapes = infer_shapes(def);
    for (size_t i = 0; i < def.layers.size(); ++i) {
        const LayerSpec& layer = def.layers[i];
        const ConvWeights& w = store.layers[i];
        std::string at = "layer " + std::to_string(i) + ": ";
        if (layer.kind != LayerKind::Convolutional) {
            if (!w.biases.empty() || !w.kernel.empty())
                throw ValidationError(at + "non-convolutional layer carries weights");
            continue;
        }
        size_t n = static_cast<size_t>(layer.conv.filters);
        if (w.biases.size() != n)
            throw ValidationError(at + "expected " + std::to_string(n) + " biases, have " +
                                  std::to_string(w.biases.size()));
        size_t bn_n = layer.conv.batch_normalize ? n : 0;
        if (w.scales.size() != bn_n || w.rolling_mean.size() != bn_n ||
            w.rolling_variance.size() != bn_n)
            throw ValidationError(at + "batch-norm tensor lengths disagree with the definition");
        for (float v : w.rolling_variance)
            if (v < 0.0f)
                throw ValidationError(at + "negative rolling variance");
        size_t k = static_cast<size_t>(kernel_size(layer.conv, shapes.conv_in_channels[i]));
        if (w.kernel.size() != k)
            throw ValidationError(at + "expected kernel of " + std::to_string(k) +
                                  " floats, have " + std::to_string(w.kernel.size()));
    }
}

} // namespace slim
