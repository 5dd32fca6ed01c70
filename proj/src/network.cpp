#include "bat/network.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

namespace bat {

std::string to_string(Activation activation) { return activation == Activation::Relu ? "relu" : "tanh"; }

Activation parse_activation(const std::string& name) {
    if (name == "relu") return Activation::Relu;
    if (name == "tanh") return Activation::Tanh;
    throw std::invalid_argument("unknown activation '" + name + "' (expected relu or tanh)");
}

void NetworkSpec::validate() const {
    if (input_dim == 0) throw std::invalid_argument("network input dimension must be positive");
    if (classes < 2) throw std::invalid_argument("network needs at least 2 classes");
    for (auto w : hidden) {
        if (w == 0) throw std::invalid_argument("hidden layer width must be positive");
    }
}

std::vector<std::size_t> NetworkSpec::widths() const {
    std::vector<std::size_t> w{input_dim};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(classes);
    return w;
}

Params::Params(std::vector<Layer> layers) : layers_(std::move(layers)) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        if (l.weight.rank() != 2 || l.bias.rank() != 1 || l.bias.numel() != l.weight.cols()) {
            throw ShapeError("layer '" + l.name + "' has inconsistent weight/bias shapes");
        }
        if (i > 0 && layers_[i - 1].weight.cols() != l.weight.rows()) {
            throw ShapeError("layer '" + l.name + "' input width does not match the previous layer");
        }
    }
}

Params Params::init(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    const auto w = spec.widths();
    std::vector<Layer> layers;
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
        const double bound = std::sqrt(1.0 / static_cast<double>(w[i]));
        std::uniform_real_distribution<double> dist(-bound, bound);
        std::vector<double> weight(w[i] * w[i + 1]);
        std::vector<double> bias(w[i + 1]);
        for (auto& v : weight) v = dist(rng);
        for (auto& v : bias) v = dist(rng);
        layers.push_back({"fc" + std::to_string(i), Tensor::from({w[i], w[i + 1]}, std::move(weight)),
                          Tensor::from({w[i + 1]}, std::move(bias))});
    }
    return Params(std::move(layers)).trainable();
}

Params Params::zeros(const NetworkSpec& spec) {
    spec.validate();
    const auto w = spec.widths();
    std::vector<Layer> layers;
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
        layers.push_back({"fc" + std::to_string(i), Tensor::zeros({w[i], w[i + 1]}), Tensor::zeros({w[i + 1]})});
    }
    return Params(std::move(layers)).trainable();
}

std::vector<Tensor> Params::tensors() const {
    std::vector<Tensor> out;
    out.reserve(layers_.size() * 2);
    for (const auto& l : layers_) {
        out.push_back(l.weight);
        out.push_back(l.bias);
    }
    return out;
}

std::size_t Params::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.numel() + l.bias.numel();
    return n;
}

namespace {

Params copy_params(const std::vector<Layer>& layers, bool track) {
    std::vector<Layer> out;
    out.reserve(layers.size());
    for (const auto& l : layers) {
        Layer c{l.name, l.weight.detach(), l.bias.detach()};
        c.weight.set_requires_grad(track);
        c.bias.set_requires_grad(track);
        out.push_back(std::move(c));
    }
    return Params(std::move(out));
}

}  // namespace

Params Params::frozen() const { return copy_params(layers_, false); }

Params Params::trainable() const { return copy_params(layers_, true); }

bool Params::matches(const NetworkSpec& spec) const {
    const auto w = spec.widths();
    if (layers_.size() + 1 != w.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i].weight.rows() != w[i] || layers_[i].weight.cols() != w[i + 1]) return false;
    }
    return true;
}

// ---- BAT1 binary format -------------------------------------------------------
//
//   "BAT1"  u32 layer_count
//   per layer: u32 name_len, name bytes,
//              u32 rows, u32 cols, f64[rows*cols] weight (row-major),
//              u32 len, f64[len] bias
//
// All integers and floats little-endian.

namespace {

constexpr char kMagic[4] = {'B', 'A', 'T', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
   public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
        return v;
    }

    double f64() {
        need(8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
        return std::bit_cast<double>(bits);
    }

    std::string text(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

   private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw ParamsFormatError("params file truncated");
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> Params::serialize() const {
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    put_u32(out, static_cast<std::uint32_t>(layers_.size()));
    for (const auto& l : layers_) {
        put_u32(out, static_cast<std::uint32_t>(l.name.size()));
        out.insert(out.end(), l.name.begin(), l.name.end());
        put_u32(out, static_cast<std::uint32_t>(l.weight.rows()));
        put_u32(out, static_cast<std::uint32_t>(l.weight.cols()));
        for (double v : l.weight.data()) put_f64(out, v);
        put_u32(out, static_cast<std::uint32_t>(l.bias.numel()));
        for (double v : l.bias.data()) put_f64(out, v);
    }
    return out;
}

Params Params::deserialize(std::span<const std::uint8_t> bytes) {
    Reader in(bytes);
    if (in.text(4) != std::string(kMagic, 4)) throw ParamsFormatError("params file has bad magic (expected BAT1)");
    const auto count = in.u32();
    std::vector<Layer> layers;
    for (std::uint32_t i = 0; i < count; ++i) {
        Layer l;
        l.name = in.text(in.u32());
        const std::size_t rows = in.u32();
        const std::size_t cols = in.u32();
        std::vector<double> w(rows * cols);
        for (auto& v : w) v = in.f64();
        const std::size_t len = in.u32();
        std::vector<double> b(len);
        for (auto& v : b) v = in.f64();
        l.weight = Tensor::from({rows, cols}, std::move(w));
        l.bias = Tensor::from({len}, std::move(b));
        layers.push_back(std::move(l));
    }
    if (!in.done()) throw ParamsFormatError("params file has trailing bytes");
    try {
        return Params(std::move(layers)).trainable();
    } catch (const ShapeError& e) {
        throw ParamsFormatError(e.what());
    }
}

void Params::save(const std::filesystem::path& path) const {
    const auto bytes = serialize();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Params Params::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open params file " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

NetworkSpec spec_from_params(const Params& params, Activation activation) {
    const auto& layers = params.layers();
    if (layers.empty()) throw std::invalid_argument("parameter set has no layers");
    NetworkSpec spec;
    spec.input_dim = layers.front().weight.rows();
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) spec.hidden.push_back(layers[i].weight.cols());
    spec.classes = layers.back().weight.cols();
    spec.activation = activation;
    spec.validate();
    return spec;
}

Tensor forward(const NetworkSpec& spec, const Params& params, const Tensor& batch) {
    if (batch.rank() != 2 || batch.cols() != spec.input_dim) {
        throw ShapeError("forward: batch shape " + shape_string(batch.shape()) + " does not match input dimension " +
                         std::to_string(spec.input_dim));
    }
    if (!params.matches(spec)) throw ShapeError("forward: parameters do not match the network spec");
    Tensor h = batch;
    const auto& layers = params.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = add_row(matmul(h, layers[i].weight), layers[i].bias);
        if (i + 1 < layers.size()) h = spec.activation == Activation::Relu ? relu(h) : tanh(h);
    }
    return h;
}

std::vector<Tensor> grad_params(const Tensor& loss, const Params& params) {
    const auto ts = params.tensors();
    auto grads = gradients(loss, ts);
    std::vector<Tensor> out;
    out.reserve(ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) out.push_back(Tensor::from(ts[i].shape(), std::move(grads[i])));
    return out;
}

}  // namespace bat
