#pragma once

// Fully connected classifier: affine layers with a shared nonlinearity
// between them and raw logits at the output.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bat/tensor.hpp"

namespace bat {

enum class Activation { Relu, Tanh };

std::string to_string(Activation activation);
Activation parse_activation(const std::string& name);

struct NetworkSpec {
    std::size_t input_dim = 2;
    // Empty means a linear model.
    std::vector<std::size_t> hidden;
    std::size_t classes = 2;
    Activation activation = Activation::Relu;

    void validate() const;
    std::vector<std::size_t> widths() const;  // input, hidden..., classes
};

struct Layer {
    std::string name;
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]
};

class Params {
   public:
    Params() = default;
    explicit Params(std::vector<Layer> layers);

    // Uniform in [-sqrt(1/fan_in), +sqrt(1/fan_in)] for weights and biases.
    static Params init(const NetworkSpec& spec, std::uint64_t seed);
    static Params zeros(const NetworkSpec& spec);

    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers() { return layers_; }

    // weight0, bias0, weight1, bias1, ...
    std::vector<Tensor> tensors() const;
    std::size_t parameter_count() const;

    // Value copy whose tensors do not track gradients.
    Params frozen() const;
    // Value copy whose tensors track gradients.
    Params trainable() const;

    // True when the layer shapes form the chain of `spec`.
    bool matches(const NetworkSpec& spec) const;

    void save(const std::filesystem::path& path) const;
    static Params load(const std::filesystem::path& path);

    std::vector<std::uint8_t> serialize() const;
    static Params deserialize(std::span<const std::uint8_t> bytes);

   private:
    std::vector<Layer> layers_;
};

class ParamsFormatError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// Infers the layer widths stored in a parameter set; the activation has to
// be supplied by the caller.
NetworkSpec spec_from_params(const Params& params, Activation activation);

Tensor forward(const NetworkSpec& spec, const Params& params, const Tensor& batch);

// One gradient tensor per parameter tensor, ordered as Params::tensors().
std::vector<Tensor> grad_params(const Tensor& loss, const Params& params);

}  // namespace bat
