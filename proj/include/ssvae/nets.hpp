#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ssvae/tensor.hpp"

namespace ssvae {

enum class Activation { leaky_relu, relu };
enum class Likelihood { gaussian, bernoulli };

std::string to_string(Activation a);
std::string to_string(Likelihood l);
Activation parse_activation(const std::string& s);
Likelihood parse_likelihood(const std::string& s);

inline constexpr double kLogvarMin = -10.0;
inline constexpr double kLogvarMax = 10.0;

// Encoder layer widths. The last entry is the latent dimension, everything
// before it is a hidden layer. {32, 16, 8} means d_x -> 32 -> 16 -> (8, 8).
struct MlpSpec {
    std::vector<std::size_t> widths{32, 16, 8};
    Activation activation = Activation::leaky_relu;
    double slope = 0.1;
    bool use_bias = true;

    std::size_t latent_dim() const { return widths.back(); }
    void validate() const;
};

struct VaeSpec {
    std::size_t input_dim = 0;
    MlpSpec mlp;
    Likelihood likelihood = Likelihood::gaussian;

    void validate() const;
};

struct Linear {
    Tensor weight;  // [in x out]
    Tensor bias;    // [out], undefined when the spec has no bias

    std::size_t in_dim() const { return weight.dim(0); }
    std::size_t out_dim() const { return weight.dim(1); }
};

struct EncoderParams {
    std::vector<Linear> trunk;
    Linear mean_head;
    Linear logvar_head;

    std::vector<Tensor> parameters() const;
};

struct DecoderParams {
    std::vector<Linear> layers;  // last layer maps to the data dimension
    Likelihood likelihood = Likelihood::gaussian;

    std::vector<Tensor> parameters() const;
};

struct VaeParams {
    VaeSpec spec;
    EncoderParams encoder;
    DecoderParams decoder;

    std::vector<Tensor> parameters() const;
    VaeParams clone() const;
};

struct GaussianPosterior {
    Tensor mu;      // [batch x d_z]
    Tensor logvar;  // [batch x d_z], clamped
};

// Fan-in scaled uniform weights U(-1/sqrt(in), 1/sqrt(in)), zero biases.
// Same spec and seed give bit-identical buffers.
VaeParams init_vae(const VaeSpec& spec, std::uint64_t seed);

// Plain MLP through spec.widths starting at input_dim, activation on every
// layer but the last.
std::vector<Linear> init_mlp(std::size_t input_dim, const MlpSpec& spec, std::uint64_t seed);

Tensor linear(const Linear& layer, const Tensor& x, bool frozen = false);

GaussianPosterior encode(const EncoderParams& enc, const MlpSpec& spec, const Tensor& x);

// z = mu + exp(logvar / 2) * noise. Noise is a constant.
Tensor reparameterize(const GaussianPosterior& post, const Tensor& noise);

// Gaussian decoders emit means, Bernoulli decoders emit logits. With
// `frozen` the weights enter the graph as constants, so no gradient reaches
// the decoder while gradients still flow back into z.
Tensor decode(const DecoderParams& dec, const MlpSpec& spec, const Tensor& z, bool frozen = false);

}  // namespace ssvae
