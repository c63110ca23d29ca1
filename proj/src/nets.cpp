#include "ssvae/nets.hpp"

#include <cmath>
#include <stdexcept>

#include "ssvae/ops.hpp"
#include "ssvae/rng.hpp"

namespace ssvae {
namespace {

Linear make_linear(std::size_t in, std::size_t out, bool bias, CounterRng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::vector<double> w(in * out);
    for (auto& v : w) v = (2.0 * rng.uniform() - 1.0) * bound;
    Linear layer{Tensor::leaf({in, out}, std::move(w), true), {}};
    if (bias) layer.bias = Tensor::zeros({out}, true);
    return layer;
}

void push_layer(std::vector<Tensor>& out, const Linear& l) {
    out.push_back(l.weight);
    if (l.bias.defined()) out.push_back(l.bias);
}

Linear clone_layer(const Linear& l) {
    Linear c{l.weight.clone_leaf(true), {}};
    if (l.bias.defined()) c.bias = l.bias.clone_leaf(true);
    return c;
}

Tensor activate(const MlpSpec& spec, const Tensor& h) {
    return spec.activation == Activation::relu ? relu(h) : leaky_relu(h, spec.slope);
}

void check_features(const Tensor& x, std::size_t expected, const char* what) {
    if (x.rank() != 2 || x.dim(1) != expected) {
        throw ShapeError(std::string(what) + ": expected [batch x " + std::to_string(expected) +
                         "], got " + shape_str(x.shape()));
    }
}

}  // namespace

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "leaky_relu"; }
std::string to_string(Likelihood l) { return l == Likelihood::bernoulli ? "bernoulli" : "gaussian"; }

Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "leaky_relu" || s == "leaky-relu") return Activation::leaky_relu;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

Likelihood parse_likelihood(const std::string& s) {
    if (s == "gaussian") return Likelihood::gaussian;
    if (s == "bernoulli") return Likelihood::bernoulli;
    throw std::invalid_argument("unknown likelihood '" + s + "'");
}

void MlpSpec::validate() const {
    if (widths.size() < 2) {
        throw std::invalid_argument("MlpSpec needs at least one hidden layer and a latent width");
    }
    for (auto w : widths) {
        if (w == 0) throw std::invalid_argument("MlpSpec widths must be positive");
    }
}

void VaeSpec::validate() const {
    mlp.validate();
    if (input_dim == 0) throw std::invalid_argument("VaeSpec input_dim must be positive");
}

std::vector<Tensor> EncoderParams::parameters() const {
    std::vector<Tensor> out;
    for (const auto& l : trunk) push_layer(out, l);
    push_layer(out, mean_head);
    push_layer(out, logvar_head);
    return out;
}

std::vector<Tensor> DecoderParams::parameters() const {
    std::vector<Tensor> out;
    for (const auto& l : layers) push_layer(out, l);
    return out;
}

std::vector<Tensor> VaeParams::parameters() const {
    auto out = encoder.parameters();
    auto dec = decoder.parameters();
    out.insert(out.end(), dec.begin(), dec.end());
    return out;
}

VaeParams VaeParams::clone() const {
    VaeParams c;
    c.spec = spec;
    for (const auto& l : encoder.trunk) c.encoder.trunk.push_back(clone_layer(l));
    c.encoder.mean_head = clone_layer(encoder.mean_head);
    c.encoder.logvar_head = clone_layer(encoder.logvar_head);
    for (const auto& l : decoder.layers) c.decoder.layers.push_back(clone_layer(l));
    c.decoder.likelihood = decoder.likelihood;
    return c;
}

std::vector<Linear> init_mlp(std::size_t input_dim, const MlpSpec& spec, std::uint64_t seed) {
    spec.validate();
    auto rng = make_rng(seed, Stream::init);
    std::vector<Linear> layers;
    std::size_t in = input_dim;
    for (auto w : spec.widths) {
        layers.push_back(make_linear(in, w, spec.use_bias, rng));
        in = w;
    }
    return layers;
}

VaeParams init_vae(const VaeSpec& spec, std::uint64_t seed) {
    spec.validate();
    auto rng = make_rng(seed, Stream::init);
    const auto& widths = spec.mlp.widths;
    const bool bias = spec.mlp.use_bias;
    const std::size_t dz = spec.mlp.latent_dim();

    VaeParams p;
    p.spec = spec;
    std::size_t in = spec.input_dim;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        p.encoder.trunk.push_back(make_linear(in, widths[i], bias, rng));
        in = widths[i];
    }
    p.encoder.mean_head = make_linear(in, dz, bias, rng);
    p.encoder.logvar_head = make_linear(in, dz, bias, rng);

    // Decoder mirrors the encoder trunk.
    in = dz;
    for (std::size_t i = widths.size() - 1; i-- > 0;) {
        p.decoder.layers.push_back(make_linear(in, widths[i], bias, rng));
        in = widths[i];
    }
    p.decoder.layers.push_back(make_linear(in, spec.input_dim, bias, rng));
    p.decoder.likelihood = spec.likelihood;
    return p;
}

Tensor linear(const Linear& layer, const Tensor& x, bool frozen) {
    const Tensor w = frozen ? layer.weight.detach() : layer.weight;
    Tensor h = matmul(x, w);
    if (layer.bias.defined()) h = add(h, frozen ? layer.bias.detach() : layer.bias);
    return h;
}

GaussianPosterior encode(const EncoderParams& enc, const MlpSpec& spec, const Tensor& x) {
    const std::size_t in = enc.trunk.empty() ? enc.mean_head.in_dim() : enc.trunk.front().in_dim();
    check_features(x, in, "encode");
    for (double v : x.data()) {
        if (!std::isfinite(v)) throw std::invalid_argument("encode: non-finite input value");
    }
    Tensor h = x;
    for (const auto& l : enc.trunk) h = activate(spec, linear(l, h));
    return {linear(enc.mean_head, h), clamp(linear(enc.logvar_head, h), kLogvarMin, kLogvarMax)};
}

Tensor reparameterize(const GaussianPosterior& post, const Tensor& noise) {
    if (noise.shape() != post.mu.shape()) {
        throw ShapeError("reparameterize: noise " + shape_str(noise.shape()) + " vs mu " +
                         shape_str(post.mu.shape()));
    }
    const Tensor eps = noise.requires_grad() ? noise.detach() : noise;
    return add(post.mu, mul(exp(scale(post.logvar, 0.5)), eps));
}

Tensor decode(const DecoderParams& dec, const MlpSpec& spec, const Tensor& z, bool frozen) {
    check_features(z, dec.layers.front().in_dim(), "decode");
    Tensor h = z;
    for (std::size_t i = 0; i < dec.layers.size(); ++i) {
        h = linear(dec.layers[i], h, frozen);
        if (i + 1 < dec.layers.size()) h = activate(spec, h);
    }
    return h;
}

}  // namespace ssvae
