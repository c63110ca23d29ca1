#include "ssvae/param_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include "json.hpp"
#include <stdexcept>

namespace ssvae {
namespace {

static_assert(std::endian::native == std::endian::little, "parameter files assume little-endian");

constexpr char kMagic[8] = {'S', 'S', 'V', 'A', 'E', 'P', 'R', 'M'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
        throw std::runtime_error("parameter file truncated");
    }
    return v;
}

void assign(Tensor& dst, const Tensor& src) {
    if (dst.shape() != src.shape()) {
        throw std::runtime_error("parameter file tensor " + shape_str(src.shape()) +
                                 " does not match spec shape " + shape_str(dst.shape()));
    }
    auto d = dst.mutable_data();
    std::copy(src.data().begin(), src.data().end(), d.begin());
}

}  // namespace

std::string spec_json(const VaeSpec& spec) {
    nlohmann::json j;
    j["input_dim"] = spec.input_dim;
    j["widths"] = spec.mlp.widths;
    j["activation"] = to_string(spec.mlp.activation);
    j["slope"] = spec.mlp.slope;
    j["use_bias"] = spec.mlp.use_bias;
    j["likelihood"] = to_string(spec.likelihood);
    return j.dump(2);
}

void save_params(const VaeParams& params, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    const auto& spec = params.spec;
    os.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(os, kVersion);
    put<std::uint64_t>(os, spec.input_dim);
    put<std::uint64_t>(os, spec.mlp.widths.size());
    for (auto w : spec.mlp.widths) put<std::uint64_t>(os, w);
    put<std::uint8_t>(os, spec.mlp.activation == Activation::relu ? 1 : 0);
    put<double>(os, spec.mlp.slope);
    put<std::uint8_t>(os, spec.mlp.use_bias ? 1 : 0);
    put<std::uint8_t>(os, spec.likelihood == Likelihood::bernoulli ? 1 : 0);
    const auto tensors = params.parameters();
    put<std::uint64_t>(os, tensors.size());
    for (const auto& t : tensors) {
        put<std::uint64_t>(os, t.rank());
        for (auto d : t.shape()) put<std::uint64_t>(os, d);
        os.write(reinterpret_cast<const char*>(t.data().data()),
                 static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("failed writing " + path.string());

    std::ofstream side(path.string() + ".json");
    side << spec_json(spec) << '\n';
}

VaeParams load_params(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    char magic[8];
    if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error(path.string() + " is not an ssvae parameter file");
    }
    if (get<std::uint32_t>(is) != kVersion) {
        throw std::runtime_error("unsupported parameter file version in " + path.string());
    }
    VaeSpec spec;
    spec.input_dim = get<std::uint64_t>(is);
    spec.mlp.widths.resize(get<std::uint64_t>(is));
    for (auto& w : spec.mlp.widths) w = get<std::uint64_t>(is);
    spec.mlp.activation = get<std::uint8_t>(is) ? Activation::relu : Activation::leaky_relu;
    spec.mlp.slope = get<double>(is);
    spec.mlp.use_bias = get<std::uint8_t>(is) != 0;
    spec.likelihood = get<std::uint8_t>(is) ? Likelihood::bernoulli : Likelihood::gaussian;

    VaeParams params = init_vae(spec, 0);
    auto slots = params.parameters();
    const auto count = get<std::uint64_t>(is);
    if (count != slots.size()) throw std::runtime_error("parameter count mismatch in " + path.string());
    for (auto& slot : slots) {
        Shape shape(get<std::uint64_t>(is));
        for (auto& d : shape) d = get<std::uint64_t>(is);
        std::vector<double> values(shape_size(shape));
        if (!is.read(reinterpret_cast<char*>(values.data()),
                     static_cast<std::streamsize>(values.size() * sizeof(double)))) {
            throw std::runtime_error("parameter file truncated");
        }
        assign(slot, Tensor::leaf(std::move(shape), std::move(values)));
    }
    return params;
}

}  // namespace ssvae
