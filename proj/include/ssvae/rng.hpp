#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace ssvae {

// Counter-based generator: draw n is a pure function of (key, n), so any
// stream can be reproduced from its seed and position alone.
class CounterRng {
   public:
    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t next_u64();
    // Uniform on [0, 1).
    double uniform();
    // Uniform integer on [0, n).
    std::size_t below(std::size_t n);
    double normal();
    std::vector<double> normals(std::size_t n);

    std::uint64_t counter() const { return counter_; }

   private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t mix64(std::uint64_t x);

// Fisher-Yates permutation of [0, n).
std::vector<std::size_t> permutation(std::size_t n, CounterRng& rng);

// Named sub-streams so independent consumers never share draws.
enum class Stream : std::uint64_t {
    init = 1,
    shuffle = 2,
    normal_noise = 3,
    outlier_noise = 4,
    score_noise = 5,
    split = 6,
    subsample = 7,
    pollute = 8,
    synth = 9,
};

inline CounterRng make_rng(std::uint64_t seed, Stream stream) {
    return CounterRng(seed, static_cast<std::uint64_t>(stream));
}

}  // namespace ssvae
