#ifndef DISLAB_RNG_HPP
#define DISLAB_RNG_HPP

#include <cstdint>
#include <random>

#include "dislab/tensor.hpp"

namespace dislab {

/// Deterministic random source. The raw stream is std::mt19937_64 (fully
/// specified by the standard, so seeds reproduce bit-identically across
/// platforms); uniforms take the top 53 bits, normals come from Box-Muller.
/// The distribution classes from <random> are deliberately not used because
/// their output is implementation-defined.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    /// Uniform on [0, 1).
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; the second value of each pair is cached.
    double normal();

    /// Index in [0, n).
    std::size_t index(std::size_t n);

    Tensor normal_tensor(Shape shape, double mean = 0.0, double stddev = 1.0);
    Tensor uniform_tensor(Shape shape, double lo, double hi);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        // Fisher-Yates with our own index draws (determinism across platforms).
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[index(i)]);
    }

    /// Derives an independent substream seed; splitmix64 finalizer over
    /// (seed, stream) so substreams are decorrelated and reproducible.
    static std::uint64_t substream(std::uint64_t seed, std::uint64_t stream);

  private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace dislab

#endif
