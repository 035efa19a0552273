#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace hgnn {

// Deterministic RNG front-end. std::mt19937_64 is bit-exact across
// platforms; the distribution helpers are hand-rolled because the standard
// <random> distributions are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), exact via rejection.
    std::uint64_t uniform_int(std::uint64_t n) {
        std::uint64_t x, r;
        do {
            x = eng_();
            r = x % n;
        } while (x - r > ~std::uint64_t{0} - (n - 1));
        return r;
    }

    bool bernoulli(double p) { return uniform() < p; }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_int(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
};

// FNV-1a over a tag plus salt words; derives independent substreams from one
// master seed (negative sampling per slot, per-iteration resampling, ...).
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 1099511628211ull;
        }
    };
    mix(master);
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    mix(a);
    mix(b);
    return h;
}

}  // namespace hgnn
