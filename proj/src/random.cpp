#include "mfce/random.hpp"

#include "mfce/common.hpp"

#include <cmath>

namespace mfce {

namespace {

// SplitMix64 finalizer; mixes one 64-bit word into the key chain.
std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::mt19937_64 make_engine(std::uint64_t seed, std::span<const std::uint64_t> path) {
    std::uint64_t key = splitmix64(seed ^ 0xa5a5a5a5a5a5a5a5ULL);
    for (std::uint64_t elem : path)
        key = splitmix64(key ^ splitmix64(elem + 0x632be59bd9b4e019ULL));
    // Expand the key into four words so the full mt19937_64 state is seeded
    // through seed_seq rather than a single word.
    std::uint64_t w0 = splitmix64(key);
    std::uint64_t w1 = splitmix64(w0);
    std::uint64_t w2 = splitmix64(w1);
    std::uint64_t w3 = splitmix64(w2);
    std::seed_seq seq{static_cast<std::uint32_t>(w0), static_cast<std::uint32_t>(w0 >> 32),
                      static_cast<std::uint32_t>(w1), static_cast<std::uint32_t>(w1 >> 32),
                      static_cast<std::uint32_t>(w2), static_cast<std::uint32_t>(w2 >> 32),
                      static_cast<std::uint32_t>(w3), static_cast<std::uint32_t>(w3 >> 32)};
    return std::mt19937_64(seq);
}

} // namespace

RandomStream::RandomStream(std::uint64_t seed, std::span<const std::uint64_t> path)
    : seed_(seed), path_(path.begin(), path.end()), engine_(make_engine(seed, path)) {}

RandomStream RandomStream::child(std::uint64_t element) const {
    std::vector<std::uint64_t> p = path_;
    p.push_back(element);
    return RandomStream(seed_, p);
}

double RandomStream::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RandomStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
}

RandomStream derive_substream(std::uint64_t seed, std::span<const std::uint64_t> path) {
    if (path.empty())
        throw InvalidParameterError("derive_substream: path must be non-empty");
    return RandomStream(seed, path);
}

} // namespace mfce
