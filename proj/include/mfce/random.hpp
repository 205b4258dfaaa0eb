#ifndef MFCE_RANDOM_HPP
#define MFCE_RANDOM_HPP

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace mfce {

/// Deterministic substream of a global seed, addressed by an integer path.
///
/// Streams with equal (seed, path) produce identical draws; distinct paths
/// give statistically independent streams. Because the generator state is a
/// pure function of (seed, path), results do not depend on how many sibling
/// streams other threads consume.
class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::span<const std::uint64_t> path);

    /// New stream with `element` appended to this stream's path.
    RandomStream child(std::uint64_t element) const;

    std::uint64_t seed() const { return seed_; }
    const std::vector<std::uint64_t>& path() const { return path_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1), 53-bit resolution.
    double uniform();

    /// Standard normal draw (Marsaglia polar method).
    double normal();

private:
    std::uint64_t seed_;
    std::vector<std::uint64_t> path_;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Derives the substream of `seed` addressed by `path` (non-empty).
RandomStream derive_substream(std::uint64_t seed, std::span<const std::uint64_t> path);

} // namespace mfce

#endif
