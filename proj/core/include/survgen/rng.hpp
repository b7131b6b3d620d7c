#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace survgen {

// Deterministic random stream. All stochastic behaviour in the library goes
// through this type so that (seed, stream path) fully determines every draw,
// independent of call ordering elsewhere in the program.
//
// Streams are derived by hashing the root seed with a path of tags
// (e.g. {kStreamMask, epoch, sample}); sibling streams never interact.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}

    // Uniform double in [0, 1).
    double uniform();
    // Uniform double in the open interval (0, 1].
    double uniform_open();
    // Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n);
    // Standard normal via Box-Muller (explicit algorithm, no library variance).
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    // Exponential with the given rate (> 0).
    double exponential(double rate);
    // Gamma(shape, 1) via Marsaglia-Tsang, boosted for shape < 1.
    double gamma(double shape);
    // Beta(a, b) as Ga / (Ga + Gb).
    double beta(double a, double b);
    // Bernoulli(p) as byte.
    bool bernoulli(double p) { return uniform() < p; }

    // Fisher-Yates permutation of {0, .., n-1}.
    std::vector<std::size_t> permutation(std::size_t n);
    // Sample k distinct indices from {0, .., n-1}, ascending order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

    std::uint64_t raw() { return engine_(); }

private:
    std::mt19937_64 engine_;
    bool have_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

// SplitMix64 finalizer; the basis of stream derivation.
std::uint64_t mix64(std::uint64_t x);

// Hash a root seed with a tag path into a stream seed.
std::uint64_t derive_key(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

// Derive an independent stream from a root seed and a tag path.
RngStream make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

// Stream tags used across the library. Keeping them in one place guarantees
// two different purposes never collide on the same derived stream.
inline constexpr std::uint64_t kStreamInit = 0x01;
inline constexpr std::uint64_t kStreamShuffle = 0x02;
inline constexpr std::uint64_t kStreamPatchSample = 0x03;
inline constexpr std::uint64_t kStreamMask = 0x04;
inline constexpr std::uint64_t kStreamKernel = 0x05;
inline constexpr std::uint64_t kStreamRisk = 0x10;
inline constexpr std::uint64_t kStreamPatchNoise = 0x11;
inline constexpr std::uint64_t kStreamGeneNoise = 0x12;
inline constexpr std::uint64_t kStreamCensor = 0x13;
inline constexpr std::uint64_t kStreamSignalPick = 0x14;
inline constexpr std::uint64_t kStreamGeometry = 0x15;
inline constexpr std::uint64_t kStreamAnchor = 0x16;

} // namespace survgen
