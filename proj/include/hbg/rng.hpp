#pragma once

#include <cstdint>

namespace hbg {

/// Purposes used to derive independent substreams from one experiment seed.
enum class StreamPurpose : std::uint64_t {
    instance = 1,
    trajectory = 2,
    ant = 3,
    epoch = 4,
    validation = 5,
    init = 6,
    check = 7,
};

/**
 * Counter-based 64-bit generator.
 *
 * Output i of a stream with key k is splitmix64(k + (i+1) * 0x9e3779b97f4a7c15).
 * A stream is identified by its key only, so a substream derived with
 * `stream(purpose, index)` yields the same numbers no matter which thread
 * draws them or in what order other streams are consumed.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed) : key_(mix(seed ^ 0x243f6a8885a308d3ULL)) {}

    std::uint64_t next_u64();

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform();

    /// Uniform integer in the closed range [lo, hi]; unbiased (rejection).
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    /// Child stream; depends only on this stream's key, purpose and index.
    Rng stream(StreamPurpose purpose, std::uint64_t index) const;

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

    static std::uint64_t mix(std::uint64_t z);

private:
    struct FromKey {};
    Rng(FromKey, std::uint64_t key) : key_(key) {}

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace hbg
