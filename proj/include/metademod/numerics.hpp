#pragma once

#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace metademod {

using Complex = std::complex<double>;

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Gaussian tail probability P(Z > x) for Z ~ N(0, 1).
double q_function(double x);

/// A seeded, splittable random stream.
///
/// Two streams constructed from the same (seed, stream_id) produce identical
/// sequences. Child streams are derived by hashing the parent identity with a
/// tag, so every (trial, device, purpose) combination can own an independent
/// generator without any shared state.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  // Fresh stream keyed on this stream's identity and `tag`. Does not consume
  // randomness from *this.
  RngStream derive(std::uint64_t tag) const;
  RngStream derive(std::uint64_t tag_a, std::uint64_t tag_b) const {
    return derive(tag_a).derive(tag_b);
  }

  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  double normal();                        // N(0, 1)
  std::size_t index(std::size_t n);       // uniform in [0, n)
  bool coin() { return index(2) == 1; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
};

std::uint64_t mix64(std::uint64_t x);

// Circularly symmetric complex Gaussian CN(0, variance).
Complex sample_cgaussian(RngStream& rng, double variance);

}  // namespace metademod
