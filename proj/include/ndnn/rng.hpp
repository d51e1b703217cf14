#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "ndnn/matrix.hpp"

namespace ndnn {

/// Seeded, splittable random stream.
///
/// The bit source is std::mt19937_64, whose output sequence is fixed by the
/// standard. Real-valued draws use our own transforms (53-bit uniform,
/// Marsaglia polar normal) so sequences do not depend on the standard
/// library's distribution implementations. Child streams are derived by
/// hashing (seed, label) or (seed, index); drawing from a child never
/// advances the parent.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  /// Independent named child stream ("init", "data", "dropout", "shuffle", ...).
  RngStream substream(std::string_view label) const;
  /// Independent indexed child stream (per utterance, per network, ...).
  RngStream split(std::uint64_t index) const;

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal.
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t mix64(std::uint64_t x);

/// Glorot-uniform weights, shape [fan_out × fan_in], bound √(6/(fan_in+fan_out)).
Matrix glorot_init(std::size_t fan_in, std::size_t fan_out, RngStream& rng);

/// I.i.d. normal draws of the given shape.
Matrix gaussian(RngStream& rng, double mean, double std, std::size_t rows, std::size_t cols);

}  // namespace ndnn
