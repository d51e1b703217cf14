#include "ndnn/rng.hpp"

#include <cmath>

#include "ndnn/error.hpp"

namespace ndnn {

std::uint64_t mix64(std::uint64_t x) {
  // SplitMix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

RngStream RngStream::substream(std::string_view label) const {
  return RngStream(mix64(seed_ ^ mix64(fnv1a(label))));
}

RngStream RngStream::split(std::uint64_t index) const {
  return RngStream(mix64(mix64(seed_) + 0x632be59bd9b4e019ULL * (index + 1)));
}

double RngStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
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
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

std::uint64_t RngStream::below(std::uint64_t n) {
  NDNN_REQUIRE(n > 0, "RngStream::below: n must be positive");
  // rejection sampling to avoid modulo bias
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

Matrix glorot_init(std::size_t fan_in, std::size_t fan_out, RngStream& rng) {
  NDNN_REQUIRE(fan_in >= 1 && fan_out >= 1, "glorot_init: fan_in and fan_out must be >= 1");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_out, fan_in);
  for (auto& v : w.values()) v = rng.uniform(-bound, bound);
  return w;
}

Matrix gaussian(RngStream& rng, double mean, double std, std::size_t rows, std::size_t cols) {
  NDNN_REQUIRE(std >= 0.0, "gaussian: negative std");
  Matrix m(rows, cols, mean);
  if (std == 0.0) return m;
  for (auto& v : m.values()) v = mean + std * rng.normal();
  return m;
}

}  // namespace ndnn
