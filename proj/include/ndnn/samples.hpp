#pragma once

#include <span>

#include "ndnn/layers.hpp"

namespace ndnn {

/// Windowed training samples, one row per centre frame.
struct Samples {
  Matrix noisy;  // [N × ctx_in·D] flattened noisy context window
  Matrix clean;  // [N × ctx_out·D] flattened clean target frames
  Labels cd;
  Labels mono;

  std::size_t size() const { return noisy.rows(); }
  bool empty() const { return size() == 0; }

  /// Rows listed in `idx`, in that order.
  Samples gather(std::span<const std::size_t> idx) const;
  /// Rows [begin, begin + count).
  Samples range(std::size_t begin, std::size_t count) const;
};

}  // namespace ndnn
