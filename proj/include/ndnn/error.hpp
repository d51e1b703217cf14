#pragma once

#include <stdexcept>
#include <string>

namespace ndnn {

/// Caller violated an operation's precondition (bad shape, bad config value).
class UsageError : public std::invalid_argument {
 public:
  explicit UsageError(const std::string& what) : std::invalid_argument(what) {}
};

/// A file on disk is malformed, truncated or incompatible.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

#define NDNN_REQUIRE(cond, msg)                 \
  do {                                          \
    if (!(cond)) throw ::ndnn::UsageError(msg); \
  } while (0)

}  // namespace ndnn
