#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace wmlm {

using TokenId = std::int32_t;

// Label sentinel for positions that carry no loss.
inline constexpr std::int32_t kIgnoreLabel = -100;

inline constexpr const char* kPadToken = "[PAD]";
inline constexpr const char* kUnkToken = "[UNK]";
inline constexpr const char* kClsToken = "[CLS]";
inline constexpr const char* kSepToken = "[SEP]";
inline constexpr const char* kMaskToken = "[MASK]";
inline constexpr const char* kSubwordPrefix = "##";

// Error taxonomy mirrors the CLI exit codes: usage 2, artifact 3, numeric 4.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& msg) : Error(msg) {}
};

class ArtifactError : public Error {
 public:
  explicit ArtifactError(const std::string& msg) : Error(msg) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

}  // namespace wmlm
