// Copyright 2026 The dpfl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DPFL_COMMON_ERROR_HPP_
#define DPFL_COMMON_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace dpfl {

enum class ErrorCode {
  kInvalidArgument,
  kRangeError,
  kEmptyBatch,
  kDecryptionFailure,
  kProtocolError,
};

inline std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return "invalid-argument";
    case ErrorCode::kRangeError:
      return "range-error";
    case ErrorCode::kEmptyBatch:
      return "empty-batch";
    case ErrorCode::kDecryptionFailure:
      return "decryption-failure";
    case ErrorCode::kProtocolError:
      return "protocol-error";
  }
  return "unknown";
}

// Base of every error raised by the library. The code is stable and is what
// callers (and the CLI exit path) dispatch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  // The message without the error-code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& message)
      : Error(ErrorCode::kInvalidArgument, message) {}
};

class RangeError : public Error {
 public:
  explicit RangeError(const std::string& message)
      : Error(ErrorCode::kRangeError, message) {}
};

class EmptyBatch : public Error {
 public:
  explicit EmptyBatch(const std::string& message)
      : Error(ErrorCode::kEmptyBatch, message) {}
};

class DecryptionFailure : public Error {
 public:
  explicit DecryptionFailure(const std::string& message)
      : Error(ErrorCode::kDecryptionFailure, message) {}
};

class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& message)
      : Error(ErrorCode::kProtocolError, message) {}
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

}  // namespace dpfl

#endif  // DPFL_COMMON_ERROR_HPP_
