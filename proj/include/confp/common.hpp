// confp/common.hpp

// Copyright 2026  confp authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace confp {

inline constexpr const char* kVersion = "0.1.0";

// File-format versions, one per binary container.
inline constexpr std::uint32_t kMelFormatVersion = 1;
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;
inline constexpr std::uint32_t kIndexFormatVersion = 1;

/// Error category, mapped to distinct CLI exit codes.
enum class ErrorCode {
  kGeneric = 1,
  kUsage = 2,
  kConfig = 3,
  kIo = 4,
  kFormat = 5,
  kShape = 6,
  kDomain = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline Error ConfigError(const std::string& msg) { return Error(ErrorCode::kConfig, msg); }
inline Error IoError(const std::string& msg) { return Error(ErrorCode::kIo, msg); }
inline Error FormatError(const std::string& msg) { return Error(ErrorCode::kFormat, msg); }
inline Error ShapeError(const std::string& msg) { return Error(ErrorCode::kShape, msg); }
inline Error DomainError(const std::string& msg) { return Error(ErrorCode::kDomain, msg); }

}  // namespace confp
