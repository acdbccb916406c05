// Copyright 2026 The stilab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef STILAB_ERROR_H_
#define STILAB_ERROR_H_

#include <stdexcept>
#include <string>

namespace stilab {

enum class ErrorCode {
  kInvalidArgument,
  kShapeMismatch,
  kNotFound,
  kParse,
  kDuplicate,
  kUnreachable,
  kEmptyCompletion,
  kBadMagic,
  kTruncated,
  kVersionMismatch,
  kNonFinite,
  kIo,
};

const char *ErrorCodeName(ErrorCode code);

// All library failures surface as this exception; callers switch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string &message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const { return code_; }
  // Message without the code prefix, for re-wrapping with more context.
  const std::string &detail() const { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace stilab

#endif  // STILAB_ERROR_H_
