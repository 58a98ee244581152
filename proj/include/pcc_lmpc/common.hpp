// Copyright 2026 The pcc_lmpc Authors
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

#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace pcc {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Raised when a caller breaks an operation's precondition (stepping an arrived
// plant, building a problem past the deadline, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A trip that did not reach the goal inside the time budget.
class IterationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require_finite(double value, const char* what) {
  if (!std::isfinite(value)) {
    throw std::invalid_argument(std::string(what) + " must be finite");
  }
}

}  // namespace pcc
