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

#include <stdexcept>
#include <string>

namespace pcc {

enum class SolverStatus { optimal, max_iterations, infeasible, not_run };

inline const char* to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::optimal: return "optimal";
    case SolverStatus::max_iterations: return "max_iterations";
    case SolverStatus::infeasible: return "infeasible";
    case SolverStatus::not_run: return "none";
  }
  return "none";
}

inline SolverStatus solver_status_from_string(const std::string& s) {
  if (s == "optimal") return SolverStatus::optimal;
  if (s == "max_iterations") return SolverStatus::max_iterations;
  if (s == "infeasible") return SolverStatus::infeasible;
  if (s == "none") return SolverStatus::not_run;
  throw std::invalid_argument("unknown solver status '" + s + "'");
}

}  // namespace pcc
