// Copyright 2026 The combprep Authors
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

namespace combprep {

// Base of every error raised by the library. `kind()` is a stable
// machine-readable tag used by the command line tool's error records.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* kind() const noexcept { return "error"; }
};

#define COMBPREP_DEFINE_ERROR(Name, tag)                             \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what) : Error(what) {}          \
    const char* kind() const noexcept override { return tag; }       \
  };

COMBPREP_DEFINE_ERROR(ArgumentError, "argument")
COMBPREP_DEFINE_ERROR(ConfigError, "config")
COMBPREP_DEFINE_ERROR(CapacityError, "capacity")
COMBPREP_DEFINE_ERROR(StateError, "state")
COMBPREP_DEFINE_ERROR(EvaluationError, "evaluation")
COMBPREP_DEFINE_ERROR(MetricError, "metric")
COMBPREP_DEFINE_ERROR(ModelDomainError, "model_domain")
COMBPREP_DEFINE_ERROR(UnsupportedError, "unsupported")
COMBPREP_DEFINE_ERROR(ConvergenceError, "convergence")
COMBPREP_DEFINE_ERROR(NumericalError, "numerical")

#undef COMBPREP_DEFINE_ERROR

}  // namespace combprep
