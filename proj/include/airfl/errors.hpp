// Copyright 2026 The AirFL Authors
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

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace airfl {

// Invalid scalar argument (negative variance, empty list, bad schedule, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Mismatched vector/matrix dimensions.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed binary input. `offset` is the byte position where parsing failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Two inputs that must agree with each other do not (e.g. image/label counts).
class ConsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Singular Gram matrix, all-zero aggregation signals, and similar degenerate inputs.
class DegenerateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularChannelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Iterative numerical routine failed to converge.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, std::size_t iterations)
      : std::runtime_error(what + " after " + std::to_string(iterations) + " iterations"),
        iterations_(iterations) {}

  std::size_t iterations() const noexcept { return iterations_; }

 private:
  std::size_t iterations_;
};

// A learning-rate (or other) hypothesis of a convergence result does not hold.
class HypothesisViolation : public std::domain_error {
 public:
  HypothesisViolation(const std::string& what, std::vector<std::size_t> rounds = {})
      : std::domain_error(what), rounds_(std::move(rounds)) {}

  // Offending rounds, when the violation is per-round.
  const std::vector<std::size_t>& rounds() const noexcept { return rounds_; }

 private:
  std::vector<std::size_t> rounds_;
};

// Experiment configuration failed validation. Carries every failed field.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(std::vector<std::string> problems)
      : std::invalid_argument(join(problems)), problems_(std::move(problems)) {}

  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& items) {
    std::string out = "invalid configuration:";
    for (const auto& item : items) out += "\n  - " + item;
    return out;
  }

  std::vector<std::string> problems_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace airfl
