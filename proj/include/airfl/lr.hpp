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

// Learning-rate schedules and the step-size caps under which the convergence
// bounds hold.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <string_view>

#include "airfl/errors.hpp"

namespace airfl {

enum class LrKind { constant, inverse_time, corollary1, corollary5, sqrt_ratio };

inline const char* to_string(LrKind k) {
  switch (k) {
    case LrKind::constant: return "constant";
    case LrKind::inverse_time: return "inverse_time";
    case LrKind::corollary1: return "corollary1";
    case LrKind::corollary5: return "corollary5";
    case LrKind::sqrt_ratio: return "sqrt_ratio";
  }
  return "?";
}

/// Only the fields relevant to `kind` are read:
///   constant      eta0
///   inverse_time  eta0 / (1 + decay t)
///   corollary1    6 / (E mu (tau + t)), tau = 3 L / mu
///   corollary5    2 / (mu (tau + t)),   tau = 2 L / mu
///   sqrt_ratio    (1/L) sqrt(N / (E T))
struct LrSchedule {
  LrKind kind = LrKind::constant;
  double eta0 = 0.1;
  double decay = 0.0;
  double mu = 0.0;
  double L = 0.0;
  std::size_t E = 1;
  std::size_t N = 1;
  std::size_t T = 1;

  static LrSchedule constant(double eta) { return {LrKind::constant, eta}; }
  static LrSchedule inverse_time(double eta0, double decay) { return {LrKind::inverse_time, eta0, decay}; }
  static LrSchedule corollary1(double mu, double L, std::size_t E) {
    LrSchedule s;
    s.kind = LrKind::corollary1;
    s.mu = mu;
    s.L = L;
    s.E = E;
    return s;
  }
  static LrSchedule corollary5(double mu, double L) {
    LrSchedule s;
    s.kind = LrKind::corollary5;
    s.mu = mu;
    s.L = L;
    return s;
  }
  static LrSchedule sqrt_ratio(double L, std::size_t N, std::size_t E, std::size_t T) {
    LrSchedule s;
    s.kind = LrKind::sqrt_ratio;
    s.L = L;
    s.N = N;
    s.E = E;
    s.T = T;
    return s;
  }
};

inline void validate(const LrSchedule& s) {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ParameterError(std::string("learning-rate schedule: ") + what);
  };
  switch (s.kind) {
    case LrKind::constant:
      need(s.eta0 > 0.0 && std::isfinite(s.eta0), "eta0 must be > 0");
      break;
    case LrKind::inverse_time:
      need(s.eta0 > 0.0 && std::isfinite(s.eta0), "eta0 must be > 0");
      need(s.decay >= 0.0 && std::isfinite(s.decay), "decay must be >= 0");
      break;
    case LrKind::corollary1:
    case LrKind::corollary5:
      need(s.mu > 0.0, "mu must be > 0");
      need(s.L >= s.mu, "L must be >= mu");
      need(s.E >= 1, "E must be >= 1");
      break;
    case LrKind::sqrt_ratio:
      need(s.L > 0.0, "L must be > 0");
      need(s.N >= 1 && s.E >= 1 && s.T >= 1, "N, E and T must be >= 1");
      break;
  }
}

inline double lr_value(const LrSchedule& s, std::size_t t) {
  validate(s);
  const double tt = static_cast<double>(t);
  switch (s.kind) {
    case LrKind::constant:
      return s.eta0;
    case LrKind::inverse_time:
      return s.eta0 / (1.0 + s.decay * tt);
    case LrKind::corollary1: {
      const double tau = 3.0 * s.L / s.mu;
      return 6.0 / (static_cast<double>(s.E) * s.mu * (tau + tt));
    }
    case LrKind::corollary5: {
      const double tau = 2.0 * s.L / s.mu;
      return 2.0 / (s.mu * (tau + tt));
    }
    case LrKind::sqrt_ratio:
      return std::sqrt(static_cast<double>(s.N) / (static_cast<double>(s.E) * static_cast<double>(s.T))) / s.L;
  }
  throw ParameterError("unknown learning-rate schedule");
}

/// Step-size cap for the unbiased multi-step results:
/// min{ 1/(L sqrt(2E(E-1)(2β1+1))), 1/(2LE) }. The first term is absent for E = 1.
inline double theorem1_lr_cap(double L, std::size_t E, double beta1) {
  if (!(L > 0.0) || E < 1 || !(beta1 >= 1.0)) throw ParameterError("theorem1_lr_cap: need L > 0, E >= 1, beta1 >= 1");
  const double e = static_cast<double>(E);
  const double second = 1.0 / (2.0 * L * e);
  if (E == 1) return second;
  return std::min(1.0 / (L * std::sqrt(2.0 * e * (e - 1.0) * (2.0 * beta1 + 1.0))), second);
}

/// Step-size cap for the biased multi-step results:
/// min{ 1/(L sqrt(2E(E-1)(4β1+1))), 1/(4LE) }.
inline double theorem5_lr_cap(double L, std::size_t E, double beta1) {
  if (!(L > 0.0) || E < 1 || !(beta1 >= 1.0)) throw ParameterError("theorem5_lr_cap: need L > 0, E >= 1, beta1 >= 1");
  const double e = static_cast<double>(E);
  const double second = 1.0 / (4.0 * L * e);
  if (E == 1) return second;
  return std::min(1.0 / (L * std::sqrt(2.0 * e * (e - 1.0) * (4.0 * beta1 + 1.0))), second);
}

}  // namespace airfl
