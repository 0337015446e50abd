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

// Numeric evaluation of the convergence bounds for the three over-the-air
// FedAvg variants, plus the estimators that turn a simulated task into the
// constants those bounds consume.
//
// Strongly convex bounds share one shape,
//     B(T) = Gap0 · Π_{i<T} f_i + Σ_{t<T} c_t · Π_{t<i<T} f_i,
// which is evaluated for every horizon at once through the recurrence
// B(T+1) = f_T B(T) + c_T. Non-convex bounds are cumulative sums divided by
// Φ_T = Σ_{t<T} η^t. Every series is stored term by term.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "airfl/errors.hpp"
#include "airfl/lr.hpp"
#include "airfl/numkit.hpp"
#include "airfl/tasks/objective.hpp"

namespace airfl {

/// Constants consumed by every bound. σ_w² is the real per-coordinate noise
/// variance, so MSE sequences are expected in units of ||ε||² (d σ_w² / β).
struct BoundParams {
  double mu = 0.0;
  double L = 1.0;
  std::vector<double> sigma_sq;  // σ_n², per device
  std::vector<double> p;         // aggregation weights
  double beta1 = 1.0;
  double beta2 = 0.0;
  double g_sq = 0.0;            // G²
  double g_tilde_sq = 0.0;      // G̃²
  double theta_tilde_sq = 0.0;  // Θ̃²
  double noise_var = 0.0;       // σ_w²
  double transmit_power = 1.0;  // P0
  std::size_t d = 1;
  std::size_t E = 1;
  double initial_gap = 0.0;   // F(θ0) − F* (or F(θ0) − F_inf)
  double mse_constant = 0.0;  // MSE level for constant-MSE corollaries

  std::size_t N() const noexcept { return p.size(); }
  double sigma2() const {  // Σ p_n² σ_n²
    double s = 0.0;
    for (std::size_t n = 0; n < p.size(); ++n) s += p[n] * p[n] * sigma_sq[n];
    return s;
  }
  double sigma_bar2() const {  // Σ p_n σ_n²
    double s = 0.0;
    for (std::size_t n = 0; n < p.size(); ++n) s += p[n] * sigma_sq[n];
    return s;
  }
  double sigma_cap() const { return static_cast<double>(N()) * sigma2(); }  // Σ = N σ²
  double snr() const {
    return noise_var > 0.0 ? transmit_power / noise_var : std::numeric_limits<double>::infinity();
  }
  std::vector<double> v() const {
    std::vector<double> out(p.size());
    for (std::size_t n = 0; n < p.size(); ++n) out[n] = static_cast<double>(p.size()) * p[n];
    return out;
  }

  void validate() const {
    std::vector<std::string> bad;
    if (!(mu >= 0.0)) bad.push_back("mu must be >= 0");
    if (!(L > 0.0)) bad.push_back("L must be > 0");
    if (mu > L) bad.push_back("mu must not exceed L");
    if (!(beta1 >= 1.0)) bad.push_back("beta1 must be >= 1");
    if (!(beta2 >= 0.0)) bad.push_back("beta2 must be >= 0");
    if (p.empty()) bad.push_back("at least one device weight required");
    if (sigma_sq.size() != p.size()) bad.push_back("one gradient variance per device required");
    for (double s : sigma_sq) {
      if (!(s >= 0.0)) bad.push_back("gradient variances must be >= 0");
    }
    double sum = 0.0;
    for (double w : p) {
      if (!(w > 0.0)) bad.push_back("weights must be > 0");
      sum += w;
    }
    if (!p.empty() && std::abs(sum - 1.0) > 1e-9) bad.push_back("weights must sum to 1");
    if (!(noise_var >= 0.0)) bad.push_back("noise variance must be >= 0");
    if (!(g_sq >= 0.0) || !(g_tilde_sq >= 0.0) || !(theta_tilde_sq >= 0.0)) bad.push_back("bounds must be >= 0");
    if (d < 1 || E < 1) bad.push_back("d and E must be >= 1");
    if (!(initial_gap >= 0.0)) bad.push_back("initial gap must be >= 0");
    if (!bad.empty()) {
      std::string msg = "invalid bound parameters:";
      for (const auto& b : bad) msg += " " + b + ";";
      throw ParameterError(msg);
    }
  }
};

enum class HypothesisPolicy { throw_on_violation, mask };

/// Bound values for horizons T = 1..T_max.
struct BoundSeries {
  std::string theorem;
  std::vector<std::string> term_names;
  std::vector<std::vector<double>> terms;  // terms[k][T-1]
  std::vector<double> total;               // total[T-1]
  std::vector<bool> valid;                 // step-size hypothesis holds on rounds 0..T-1
  std::vector<std::size_t> violating_rounds;
  bool divergent = false;

  std::size_t horizon() const noexcept { return total.size(); }
  double at(std::size_t T) const { return total.at(T - 1); }
  double term(std::string_view name, std::size_t T) const {
    for (std::size_t k = 0; k < term_names.size(); ++k) {
      if (term_names[k] == name) return terms[k].at(T - 1);
    }
    throw ParameterError("unknown bound term '" + std::string(name) + "'");
  }
};

/// Contraction-form bound: initial gap times the product of factors plus one
/// accumulated sequence per named term.
struct ContractionProblem {
  double initial = 0.0;
  std::vector<double> factors;  // f_t, t < T
  std::vector<std::string> names;
  std::vector<std::vector<double>> increments;  // c_{k,t}
};

namespace detail {

inline double clamp_factor(double f) { return f > 0.0 ? f : 0.0; }

inline void finish_series(BoundSeries& s) {
  const std::size_t T = s.total.size();
  for (std::size_t i = 0; i < T; ++i) {
    double acc = 0.0;
    for (const auto& term : s.terms) acc += term[i];
    s.total[i] = acc;
  }
  if (T >= 10) {
    const double last = s.total[T - 1];
    const double early = s.total[T / 10 - 1];
    s.divergent = !std::isfinite(last) || last > 1.05 * early;
  } else if (T > 0) {
    s.divergent = !std::isfinite(s.total[T - 1]);
  }
}

inline void apply_hypothesis(BoundSeries& s, std::span<const double> lrs, double cap, HypothesisPolicy policy,
                             const std::string& what) {
  const double tol = cap * 1e-12;
  bool ok = true;
  s.valid.assign(lrs.size(), true);
  for (std::size_t t = 0; t < lrs.size(); ++t) {
    if (!(lrs[t] > 0.0) || lrs[t] > cap + tol) {
      s.violating_rounds.push_back(t);
      ok = false;
    }
    s.valid[t] = ok;  // horizon t+1 uses rounds 0..t
  }
  if (!s.violating_rounds.empty() && policy == HypothesisPolicy::throw_on_violation) {
    std::string msg = what + ": step size exceeds the cap " + std::to_string(cap) + " in " +
                      std::to_string(s.violating_rounds.size()) + " round(s), first at round " +
                      std::to_string(s.violating_rounds.front());
    throw HypothesisViolation(msg, s.violating_rounds);
  }
}

inline void check_lengths(std::span<const double> lrs, std::span<const double> mse) {
  if (lrs.empty()) throw ParameterError("bound evaluation needs at least one round");
  if (mse.size() != lrs.size()) throw ShapeError("MSE sequence length must equal the number of rounds");
  for (double m : mse) {
    if (!(m >= 0.0) || !std::isfinite(m)) throw ParameterError("MSE values must be finite and >= 0");
  }
}

}  // namespace detail

/// All horizons at once through B(T+1) = f_T B(T) + c_T.
inline BoundSeries evaluate_recurrence(const ContractionProblem& prob, std::string theorem) {
  const std::size_t T = prob.factors.size();
  BoundSeries s;
  s.theorem = std::move(theorem);
  s.term_names.push_back("initial");
  for (const auto& n : prob.names) s.term_names.push_back(n);
  s.terms.assign(s.term_names.size(), std::vector<double>(T));
  s.total.assign(T, 0.0);
  std::vector<double> state(s.term_names.size(), 0.0);
  state[0] = prob.initial;
  for (std::size_t t = 0; t < T; ++t) {
    const double f = detail::clamp_factor(prob.factors[t]);
    state[0] *= f;
    for (std::size_t k = 0; k < prob.names.size(); ++k) state[k + 1] = f * state[k + 1] + prob.increments[k][t];
    for (std::size_t k = 0; k < state.size(); ++k) s.terms[k][t] = state[k];
  }
  detail::finish_series(s);
  return s;
}

/// Independent evaluation of one horizon with products formed in log space.
/// Returns the term values in the order {initial, names...}.
inline std::vector<double> evaluate_direct(const ContractionProblem& prob, std::size_t T) {
  if (T < 1 || T > prob.factors.size()) throw ParameterError("evaluate_direct: horizon out of range");
  // suffix[t] = Σ_{i=t}^{T-1} log f_i, -inf once any factor is <= 0.
  std::vector<double> suffix(T + 1, 0.0);
  for (std::size_t i = T; i-- > 0;) {
    const double f = prob.factors[i];
    suffix[i] = (f > 0.0 ? std::log(f) : -std::numeric_limits<double>::infinity()) + suffix[i + 1];
  }
  std::vector<double> out(prob.names.size() + 1, 0.0);
  out[0] = prob.initial * std::exp(suffix[0]);
  for (std::size_t k = 0; k < prob.names.size(); ++k) {
    double acc = 0.0;
    for (std::size_t t = 0; t < T; ++t) acc += prob.increments[k][t] * std::exp(suffix[t + 1]);
    out[k + 1] = acc;
  }
  return out;
}

/// Cumulative-sum form: value(T) = scale/Φ_T · (initial + Σ_{t<T} c_{k,t}).
inline BoundSeries evaluate_averaged(double scale, double initial, std::span<const double> lrs,
                                     const std::vector<std::string>& names,
                                     const std::vector<std::vector<double>>& increments, std::string theorem) {
  const std::size_t T = lrs.size();
  BoundSeries s;
  s.theorem = std::move(theorem);
  s.term_names.push_back("initial");
  for (const auto& n : names) s.term_names.push_back(n);
  s.terms.assign(s.term_names.size(), std::vector<double>(T));
  s.total.assign(T, 0.0);
  std::vector<double> cum(names.size(), 0.0);
  double phi = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    phi += lrs[t];
    s.terms[0][t] = scale * initial / phi;
    for (std::size_t k = 0; k < names.size(); ++k) {
      cum[k] += increments[k][t];
      s.terms[k + 1][t] = scale * cum[k] / phi;
    }
  }
  detail::finish_series(s);
  return s;
}

inline std::vector<double> lr_sequence(const LrSchedule& schedule, std::size_t T, std::optional<double> cap = {}) {
  std::vector<double> out(T);
  for (std::size_t t = 0; t < T; ++t) {
    out[t] = lr_value(schedule, t);
    if (cap && out[t] > *cap) out[t] = *cap;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Unbiased aggregation, model-difference variant.

struct MultiStepConstants {
  double C1 = 0.0, C2 = 0.0, C3 = 0.0;
};

inline MultiStepConstants multi_step_constants(const BoundParams& bp) {
  const double E = static_cast<double>(bp.E);
  MultiStepConstants c;
  c.C1 = bp.L * bp.L * E * (E - 1.0) * (2.0 * bp.beta1 + 1.0) / (4.0 * bp.beta1) *
         (bp.sigma_bar2() + 2.0 * E * bp.beta2);
  c.C2 = bp.L * E * bp.sigma2();
  c.C3 = bp.L / 2.0;
  return c;
}

inline ContractionProblem theorem1_problem(const BoundParams& bp, std::span<const double> lrs,
                                           std::span<const double> mse) {
  const auto c = multi_step_constants(bp);
  const double E = static_cast<double>(bp.E);
  ContractionProblem prob;
  prob.initial = bp.initial_gap;
  prob.names = {"a", "b", "c"};
  prob.increments.assign(3, std::vector<double>(lrs.size()));
  prob.factors.resize(lrs.size());
  for (std::size_t t = 0; t < lrs.size(); ++t) {
    const double eta = lrs[t];
    prob.factors[t] = 1.0 - bp.mu * eta * E / 2.0;
    prob.increments[0][t] = c.C1 * eta * eta * eta;
    prob.increments[1][t] = c.C2 * eta * eta;
    prob.increments[2][t] = c.C3 * mse[t];
  }
  return prob;
}

/// Strongly convex bound for the model-difference variant with terms
/// (a) local drift, (b) gradient noise, (c) aggregation MSE.
inline BoundSeries theorem1_series(const BoundParams& bp, std::span<const double> lrs, std::span<const double> mse,
                                   HypothesisPolicy policy = HypothesisPolicy::throw_on_violation) {
  bp.validate();
  detail::check_lengths(lrs, mse);
  BoundSeries s = evaluate_recurrence(theorem1_problem(bp, lrs, mse), "t1");
  detail::apply_hypothesis(s, lrs, theorem1_lr_cap(bp.L, bp.E, bp.beta1), policy, "t1");
  return s;
}

inline BoundSeries theorem1_series(const BoundParams& bp, const LrSchedule& schedule, std::span<const double> mse,
                                   HypothesisPolicy policy = HypothesisPolicy::throw_on_violation) {
  const auto lrs = lr_sequence(schedule, mse.size());
  return theorem1_series(bp, lrs, mse, policy);
}

/// Non-convex counterpart: bound on Σ η^t ||∇F(θ^t)||² / Φ.
inline BoundSeries theorem2_series(const BoundParams& bp, std::span<const double> lrs, std::span<const double> mse,
                                   HypothesisPolicy policy = HypothesisPolicy::throw_on_violation) {
  bp.validate();
  detail::check_lengths(lrs, mse);
  const auto c = multi_step_constants(bp);
  std::vector<std::vector<double>> inc(3, std::vector<double>(lrs.size()));
  for (std::size_t t = 0; t < lrs.size(); ++t) {
    const double eta = lrs[t];
    inc[0][t] = c.C1 * eta * eta * eta;
    inc[1][t] = c.C2 * eta * eta;
    inc[2][t] = c.C3 * mse[t];
  }
  BoundSeries s =
      evaluate_averaged(4.0 / static_cast<double>(bp.E), bp.initial_gap, lrs, {"a", "b", "c"}, inc, "t2");
  detail::apply_hypothesis(s, lrs, theorem1_lr_cap(bp.L, bp.E, bp.beta1), policy, "t2");
  return s;
}

// ---------------------------------------------------------------------------
// Unbiased aggregation, single-gradient and local-model variants.

enum class SVariantBound { t3, t4, c7 };

inline BoundSeries theorem_series_s_variant(SVariantBound which, const BoundParams& bp, std::span<const double> lrs,
                                            std::span<const double> mse,
                                            HypothesisPolicy policy = HypothesisPolicy::throw_on_violation) {
  bp.validate();
  detail::check_lengths(lrs, mse);
  const double L = bp.L;
  const double s2 = bp.sigma2();
  const std::size_t T = lrs.size();
  BoundSeries s;
  switch (which) {
    case SVariantBound::t3:
    case SVariantBound::c7: {
      const bool model_variant = which == SVariantBound::c7;
      ContractionProblem prob;
      prob.initial = bp.initial_gap;
      prob.names = {"variance", "mse"};
      prob.increments.assign(2, std::vector<double>(T));
      prob.factors.resize(T);
      for (std::size_t t = 0; t < T; ++t) {
        const double eta = lrs[t];
        if (model_variant) {
          prob.factors[t] = 1.0 - bp.mu * eta / 2.0;
          prob.increments[0][t] = L * s2 * eta * eta;
          prob.increments[1][t] = (L / 2.0) * mse[t];
        } else {
          prob.factors[t] = 1.0 - bp.mu * eta;
          prob.increments[0][t] = (L / 2.0) * eta * eta * s2;
          prob.increments[1][t] = (L / 2.0) * eta * eta * mse[t];
        }
      }
      s = evaluate_recurrence(prob, model_variant ? "c7" : "t3");
      break;
    }
    case SVariantBound::t4: {
      std::vector<std::vector<double>> inc(2, std::vector<double>(T));
      for (std::size_t t = 0; t < T; ++t) {
        const double eta = lrs[t];
        // (L/Φ) Σ η²(σ² + MSE), expressed with scale 2/Φ
        inc[0][t] = (L / 2.0) * eta * eta * s2;
        inc[1][t] = (L / 2.0) * eta * eta * mse[t];
      }
      s = evaluate_averaged(2.0, bp.initial_gap, lrs, {"variance", "mse"}, inc, "t4");
      break;
    }
  }
  detail::apply_hypothesis(s, lrs, 1.0 / L, policy, s.theorem);
  return s;
}

// ---------------------------------------------------------------------------
// Biased aggregation.

enum class BiasedBound { t5, t6, t7, t8 };

struct BiasedConstants {
  double C1 = 0.0, C2 = 0.0, C3 = 0.0, C4 = 0.0, C5 = 0.0;
};

inline BiasedConstants biased_constants(const BoundParams& bp) {
  const double E = static_cast<double>(bp.E);
  BiasedConstants c;
  c.C1 = bp.L * bp.L * E * (E - 1.0) * (4.0 * bp.beta1 + 1.0) / (8.0 * bp.beta1) *
         (bp.sigma_bar2() + 2.0 * E * bp.beta2);
  c.C2 = bp.L * E * bp.sigma2();
  c.C3 = bp.sigma2() / 4.0;
  c.C4 = bp.L / 2.0;
  c.C5 = 1.0 / E;
  return c;
}

inline BoundSeries biased_bound_series(BiasedBound which, const BoundParams& bp, std::span<const double> lrs,
                                       std::span<const double> mse, std::span<const double> bias_sq,
                                       HypothesisPolicy policy = HypothesisPolicy::throw_on_violation) {
  bp.validate();
  detail::check_lengths(lrs, mse);
  if (bias_sq.size() != lrs.size()) throw ShapeError("bias sequence length must equal the number of rounds");
  for (double b : bias_sq) {
    if (!(b >= 0.0) || !std::isfinite(b)) throw ParameterError("squared bias values must be finite and >= 0");
  }
  const std::size_t T = lrs.size();
  const double L = bp.L;
  const double E = static_cast<double>(bp.E);
  const double s2 = bp.sigma2();
  BoundSeries s;
  double cap = 0.0;
  switch (which) {
    case BiasedBound::t5:
    case BiasedBound::t6: {
      const auto c = biased_constants(bp);
      const std::vector<std::string> names{"a", "b", "d", "e", "f"};
      std::vector<std::vector<double>> inc(5, std::vector<double>(T));
      std::vector<double> factors(T);
      for (std::size_t t = 0; t < T; ++t) {
        const double eta = lrs[t];
        factors[t] = 1.0 - bp.mu * eta * E / 4.0;
        inc[0][t] = c.C1 * eta * eta * eta;
        inc[1][t] = c.C2 * eta * eta;
        inc[2][t] = eta * (c.C3 + 2.0 * L * L * E * mse[t]);
        inc[3][t] = c.C4 * mse[t];
        inc[4][t] = c.C5 * bias_sq[t] / eta;
      }
      if (which == BiasedBound::t5) {
        s = evaluate_recurrence(ContractionProblem{bp.initial_gap, factors, names, inc}, "t5");
      } else {
        s = evaluate_averaged(8.0 / E, bp.initial_gap, lrs, names, inc, "t6");
      }
      cap = theorem5_lr_cap(L, bp.E, bp.beta1);
      break;
    }
    case BiasedBound::t7:
    case BiasedBound::t8: {
      const std::vector<std::string> names{"bias", "noise"};
      std::vector<std::vector<double>> inc(2, std::vector<double>(T));
      std::vector<double> factors(T);
      const bool averaged = which == BiasedBound::t8;
      for (std::size_t t = 0; t < T; ++t) {
        const double eta = lrs[t];
        factors[t] = 1.0 - bp.mu * eta / 2.0;
        // Strongly convex: ½ η B² + (L/2) η² [...]; non-convex uses 2/Φ and
        // 2L/Φ, i.e. the same increments under scale 4/Φ.
        inc[0][t] = 0.5 * eta * bias_sq[t];
        inc[1][t] = (L / 2.0) * eta * eta * (mse[t] + bias_sq[t] + s2);
      }
      if (averaged) {
        s = evaluate_averaged(4.0, bp.initial_gap, lrs, names, inc, "t8");
      } else {
        s = evaluate_recurrence(ContractionProblem{bp.initial_gap, factors, names, inc}, "t7");
      }
      cap = 1.0 / (4.0 * L);
      break;
    }
  }
  detail::apply_hypothesis(s, lrs, cap, policy, s.theorem);
  return s;
}

// ---------------------------------------------------------------------------
// Closed-form rates.

enum class CorollaryId { c1, c3, c4, c5, c7 };

inline const char* to_string(CorollaryId c) {
  switch (c) {
    case CorollaryId::c1: return "c1";
    case CorollaryId::c3: return "c3";
    case CorollaryId::c4: return "c4";
    case CorollaryId::c5: return "c5";
    case CorollaryId::c7: return "c7";
  }
  return "?";
}

struct CorollaryRate {
  double value = 0.0;
  std::vector<std::string> term_names;
  std::vector<double> terms;
};

/// Largest E admitted by the decaying-rate multi-step corollary, or +inf when
/// the constraint is vacuous (non-positive denominator).
inline double corollary1_max_local_epochs(const BoundParams& bp) {
  const double noise = bp.g_tilde_sq / (static_cast<double>(bp.d) * static_cast<double>(bp.N() * bp.N()) * bp.snr());
  const double num = 6.0 * (2.0 * bp.beta1 + 1.0) * bp.sigma_bar2() + 12.0 * bp.beta1 * (bp.sigma2() + noise);
  const double den = bp.beta1 * bp.mu * bp.initial_gap - 12.0 * bp.beta2 * (2.0 * bp.beta1 + 1.0);
  if (!(den > 0.0)) return std::numeric_limits<double>::infinity();
  return num / den;
}

inline CorollaryRate corollary_rate(CorollaryId id, const BoundParams& bp, std::size_t T) {
  bp.validate();
  if (T < 1) throw ParameterError("corollary_rate: T must be >= 1");
  if ((id == CorollaryId::c1 || id == CorollaryId::c4 || id == CorollaryId::c5 || id == CorollaryId::c7) &&
      !(bp.mu > 0.0)) {
    throw ParameterError("strongly convex corollaries need mu > 0");
  }
  const double mu = bp.mu;
  const double L = bp.L;
  const double E = static_cast<double>(bp.E);
  const double N = static_cast<double>(bp.N());
  const double d = static_cast<double>(bp.d);
  const double snr = bp.snr();
  const double Tt = static_cast<double>(T);
  CorollaryRate out;
  switch (id) {
    case CorollaryId::c1: {
      const double emax = corollary1_max_local_epochs(bp);
      if (E > emax) {
        throw HypothesisViolation("number of local updates E = " + std::to_string(bp.E) +
                                  " exceeds the admissible bound " + std::to_string(emax));
      }
      const double A = multi_step_constants(bp).C1;
      const double B = L * E * bp.sigma2() + L * bp.g_tilde_sq * E / (d * N * N * snr);
      const double tau = 3.0 * L / mu;
      const double x = Tt + tau;
      out.term_names = {"A", "B"};
      out.terms = {216.0 * A / (E * E * E * mu * mu * mu * x * x), 36.0 * B / (E * E * mu * mu * x)};
      break;
    }
    case CorollaryId::c3: {
      const double eta = std::sqrt(N / (E * Tt)) / L;
      const double cap = theorem1_lr_cap(L, bp.E, bp.beta1);
      if (eta > cap * (1.0 + 1e-12)) {
        throw HypothesisViolation("constant step (1/L)sqrt(N/(ET)) = " + std::to_string(eta) +
                                  " exceeds the cap " + std::to_string(cap));
      }
      const double mse = bp.g_tilde_sq * E * eta * eta / (d * N * N * snr);
      const std::vector<double> lrs(T, eta);
      const std::vector<double> mses(T, std::isfinite(mse) ? mse : 0.0);
      const auto s = theorem2_series(bp, lrs, mses);
      out.term_names = s.term_names;
      for (const auto& term : s.terms) out.terms.push_back(term.back());
      break;
    }
    case CorollaryId::c4: {
      const std::vector<double> lrs(T, 1.0 / L);
      const std::vector<double> mses(T, bp.mse_constant);
      const auto s = theorem_series_s_variant(SVariantBound::t3, bp, lrs, mses);
      out.term_names = s.term_names;
      for (const auto& term : s.terms) out.terms.push_back(term.back());
      break;
    }
    case CorollaryId::c5: {
      const double tau = 2.0 * L / mu;
      const double C = (L / 2.0) * (bp.sigma_cap() / N + bp.g_tilde_sq / (d * N * N * snr));
      out.term_names = {"max"};
      out.terms = {std::max(4.0 * C, mu * mu * tau * bp.initial_gap) / (mu * mu * (tau + Tt))};
      break;
    }
    case CorollaryId::c7: {
      const auto lrs = lr_sequence(LrSchedule::corollary5(mu, L), T);
      const double mse = bp.theta_tilde_sq / (d * N * N * snr);
      const std::vector<double> mses(T, std::isfinite(mse) ? mse : 0.0);
      const auto s = theorem_series_s_variant(SVariantBound::c7, bp, lrs, mses);
      out.term_names = s.term_names;
      for (const auto& term : s.terms) out.terms.push_back(term.back());
      break;
    }
  }
  out.value = std::accumulate(out.terms.begin(), out.terms.end(), 0.0);
  return out;
}

// ---------------------------------------------------------------------------
// Sequence laboratory.

/// Σ_{t<T} s2(t) Π_{t<i<T} (1 − s1(i)) with s_k(t) = a_k / (t+1)^δ_k.
inline double lemma1_partial_sum(double a1, double delta1, double a2, double delta2, std::size_t T) {
  if (!(a1 >= 0.0) || !(a2 >= 0.0) || !(delta2 >= 0.0) || !(delta1 >= 0.0 && delta1 <= 1.0)) {
    throw ParameterError("lemma1: need a1, a2, delta2 >= 0 and 0 <= delta1 <= 1");
  }
  if (T < 1) throw ParameterError("lemma1: T must be >= 1");
  double sum = 0.0;
  double prod = 1.0;
  for (std::size_t t = T; t-- > 0;) {
    const double tp1 = static_cast<double>(t) + 1.0;
    const double s1 = a1 / std::pow(tp1, delta1);
    if (s1 > 1.0) throw ParameterError("lemma1: s1(" + std::to_string(t) + ") exceeds 1");
    sum += a2 / std::pow(tp1, delta2) * prod;
    prod *= 1.0 - s1;
  }
  return sum;
}

/// Partial sums for T = 1..T_max via S(T+1) = (1 − s1(T)) S(T) + s2(T).
inline std::vector<double> lemma1_series(double a1, double delta1, double a2, double delta2, std::size_t T_max) {
  if (!(a1 >= 0.0) || !(a2 >= 0.0) || !(delta2 >= 0.0) || !(delta1 >= 0.0 && delta1 <= 1.0)) {
    throw ParameterError("lemma1: need a1, a2, delta2 >= 0 and 0 <= delta1 <= 1");
  }
  std::vector<double> out(T_max);
  double S = 0.0;
  for (std::size_t t = 0; t < T_max; ++t) {
    const double tp1 = static_cast<double>(t) + 1.0;
    const double s1 = a1 / std::pow(tp1, delta1);
    if (s1 > 1.0) throw ParameterError("lemma1: s1(" + std::to_string(t) + ") exceeds 1");
    // s1(0) never multiplies anything: the product for term t starts at t+1.
    S = (t == 0 ? 0.0 : (1.0 - s1) * S) + a2 / std::pow(tp1, delta2);
    out[t] = S;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Measured constants.

struct BgdConstants {
  double beta1 = 1.0;
  double beta2 = 0.0;
};

struct BgdProbeSpec {
  ParameterVector center;  // probes are center + r u, u uniform on the sphere
  double r_min = 1e-2;
  double r_max = 10.0;
};

/// (a, b) = (Σ_n p_n ||∇F_n(θ)||², ||∇F(θ)||²) at one point.
template <FederatedTask Task>
std::pair<double, double> gradient_dissimilarity_pair(const Task& task, const ParameterVector& theta) {
  double a = 0.0;
  ParameterVector g(task.dim());
  for (std::size_t n = 0; n < task.num_devices(); ++n) {
    const ParameterVector gn = device_gradient(task, n, theta);
    a += task.weight(n) * gn.squared_norm();
    g.axpy(task.weight(n), gn);
  }
  return {a, g.squared_norm()};
}

template <FederatedTask Task>
std::vector<ParameterVector> bgd_probe_points(const Task& task, const BgdProbeSpec& spec, std::size_t count,
                                              SeededStream& stream) {
  if (spec.center.dim() != task.dim()) throw ShapeError("probe center dimension mismatch");
  if (!(spec.r_min > 0.0) || !(spec.r_max >= spec.r_min)) throw ParameterError("probe radii must satisfy 0 < r_min <= r_max");
  std::vector<ParameterVector> out;
  out.reserve(count);
  const double lmin = std::log(spec.r_min);
  const double lmax = std::log(spec.r_max);
  for (std::size_t k = 0; k < count; ++k) {
    ParameterVector u = gaussian_vector(stream, task.dim(), 1.0);
    const double r = std::exp(lmin + (lmax - lmin) * stream.uniform());
    u *= r / u.norm();
    out.push_back(spec.center + u);
  }
  return out;
}

/// Fit Σ p_n ||∇F_n||² <= β2 + β1 ||∇F||² over random probes.
///
/// For each candidate β1 ≥ 1 the smallest feasible β2 is max_k(a_k − β1 b_k)⁺.
/// Among candidates on a geometric grid over [1, max_k a_k/b_k] (refined once
/// around the best coarse point) the pair minimising β2 + β1·median(b) is
/// kept, with ties resolved toward smaller β1; β2 is then inflated by 10% as a
/// margin for points not probed.
template <FederatedTask Task>
BgdConstants estimate_bgd_constants(const Task& task, std::size_t probe_points, const BgdProbeSpec& spec,
                                    SeededStream& stream) {
  if (probe_points < 1) throw ParameterError("estimate_bgd_constants: probe_points must be >= 1");
  const auto probes = bgd_probe_points(task, spec, probe_points, stream);
  std::vector<double> a, b;
  for (const auto& th : probes) {
    const auto [ak, bk] = gradient_dissimilarity_pair(task, th);
    a.push_back(ak);
    b.push_back(bk);
  }
  double max_ratio = 1.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (b[k] > 0.0) max_ratio = std::max(max_ratio, a[k] / b[k]);
  }
  std::vector<double> sorted_b = b;
  std::sort(sorted_b.begin(), sorted_b.end());
  const double med_b = sorted_b[sorted_b.size() / 2];
  auto beta2_for = [&](double beta1) {
    double worst = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, a[k] - beta1 * b[k]);
    return worst;
  };
  auto objective = [&](double beta1) { return beta2_for(beta1) + beta1 * med_b; };

  auto sweep = [&](double lo, double hi, std::size_t n, double& best_beta1, double& best_obj) {
    for (std::size_t i = 0; i < n; ++i) {
      const double beta1 = n == 1 || hi <= lo ? lo : lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
      const double obj = objective(beta1);
      if (obj < best_obj * (1.0 - 1e-12) || (obj <= best_obj && beta1 < best_beta1)) {
        best_obj = obj;
        best_beta1 = beta1;
      }
    }
  };
  constexpr std::size_t kGrid = 257;
  double best_beta1 = 1.0;
  double best_obj = objective(1.0);
  sweep(1.0, max_ratio, kGrid, best_beta1, best_obj);
  if (max_ratio > 1.0) {
    const double step = std::pow(max_ratio, 1.0 / (kGrid - 1));
    sweep(std::max(1.0, best_beta1 / step), std::min(max_ratio, best_beta1 * step), kGrid, best_beta1, best_obj);
    // the endpoint of the range is always feasible with β2 = 0 when all b > 0
  }
  BgdConstants out;
  out.beta1 = best_beta1;
  out.beta2 = 1.1 * beta2_for(best_beta1);
  return out;
}

/// Exact per-device variance of the without-replacement minibatch gradient,
/// E||g − ∇F_n||² = (S²/b)(1 − b/D_n) with S² the unbiased sample variance of
/// the per-sample gradients, maximised over the supplied points.
template <FederatedTask Task>
std::vector<double> minibatch_gradient_variance(const Task& task, std::size_t batch_size,
                                                std::span<const ParameterVector> points) {
  std::vector<double> out(task.num_devices(), 0.0);
  for (const auto& theta : points) {
    for (std::size_t n = 0; n < task.num_devices(); ++n) {
      const std::size_t D = task.device_size(n);
      const std::size_t b = batch_size == 0 ? D : std::min(batch_size, D);
      if (b == D || D < 2) continue;
      const ParameterVector mean = device_gradient(task, n, theta);
      double ss = 0.0;
      for (std::size_t i = 0; i < D; ++i) {
        ParameterVector gi(task.dim());
        task.add_sample_gradient(n, i, theta, gi, 1.0);
        gi -= mean;
        ss += gi.squared_norm();
      }
      const double S2 = ss / static_cast<double>(D - 1);
      const double var = S2 / static_cast<double>(b) * (1.0 - static_cast<double>(b) / static_cast<double>(D));
      out[n] = std::max(out[n], var);
    }
  }
  return out;
}

/// G² from the largest stochastic-gradient norm seen in a probe run, with a
/// 10% margin.
inline double inflate_gradient_bound(double max_grad_sq) { return 1.1 * max_grad_sq; }

}  // namespace airfl
