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

// Analog uplink aggregation. Every device sends its real d-dimensional signal
// s_n = p_n z_n scaled by a complex transmit coefficient α_n over a block
// flat-fading channel h_n; the server receives Σ h_n α_n s_n + w and divides
// by √β. The aggregation error ε = ŷ − Σ_n s_n is always measured against the
// ideal sum over all devices, so silent (truncated) devices show up as bias.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "airfl/errors.hpp"
#include "airfl/numkit.hpp"

namespace airfl {

enum class Fading { error_free, awgn, rayleigh_block };

inline const char* to_string(Fading f) {
  switch (f) {
    case Fading::error_free: return "error_free";
    case Fading::awgn: return "awgn";
    case Fading::rayleigh_block: return "rayleigh_block";
  }
  return "?";
}

struct ChannelConfig {
  Fading fading = Fading::awgn;
  double noise_var = 0.0;       // σ_w², per coordinate, real-valued noise
  double transmit_power = 1.0;  // P0
  std::size_t dim = 1;          // d
  double truncation_threshold = 0.0;  // γ; 0 disables truncation

  /// P0 / σ_w² (infinite when noiseless).
  double snr() const noexcept {
    return noise_var > 0.0 ? transmit_power / noise_var : std::numeric_limits<double>::infinity();
  }

  /// Effective receiver noise: none for the error-free channel.
  double effective_noise_var() const noexcept { return fading == Fading::error_free ? 0.0 : noise_var; }

  void validate() const {
    if (!(noise_var >= 0.0) || !std::isfinite(noise_var)) throw ParameterError("channel noise variance must be >= 0");
    if (!(transmit_power > 0.0)) throw ParameterError("transmit power must be > 0");
    if (dim < 1) throw ParameterError("channel dimension must be >= 1");
    if (!(truncation_threshold >= 0.0)) throw ParameterError("truncation threshold must be >= 0");
  }
};

/// σ_w² for a given SNR in dB at transmit power P0.
inline double noise_var_from_snr_db(double snr_db, double transmit_power = 1.0) {
  return transmit_power / std::pow(10.0, snr_db / 10.0);
}

struct ChannelDraw {
  std::vector<ComplexCoeff> h;
};

/// Per-round channel coefficients. Rayleigh draws are CN(0, 1) and depend
/// only on (stream key, round, device), so any round can be regenerated.
inline ChannelDraw draw_channels(const ChannelConfig& config, std::size_t n_devices, std::size_t round,
                                 const SeededStream& stream) {
  if (n_devices < 1) throw ParameterError("draw_channels: n_devices must be >= 1");
  ChannelDraw draw;
  draw.h.assign(n_devices, ComplexCoeff(1.0, 0.0));
  if (config.fading != Fading::rayleigh_block) return draw;
  SeededStream s = stream.child("round").child(round);
  const double sd = std::sqrt(0.5);
  for (auto& h : draw.h) {
    const double re = sd * s.normal();
    const double im = sd * s.normal();
    h = ComplexCoeff(re, im);
  }
  return draw;
}

/// Below this magnitude an untruncated inversion is refused.
inline constexpr double kDeepFadeFloor = 1e-6;

/// Truncated channel inversion α = √β conj(h)/|h|², or 0 when |h| < γ.
inline ComplexCoeff inversion_precoder(ComplexCoeff h, double beta, double gamma) {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ParameterError("inversion_precoder: beta must be > 0");
  if (!(gamma >= 0.0)) throw ParameterError("inversion_precoder: gamma must be >= 0");
  const double mag = std::abs(h);
  if (gamma > 0.0 && mag < gamma) return ComplexCoeff(0.0, 0.0);
  if (mag == 0.0 || (gamma == 0.0 && mag < kDeepFadeFloor)) {
    throw SingularChannelError("channel magnitude " + std::to_string(mag) +
                               " is too small to invert and truncation is disabled");
  }
  return std::sqrt(beta) * std::conj(h) / std::norm(h);
}

inline bool is_truncated(ComplexCoeff h, double gamma) noexcept { return gamma > 0.0 && std::abs(h) < gamma; }

/// Largest β meeting every transmitting device's energy budget d·P0:
/// β = min_n |h_n|² d P0 / ||s_n||² over devices that transmit a nonzero signal.
inline double cotaf_denoising_factor(std::span<const ParameterVector> signals, const ChannelDraw& draw,
                                     const ChannelConfig& config) {
  if (signals.size() != draw.h.size()) throw ShapeError("cotaf_denoising_factor: one channel per signal required");
  const double budget = static_cast<double>(config.dim) * config.transmit_power;
  double beta = std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < signals.size(); ++n) {
    if (is_truncated(draw.h[n], config.truncation_threshold)) continue;
    const double energy = signals[n].squared_norm();
    if (energy == 0.0) continue;
    beta = std::min(beta, std::norm(draw.h[n]) * budget / energy);
  }
  if (!std::isfinite(beta) || !(beta > 0.0)) {
    throw DegenerateError("all transmitted signals are zero; the denoising factor is undefined");
  }
  return beta;
}

/// Inputs of the gradient-bound denoising rule.
struct BgBoundSpec {
  double g_tilde_sq = 0.0;  // G̃² = G² max_n v_n² / |h_n|²
  std::size_t local_epochs = 1;
  std::size_t n_devices = 1;
};

/// β = d N² P0 / (G̃² E η²), so that 1/β scales with η².
inline double bg_bound_denoising_factor(double eta, const BgBoundSpec& spec, const ChannelConfig& config) {
  if (!(eta > 0.0)) throw ParameterError("bg_bound_denoising_factor: eta must be > 0");
  if (!(spec.g_tilde_sq > 0.0)) throw ParameterError("bg_bound_denoising_factor: G-tilde must be > 0");
  if (spec.local_epochs < 1 || spec.n_devices < 1) throw ParameterError("bg_bound_denoising_factor: bad E or N");
  const double n = static_cast<double>(spec.n_devices);
  return static_cast<double>(config.dim) * n * n * config.transmit_power /
         (spec.g_tilde_sq * static_cast<double>(spec.local_epochs) * eta * eta);
}

/// G̃² = G² max_n (N p_n)² / |h_n|² over non-truncated devices.
inline double g_tilde_sq(double g_sq, std::span<const double> weights, const ChannelDraw& draw,
                         const ChannelConfig& config) {
  if (weights.size() != draw.h.size()) throw ShapeError("g_tilde_sq: one channel per weight required");
  const double n = static_cast<double>(weights.size());
  double worst = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (is_truncated(draw.h[k], config.truncation_threshold)) continue;
    const double v = n * weights[k];
    worst = std::max(worst, v * v / std::norm(draw.h[k]));
  }
  return g_sq * worst;
}

/// d σ_w² / β: the expected ||ε||² of an unbiased aggregation.
inline double mse_theoretical(const ChannelConfig& config, double beta) {
  if (!(beta > 0.0)) throw ParameterError("mse_theoretical: beta must be > 0");
  return static_cast<double>(config.dim) * config.effective_noise_var() / beta;
}

struct AggregationErrorRecord {
  ParameterVector epsilon;          // ŷ − Σ_n s_n
  double sq_norm = 0.0;             // ||ε||²
  double theoretical_mse = 0.0;     // d σ_w² / β
  std::vector<std::size_t> participating;
  ParameterVector conditional_bias;  // E[ε | h, s], the noise-free part of ε
};

struct AggregationResult {
  ParameterVector estimate;  // ŷ
  AggregationErrorRecord record;
};

namespace detail {

inline void check_signals(std::span<const ParameterVector> signals, std::size_t expected, std::size_t dim) {
  if (signals.empty()) throw ParameterError("aggregation needs at least one signal");
  if (signals.size() != expected) throw ShapeError("aggregation: per-device inputs disagree in length");
  for (const auto& s : signals) {
    if (s.dim() != dim) throw ShapeError("aggregation: signal dimension does not match channel dimension");
  }
}

// ŷ = Σ_n c_n s_n + w/√β, where c_n = gain_n/√β is the normalised effective
// gain. The error is assembled from its two parts rather than as ŷ minus the
// ideal sum, so an exactly inverted noiseless round reports exact zeros.
inline AggregationResult superpose(std::span<const ParameterVector> signals, std::span<const double> coeffs,
                                   double beta, const ChannelConfig& config, SeededStream& noise_stream) {
  const std::size_t d = config.dim;
  ParameterVector ideal(d);
  AggregationErrorRecord rec;
  rec.conditional_bias = ParameterVector(d);
  for (std::size_t n = 0; n < signals.size(); ++n) {
    ideal += signals[n];
    if (coeffs[n] != 0.0) rec.participating.push_back(n);
    const double bias_coeff = coeffs[n] - 1.0;
    if (bias_coeff != 0.0) rec.conditional_bias.axpy(bias_coeff, signals[n]);
  }
  rec.epsilon = rec.conditional_bias;
  const double noise_var = config.effective_noise_var();
  if (noise_var > 0.0) rec.epsilon.axpy(1.0 / std::sqrt(beta), gaussian_vector(noise_stream, d, noise_var));
  ParameterVector received = ideal + rec.epsilon;
  rec.sq_norm = rec.epsilon.squared_norm();
  rec.theoretical_mse = mse_theoretical(config, beta);
  return AggregationResult{std::move(received), std::move(rec)};
}

inline std::vector<double> normalised(std::vector<double> gains, double beta) {
  const double inv_sqrt_beta = 1.0 / std::sqrt(beta);
  for (double& g : gains) g *= inv_sqrt_beta;
  return gains;
}

}  // namespace detail

/// Over-the-air aggregation with per-device complex precoders α_n. The
/// effective gain of device n is Re(h_n α_n), which equals √β for an inverted
/// channel and 0 for a silent device.
inline AggregationResult aircomp_aggregate(std::span<const ParameterVector> signals,
                                           std::span<const ComplexCoeff> precoders, const ChannelDraw& draw,
                                           double beta, const ChannelConfig& config, SeededStream& noise_stream) {
  if (!(beta > 0.0)) throw ParameterError("aircomp_aggregate: beta must be > 0");
  detail::check_signals(signals, precoders.size(), config.dim);
  if (draw.h.size() != signals.size()) throw ShapeError("aircomp_aggregate: one channel per signal required");
  std::vector<double> gains(signals.size());
  for (std::size_t n = 0; n < signals.size(); ++n) gains[n] = (draw.h[n] * precoders[n]).real();
  return detail::superpose(signals, detail::normalised(std::move(gains), beta), beta, config, noise_stream);
}

/// Channel inversion for every device followed by aggregation.
inline AggregationResult aircomp_aggregate_inverted(std::span<const ParameterVector> signals, const ChannelDraw& draw,
                                                    double beta, const ChannelConfig& config,
                                                    SeededStream& noise_stream) {
  if (!(beta > 0.0)) throw ParameterError("aircomp_aggregate: beta must be > 0");
  detail::check_signals(signals, draw.h.size(), config.dim);
  // An inverted device lands with gain exactly √β by construction; using the
  // unit coefficient directly keeps complex rounding out of the error record.
  std::vector<double> coeffs(draw.h.size());
  for (std::size_t n = 0; n < coeffs.size(); ++n) {
    const ComplexCoeff a = inversion_precoder(draw.h[n], beta, config.truncation_threshold);
    coeffs[n] = a == ComplexCoeff(0.0, 0.0) ? 0.0 : 1.0;
  }
  return detail::superpose(signals, coeffs, beta, config, noise_stream);
}

/// Phase-only precoding: device n compensates the channel phase and transmits
/// with power factor β_n, so its effective gain is |h_n| √β_n. The resulting
/// error carries the bias Σ_n (|h_n| √β_n / √β − 1) s_n.
inline AggregationResult phase_only_aggregate(std::span<const ParameterVector> signals,
                                              std::span<const double> power_factors, const ChannelDraw& draw,
                                              double beta, const ChannelConfig& config, SeededStream& noise_stream) {
  if (!(beta > 0.0)) throw ParameterError("phase_only_aggregate: beta must be > 0");
  detail::check_signals(signals, power_factors.size(), config.dim);
  if (draw.h.size() != signals.size()) throw ShapeError("phase_only_aggregate: one channel per signal required");
  std::vector<double> gains(signals.size());
  for (std::size_t n = 0; n < signals.size(); ++n) {
    if (!(power_factors[n] >= 0.0)) throw ParameterError("phase_only_aggregate: power factors must be >= 0");
    gains[n] = std::abs(draw.h[n]) * std::sqrt(power_factors[n]);
  }
  return detail::superpose(signals, detail::normalised(std::move(gains), beta), beta, config, noise_stream);
}

enum class PrecoderKind { inversion_fixed_beta, inversion_cotaf, inversion_bg_bound, phase_only };

inline const char* to_string(PrecoderKind k) {
  switch (k) {
    case PrecoderKind::inversion_fixed_beta: return "inversion_fixed_beta";
    case PrecoderKind::inversion_cotaf: return "inversion_cotaf";
    case PrecoderKind::inversion_bg_bound: return "inversion_bg_bound";
    case PrecoderKind::phase_only: return "phase_only";
  }
  return "?";
}

/// How the transmit coefficients and β are chosen each round.
///
/// inversion_fixed_beta uses `fixed_beta` when positive; otherwise β is
/// calibrated once with the COTAF rule on the first round's signals and then
/// frozen. inversion_bg_bound needs `bg`. phase_only uses the COTAF β for the
/// server and `phase_power_scale[n] * β` as device power factors (all ones when
/// empty), so a unit scale reproduces perfect magnitude alignment only when
/// |h_n| = 1.
struct PrecoderPolicy {
  PrecoderKind kind = PrecoderKind::inversion_cotaf;
  double fixed_beta = 0.0;
  BgBoundSpec bg{};
  std::vector<double> phase_power_scale;
};

}  // namespace airfl
