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

// Federated training loops over the analog uplink.
//
// Three things can be sent per round:
//   model difference (M):  z_n = θ_n^{(t,E)} − θ,   server: θ ← θ + ŷ
//   one gradient (S):      z_n = −g_n^{(t,0)},      server: θ ← θ + η ŷ
//   local model:           z_n = θ_n^{(t,E)},       server: θ ← ŷ
// Every device transmits s_n = p_n z_n. With the S sign convention above the
// receiver noise enters the model as +η w/√β, the same sign as in M, so an M
// run with β_M = β_S/η² reproduces the S run path by path.

#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "airfl/channel.hpp"
#include "airfl/errors.hpp"
#include "airfl/lr.hpp"
#include "airfl/numkit.hpp"
#include "airfl/tasks/objective.hpp"

namespace airfl {

enum class Variant { airfedavg_m, airfedavg_s, airfedmodel, errorfree_fedavg_m, errorfree_fedavg_s };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::airfedavg_m: return "airfedavg_m";
    case Variant::airfedavg_s: return "airfedavg_s";
    case Variant::airfedmodel: return "airfedmodel";
    case Variant::errorfree_fedavg_m: return "errorfree_fedavg_m";
    case Variant::errorfree_fedavg_s: return "errorfree_fedavg_s";
  }
  return "?";
}

inline bool is_gradient_variant(Variant v) noexcept {
  return v == Variant::airfedavg_s || v == Variant::errorfree_fedavg_s;
}

inline bool is_error_free(Variant v) noexcept {
  return v == Variant::errorfree_fedavg_m || v == Variant::errorfree_fedavg_s;
}

struct AlgoConfig {
  Variant variant = Variant::airfedavg_m;
  std::size_t local_epochs = 1;  // E
  std::size_t rounds = 1;        // T
  std::size_t batch_size = 0;    // 0 means full local batch
  LrSchedule lr{};
  std::optional<double> lr_cap;  // clip η^t to this value when set
  ChannelConfig channel{};
  PrecoderPolicy precoder{};
  // For inversion_bg_bound: when > 0, G̃² is recomputed every round from this
  // G² and the round's channel draw; otherwise precoder.bg.g_tilde_sq is used.
  double gradient_bound_sq = 0.0;
  ParameterVector initial_model;
};

/// Named independent random streams of one run.
struct RunStreams {
  SeededStream batch;
  SeededStream channel;
  SeededStream noise;

  explicit RunStreams(std::uint64_t seed)
      : batch(seed, "batch"), channel(seed, "channel"), noise(seed, "receiver_noise") {}
  RunStreams(std::uint64_t batch_seed, std::uint64_t channel_seed, std::uint64_t noise_seed)
      : batch(batch_seed, "batch"), channel(channel_seed, "channel"), noise(noise_seed, "receiver_noise") {}
};

struct RunOptions {
  std::optional<double> optimal_loss;  // F*, enables the gap column
  bool record_models = false;
  bool record_epsilon = false;
  bool record_test_accuracy = true;  // only honoured for classification tasks
};

/// One entry per round t = 0..T. Entry t describes the model θ^t at the start
/// of round t and the aggregation performed during round t; the final entry
/// (t = T) has no aggregation, so its β and MAE fields are zero.
struct RoundRecord {
  std::size_t round = 0;
  double loss = 0.0;
  double gap = std::numeric_limits<double>::quiet_NaN();
  double grad_sq_norm = 0.0;
  double lr = 0.0;
  double beta = 0.0;
  double mae_sq_norm = 0.0;
  double mae_bias_norm = 0.0;
  double theoretical_mse = 0.0;
  double test_accuracy = std::numeric_limits<double>::quiet_NaN();
  double max_sample_grad_sq = 0.0;  // largest ||g_n^{(t,e)}||² seen this round
  double wall_seconds = 0.0;
  std::uint64_t model_hash = 0;
  bool lr_clipped = false;
};

struct RunTrace {
  Variant variant = Variant::airfedavg_m;
  std::vector<RoundRecord> rounds;
  std::vector<ParameterVector> models;    // θ^0..θ^T when requested
  std::vector<ParameterVector> epsilons;  // ε^0..ε^{T-1} when requested
  std::vector<std::size_t> clipped_rounds;
  bool diverged = false;
  std::optional<std::size_t> diverged_round;
  bool has_gap = false;
  bool has_test_accuracy = false;

  std::size_t length() const noexcept { return rounds.size(); }
};

/// FNV-1a over the IEEE-754 bytes of the coordinates.
inline std::uint64_t model_hash(const ParameterVector& theta) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (double v : theta) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001B3ULL;
    }
  }
  return h;
}

/// E local SGD steps from θ; returns z = θ^{(E)} − θ = −η Σ_e g^{(e)}.
/// Batches are drawn sequentially from `stream`, one per epoch.
template <FederatedTask Task>
ParameterVector local_update_accumulate(const Task& task, std::size_t device, const ParameterVector& theta,
                                        double eta, std::size_t epochs, std::size_t batch_size, SeededStream& stream,
                                        double* max_grad_sq = nullptr) {
  if (epochs < 1) throw ParameterError("local_update_accumulate: E must be >= 1");
  if (!(eta >= 0.0)) throw ParameterError("local_update_accumulate: eta must be >= 0");
  const std::size_t b = batch_size == 0 ? task.device_size(device) : batch_size;
  ParameterVector local = theta;
  ParameterVector grad_sum(task.dim());
  for (std::size_t e = 0; e < epochs; ++e) {
    const ParameterVector g = minibatch_gradient(task, device, local, b, stream);
    if (max_grad_sq) *max_grad_sq = std::max(*max_grad_sq, g.squared_norm());
    grad_sum += g;
    if (e + 1 < epochs) local.axpy(-eta, g);
  }
  grad_sum *= -eta;
  return grad_sum;
}

namespace detail {

inline void validate_algo(const AlgoConfig& cfg, std::size_t dim, std::size_t n_devices) {
  if (cfg.local_epochs < 1) throw ParameterError("local epochs E must be >= 1");
  if (cfg.rounds < 1) throw ParameterError("rounds T must be >= 1");
  if (is_gradient_variant(cfg.variant) && cfg.local_epochs != 1) {
    throw ParameterError(std::string(to_string(cfg.variant)) + " transmits a single local gradient and needs E = 1");
  }
  if (cfg.initial_model.dim() != dim) throw ShapeError("initial model dimension does not match the task");
  if (cfg.lr_cap && !(*cfg.lr_cap > 0.0)) throw ParameterError("learning-rate cap must be > 0");
  validate(cfg.lr);
  if (!is_error_free(cfg.variant)) {
    cfg.channel.validate();
    if (cfg.channel.dim != dim) throw ShapeError("channel dimension does not match the model dimension");
    if (cfg.precoder.kind == PrecoderKind::phase_only && !cfg.precoder.phase_power_scale.empty() &&
        cfg.precoder.phase_power_scale.size() != n_devices) {
      throw ShapeError("phase-only power scales need one entry per device");
    }
  }
}

// Round-to-round state of the denoising-factor policy.
struct BetaState {
  std::optional<double> previous;
  std::optional<double> frozen;
};

inline double choose_beta(const AlgoConfig& cfg, std::span<const ParameterVector> signals, const ChannelDraw& draw,
                          std::span<const double> weights, double eta, BetaState& state) {
  const ChannelConfig& ch = cfg.channel;
  auto cotaf = [&] {
    try {
      return cotaf_denoising_factor(signals, draw, ch);
    } catch (const DegenerateError&) {
      return state.previous.value_or(static_cast<double>(ch.dim) * ch.transmit_power);
    }
  };
  switch (cfg.precoder.kind) {
    case PrecoderKind::inversion_cotaf:
    case PrecoderKind::phase_only:
      return cotaf();
    case PrecoderKind::inversion_fixed_beta:
      if (cfg.precoder.fixed_beta > 0.0) return cfg.precoder.fixed_beta;
      if (!state.frozen) state.frozen = cotaf();
      return *state.frozen;
    case PrecoderKind::inversion_bg_bound: {
      BgBoundSpec spec = cfg.precoder.bg;
      if (cfg.gradient_bound_sq > 0.0) spec.g_tilde_sq = g_tilde_sq(cfg.gradient_bound_sq, weights, draw, ch);
      spec.n_devices = weights.size();
      // A gradient transmitter is not scaled by η, so its rule uses η = 1.
      return bg_bound_denoising_factor(is_gradient_variant(cfg.variant) ? 1.0 : eta, spec, ch);
    }
  }
  throw ParameterError("unknown precoder kind");
}

}  // namespace detail

/// Generic training loop shared by every variant.
template <FederatedTask Task>
RunTrace run_federated(const AlgoConfig& cfg, const Task& task, const RunStreams& streams,
                       const RunOptions& opts = {}) {
  const std::size_t N = task.num_devices();
  const std::size_t d = task.dim();
  detail::validate_algo(cfg, d, N);

  std::vector<double> weights(N);
  for (std::size_t n = 0; n < N; ++n) weights[n] = task.weight(n);

  RunTrace trace;
  trace.variant = cfg.variant;
  trace.has_gap = opts.optimal_loss.has_value();
  constexpr bool kClassifier = ClassificationTaskLike<Task>;
  trace.has_test_accuracy = kClassifier && opts.record_test_accuracy;
  trace.rounds.reserve(cfg.rounds + 1);

  ParameterVector theta = cfg.initial_model;
  detail::BetaState beta_state;
  using Clock = std::chrono::steady_clock;

  std::optional<double> known_loss;  // loss of the current θ, if already evaluated
  auto describe_model = [&](std::size_t t, RoundRecord& rec) {
    rec.round = t;
    rec.loss = known_loss ? *known_loss : global_loss(task, theta);
    if (opts.optimal_loss) rec.gap = rec.loss - *opts.optimal_loss;
    rec.grad_sq_norm = global_gradient(task, theta).squared_norm();
    if constexpr (kClassifier) {
      if (opts.record_test_accuracy) rec.test_accuracy = task.test_accuracy(theta);
    }
    rec.model_hash = model_hash(theta);
    if (opts.record_models) trace.models.push_back(theta);
  };

  for (std::size_t t = 0; t <= cfg.rounds; ++t) {
    const auto started = Clock::now();
    RoundRecord rec;
    describe_model(t, rec);
    double eta = lr_value(cfg.lr, t);
    if (cfg.lr_cap && eta > *cfg.lr_cap) {
      eta = *cfg.lr_cap;
      rec.lr_clipped = true;
    }
    rec.lr = eta;
    if (t == cfg.rounds) {
      rec.wall_seconds = std::chrono::duration<double>(Clock::now() - started).count();
      trace.rounds.push_back(rec);
      break;
    }
    if (rec.lr_clipped) trace.clipped_rounds.push_back(t);

    // Local computation.
    std::vector<ParameterVector> signals(N);
    const SeededStream round_batches = streams.batch.child(t);
    for (std::size_t n = 0; n < N; ++n) {
      SeededStream bs = round_batches.child(n);
      ParameterVector z;
      if (is_gradient_variant(cfg.variant)) {
        const std::size_t b = cfg.batch_size == 0 ? task.device_size(n) : cfg.batch_size;
        z = minibatch_gradient(task, n, theta, b, bs);
        rec.max_sample_grad_sq = std::max(rec.max_sample_grad_sq, z.squared_norm());
        z *= -1.0;
      } else {
        z = local_update_accumulate(task, n, theta, eta, cfg.local_epochs, cfg.batch_size, bs,
                                    &rec.max_sample_grad_sq);
        if (cfg.variant == Variant::airfedmodel) z += theta;
      }
      z *= weights[n];
      signals[n] = std::move(z);
    }

    // Aggregation.
    ParameterVector estimate;
    if (is_error_free(cfg.variant)) {
      estimate = ParameterVector(d);
      for (const auto& s : signals) estimate += s;
      if (opts.record_epsilon) trace.epsilons.emplace_back(d);
    } else {
      const ChannelDraw draw = draw_channels(cfg.channel, N, t, streams.channel);
      const double beta = detail::choose_beta(cfg, signals, draw, weights, eta, beta_state);
      beta_state.previous = beta;
      SeededStream noise = streams.noise.child(t);
      AggregationResult agg;
      if (cfg.precoder.kind == PrecoderKind::phase_only) {
        std::vector<double> power(N, beta);
        for (std::size_t n = 0; n < cfg.precoder.phase_power_scale.size(); ++n) {
          power[n] = beta * cfg.precoder.phase_power_scale[n];
        }
        agg = phase_only_aggregate(signals, power, draw, beta, cfg.channel, noise);
      } else {
        agg = aircomp_aggregate_inverted(signals, draw, beta, cfg.channel, noise);
      }
      rec.beta = beta;
      rec.mae_sq_norm = agg.record.sq_norm;
      rec.mae_bias_norm = agg.record.conditional_bias.norm();
      rec.theoretical_mse = agg.record.theoretical_mse;
      if (opts.record_epsilon) trace.epsilons.push_back(std::move(agg.record.epsilon));
      estimate = std::move(agg.estimate);
    }

    // Server update.
    switch (cfg.variant) {
      case Variant::airfedavg_m:
      case Variant::errorfree_fedavg_m:
        theta += estimate;
        break;
      case Variant::airfedavg_s:
      case Variant::errorfree_fedavg_s:
        theta.axpy(eta, estimate);
        break;
      case Variant::airfedmodel:
        theta = std::move(estimate);
        break;
    }

    rec.wall_seconds = std::chrono::duration<double>(Clock::now() - started).count();
    trace.rounds.push_back(rec);

    known_loss.reset();
    if (theta.all_finite()) known_loss = global_loss(task, theta);
    if (!known_loss || !std::isfinite(*known_loss)) {
      trace.diverged = true;
      trace.diverged_round = t + 1;
      break;
    }
  }
  return trace;
}

namespace detail {
template <FederatedTask Task>
RunTrace run_as(Variant v, AlgoConfig cfg, const Task& task, const RunStreams& streams, const RunOptions& opts) {
  cfg.variant = v;
  return run_federated(cfg, task, streams, opts);
}
}  // namespace detail

template <FederatedTask Task>
RunTrace run_airfedavg_m(const AlgoConfig& cfg, const Task& task, const RunStreams& s, const RunOptions& o = {}) {
  return detail::run_as(Variant::airfedavg_m, cfg, task, s, o);
}

template <FederatedTask Task>
RunTrace run_airfedavg_s(const AlgoConfig& cfg, const Task& task, const RunStreams& s, const RunOptions& o = {}) {
  return detail::run_as(Variant::airfedavg_s, cfg, task, s, o);
}

template <FederatedTask Task>
RunTrace run_airfedmodel(const AlgoConfig& cfg, const Task& task, const RunStreams& s, const RunOptions& o = {}) {
  return detail::run_as(Variant::airfedmodel, cfg, task, s, o);
}

template <FederatedTask Task>
RunTrace run_errorfree_fedavg_m(const AlgoConfig& cfg, const Task& task, const RunStreams& s,
                                const RunOptions& o = {}) {
  return detail::run_as(Variant::errorfree_fedavg_m, cfg, task, s, o);
}

template <FederatedTask Task>
RunTrace run_errorfree_fedavg_s(const AlgoConfig& cfg, const Task& task, const RunStreams& s,
                                const RunOptions& o = {}) {
  return detail::run_as(Variant::errorfree_fedavg_s, cfg, task, s, o);
}

/// Replays one aggregation error through a single server step, isolating how
/// each variant exposes the model to ε: M adds ε, S adds η ε, and the model
/// variant replaces θ by the perturbed aggregate.
inline ParameterVector apply_server_update(Variant v, const ParameterVector& theta, const ParameterVector& ideal,
                                           const ParameterVector& epsilon, double eta) {
  ParameterVector estimate = ideal + epsilon;
  switch (v) {
    case Variant::airfedavg_m:
    case Variant::errorfree_fedavg_m:
      return theta + estimate;
    case Variant::airfedavg_s:
    case Variant::errorfree_fedavg_s: {
      ParameterVector out = theta;
      out.axpy(eta, estimate);
      return out;
    }
    case Variant::airfedmodel:
      return estimate;
  }
  throw ParameterError("unknown variant");
}

}  // namespace airfl
