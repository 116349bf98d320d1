#pragma once

// Synthetic households drawn from the generative model.
//
// Random numbers come from std::mt19937_64 (fully specified by the standard)
// converted to doubles and normals here rather than through the
// implementation-defined std:: distributions, so a seed reproduces the same
// draws on every platform.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "disagg/model.hpp"
#include "disagg/types.hpp"

namespace disagg {

struct SimConfig {
  int num_appliances = 5;
  int states_per_appliance = 3;
  int days = 25;
  SamplingSpec sampling;
  double mean_scale = 100.0;  // Wh spacing between consecutive state means, before the per-chain factor
  double self_loop_bias = 0.95;
  double nonhomogeneous_strength = 1.0;
  double noise_sigma = 10.0;
  std::uint64_t seed = 1;

  void validate() const {
    sampling.validate();
    if (num_appliances < 1) throw ContractError("num_appliances must be at least 1");
    if (states_per_appliance < 1) throw ContractError("states_per_appliance must be at least 1");
    if (days < 1) throw ContractError("days must be at least 1");
    if (!(mean_scale > 0.0)) throw ContractError("mean_scale must be positive");
    if (!(self_loop_bias > 0.0 && self_loop_bias < 1.0)) throw ContractError("self_loop_bias must lie in (0, 1)");
    if (!(nonhomogeneous_strength >= 0.0)) throw ContractError("nonhomogeneous_strength must be non-negative");
    if (!(noise_sigma >= 0.0)) throw ContractError("noise_sigma must be non-negative");
  }
};

/// Deterministic random source.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  int categorical(std::span<const double> p) {
    const double u = uniform();
    double acc = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      acc += p[k];
      if (u < acc) return static_cast<int>(k);
    }
    for (std::size_t k = p.size(); k-- > 0;)
      if (p[k] > 0.0) return static_cast<int>(k);
    return 0;
  }

 private:
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer, used to derive independent child seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace detail {

// Self-loop `bias`, remaining mass spread over the other states by random
// weights. The self-loop is written last as 1 - sum(others).
inline void fill_biased_row(std::span<double> row, std::size_t self, double bias, Rng& rng) {
  const std::size_t K = row.size();
  if (K == 1) {
    row[0] = 1.0;
    return;
  }
  std::vector<double> w(K, 0.0);
  double total = 0.0;
  for (std::size_t j = 0; j < K; ++j) {
    if (j == self) continue;
    w[j] = rng.uniform(0.1, 1.0);
    total += w[j];
  }
  double off = 0.0;
  for (std::size_t j = 0; j < K; ++j) {
    if (j == self) continue;
    row[j] = (1.0 - bias) * w[j] / total;
    off += row[j];
  }
  row[self] = 1.0 - off;
}

// Suppression weight in [0, 1] for a bin: a raised-cosine bump over the
// morning block 06:00-12:00, zero elsewhere.
inline double morning_suppression(int bin, int bins_per_day) {
  const double hour = 24.0 * (bin + 0.5) / bins_per_day;
  constexpr double begin = 6.0, end = 12.0;
  if (hour < begin || hour >= end) return 0.0;
  const double s = std::sin(std::numbers::pi * (hour - begin) / (end - begin));
  return s * s;
}

}  // namespace detail

/// Draw a household model. State means of chain i are {0, f_i s, 2 f_i s, ...}
/// with the per-chain factors f_i stratified over [0.5, 1.5] so that no two
/// chains share a step size. Per-bin matrices scale the OFF -> ON entries by
/// exp(-4 * strength * w(bin)) with w the morning suppression profile.
inline HouseholdModel sample_household_model(const SimConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const auto I = static_cast<std::size_t>(cfg.num_appliances);
  const auto K = static_cast<std::size_t>(cfg.states_per_appliance);
  const int B = cfg.sampling.bins_per_day;

  std::vector<std::size_t> stratum(I);
  for (std::size_t i = 0; i < I; ++i) stratum[i] = i;
  for (std::size_t i = I; i-- > 1;) {
    const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i + 1));
    std::swap(stratum[i], stratum[std::min(j, i)]);
  }

  HouseholdModel model;
  model.sampling = cfg.sampling;
  for (std::size_t i = 0; i < I; ++i) {
    ChainParams c;
    c.name = "appliance_" + std::to_string(i + 1);
    const double factor = 0.5 + (static_cast<double>(stratum[i]) + rng.uniform(0.2, 0.8)) / static_cast<double>(I);
    for (std::size_t k = 0; k < K; ++k) c.means.push_back(static_cast<double>(k) * cfg.mean_scale * factor);

    std::vector<double> w(K);
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      w[k] = k == 0 ? 2.0 : rng.uniform(0.2, 1.0);
      total += w[k];
    }
    for (double& v : w) v /= total;
    c.initial = std::move(w);

    TransitionMatrix base(K);
    for (std::size_t k = 0; k < K; ++k) detail::fill_biased_row(base.row(k), k, cfg.self_loop_bias, rng);
    for (int b = 0; b < B; ++b) {
      TransitionMatrix m = base;
      if (K > 1) {
        const double scale = std::exp(-4.0 * cfg.nonhomogeneous_strength * detail::morning_suppression(b, B));
        auto off_row = m.row(0);
        double off = 0.0;
        for (std::size_t j = 1; j < K; ++j) {
          off_row[j] = base(j, 0) * scale;
          off += off_row[j];
        }
        off_row[0] = 1.0 - off;
      }
      c.binned.push_back(std::move(m));
    }
    c.homogeneous = std::move(base);
    model.chains.push_back(std::move(c));
  }

  SelectorParams sel;
  sel.initial.assign(I, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < I; ++i) {
    sel.initial[i] = rng.uniform(0.5, 1.0);
    total += sel.initial[i];
  }
  for (double& v : sel.initial) v /= total;
  sel.transitions = TransitionMatrix(I);
  for (std::size_t b = 0; b < I; ++b) detail::fill_biased_row(sel.transitions.row(b), b, cfg.self_loop_bias, rng);
  model.selector = std::move(sel);

  model.noise.sigma = std::max(cfg.noise_sigma, kSigmaFloor);
  model.validate();
  return model;
}

struct SimulateOptions {
  // Emission noise override; 0 gives y = aggregate(x) exactly.
  std::optional<double> noise_sigma;
};

struct SimulationOutput {
  AggregateSeries y;
  ApplianceMatrix x;
  StateAssignment truth;
  std::size_t truncated = 0;  // noisy readings clipped at zero
};

/// Run the model forward for `days` whole days starting at midnight.
/// Interleaved variants draw Z_t first and move only chain Z_t.
inline SimulationOutput simulate(const HouseholdModel& model, int days, ModelVariant variant, std::uint64_t seed,
                                 const SimulateOptions& options = {}) {
  model.require(variant);
  if (days < 1) throw ContractError("simulate: days must be at least 1");
  Rng rng(seed);
  const std::size_t I = model.num_chains();
  const std::size_t T = static_cast<std::size_t>(days) * static_cast<std::size_t>(model.sampling.steps_per_day());
  const bool interleaved = is_interleaved(variant);
  const bool nonhomog = is_nonhomogeneous(variant);

  SimulationOutput out;
  out.truth.states.assign(I, std::vector<int>(T, 0));
  if (interleaved) out.truth.selector.emplace(T, 0);

  for (std::size_t t = 0; t < T; ++t) {
    const int bin = model.sampling.bin_of(static_cast<long>(t));
    if (t == 0) {
      if (interleaved) (*out.truth.selector)[0] = rng.categorical(model.selector->initial);
      for (std::size_t i = 0; i < I; ++i) out.truth.states[i][0] = rng.categorical(model.chains[i].initial);
      continue;
    }
    if (interleaved) {
      const int prev_z = (*out.truth.selector)[t - 1];
      const int z = rng.categorical(model.selector->transitions.row(static_cast<std::size_t>(prev_z)));
      (*out.truth.selector)[t] = z;
      for (std::size_t i = 0; i < I; ++i) out.truth.states[i][t] = out.truth.states[i][t - 1];
      const auto zi = static_cast<std::size_t>(z);
      const auto& m = model.chains[zi].transitions(nonhomog, bin);
      out.truth.states[zi][t] = rng.categorical(m.row(static_cast<std::size_t>(out.truth.states[zi][t - 1])));
    } else {
      for (std::size_t i = 0; i < I; ++i) {
        const auto& m = model.chains[i].transitions(nonhomog, bin);
        out.truth.states[i][t] = rng.categorical(m.row(static_cast<std::size_t>(out.truth.states[i][t - 1])));
      }
    }
  }

  out.x.names = model.names();
  out.x.values.assign(I, std::vector<double>(T));
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t t = 0; t < T; ++t)
      out.x.values[i][t] = model.chains[i].means[static_cast<std::size_t>(out.truth.states[i][t])];

  out.y = aggregate(out.x);
  for (std::size_t t = 0; t < T; ++t) {
    const double sigma =
        options.noise_sigma ? *options.noise_sigma : model.noise.sigma_at_bin(model.sampling.bin_of(static_cast<long>(t)));
    if (sigma == 0.0) continue;
    double v = out.y.values[t] + sigma * rng.normal();
    if (v < 0.0) {
      v = 0.0;
      ++out.truncated;
    }
    out.y.values[t] = v;
  }
  return out;
}

}  // namespace disagg
