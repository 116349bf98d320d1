#pragma once

// Probability computations of the factorial generative model.
//
//   log p(Y, S, Z) = log P(Z_0) + sum_i log pi_i(S_i0) + log N(Y_0; ...)
//                  + sum_{t>=1} [ log P(Z_t | Z_{t-1})
//                               + sum_i log P_t(S_it | S_i,t-1, Z_t)
//                               + log N(Y_t; sum_i mu_{i,S_it}, sigma_t^2) ]
//
// The selector terms are present for interleaved variants only. Under an
// interleaved variant a chain that is not selected at step t must hold its
// state (factor 1), while the selected chain moves by its own matrix.

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "disagg/types.hpp"

namespace disagg {

/// Y_t = sum_i x_it.
inline AggregateSeries aggregate(const ApplianceMatrix& x) {
  if (x.values.empty()) throw ContractError("aggregate: appliance matrix is empty");
  AggregateSeries y;
  y.start_step = x.start_step;
  y.values.assign(x.num_steps(), 0.0);
  for (const auto& row : x.values) {
    if (row.size() != y.values.size()) throw ContractError("aggregate: ragged appliance matrix");
    for (std::size_t t = 0; t < row.size(); ++t) y.values[t] += row[t];
  }
  return y;
}

inline double gaussian_log_density(double y, double mean, double sigma) {
  const double z = (y - mean) / sigma;
  return -0.5 * std::log(2.0 * std::numbers::pi * sigma * sigma) - 0.5 * z * z;
}

inline double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

/// log N(y; sum_i mu_{i, states[i]}, sigma^2) with sigma taken from the bin of
/// `abs_step` when the model has per-bin noise.
inline double emission_log_density(const HouseholdModel& model, std::span<const int> states, double y,
                                   long abs_step) {
  double mean = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i)
    mean += model.chains[i].means[static_cast<std::size_t>(states[i])];
  return gaussian_log_density(y, mean, model.noise.sigma_at_bin(model.sampling.bin_of(abs_step)));
}

/// log P_t(S_it = next | S_i,t-1 = prev, Z_t = selected). `selected` must be
/// given exactly when the variant is interleaved.
inline double transition_log_prob(const HouseholdModel& model, std::size_t chain, long abs_step, int next,
                                  int prev, std::optional<int> selected, ModelVariant variant) {
  if (is_interleaved(variant) != selected.has_value())
    throw ContractError("transition_log_prob: selector value must be given iff the variant is interleaved");
  if (selected && *selected != static_cast<int>(chain)) return next == prev ? 0.0 : kNegInf;
  const auto& m = model.chains[chain].transitions(is_nonhomogeneous(variant), model.sampling.bin_of(abs_step));
  return safe_log(m(static_cast<std::size_t>(next), static_cast<std::size_t>(prev)));
}

namespace detail {

// Exact floating-point sum kept as non-overlapping partials and rounded once
// (Shewchuk). The result does not depend on the order of the terms.
class ExactSum {
 public:
  void add(double x) {
    std::size_t i = 0;
    for (double y : partials_) {
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials_[i++] = lo;
      x = hi;
    }
    partials_.resize(i);
    partials_.push_back(x);
  }

  double value() const {
    std::size_t n = partials_.size();
    if (n == 0) return 0.0;
    double hi = partials_[--n];
    double lo = 0.0;
    while (n > 0) {
      const double x = hi, y = partials_[--n];
      hi = x + y;
      lo = y - (hi - x);
      if (lo != 0.0) break;
    }
    // Round half-way cases the way the remaining partials point.
    if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) || (lo > 0.0 && partials_[n - 1] > 0.0))) {
      const double y = lo * 2.0;
      const double x = hi + y;
      if (y == x - hi) hi = x;
    }
    return hi;
  }

 private:
  std::vector<double> partials_;
};

inline void check_assignment_shape(const HouseholdModel& model, const AggregateSeries& y,
                                   const StateAssignment& a, ModelVariant variant) {
  const std::size_t I = model.num_chains();
  if (a.num_chains() != I)
    throw ContractError("assignment has " + std::to_string(a.num_chains()) + " chains, model has " +
                        std::to_string(I));
  for (std::size_t i = 0; i < I; ++i) {
    if (a.states[i].size() != y.size())
      throw ContractError("assignment length " + std::to_string(a.states[i].size()) +
                          " does not match series length " + std::to_string(y.size()));
    const int K = static_cast<int>(model.chains[i].num_states());
    for (int s : a.states[i])
      if (s < 0 || s >= K) throw ContractError("state index out of range for chain '" + model.chains[i].name + "'");
  }
  if (is_interleaved(variant) != a.selector.has_value())
    throw ContractError("assignment must carry a selector path iff the variant is interleaved");
  if (a.selector) {
    if (a.selector->size() != y.size()) throw ContractError("selector path length does not match series");
    for (int z : *a.selector)
      if (z < 0 || z >= static_cast<int>(I)) throw ContractError("selector value out of range");
  }
}

}  // namespace detail

/// Joint log-probability of the series and an assignment; -inf when the
/// assignment breaks a hard constraint. The terms are summed exactly and
/// rounded once, so equal multisets of factors give identical results.
inline double joint_log_prob(const HouseholdModel& model, const AggregateSeries& y, const StateAssignment& a,
                             ModelVariant variant) {
  model.require(variant);
  detail::check_assignment_shape(model, y, a, variant);
  const std::size_t I = model.num_chains();
  const std::size_t T = y.size();
  const bool interleaved = is_interleaved(variant);
  std::vector<int> column(I);

  detail::ExactSum lp;
  for (std::size_t t = 0; t < T; ++t) {
    const long abs_step = y.start_step + static_cast<long>(t);
    std::optional<int> z;
    if (interleaved) {
      z = (*a.selector)[t];
      const auto zi = static_cast<std::size_t>(*z);
      const double term = t == 0 ? safe_log(model.selector->initial[zi])
                                 : safe_log(model.selector->transitions(zi, static_cast<std::size_t>((*a.selector)[t - 1])));
      if (term == kNegInf) return kNegInf;
      lp.add(term);
    }
    for (std::size_t i = 0; i < I; ++i) {
      const int s = a.states[i][t];
      column[i] = s;
      const double term = t == 0 ? safe_log(model.chains[i].initial[static_cast<std::size_t>(s)])
                                 : transition_log_prob(model, i, abs_step, s, a.states[i][t - 1], z, variant);
      if (term == kNegInf) return kNegInf;
      lp.add(term);
    }
    lp.add(emission_log_density(model, column, y.values[t], abs_step));
  }
  return lp.value();
}

}  // namespace disagg
