#pragma once

// MAP decoding of hidden states.
//
// Factorial variants (FHMM, FNHMM) use coordinate ascent over chains: each
// chain is re-decoded exactly by single-chain Viterbi against the residual
// left by the others. Interleaved variants (IFHMM, IFNHMM) re-decode a pair
// of chains together with the selector path by an exact dynamic program over
// K_m x K_n x I joint states, with the remaining chains held fixed. Their
// ascent starts from the best of the constant path, a greedy tracking path
// and, when small enough, the same DP run over all chains at once.
//
// Every candidate produced by a block update is rescored with
// joint_log_prob and kept only if it is strictly better, so the reported
// log-posterior never decreases.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "disagg/model.hpp"
#include "disagg/types.hpp"

namespace disagg {

struct DecodeConfig {
  int max_sweeps = 50;
  double improvement_tol = 1e-9;
  double oracle_guard = 1e7;  // maximum number of assignments exact_viterbi may enumerate
  // Interleaved decoding also starts from the joint DP over all chains when
  // T * prod(K) * I stays within this many table entries. 0 disables it.
  double joint_start_budget = 2.5e7;

  void validate() const {
    if (max_sweeps < 1) throw ContractError("max_sweeps must be at least 1");
    if (!(improvement_tol >= 0.0)) throw ContractError("improvement_tol must be non-negative");
    if (!(joint_start_budget >= 0.0)) throw ContractError("joint_start_budget must be non-negative");
  }
};

struct DisaggregationResult {
  ModelVariant variant = ModelVariant::FHMM;
  StateAssignment assignment;
  ApplianceMatrix energy;  // energy[i][t] = mu_{i, S_it}
  double log_posterior = kNegInf;  // joint log-probability, i.e. up to log P(Y)
  int sweeps_used = 0;
  int improving_sweeps = 0;  // sweeps that raised the log-posterior by more than the tolerance
  bool converged = false;
  // Candidate minus incumbent joint log-probability for every block update.
  std::vector<double> update_deltas;
};

/// x_hat[i][t] = mu_{i, states[i][t]}.
inline ApplianceMatrix states_to_energy(const HouseholdModel& model, const StateAssignment& a, long start_step = 0) {
  if (a.num_chains() != model.num_chains()) throw ContractError("states_to_energy: chain count mismatch");
  ApplianceMatrix x;
  x.names = model.names();
  x.start_step = start_step;
  x.values.resize(model.num_chains());
  for (std::size_t i = 0; i < model.num_chains(); ++i) {
    const auto& means = model.chains[i].means;
    x.values[i].reserve(a.states[i].size());
    for (int s : a.states[i]) {
      if (s < 0 || static_cast<std::size_t>(s) >= means.size())
        throw ContractError("states_to_energy: state index out of range");
      x.values[i].push_back(means[static_cast<std::size_t>(s)]);
    }
  }
  return x;
}

namespace detail {

// Log-domain parameter tables resolved per time step.
struct LogTables {
  std::size_t num_chains = 0;
  std::size_t num_steps = 0;
  bool nonhomogeneous = false;
  std::vector<int> bin;        // per step
  std::vector<double> sigma;   // per step
  std::vector<std::vector<double>> log_initial;                 // [chain][state]
  std::vector<std::vector<std::vector<double>>> log_transition;  // [chain][table][prev * K + next]
  std::vector<double> log_selector_initial;
  std::vector<double> log_selector_transition;  // [prev * I + next]

  LogTables(const HouseholdModel& model, const AggregateSeries& y, ModelVariant variant)
      : num_chains(model.num_chains()), num_steps(y.size()), nonhomogeneous(is_nonhomogeneous(variant)) {
    for (std::size_t t = 0; t < num_steps; ++t) {
      const int b = model.sampling.bin_of(y.start_step + static_cast<long>(t));
      bin.push_back(b);
      sigma.push_back(model.noise.sigma_at_bin(b));
    }
    for (const auto& c : model.chains) {
      std::vector<double> li;
      for (double p : c.initial) li.push_back(safe_log(p));
      log_initial.push_back(std::move(li));
      std::vector<std::vector<double>> tables;
      auto add = [&](const TransitionMatrix& m) {
        std::vector<double> flat(m.size() * m.size());
        for (std::size_t k = 0; k < m.size(); ++k)
          for (std::size_t j = 0; j < m.size(); ++j) flat[k * m.size() + j] = safe_log(m(j, k));
        tables.push_back(std::move(flat));
      };
      if (nonhomogeneous) {
        for (const auto& m : c.binned) add(m);
      } else {
        add(*c.homogeneous);
      }
      log_transition.push_back(std::move(tables));
    }
    if (is_interleaved(variant)) {
      const auto& sel = *model.selector;
      for (double p : sel.initial) log_selector_initial.push_back(safe_log(p));
      log_selector_transition.resize(num_chains * num_chains);
      for (std::size_t b = 0; b < num_chains; ++b)
        for (std::size_t a = 0; a < num_chains; ++a)
          log_selector_transition[b * num_chains + a] = safe_log(sel.transitions(a, b));
    }
  }

  double transition(std::size_t chain, std::size_t t, int next, int prev) const {
    const auto& table = log_transition[chain][nonhomogeneous ? static_cast<std::size_t>(bin[t]) : 0];
    const std::size_t K = log_initial[chain].size();
    return table[static_cast<std::size_t>(prev) * K + static_cast<std::size_t>(next)];
  }
};

inline std::vector<int> initial_argmax(const HouseholdModel& model) {
  std::vector<int> out;
  for (const auto& c : model.chains)
    out.push_back(static_cast<int>(std::max_element(c.initial.begin(), c.initial.end()) - c.initial.begin()));
  return out;
}

// Exact single-chain Viterbi for `chain` with every other chain fixed.
inline std::vector<int> decode_single_chain(const HouseholdModel& model, const LogTables& lt,
                                            const AggregateSeries& y, const StateAssignment& current,
                                            std::size_t chain) {
  const std::size_t T = y.size();
  const auto& means = model.chains[chain].means;
  const std::size_t K = means.size();
  std::vector<double> rest(T, 0.0);
  for (std::size_t q = 0; q < model.num_chains(); ++q) {
    if (q == chain) continue;
    for (std::size_t t = 0; t < T; ++t) rest[t] += model.chains[q].means[static_cast<std::size_t>(current.states[q][t])];
  }

  std::vector<double> score(K), next(K);
  std::vector<std::int32_t> back(T * K, -1);
  for (std::size_t k = 0; k < K; ++k)
    score[k] = lt.log_initial[chain][k] + gaussian_log_density(y.values[0], rest[0] + means[k], lt.sigma[0]);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t k = 0; k < K; ++k) {
      double best = kNegInf;
      std::int32_t arg = -1;
      for (std::size_t kp = 0; kp < K; ++kp) {
        const double v = score[kp] + lt.transition(chain, t, static_cast<int>(k), static_cast<int>(kp));
        if (v > best) {
          best = v;
          arg = static_cast<std::int32_t>(kp);
        }
      }
      back[t * K + k] = arg;
      next[k] = best == kNegInf ? kNegInf
                                : best + gaussian_log_density(y.values[t], rest[t] + means[k], lt.sigma[t]);
    }
    std::swap(score, next);
  }

  std::vector<int> path(T);
  std::size_t end = 0;
  for (std::size_t k = 1; k < K; ++k)
    if (score[k] > score[end]) end = k;
  if (score[end] == kNegInf) return current.states[chain];
  path[T - 1] = static_cast<int>(end);
  for (std::size_t t = T - 1; t > 0; --t)
    path[t - 1] = back[t * K + static_cast<std::size_t>(path[t])];
  return path;
}

// Exact joint re-decoding of the chains in `free_chains` plus the selector
// path, every other chain fixed at its incumbent path. Joint state index is
// s * I + z where s is the mixed-radix index of the free chains' states.
inline StateAssignment decode_block(const HouseholdModel& model, const LogTables& lt, const AggregateSeries& y,
                                    const StateAssignment& current, std::span<const std::size_t> free_chains) {
  const std::size_t I = model.num_chains();
  const std::size_t T = y.size();
  const std::size_t F = free_chains.size();

  std::vector<int> free_pos(I, -1);
  std::vector<std::size_t> radix(F), stride(F);
  std::size_t num_joint = 1;
  for (std::size_t p = 0; p < F; ++p) {
    free_pos[free_chains[p]] = static_cast<int>(p);
    radix[p] = model.chains[free_chains[p]].num_states();
    stride[p] = num_joint;
    num_joint *= radix[p];
  }
  const std::size_t N = num_joint * I;

  std::vector<std::vector<int>> digit(num_joint, std::vector<int>(F));
  std::vector<double> free_mean(num_joint, 0.0);
  for (std::size_t s = 0; s < num_joint; ++s) {
    for (std::size_t p = 0; p < F; ++p) {
      digit[s][p] = static_cast<int>((s / stride[p]) % radix[p]);
      free_mean[s] += model.chains[free_chains[p]].means[static_cast<std::size_t>(digit[s][p])];
    }
  }

  std::vector<double> rest(T, 0.0);
  for (std::size_t q = 0; q < I; ++q) {
    if (free_pos[q] >= 0) continue;
    for (std::size_t t = 0; t < T; ++t) rest[t] += model.chains[q].means[static_cast<std::size_t>(current.states[q][t])];
  }

  std::vector<double> score(N), next(N), emission(num_joint), fixed_term(I);
  std::vector<double> carry(N);             // best over previous selector value, per (s, z)
  std::vector<std::int32_t> carry_arg(N);
  std::vector<std::int32_t> back(T * N, -1);

  for (std::size_t s = 0; s < num_joint; ++s) {
    double base = gaussian_log_density(y.values[0], rest[0] + free_mean[s], lt.sigma[0]);
    for (std::size_t p = 0; p < F; ++p)
      base += lt.log_initial[free_chains[p]][static_cast<std::size_t>(digit[s][p])];
    for (std::size_t z = 0; z < I; ++z) score[s * I + z] = base + lt.log_selector_initial[z];
  }

  for (std::size_t t = 1; t < T; ++t) {
    // A fixed chain that changes at t forces the selector onto it.
    int forced = -1;
    for (std::size_t q = 0; q < I; ++q) {
      if (free_pos[q] >= 0 || current.states[q][t] == current.states[q][t - 1]) continue;
      if (forced >= 0)
        throw std::logic_error("decode_block: incumbent has two fixed chains changing at step " + std::to_string(t));
      forced = static_cast<int>(q);
    }
    for (std::size_t z = 0; z < I; ++z) {
      if (forced >= 0 && static_cast<int>(z) != forced) {
        fixed_term[z] = kNegInf;
      } else if (free_pos[z] < 0) {
        fixed_term[z] = lt.transition(z, t, current.states[z][t], current.states[z][t - 1]);
      } else {
        fixed_term[z] = 0.0;
      }
    }
    for (std::size_t s = 0; s < num_joint; ++s)
      emission[s] = gaussian_log_density(y.values[t], rest[t] + free_mean[s], lt.sigma[t]);

    for (std::size_t s = 0; s < num_joint; ++s) {
      for (std::size_t z = 0; z < I; ++z) {
        double best = kNegInf;
        std::int32_t arg = -1;
        for (std::size_t zp = 0; zp < I; ++zp) {
          const double v = score[s * I + zp] + lt.log_selector_transition[zp * I + z];
          if (v > best) {
            best = v;
            arg = static_cast<std::int32_t>(zp);
          }
        }
        carry[s * I + z] = best;
        carry_arg[s * I + z] = arg;
      }
    }

    for (std::size_t s = 0; s < num_joint; ++s) {
      for (std::size_t z = 0; z < I; ++z) {
        const std::size_t idx = s * I + z;
        next[idx] = kNegInf;
        if (fixed_term[z] == kNegInf) continue;
        double best = kNegInf;
        std::int32_t arg = -1;
        const int p = free_pos[z];
        if (p < 0) {
          // Every free chain holds.
          best = carry[idx];
          arg = carry_arg[idx] < 0 ? -1 : static_cast<std::int32_t>(s * I) + carry_arg[idx];
        } else {
          // Only free chain z may move.
          const auto pp = static_cast<std::size_t>(p);
          const int here = digit[s][pp];
          for (std::size_t kp = 0; kp < radix[pp]; ++kp) {
            const std::size_t sp = s - static_cast<std::size_t>(here) * stride[pp] + kp * stride[pp];
            const double v = carry[sp * I + z] + lt.transition(z, t, here, static_cast<int>(kp));
            if (v > best) {
              best = v;
              arg = static_cast<std::int32_t>(sp * I) + carry_arg[sp * I + z];
            }
          }
        }
        if (best == kNegInf) continue;
        next[idx] = best + fixed_term[z] + emission[s];
        back[t * N + idx] = arg;
      }
    }
    std::swap(score, next);
  }

  std::size_t end = 0;
  for (std::size_t idx = 1; idx < N; ++idx)
    if (score[idx] > score[end]) end = idx;
  if (score[end] == kNegInf) return current;

  StateAssignment out = current;
  if (!out.selector) out.selector.emplace(T, 0);
  std::size_t idx = end;
  for (std::size_t t = T; t-- > 0;) {
    const std::size_t s = idx / I;
    (*out.selector)[t] = static_cast<int>(idx % I);
    for (std::size_t p = 0; p < F; ++p) out.states[free_chains[p]][t] = digit[s][p];
    if (t > 0) idx = static_cast<std::size_t>(back[t * N + idx]);
  }
  return out;
}

// Greedy one-change-per-step tracking: at each step keep the current joint
// state or move a single chain, whichever scores best locally. The selector
// path is left for the caller to decode.
inline StateAssignment greedy_tracking(const HouseholdModel& model, const LogTables& lt, const AggregateSeries& y) {
  const std::size_t I = model.num_chains();
  const std::size_t T = y.size();
  std::vector<int> cur = initial_argmax(model);
  auto total = [&](const std::vector<int>& s) {
    double sum = 0.0;
    for (std::size_t i = 0; i < I; ++i) sum += model.chains[i].means[static_cast<std::size_t>(s[i])];
    return sum;
  };

  // First step: a few passes of per-chain best response.
  for (int pass = 0; pass < 3; ++pass) {
    for (std::size_t i = 0; i < I; ++i) {
      double best = kNegInf;
      int arg = cur[i];
      for (int k = 0; k < static_cast<int>(model.chains[i].num_states()); ++k) {
        std::vector<int> s = cur;
        s[i] = k;
        const double v = lt.log_initial[i][static_cast<std::size_t>(k)] +
                         gaussian_log_density(y.values[0], total(s), lt.sigma[0]);
        if (v > best) {
          best = v;
          arg = k;
        }
      }
      cur[i] = arg;
    }
  }

  StateAssignment out = StateAssignment::constant(cur, T);
  for (std::size_t t = 1; t < T; ++t) {
    double hold = 0.0;
    for (std::size_t i = 0; i < I; ++i) hold += lt.transition(i, t, cur[i], cur[i]);
    const double base = total(cur);
    double best = hold + gaussian_log_density(y.values[t], base, lt.sigma[t]);
    std::size_t best_chain = I;
    int best_state = 0;
    for (std::size_t i = 0; i < I; ++i) {
      const double mu = model.chains[i].means[static_cast<std::size_t>(cur[i])];
      double rest_hold = 0.0;
      for (std::size_t q = 0; q < I; ++q)
        if (q != i) rest_hold += lt.transition(q, t, cur[q], cur[q]);
      for (int k = 0; k < static_cast<int>(model.chains[i].num_states()); ++k) {
        if (k == cur[i]) continue;
        const double v = rest_hold + lt.transition(i, t, k, cur[i]) +
                         gaussian_log_density(y.values[t], base - mu + model.chains[i].means[static_cast<std::size_t>(k)],
                                              lt.sigma[t]);
        if (v > best) {
          best = v;
          best_chain = i;
          best_state = k;
        }
      }
    }
    if (best_chain < I) cur[best_chain] = best_state;
    for (std::size_t i = 0; i < I; ++i) out.states[i][t] = cur[i];
  }
  return out;
}

inline void check_series(const HouseholdModel& model, const AggregateSeries& y, ModelVariant variant) {
  model.require(variant);
  if (y.values.empty()) throw ContractError("cannot decode an empty series");
  y.validate();
}

inline DisaggregationResult finish(const HouseholdModel& model, const AggregateSeries& y, ModelVariant variant,
                                   StateAssignment a, double lp) {
  DisaggregationResult r;
  r.variant = variant;
  r.energy = states_to_energy(model, a, y.start_step);
  r.assignment = std::move(a);
  r.log_posterior = lp;
  return r;
}

inline double delta_of(double candidate, double incumbent) {
  if (incumbent == kNegInf) return candidate == kNegInf ? 0.0 : std::numeric_limits<double>::infinity();
  return candidate - incumbent;
}

// Shared coordinate-ascent driver. `update` maps the incumbent and a block
// index to a candidate assignment.
template <typename Update>
DisaggregationResult coordinate_ascent(const HouseholdModel& model, const AggregateSeries& y, ModelVariant variant,
                                       const DecodeConfig& cfg, StateAssignment a, std::size_t num_blocks,
                                       Update&& update) {
  double lp = joint_log_prob(model, y, a, variant);
  std::vector<double> deltas;
  int sweeps = 0;
  int improving = 0;
  bool converged = false;
  for (int sweep = 1; sweep <= cfg.max_sweeps; ++sweep) {
    const double before = lp;
    for (std::size_t b = 0; b < num_blocks; ++b) {
      StateAssignment candidate = update(a, b);
      const double clp = joint_log_prob(model, y, candidate, variant);
      deltas.push_back(delta_of(clp, lp));
      if (clp > lp) {
        a = std::move(candidate);
        lp = clp;
      }
    }
    sweeps = sweep;
    const double gain = delta_of(lp, before);
    if (gain > cfg.improvement_tol) ++improving;
    if (gain <= cfg.improvement_tol) {
      converged = true;
      break;
    }
  }
  auto r = finish(model, y, variant, std::move(a), lp);
  r.sweeps_used = sweeps;
  r.improving_sweeps = improving;
  r.converged = converged;
  r.update_deltas = std::move(deltas);
  return r;
}

}  // namespace detail

/// Coordinate ascent over chains for FHMM / FNHMM. Starts from every chain
/// held at argmax of its initial distribution unless `initial` is given.
inline DisaggregationResult chainwise_viterbi(const HouseholdModel& model, const AggregateSeries& y,
                                              ModelVariant variant, const DecodeConfig& cfg = {},
                                              std::optional<StateAssignment> initial = std::nullopt) {
  if (is_interleaved(variant))
    throw ContractError("chainwise_viterbi decodes factorial variants only, got " + std::string(to_string(variant)));
  cfg.validate();
  detail::check_series(model, y, variant);
  const detail::LogTables lt(model, y, variant);
  StateAssignment a = initial ? std::move(*initial) : StateAssignment::constant(detail::initial_argmax(model), y.size());
  return detail::coordinate_ascent(model, y, variant, cfg, std::move(a), model.num_chains(),
                                   [&](const StateAssignment& cur, std::size_t chain) {
                                     StateAssignment cand = cur;
                                     cand.states[chain] = detail::decode_single_chain(model, lt, y, cur, chain);
                                     return cand;
                                   });
}

/// Pairwise coordinate ascent for IFHMM / IFNHMM. Each update re-decodes a
/// pair (m, n), m < n in lexicographic order, jointly with the selector path.
/// With a single chain the block is that chain alone. Without `initial` the
/// ascent starts from the best of: every chain constant at argmax pi, greedy
/// tracking, and (I > 2, within cfg.joint_start_budget) the all-chain DP.
inline DisaggregationResult interleaved_viterbi(const HouseholdModel& model, const AggregateSeries& y,
                                                ModelVariant variant, const DecodeConfig& cfg = {},
                                                std::optional<StateAssignment> initial = std::nullopt) {
  if (!is_interleaved(variant))
    throw ContractError("interleaved_viterbi decodes interleaved variants only, got " +
                        std::string(to_string(variant)));
  cfg.validate();
  detail::check_series(model, y, variant);
  const detail::LogTables lt(model, y, variant);
  const std::size_t I = model.num_chains();

  StateAssignment a;
  if (initial) {
    a = std::move(*initial);
    if (!a.is_one_at_a_time()) throw ContractError("interleaved_viterbi: initial assignment is infeasible");
  } else {
    a = StateAssignment::constant(detail::initial_argmax(model), y.size());
    a.selector.emplace(y.size(), 0);
    a = detail::decode_block(model, lt, y, a, {});
    // Other starts: greedy tracking, and the joint DP over every chain when it
    // fits the budget. The highest-scoring start wins; ties keep the earlier.
    double best = joint_log_prob(model, y, a, variant);
    auto consider = [&](StateAssignment c) {
      const double lp = joint_log_prob(model, y, c, variant);
      if (lp > best) {
        a = std::move(c);
        best = lp;
      }
    };
    StateAssignment g = detail::greedy_tracking(model, lt, y);
    g.selector.emplace(y.size(), 0);
    consider(detail::decode_block(model, lt, y, g, {}));
    double table = static_cast<double>(y.size()) * static_cast<double>(I);
    for (const auto& c : model.chains) table *= static_cast<double>(c.num_states());
    if (I > 2 && table <= cfg.joint_start_budget) {
      std::vector<std::size_t> all(I);
      std::iota(all.begin(), all.end(), std::size_t{0});
      consider(detail::decode_block(model, lt, y, a, all));
    }
  }

  std::vector<std::vector<std::size_t>> blocks;
  if (I == 1) blocks.push_back({0});
  for (std::size_t m = 0; m < I; ++m)
    for (std::size_t n = m + 1; n < I; ++n) blocks.push_back({m, n});

  return detail::coordinate_ascent(model, y, variant, cfg, std::move(a), blocks.size(),
                                   [&](const StateAssignment& cur, std::size_t b) {
                                     return detail::decode_block(model, lt, y, cur, blocks[b]);
                                   });
}

namespace detail {

// Lexicographic order on (state grid flattened chain-major, selector path).
inline bool lexicographically_less(const StateAssignment& a, const StateAssignment& b) {
  if (a.states != b.states) return a.states < b.states;
  if (a.selector && b.selector) return *a.selector < *b.selector;
  return false;
}

inline double enumeration_size(const HouseholdModel& model, std::size_t T, ModelVariant variant) {
  double per_step = 1.0, sum_k = 0.0;
  for (const auto& c : model.chains) {
    per_step *= static_cast<double>(c.num_states());
    sum_k += static_cast<double>(c.num_states());
  }
  if (!is_interleaved(variant)) return std::pow(per_step, static_cast<double>(T));
  // Feasible (S, Z): initial states and Z_0, then per step a selector value
  // and the selected chain's next state.
  return per_step * static_cast<double>(model.num_chains()) * std::pow(sum_k, static_cast<double>(T - 1));
}

}  // namespace detail

/// Global MAP by enumeration of every (feasible) assignment. Exponential;
/// refuses instances larger than cfg.oracle_guard. Ties resolve to the
/// lexicographically smallest state grid, then the smallest selector path.
inline DisaggregationResult exact_viterbi(const HouseholdModel& model, const AggregateSeries& y, ModelVariant variant,
                                          const DecodeConfig& cfg = {}) {
  detail::check_series(model, y, variant);
  const std::size_t I = model.num_chains();
  const std::size_t T = y.size();
  const double space = detail::enumeration_size(model, T, variant);
  if (space > cfg.oracle_guard)
    throw ContractError("exact_viterbi: search space of " + std::to_string(space) + " assignments exceeds guard " +
                        std::to_string(cfg.oracle_guard));

  StateAssignment work = StateAssignment::constant(std::vector<int>(I, 0), T);
  if (is_interleaved(variant)) work.selector.emplace(T, 0);
  StateAssignment best = work;
  double best_lp = kNegInf;
  bool have_best = false;

  auto consider = [&]() {
    const double lp = joint_log_prob(model, y, work, variant);
    if (!have_best || lp > best_lp || (lp == best_lp && detail::lexicographically_less(work, best))) {
      best = work;
      best_lp = lp;
      have_best = true;
    }
  };

  if (!is_interleaved(variant)) {
    // Odometer over the grid, last position fastest.
    const std::size_t P = I * T;
    bool done = false;
    while (!done) {
      consider();
      done = true;
      for (std::size_t pos = P; pos-- > 0;) {
        const std::size_t i = pos / T, t = pos % T;
        if (++work.states[i][t] < static_cast<int>(model.chains[i].num_states())) {
          done = false;
          break;
        }
        work.states[i][t] = 0;
      }
    }
  } else {
    auto extend = [&](auto&& self, std::size_t t) -> void {
      if (t == T) {
        consider();
        return;
      }
      for (std::size_t z = 0; z < I; ++z) {
        (*work.selector)[t] = static_cast<int>(z);
        for (std::size_t i = 0; i < I; ++i) work.states[i][t] = work.states[i][t - 1];
        for (int k = 0; k < static_cast<int>(model.chains[z].num_states()); ++k) {
          work.states[z][t] = k;
          self(self, t + 1);
        }
      }
    };
    auto initial = [&](auto&& self, std::size_t i) -> void {
      if (i == I) {
        for (std::size_t z = 0; z < I; ++z) {
          (*work.selector)[0] = static_cast<int>(z);
          extend(extend, 1);
        }
        return;
      }
      for (int k = 0; k < static_cast<int>(model.chains[i].num_states()); ++k) {
        work.states[i][0] = k;
        self(self, i + 1);
      }
    };
    initial(initial, 0);
  }

  auto r = detail::finish(model, y, variant, std::move(best), best_lp);
  r.converged = true;
  return r;
}

/// Dispatch to the decoder matching the variant.
inline DisaggregationResult decode(const HouseholdModel& model, const AggregateSeries& y, ModelVariant variant,
                                   const DecodeConfig& cfg = {}) {
  return is_interleaved(variant) ? interleaved_viterbi(model, y, variant, cfg)
                                 : chainwise_viterbi(model, y, variant, cfg);
}

}  // namespace disagg
