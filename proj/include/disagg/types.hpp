#pragma once

// Domain types for factorial-HMM energy disaggregation.
//
// Conventions used throughout the library:
//  * State indices, chain indices and selector values are 0-based.
//  * A TransitionMatrix entry (j, k) is P(S_t = j | S_{t-1} = k). Storage is
//    source-major, so row(k) is the distribution over the next state given
//    previous state k, and every such row sums to one.
//  * Time is measured in sampling steps. `start_step` counts steps since the
//    midnight that opens day 0, so (start_step + t) mod steps_per_day is the
//    position of step t within its day.

#include <cctype>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace disagg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (files, series, training traces).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A model that cannot serve the requested operation (missing selector,
/// missing transition tables, broken stochastic invariants).
class ModelError : public Error {
 public:
  using Error::Error;
};

/// Caller violated an operation's precondition (shape mismatch, bad index).
class ContractError : public Error {
 public:
  using Error::Error;
};

inline constexpr double kSigmaFloor = 1e-3;
inline constexpr double kProbabilityTolerance = 1e-9;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

enum class ModelVariant { FHMM, FNHMM, IFHMM, IFNHMM };

inline constexpr bool is_interleaved(ModelVariant v) {
  return v == ModelVariant::IFHMM || v == ModelVariant::IFNHMM;
}

inline constexpr bool is_nonhomogeneous(ModelVariant v) {
  return v == ModelVariant::FNHMM || v == ModelVariant::IFNHMM;
}

inline std::string_view to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::FHMM: return "FHMM";
    case ModelVariant::FNHMM: return "FNHMM";
    case ModelVariant::IFHMM: return "IFHMM";
    case ModelVariant::IFNHMM: return "IFNHMM";
  }
  return "?";
}

inline constexpr ModelVariant kAllVariants[] = {ModelVariant::FHMM, ModelVariant::FNHMM,
                                                ModelVariant::IFHMM, ModelVariant::IFNHMM};

/// Case-insensitive parse of "fhmm", "fnhmm", "ifhmm", "ifnhmm".
inline ModelVariant parse_variant(std::string_view text) {
  std::string lower;
  for (char c : text) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (lower == "fhmm") return ModelVariant::FHMM;
  if (lower == "fnhmm") return ModelVariant::FNHMM;
  if (lower == "ifhmm") return ModelVariant::IFHMM;
  if (lower == "ifnhmm") return ModelVariant::IFNHMM;
  throw ContractError("unknown model variant '" + std::string(text) + "'");
}

struct SamplingSpec {
  int interval_seconds = 120;
  int bins_per_day = 24;

  int steps_per_day() const { return 86400 / interval_seconds; }
  int steps_per_bin() const { return steps_per_day() / bins_per_day; }

  /// Time-of-day bin of an absolute step index.
  int bin_of(long step) const {
    const long spd = steps_per_day();
    const long in_day = ((step % spd) + spd) % spd;
    return static_cast<int>(in_day / steps_per_bin());
  }

  void validate() const {
    if (interval_seconds <= 0 || 86400 % interval_seconds != 0)
      throw ModelError("interval_seconds must be a positive divisor of 86400, got " +
                       std::to_string(interval_seconds));
    if (bins_per_day <= 0 || steps_per_day() % bins_per_day != 0)
      throw ModelError("bins_per_day must divide steps_per_day (" + std::to_string(steps_per_day()) +
                       "), got " + std::to_string(bins_per_day));
  }

  friend bool operator==(const SamplingSpec&, const SamplingSpec&) = default;
};

namespace detail {

inline void require_energy_values(std::span<const double> values, std::string_view what) {
  for (std::size_t t = 0; t < values.size(); ++t) {
    if (!std::isfinite(values[t]) || values[t] < 0.0)
      throw DataError(std::string(what) + ": value at step " + std::to_string(t) +
                      " is negative or not finite");
  }
}

}  // namespace detail

/// Observed meter series Y in watt-hours per interval.
struct AggregateSeries {
  std::vector<double> values;
  long start_step = 0;

  std::size_t size() const { return values.size(); }

  void validate() const {
    if (values.empty()) throw DataError("aggregate series is empty");
    detail::require_energy_values(values, "aggregate series");
  }

  friend bool operator==(const AggregateSeries&, const AggregateSeries&) = default;
};

/// Per-appliance energy grid, values[i][t] in watt-hours per interval.
struct ApplianceMatrix {
  std::vector<std::string> names;
  std::vector<std::vector<double>> values;
  long start_step = 0;

  std::size_t num_appliances() const { return values.size(); }
  std::size_t num_steps() const { return values.empty() ? 0 : values.front().size(); }

  std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    return std::nullopt;
  }

  void validate() const {
    if (values.empty()) throw DataError("appliance matrix has no appliances");
    if (names.size() != values.size())
      throw DataError("appliance matrix has " + std::to_string(values.size()) + " rows but " +
                      std::to_string(names.size()) + " names");
    std::unordered_set<std::string> seen;
    for (const auto& n : names)
      if (!seen.insert(n).second) throw DataError("duplicate appliance name '" + n + "'");
    const std::size_t T = values.front().size();
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i].size() != T)
        throw DataError("appliance '" + names[i] + "' has " + std::to_string(values[i].size()) +
                        " steps, expected " + std::to_string(T));
      detail::require_energy_values(values[i], "appliance '" + names[i] + "'");
    }
  }

  friend bool operator==(const ApplianceMatrix&, const ApplianceMatrix&) = default;
};

/// Square row-stochastic matrix; see the header comment for the index convention.
class TransitionMatrix {
 public:
  TransitionMatrix() = default;
  explicit TransitionMatrix(std::size_t n) : n_(n), p_(n * n, 0.0) {}

  static TransitionMatrix identity(std::size_t n) {
    TransitionMatrix m(n);
    for (std::size_t k = 0; k < n; ++k) m.at(k, k) = 1.0;
    return m;
  }

  /// rows[k][j] = P(next = j | prev = k).
  static TransitionMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    TransitionMatrix m(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (rows[k].size() != rows.size())
        throw ModelError("transition matrix is not square");
      for (std::size_t j = 0; j < rows.size(); ++j) m.at(j, k) = rows[k][j];
    }
    return m;
  }

  std::size_t size() const { return n_; }

  double operator()(std::size_t next, std::size_t prev) const { return p_[prev * n_ + next]; }
  double& at(std::size_t next, std::size_t prev) { return p_[prev * n_ + next]; }

  std::span<const double> row(std::size_t prev) const {
    return std::span<const double>(p_).subspan(prev * n_, n_);
  }
  std::span<double> row(std::size_t prev) { return std::span<double>(p_).subspan(prev * n_, n_); }

  std::vector<std::vector<double>> rows() const {
    std::vector<std::vector<double>> out(n_);
    for (std::size_t k = 0; k < n_; ++k) out[k].assign(row(k).begin(), row(k).end());
    return out;
  }

  void validate(std::string_view what) const {
    if (n_ == 0) throw ModelError(std::string(what) + ": empty transition matrix");
    for (std::size_t k = 0; k < n_; ++k) {
      double sum = 0.0;
      for (double v : row(k)) {
        if (!std::isfinite(v) || v < 0.0)
          throw ModelError(std::string(what) + ": negative or non-finite probability");
        sum += v;
      }
      if (std::abs(sum - 1.0) > kProbabilityTolerance)
        throw ModelError(std::string(what) + ": row for previous state " + std::to_string(k) +
                         " sums to " + std::to_string(sum));
    }
  }

  friend bool operator==(const TransitionMatrix&, const TransitionMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> p_;
};

namespace detail {

inline void require_distribution(std::span<const double> p, std::string_view what) {
  double sum = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0)
      throw ModelError(std::string(what) + ": negative or non-finite probability");
    sum += v;
  }
  if (p.empty() || std::abs(sum - 1.0) > kProbabilityTolerance)
    throw ModelError(std::string(what) + ": probabilities sum to " + std::to_string(sum));
}

}  // namespace detail

/// Parameters of one appliance chain. A trained model carries both the
/// homogeneous table and the per-bin tables so it can serve all variants.
struct ChainParams {
  std::string name;
  std::vector<double> means;  // strictly increasing
  std::vector<double> initial;
  std::optional<TransitionMatrix> homogeneous;
  std::vector<TransitionMatrix> binned;  // one per time-of-day bin, or empty

  std::size_t num_states() const { return means.size(); }
  bool has_homogeneous() const { return homogeneous.has_value(); }
  bool has_binned() const { return !binned.empty(); }

  const TransitionMatrix& transitions(bool nonhomogeneous, int bin) const {
    if (nonhomogeneous) return binned.at(static_cast<std::size_t>(bin));
    return *homogeneous;
  }

  void validate(int bins_per_day) const {
    const std::string what = "chain '" + name + "'";
    const std::size_t K = means.size();
    if (K == 0) throw ModelError(what + " has no states");
    for (std::size_t k = 0; k < K; ++k) {
      if (!std::isfinite(means[k]) || means[k] < 0.0)
        throw ModelError(what + ": state means must be finite and non-negative");
      if (k > 0 && !(means[k] > means[k - 1]))
        throw ModelError(what + ": state means must be strictly increasing");
    }
    if (initial.size() != K) throw ModelError(what + ": initial distribution has wrong length");
    detail::require_distribution(initial, what + " initial distribution");
    if (!homogeneous && binned.empty()) throw ModelError(what + " has no transition tables");
    if (homogeneous) {
      if (homogeneous->size() != K) throw ModelError(what + ": homogeneous matrix has wrong size");
      homogeneous->validate(what + " homogeneous transitions");
    }
    if (!binned.empty()) {
      if (static_cast<int>(binned.size()) != bins_per_day)
        throw ModelError(what + ": expected " + std::to_string(bins_per_day) +
                         " per-bin matrices, found " + std::to_string(binned.size()));
      for (std::size_t b = 0; b < binned.size(); ++b) {
        if (binned[b].size() != K) throw ModelError(what + ": per-bin matrix has wrong size");
        binned[b].validate(what + " bin " + std::to_string(b) + " transitions");
      }
    }
  }

  friend bool operator==(const ChainParams&, const ChainParams&) = default;
};

/// Distribution of the selector chain Z over appliance indices.
struct SelectorParams {
  std::vector<double> initial;
  TransitionMatrix transitions;  // (a, b) = P(Z_t = a | Z_{t-1} = b)

  std::size_t size() const { return initial.size(); }

  void validate(std::size_t num_chains) const {
    if (initial.size() != num_chains || transitions.size() != num_chains)
      throw ModelError("selector size does not match the number of chains");
    detail::require_distribution(initial, "selector initial distribution");
    transitions.validate("selector transitions");
  }

  friend bool operator==(const SelectorParams&, const SelectorParams&) = default;
};

/// Gaussian emission noise: one global sigma, optionally overridden per bin.
struct NoiseModel {
  double sigma = 1.0;
  std::vector<double> per_bin;

  double sigma_at_bin(int bin) const {
    return per_bin.empty() ? sigma : per_bin[static_cast<std::size_t>(bin)];
  }

  void validate(int bins_per_day) const {
    if (!(sigma >= kSigmaFloor) || !std::isfinite(sigma))
      throw ModelError("noise sigma must be finite and at least " + std::to_string(kSigmaFloor));
    if (!per_bin.empty()) {
      if (static_cast<int>(per_bin.size()) != bins_per_day)
        throw ModelError("per-bin noise must have one sigma per bin");
      for (double s : per_bin)
        if (!(s >= kSigmaFloor) || !std::isfinite(s))
          throw ModelError("per-bin noise sigma below floor");
    }
  }

  friend bool operator==(const NoiseModel&, const NoiseModel&) = default;
};

/// Full parameter set of a household.
struct HouseholdModel {
  SamplingSpec sampling;
  std::vector<ChainParams> chains;
  std::optional<SelectorParams> selector;
  NoiseModel noise;

  std::size_t num_chains() const { return chains.size(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(chains.size());
    for (const auto& c : chains) out.push_back(c.name);
    return out;
  }

  bool supports_homogeneous() const {
    for (const auto& c : chains)
      if (!c.has_homogeneous()) return false;
    return !chains.empty();
  }

  bool supports_nonhomogeneous() const {
    for (const auto& c : chains)
      if (!c.has_binned()) return false;
    return !chains.empty();
  }

  bool supports(ModelVariant v) const {
    if (is_interleaved(v) && !selector) return false;
    return is_nonhomogeneous(v) ? supports_nonhomogeneous() : supports_homogeneous();
  }

  /// Throws ModelError naming the component the variant needs but the model lacks.
  void require(ModelVariant v) const {
    if (chains.empty()) throw ModelError("model has no appliance chains");
    if (is_interleaved(v) && !selector)
      throw ModelError(std::string(to_string(v)) + " requires selector parameters, which this model lacks");
    for (const auto& c : chains) {
      if (is_nonhomogeneous(v) && !c.has_binned())
        throw ModelError(std::string(to_string(v)) + " requires per-bin transitions, missing for chain '" +
                         c.name + "'");
      if (!is_nonhomogeneous(v) && !c.has_homogeneous())
        throw ModelError(std::string(to_string(v)) +
                         " requires homogeneous transitions, missing for chain '" + c.name + "'");
    }
  }

  void validate() const {
    sampling.validate();
    if (chains.empty()) throw ModelError("model has no appliance chains");
    std::unordered_set<std::string> seen;
    for (const auto& c : chains) {
      if (!seen.insert(c.name).second) throw ModelError("duplicate chain name '" + c.name + "'");
      c.validate(sampling.bins_per_day);
    }
    if (selector) selector->validate(chains.size());
    noise.validate(sampling.bins_per_day);
  }

  friend bool operator==(const HouseholdModel&, const HouseholdModel&) = default;
};

/// Hidden states for every chain, plus the selector path for interleaved variants.
struct StateAssignment {
  std::vector<std::vector<int>> states;  // states[i][t]
  std::optional<std::vector<int>> selector;

  std::size_t num_chains() const { return states.size(); }
  std::size_t num_steps() const { return states.empty() ? 0 : states.front().size(); }

  static StateAssignment constant(const std::vector<int>& per_chain, std::size_t T) {
    StateAssignment a;
    for (int s : per_chain) a.states.emplace_back(T, s);
    return a;
  }

  /// At most one chain changes between consecutive steps, and when a
  /// selector is present only the selected chain may change.
  bool is_one_at_a_time() const {
    const std::size_t T = num_steps();
    for (std::size_t t = 1; t < T; ++t) {
      int changed = 0;
      for (std::size_t i = 0; i < states.size(); ++i) {
        if (states[i][t] == states[i][t - 1]) continue;
        ++changed;
        if (selector && (*selector)[t] != static_cast<int>(i)) return false;
      }
      if (changed > 1) return false;
    }
    return true;
  }

  friend bool operator==(const StateAssignment&, const StateAssignment&) = default;
};

}  // namespace disagg
