#pragma once

// Supervised maximum-likelihood training from per-appliance ground truth.
//
// Each appliance trace is quantized into K discrete levels, the resulting
// label sequences are counted into (optionally per-bin) transition tables,
// change events across appliances are turned into a selector sequence, and
// the aggregate residual gives the emission noise.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "disagg/model.hpp"
#include "disagg/types.hpp"

namespace disagg {

enum class QuantizerMethod {
  exact,  // globally optimal 1-D k-means by dynamic programming
  lloyd,  // Lloyd iterations from quantile initialization
};

struct TrainConfig {
  int num_states = 3;
  std::map<std::string, int> states_per_appliance;  // overrides num_states by name
  int bins_per_day = 24;
  double smoothing_alpha = 0.5;
  double sigma_floor = kSigmaFloor;
  bool per_bin_noise = false;
  QuantizerMethod quantizer = QuantizerMethod::exact;
  int kmeans_max_iter = 100;
  double kmeans_tol = 1e-6;

  int states_for(const std::string& name) const {
    auto it = states_per_appliance.find(name);
    return it == states_per_appliance.end() ? num_states : it->second;
  }

  void validate() const {
    if (num_states < 1) throw ContractError("num_states must be at least 1");
    for (const auto& [name, k] : states_per_appliance)
      if (k < 1) throw ContractError("num_states for '" + name + "' must be at least 1");
    if (bins_per_day < 1) throw ContractError("bins_per_day must be at least 1");
    if (!(smoothing_alpha >= 0.0)) throw ContractError("smoothing_alpha must be non-negative");
    if (!(sigma_floor > 0.0)) throw ContractError("sigma_floor must be positive");
    if (kmeans_max_iter < 1) throw ContractError("kmeans_max_iter must be at least 1");
  }
};

/// Training container: ground-truth appliance traces plus the observed meter.
struct LabeledDataset {
  std::string household_id;
  ApplianceMatrix appliances;
  std::optional<AggregateSeries> aggregate;  // synthesized from appliances when absent
  SamplingSpec sampling;

  std::size_t num_steps() const { return appliances.num_steps(); }

  AggregateSeries observed() const { return aggregate ? *aggregate : disagg::aggregate(appliances); }

  void validate() const {
    appliances.validate();
    if (aggregate) {
      aggregate->validate();
      if (aggregate->size() != appliances.num_steps())
        throw DataError("aggregate length " + std::to_string(aggregate->size()) +
                        " does not match appliance length " + std::to_string(appliances.num_steps()));
    }
  }

  /// Steps [begin, begin + count).
  LabeledDataset slice(std::size_t begin, std::size_t count) const {
    if (begin + count > num_steps()) throw ContractError("dataset slice out of range");
    LabeledDataset out;
    out.household_id = household_id;
    out.sampling = sampling;
    out.appliances.names = appliances.names;
    out.appliances.start_step = appliances.start_step + static_cast<long>(begin);
    for (const auto& row : appliances.values)
      out.appliances.values.emplace_back(row.begin() + static_cast<long>(begin),
                                         row.begin() + static_cast<long>(begin + count));
    if (aggregate) {
      AggregateSeries a;
      a.start_step = out.appliances.start_step;
      a.values.assign(aggregate->values.begin() + static_cast<long>(begin),
                      aggregate->values.begin() + static_cast<long>(begin + count));
      out.aggregate = std::move(a);
    }
    return out;
  }
};

struct Quantization {
  std::vector<int> labels;
  std::vector<double> means;  // ascending
  int requested_states = 0;
  bool reduced() const { return static_cast<int>(means.size()) < requested_states; }
};

namespace detail {

// Sorted distinct values with multiplicities.
struct WeightedValues {
  std::vector<double> value;
  std::vector<double> weight;
};

inline WeightedValues distinct_sorted(std::span<const double> series) {
  std::vector<double> sorted(series.begin(), series.end());
  std::sort(sorted.begin(), sorted.end());
  WeightedValues out;
  for (double v : sorted) {
    if (!out.value.empty() && out.value.back() == v) {
      out.weight.back() += 1.0;
    } else {
      out.value.push_back(v);
      out.weight.push_back(1.0);
    }
  }
  return out;
}

// Optimal contiguous partition of sorted weighted values into K groups.
// Layered DP with divide-and-conquer over the monotone split points.
inline std::vector<double> optimal_kmeans_1d(const WeightedValues& wv, int K) {
  const std::size_t n = wv.value.size();
  const double shift = wv.value[n / 2];
  std::vector<double> cw(n + 1, 0.0), cx(n + 1, 0.0), cxx(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = wv.value[i] - shift;
    cw[i + 1] = cw[i] + wv.weight[i];
    cx[i + 1] = cx[i] + wv.weight[i] * x;
    cxx[i + 1] = cxx[i] + wv.weight[i] * x * x;
  }
  // Within-group sum of squares of values [a, b] inclusive.
  auto cost = [&](std::size_t a, std::size_t b) {
    const double w = cw[b + 1] - cw[a];
    const double s = cx[b + 1] - cx[a];
    return std::max(0.0, (cxx[b + 1] - cxx[a]) - s * s / w);
  };

  const auto k_count = static_cast<std::size_t>(K);
  std::vector<std::vector<double>> best(k_count, std::vector<double>(n, 0.0));
  std::vector<std::vector<std::size_t>> split(k_count, std::vector<std::size_t>(n, 0));
  for (std::size_t j = 0; j < n; ++j) best[0][j] = cost(0, j);

  for (std::size_t k = 1; k < k_count; ++k) {
    // Group k starts at split[k][j] and ends at j; requires j >= k.
    auto solve = [&](auto&& self, std::size_t lo, std::size_t hi, std::size_t opt_lo, std::size_t opt_hi) -> void {
      if (lo > hi) return;
      const std::size_t mid = lo + (hi - lo) / 2;
      double best_val = std::numeric_limits<double>::infinity();
      std::size_t best_i = std::max(opt_lo, k);
      for (std::size_t i = std::max(opt_lo, k); i <= std::min(mid, opt_hi); ++i) {
        const double v = best[k - 1][i - 1] + cost(i, mid);
        if (v < best_val) {
          best_val = v;
          best_i = i;
        }
      }
      best[k][mid] = best_val;
      split[k][mid] = best_i;
      if (mid > lo) self(self, lo, mid - 1, opt_lo, best_i);
      self(self, mid + 1, hi, best_i, opt_hi);
    };
    solve(solve, k, n - 1, k, n - 1);
  }

  std::vector<double> centers(k_count);
  std::size_t end = n - 1;
  for (std::size_t k = k_count; k-- > 0;) {
    const std::size_t begin = k == 0 ? 0 : split[k][end];
    const double mean = (cx[end + 1] - cx[begin]) / (cw[end + 1] - cw[begin]) + shift;
    centers[k] = std::clamp(mean, wv.value[begin], wv.value[end]);  // guard against rounding
    if (k > 0) end = begin - 1;
  }
  return centers;
}

inline int nearest_center(double x, std::span<const double> centers) {
  int best = 0;
  double best_d = std::abs(x - centers[0]);
  for (std::size_t k = 1; k < centers.size(); ++k) {
    const double d = std::abs(x - centers[k]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

inline std::vector<double> lloyd_kmeans_1d(std::span<const double> series, int K, int max_iter, double tol) {
  std::vector<double> sorted(series.begin(), series.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  std::vector<double> centers(static_cast<std::size_t>(K));
  for (int j = 0; j < K; ++j) {
    const double q = (j + 0.5) / K;
    centers[static_cast<std::size_t>(j)] = sorted[std::min(n - 1, static_cast<std::size_t>(q * static_cast<double>(n)))];
  }
  for (int iter = 0; iter < max_iter; ++iter) {
    std::vector<double> sum(centers.size(), 0.0), count(centers.size(), 0.0);
    for (double x : sorted) {
      const auto k = static_cast<std::size_t>(nearest_center(x, centers));
      sum[k] += x;
      count[k] += 1.0;
    }
    double shift = 0.0;
    for (std::size_t k = 0; k < centers.size(); ++k) {
      if (count[k] == 0.0) continue;  // empty cluster keeps its center
      const double c = sum[k] / count[k];
      shift = std::max(shift, std::abs(c - centers[k]));
      centers[k] = c;
    }
    if (shift <= tol) break;
  }
  std::sort(centers.begin(), centers.end());
  centers.erase(std::unique(centers.begin(), centers.end()), centers.end());
  return centers;
}

}  // namespace detail

/// Discover K energy levels of one appliance trace by 1-D k-means. Means are
/// ascending and labels point to the nearest mean, ties to the lower index.
/// When fewer than K distinct values exist, K shrinks to the distinct count.
inline Quantization quantize_appliance(std::span<const double> series, int K, const TrainConfig& cfg = {}) {
  if (series.empty()) throw DataError("quantize_appliance: empty series");
  if (K < 1) throw ContractError("quantize_appliance: K must be at least 1");
  Quantization q;
  q.requested_states = K;
  const auto wv = detail::distinct_sorted(series);
  const int k_eff = std::min<int>(K, static_cast<int>(wv.value.size()));
  q.means = cfg.quantizer == QuantizerMethod::exact
                ? detail::optimal_kmeans_1d(wv, k_eff)
                : detail::lloyd_kmeans_1d(series, k_eff, cfg.kmeans_max_iter, cfg.kmeans_tol);
  q.labels.reserve(series.size());
  for (double x : series) q.labels.push_back(detail::nearest_center(x, q.means));
  return q;
}

/// Within-cluster sum of squares of a quantization.
inline double quantization_cost(std::span<const double> series, const Quantization& q) {
  double total = 0.0;
  for (std::size_t t = 0; t < series.size(); ++t) {
    const double d = series[t] - q.means[static_cast<std::size_t>(q.labels[t])];
    total += d * d;
  }
  return total;
}

namespace detail {

inline bool is_day_start(long abs_step, int steps_per_day) { return abs_step % steps_per_day == 0; }

inline std::vector<double> smoothed_distribution(std::span<const double> counts, double alpha) {
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  const double denom = total + alpha * static_cast<double>(counts.size());
  std::vector<double> p(counts.size());
  if (denom <= 0.0) {
    std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(counts.size()));
    return p;
  }
  for (std::size_t k = 0; k < counts.size(); ++k) p[k] = (counts[k] + alpha) / denom;
  return p;
}

// counts[prev][next] -> stochastic matrix; throws when a source row is empty
// and alpha == 0.
inline TransitionMatrix smoothed_matrix(const std::vector<std::vector<double>>& counts, double alpha,
                                        const std::string& what) {
  const std::size_t K = counts.size();
  TransitionMatrix m(K);
  for (std::size_t k = 0; k < K; ++k) {
    const double total = std::accumulate(counts[k].begin(), counts[k].end(), 0.0);
    const double denom = total + alpha * static_cast<double>(K);
    if (denom <= 0.0)
      throw DataError(what + ": state " + std::to_string(k) +
                      " is never left in the training data and smoothing_alpha is 0");
    for (std::size_t j = 0; j < K; ++j) m.at(j, k) = (counts[k][j] + alpha) / denom;
  }
  return m;
}

}  // namespace detail

/// Transition and initial-state estimates for one chain from its labels.
/// Means are left empty for the caller to fill. With `homogeneous == false`
/// the counts are split by the time-of-day bin of the destination step.
inline ChainParams estimate_chain_params(std::span<const int> labels, int K, bool homogeneous,
                                         const SamplingSpec& sampling, long start_step, double alpha,
                                         const std::string& chain_name = "chain") {
  if (K < 1) throw ContractError("estimate_chain_params: K must be at least 1");
  if (alpha < 0.0) throw ContractError("estimate_chain_params: alpha must be non-negative");
  const auto k_count = static_cast<std::size_t>(K);
  for (int s : labels)
    if (s < 0 || s >= K) throw ContractError("estimate_chain_params: label out of range");

  const int spd = sampling.steps_per_day();
  std::vector<double> first_counts(k_count, 0.0);
  const std::size_t bins = homogeneous ? 1 : static_cast<std::size_t>(sampling.bins_per_day);
  std::vector<std::vector<std::vector<double>>> counts(
      bins, std::vector<std::vector<double>>(k_count, std::vector<double>(k_count, 0.0)));

  for (std::size_t t = 0; t < labels.size(); ++t) {
    const long abs_step = start_step + static_cast<long>(t);
    if (t == 0 || detail::is_day_start(abs_step, spd)) first_counts[static_cast<std::size_t>(labels[t])] += 1.0;
    if (t == 0) continue;
    const std::size_t b = homogeneous ? 0 : static_cast<std::size_t>(sampling.bin_of(abs_step));
    counts[b][static_cast<std::size_t>(labels[t - 1])][static_cast<std::size_t>(labels[t])] += 1.0;
  }

  ChainParams c;
  c.name = chain_name;
  c.initial = detail::smoothed_distribution(first_counts, alpha);
  if (homogeneous) {
    c.homogeneous = detail::smoothed_matrix(counts[0], alpha, "chain '" + chain_name + "'");
  } else {
    for (std::size_t b = 0; b < bins; ++b)
      c.binned.push_back(detail::smoothed_matrix(counts[b], alpha,
                                                 "chain '" + chain_name + "' bin " + std::to_string(b)));
  }
  return c;
}

struct SelectorEstimate {
  SelectorParams params;
  std::vector<int> sequence;       // z_t for every training step
  std::size_t change_events = 0;   // steps where at least one chain changed
  std::size_t multi_change_steps = 0;  // steps where several chains changed
};

/// Fit the selector chain from observed change events. A step with no change
/// keeps the previous selector value (chain 0 before the first event); a step
/// where several chains change is attributed to the largest energy jump, ties
/// to the lowest index. The initial distribution counts the selector value at
/// the start of each day once at least one event has been observed.
inline SelectorEstimate estimate_selector_params(std::span<const std::vector<int>> labels,
                                                 std::span<const std::vector<double>> means,
                                                 const SamplingSpec& sampling, long start_step, double alpha) {
  const std::size_t I = labels.size();
  if (I == 0) throw ContractError("estimate_selector_params: no chains");
  if (means.size() != I) throw ContractError("estimate_selector_params: means/labels mismatch");
  const std::size_t T = labels.front().size();
  for (const auto& l : labels)
    if (l.size() != T) throw ContractError("estimate_selector_params: label sequences differ in length");

  SelectorEstimate est;
  est.sequence.assign(T, 0);
  std::vector<double> initial_counts(I, 0.0);
  std::vector<std::vector<double>> counts(I, std::vector<double>(I, 0.0));
  const int spd = sampling.steps_per_day();
  bool seen_event = false;

  for (std::size_t t = 0; t < T; ++t) {
    int z = t == 0 ? 0 : est.sequence[t - 1];
    if (t > 0) {
      int changed = 0;
      double best_jump = -1.0;
      for (std::size_t i = 0; i < I; ++i) {
        const int prev = labels[i][t - 1];
        const int next = labels[i][t];
        if (prev == next) continue;
        ++changed;
        const double jump = std::abs(means[i][static_cast<std::size_t>(next)] - means[i][static_cast<std::size_t>(prev)]);
        if (jump > best_jump) {
          best_jump = jump;
          z = static_cast<int>(i);
        }
      }
      if (changed > 0) {
        seen_event = true;
        ++est.change_events;
      }
      if (changed > 1) ++est.multi_change_steps;
    }
    est.sequence[t] = z;
    const long abs_step = start_step + static_cast<long>(t);
    if (seen_event && (t == 0 || detail::is_day_start(abs_step, spd)))
      initial_counts[static_cast<std::size_t>(z)] += 1.0;
    if (t > 0) counts[static_cast<std::size_t>(est.sequence[t - 1])][static_cast<std::size_t>(z)] += 1.0;
  }

  est.params.initial = detail::smoothed_distribution(initial_counts, alpha);
  // Source rows never visited stay uniform when alpha == 0 rather than failing:
  // the selector is a nuisance chain and an unvisited row carries no evidence.
  est.params.transitions = TransitionMatrix(I);
  for (std::size_t b = 0; b < I; ++b) {
    const auto row = detail::smoothed_distribution(counts[b], alpha);
    for (std::size_t a = 0; a < I; ++a) est.params.transitions.at(a, b) = row[a];
  }
  return est;
}

/// Population standard deviation of the residual y - sum of quantized means,
/// floored at `sigma_floor`. Per-bin mode falls back to the global value for
/// bins with fewer than two samples.
inline NoiseModel estimate_noise(const AggregateSeries& y, std::span<const std::vector<int>> labels,
                                 std::span<const std::vector<double>> means, const SamplingSpec& sampling,
                                 double sigma_floor = kSigmaFloor, bool per_bin = false) {
  if (labels.size() != means.size()) throw ContractError("estimate_noise: labels/means mismatch");
  for (const auto& l : labels)
    if (l.size() != y.size()) throw ContractError("estimate_noise: length mismatch");
  const std::size_t T = y.size();
  std::vector<double> residual(T);
  for (std::size_t t = 0; t < T; ++t) {
    double recon = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) recon += means[i][static_cast<std::size_t>(labels[i][t])];
    residual[t] = y.values[t] - recon;
  }
  auto stdev = [](const std::vector<double>& r) {
    if (r.empty()) return 0.0;
    const double mean = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
    double ss = 0.0;
    for (double v : r) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(r.size()));
  };
  NoiseModel noise;
  noise.sigma = std::max(stdev(residual), sigma_floor);
  if (per_bin) {
    std::vector<std::vector<double>> by_bin(static_cast<std::size_t>(sampling.bins_per_day));
    for (std::size_t t = 0; t < T; ++t)
      by_bin[static_cast<std::size_t>(sampling.bin_of(y.start_step + static_cast<long>(t)))].push_back(residual[t]);
    for (const auto& r : by_bin)
      noise.per_bin.push_back(r.size() < 2 ? noise.sigma : std::max(stdev(r), sigma_floor));
  }
  return noise;
}

struct TrainResult {
  HouseholdModel model;
  std::vector<std::string> warnings;
  std::vector<int> selector_sequence;
};

/// Fit a model that serves all four variants: both homogeneous and per-bin
/// transition tables are estimated, and the selector is always fitted.
inline TrainResult train(const LabeledDataset& data, const TrainConfig& cfg = {}) {
  cfg.validate();
  data.validate();
  TrainResult out;
  HouseholdModel& model = out.model;
  model.sampling.interval_seconds = data.sampling.interval_seconds;
  model.sampling.bins_per_day = cfg.bins_per_day;
  model.sampling.validate();

  const std::size_t T = data.num_steps();
  const long start = data.appliances.start_step;
  if (cfg.bins_per_day > 1 && T < static_cast<std::size_t>(model.sampling.steps_per_day()))
    throw DataError("training span of " + std::to_string(T) + " steps is shorter than one day (" +
                    std::to_string(model.sampling.steps_per_day()) + " steps), required for per-bin transitions");

  const std::size_t I = data.appliances.num_appliances();
  std::vector<std::vector<int>> labels(I);
  std::vector<std::vector<double>> means(I);
  for (std::size_t i = 0; i < I; ++i) {
    const auto& name = data.appliances.names[i];
    const auto& series = data.appliances.values[i];
    Quantization q = quantize_appliance(series, cfg.states_for(name), cfg);
    if (q.reduced())
      out.warnings.push_back("appliance '" + name + "': only " + std::to_string(q.means.size()) +
                             " distinct level(s), using K=" + std::to_string(q.means.size()) + " instead of " +
                             std::to_string(q.requested_states));
    if (q.means.size() == 1 && q.means[0] == 0.0)
      out.warnings.push_back("appliance '" + name + "' is constantly zero; kept as a single-state chain");
    const int K = static_cast<int>(q.means.size());
    ChainParams chain = estimate_chain_params(q.labels, K, true, model.sampling, start, cfg.smoothing_alpha, name);
    ChainParams binned = estimate_chain_params(q.labels, K, false, model.sampling, start, cfg.smoothing_alpha, name);
    chain.binned = std::move(binned.binned);
    chain.means = q.means;
    model.chains.push_back(std::move(chain));
    labels[i] = std::move(q.labels);
    means[i] = std::move(q.means);
  }

  auto selector = estimate_selector_params(labels, means, model.sampling, start, cfg.smoothing_alpha);
  if (selector.multi_change_steps > 0)
    out.warnings.push_back(std::to_string(selector.multi_change_steps) +
                           " step(s) with simultaneous changes attributed to the largest jump");
  model.selector = std::move(selector.params);
  out.selector_sequence = std::move(selector.sequence);
  model.noise = estimate_noise(data.observed(), labels, means, model.sampling, cfg.sigma_floor, cfg.per_bin_noise);
  model.validate();
  return out;
}

}  // namespace disagg
