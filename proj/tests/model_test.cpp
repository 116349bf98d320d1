#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <numbers>
#include <random>

#include "disagg/model.hpp"
#include "test_support.hpp"

namespace disagg {
namespace {

HouseholdModel one_chain_model(std::vector<double> means, std::vector<double> initial,
                               std::vector<std::vector<double>> rows, double sigma) {
  HouseholdModel m;
  ChainParams c;
  c.name = "a";
  c.means = std::move(means);
  c.initial = std::move(initial);
  c.homogeneous = TransitionMatrix::from_rows(rows);
  c.binned.assign(static_cast<std::size_t>(m.sampling.bins_per_day), *c.homogeneous);
  m.chains.push_back(std::move(c));
  m.selector = SelectorParams{{1.0}, TransitionMatrix::identity(1)};
  m.noise.sigma = sigma;
  m.validate();
  return m;
}

TEST(Aggregate, SumsAppliancesPerStep) {
  ApplianceMatrix x{{"a", "b"}, {{1, 2}, {3, 4}}, 0};
  EXPECT_EQ(aggregate(x).values, (std::vector<double>{4, 6}));

  ApplianceMatrix single{{"a"}, {{5, 0, 7}}, 3};
  const auto y = aggregate(single);
  EXPECT_EQ(y.values, (std::vector<double>{5, 0, 7}));
  EXPECT_EQ(y.start_step, 3);

  ApplianceMatrix zeros{{"a", "b", "c"}, std::vector<std::vector<double>>(3, std::vector<double>(4, 0.0)), 0};
  EXPECT_EQ(aggregate(zeros).values, std::vector<double>(4, 0.0));
}

TEST(Aggregate, IsLinear) {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    ApplianceMatrix a, b, sum;
    for (int i = 0; i < 3; ++i) {
      a.names.push_back("x" + std::to_string(i));
      a.values.emplace_back();
      b.values.emplace_back();
      sum.values.emplace_back();
      for (int t = 0; t < 9; ++t) {
        a.values[i].push_back(testing::uniform(rng, 0, 50));
        b.values[i].push_back(testing::uniform(rng, 0, 50));
        sum.values[i].push_back(a.values[i][t] + b.values[i][t]);
      }
    }
    b.names = sum.names = a.names;
    const auto ya = aggregate(a), yb = aggregate(b), ys = aggregate(sum);
    for (std::size_t t = 0; t < ys.size(); ++t) EXPECT_NEAR(ys.values[t], ya.values[t] + yb.values[t], 1e-12);
  }
}

TEST(EmissionLogDensity, HandEvaluatedGaussian) {
  const auto m1 = one_chain_model({5.0}, {1.0}, {{1.0}}, 1.0);
  const int s0[] = {0};
  EXPECT_NEAR(emission_log_density(m1, s0, 5.0, 0), -0.5 * std::log(2 * std::numbers::pi), 1e-12);
  EXPECT_NEAR(emission_log_density(m1, s0, 5.0, 0), -0.91894, 1e-5);
  EXPECT_NEAR(emission_log_density(m1, s0, 6.0, 0), -1.41894, 1e-5);

  const auto m2 = one_chain_model({5.0}, {1.0}, {{1.0}}, 2.0);
  EXPECT_NEAR(emission_log_density(m2, s0, 7.0, 0), -2.11209, 1e-5);
}

TEST(EmissionLogDensity, PerBinSigmaFollowsStep) {
  auto m = one_chain_model({0.0}, {1.0}, {{1.0}}, 1.0);
  m.noise.per_bin.assign(24, 1.0);
  m.noise.per_bin[1] = 2.0;
  const int s0[] = {0};
  // Step 30 is in bin 1 at 2-minute sampling.
  EXPECT_NEAR(emission_log_density(m, s0, 2.0, 30), -0.5 * std::log(8 * std::numbers::pi) - 0.5, 1e-12);
  EXPECT_NEAR(emission_log_density(m, s0, 0.0, 29), -0.5 * std::log(2 * std::numbers::pi), 1e-12);
}

TEST(TransitionLogProb, KroneckerHoldAndMatrixEntries) {
  std::mt19937_64 rng(3);
  auto m = testing::random_model(rng, 2, 2);
  m.chains[0].means = {0.0, 1.0};
  m.chains[0].initial = {0.5, 0.5};
  m.chains[0].homogeneous = TransitionMatrix::from_rows({{0.75, 0.25}, {0.5, 0.5}});
  m.chains[0].binned = {TransitionMatrix::from_rows({{0.9, 0.1}, {0.2, 0.8}}),
                        TransitionMatrix::from_rows({{0.6, 0.4}, {0.3, 0.7}})};

  EXPECT_EQ(transition_log_prob(m, 0, 1, 1, 1, 1, ModelVariant::IFNHMM), 0.0);
  EXPECT_EQ(transition_log_prob(m, 0, 1, 1, 0, 1, ModelVariant::IFNHMM), kNegInf);
  // FHMM: P(next = 1 | prev = 0) = 0.25.
  EXPECT_NEAR(transition_log_prob(m, 0, 1, 1, 0, std::nullopt, ModelVariant::FHMM), -1.38629, 1e-5);
  // Non-homogeneous: step 1 is bin 1 on the two-bin grid.
  EXPECT_NEAR(transition_log_prob(m, 0, 1, 1, 0, std::nullopt, ModelVariant::FNHMM), std::log(0.4), 1e-15);
  EXPECT_NEAR(transition_log_prob(m, 0, 2, 1, 0, std::nullopt, ModelVariant::FNHMM), std::log(0.1), 1e-15);
  // Selected chain uses its own matrix.
  EXPECT_NEAR(transition_log_prob(m, 0, 2, 0, 0, 0, ModelVariant::IFHMM), std::log(0.75), 1e-15);
  EXPECT_THROW(transition_log_prob(m, 0, 1, 0, 0, std::nullopt, ModelVariant::IFHMM), ContractError);
}

TEST(JointLogProb, SingleEmissionTerm) {
  const auto m = one_chain_model({5.0}, {1.0}, {{1.0}}, 1.0);
  AggregateSeries y{{5.0}, 0};
  StateAssignment a = StateAssignment::constant({0}, 1);
  EXPECT_NEAR(joint_log_prob(m, y, a, ModelVariant::FHMM), -0.91894, 1e-5);
}

TEST(JointLogProb, MatchesFactorByFactorProduct) {
  // I = 2, K = 2, T = 2 with every factor written out by hand.
  HouseholdModel m;
  m.sampling = testing::two_bin_sampling();
  ChainParams a{"a", {0.0, 10.0}, {0.7, 0.3}, TransitionMatrix::from_rows({{0.9, 0.1}, {0.4, 0.6}}), {}};
  ChainParams b{"b", {0.0, 3.0}, {0.2, 0.8}, TransitionMatrix::from_rows({{0.5, 0.5}, {0.25, 0.75}}), {}};
  a.binned = {*a.homogeneous, TransitionMatrix::from_rows({{0.8, 0.2}, {0.1, 0.9}})};
  b.binned = {*b.homogeneous, TransitionMatrix::from_rows({{0.6, 0.4}, {0.3, 0.7}})};
  m.chains = {a, b};
  m.selector = SelectorParams{{0.4, 0.6}, TransitionMatrix::from_rows({{0.7, 0.3}, {0.2, 0.8}})};
  m.noise.sigma = 2.0;
  m.validate();

  AggregateSeries y{{2.5, 12.0}, 0};
  auto npdf = [](double x, double mu) { return std::exp(-0.5 * (x - mu) * (x - mu) / 4.0) / std::sqrt(2 * std::numbers::pi * 4.0); };

  // S_a = (0, 1), S_b = (1, 1).
  StateAssignment s;
  s.states = {{0, 1}, {1, 1}};
  const double fhmm = 0.7 * 0.8 * npdf(2.5, 3.0) * 0.1 * 0.75 * npdf(12.0, 13.0);
  EXPECT_NEAR(joint_log_prob(m, y, s, ModelVariant::FHMM), std::log(fhmm), 1e-12);
  const double fnhmm = 0.7 * 0.8 * npdf(2.5, 3.0) * 0.2 * 0.7 * npdf(12.0, 13.0);
  EXPECT_NEAR(joint_log_prob(m, y, s, ModelVariant::FNHMM), std::log(fnhmm), 1e-12);

  // Interleaved with Z = (1, 0): chain a moves under its bin-1 matrix, b holds.
  s.selector = std::vector<int>{1, 0};
  const double ifnhmm = 0.6 * 0.7 * 0.8 * npdf(2.5, 3.0) * 0.2 * 0.2 * 1.0 * npdf(12.0, 13.0);
  EXPECT_NEAR(joint_log_prob(m, y, s, ModelVariant::IFNHMM), std::log(ifnhmm), 1e-12);
  const double ifhmm = 0.6 * 0.7 * 0.8 * npdf(2.5, 3.0) * 0.2 * 0.1 * 1.0 * npdf(12.0, 13.0);
  EXPECT_NEAR(joint_log_prob(m, y, s, ModelVariant::IFHMM), std::log(ifhmm), 1e-12);

  // Selecting b while a changes is infeasible.
  s.selector = std::vector<int>{1, 1};
  EXPECT_EQ(joint_log_prob(m, y, s, ModelVariant::IFNHMM), kNegInf);
}

TEST(JointLogProb, TwoSimultaneousChangesAreImpossible) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    auto m = testing::random_model(rng, 3, 3);
    for (auto& c : m.chains)
      if (c.num_states() < 2) {
        c.means = {0.0, 5.0};
        c.initial = {0.5, 0.5};
        c.homogeneous = testing::random_matrix(rng, 2);
        c.binned = {testing::random_matrix(rng, 2), testing::random_matrix(rng, 2)};
      }
    const auto y = testing::random_series(rng, m, 4);
    StateAssignment a = StateAssignment::constant({0, 0, 0}, 4);
    a.states[0][2] = 1;
    a.states[1][2] = 1;
    a.states[0][3] = 1;
    a.states[1][3] = 1;
    for (int z = 0; z < 3; ++z) {
      a.selector = std::vector<int>(4, z);
      EXPECT_EQ(joint_log_prob(m, y, a, ModelVariant::IFHMM), kNegInf);
      EXPECT_EQ(joint_log_prob(m, y, a, ModelVariant::IFNHMM), kNegInf);
    }
    EXPECT_FALSE(a.is_one_at_a_time());
  }
}

TEST(JointLogProb, RejectsShapeMismatch) {
  const auto m = one_chain_model({5.0}, {1.0}, {{1.0}}, 1.0);
  AggregateSeries y{{5.0, 5.0}, 0};
  EXPECT_THROW(joint_log_prob(m, y, StateAssignment::constant({0}, 3), ModelVariant::FHMM), ContractError);
  EXPECT_THROW(joint_log_prob(m, y, StateAssignment::constant({0}, 2), ModelVariant::IFHMM), ContractError);
  auto no_selector = m;
  no_selector.selector.reset();
  auto a = StateAssignment::constant({0}, 2);
  a.selector = std::vector<int>{0, 0};
  EXPECT_THROW(joint_log_prob(no_selector, y, a, ModelVariant::IFHMM), ModelError);
}

TEST(JointLogProb, NormalizesOverAllAssignments) {
  std::mt19937_64 rng(2024);
  for (int rep = 0; rep < 12; ++rep) {
    const int I = 1 + rep % 2;
    const auto m = testing::random_model(rng, I, 2);
    const auto y = testing::random_series(rng, m, 1 + static_cast<std::size_t>(rep % 3));
    for (auto v : kAllVariants) {
      const double direct = testing::forward_marginal_likelihood(m, y, v);
      const double summed = testing::enumerated_joint_mass(m, y, v);
      EXPECT_NEAR(summed / direct, 1.0, 1e-9) << to_string(v);
    }
  }
}

TEST(JointLogProb, InvariantUnderStatePermutation) {
  std::mt19937_64 rng(99);
  for (int rep = 0; rep < 20; ++rep) {
    auto m = testing::random_model(rng, 2, 3);
    const auto y = testing::random_series(rng, m, 5);
    // Random feasible interleaved assignment.
    StateAssignment a = StateAssignment::constant({0, 0}, 5);
    a.selector = std::vector<int>(5, 0);
    for (std::size_t t = 0; t < 5; ++t) {
      const int z = testing::uniform_int(rng, 0, 1);
      (*a.selector)[t] = z;
      for (int i = 0; i < 2; ++i) a.states[i][t] = t == 0 ? testing::uniform_int(rng, 0, static_cast<int>(m.chains[i].num_states()) - 1) : a.states[i][t - 1];
      if (t > 0) a.states[z][t] = testing::uniform_int(rng, 0, static_cast<int>(m.chains[z].num_states()) - 1);
    }
    // Reverse the state order of chain 0 (labels only; means still attached to the same states).
    const std::size_t K = m.chains[0].num_states();
    auto perm = [K](std::size_t k) { return K - 1 - k; };
    HouseholdModel p = m;
    auto& c = p.chains[0];
    const auto& o = m.chains[0];
    for (std::size_t k = 0; k < K; ++k) {
      c.means[perm(k)] = o.means[k];
      c.initial[perm(k)] = o.initial[k];
    }
    auto permute = [&](const TransitionMatrix& src) {
      TransitionMatrix dst(K);
      for (std::size_t j = 0; j < K; ++j)
        for (std::size_t k = 0; k < K; ++k) dst.at(perm(j), perm(k)) = src(j, k);
      return dst;
    };
    c.homogeneous = permute(*o.homogeneous);
    for (std::size_t b = 0; b < c.binned.size(); ++b) c.binned[b] = permute(o.binned[b]);
    StateAssignment pa = a;
    for (auto& s : pa.states[0]) s = static_cast<int>(perm(static_cast<std::size_t>(s)));
    for (auto v : kAllVariants) {
      StateAssignment aa = a, pp = pa;
      if (!is_interleaved(v)) aa.selector.reset(), pp.selector.reset();
      EXPECT_NEAR(joint_log_prob(p, y, pp, v), joint_log_prob(m, y, aa, v), 1e-10);
    }
  }
}

TEST(ExactSum, IndependentOfOrderAndExact) {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> terms;
    for (int k = 0; k < 2000; ++k) terms.push_back(testing::uniform(rng, -20.0, 1.0) * std::pow(10.0, k % 7 - 3));
    detail::ExactSum a;
    for (double v : terms) a.add(v);
    std::shuffle(terms.begin(), terms.end(), rng);
    detail::ExactSum b;
    for (double v : terms) b.add(v);
    EXPECT_EQ(a.value(), b.value());
  }
  detail::ExactSum c;
  for (double v : {1e16, 1.0, -1e16, 1e-3}) c.add(v);
  EXPECT_EQ(c.value(), 1.001);
  EXPECT_EQ(detail::ExactSum{}.value(), 0.0);
}

TEST(HouseholdModel, ValidationCatchesBrokenInvariants) {
  auto m = one_chain_model({0.0, 5.0}, {0.5, 0.5}, {{0.5, 0.5}, {0.5, 0.5}}, 1.0);
  EXPECT_NO_THROW(m.validate());
  auto bad = m;
  bad.chains[0].means = {5.0, 0.0};
  EXPECT_THROW(bad.validate(), ModelError);
  bad = m;
  bad.chains[0].homogeneous->at(0, 0) = 0.6;
  EXPECT_THROW(bad.validate(), ModelError);
  bad = m;
  bad.noise.sigma = 1e-4;
  EXPECT_THROW(bad.validate(), ModelError);
  bad = m;
  bad.chains[0].binned.pop_back();
  EXPECT_THROW(bad.validate(), ModelError);
  bad = m;
  bad.selector.reset();
  EXPECT_FALSE(bad.supports(ModelVariant::IFNHMM));
  EXPECT_TRUE(bad.supports(ModelVariant::FNHMM));
  try {
    bad.require(ModelVariant::IFNHMM);
    FAIL();
  } catch (const ModelError& e) {
    EXPECT_NE(std::string(e.what()).find("selector"), std::string::npos);
  }
}

TEST(ModelPersistence, JsonRoundTripIsExact) {
  std::mt19937_64 rng(5);
  auto m = testing::random_model(rng, 3, 3);
  m.noise.per_bin = {1.5, 2.5};
  const auto back = model_from_json(nlohmann::json::parse(model_to_json(m).dump()));
  EXPECT_EQ(back, m);
  EXPECT_EQ(model_to_json(m)["schema"], "disagg-model/1");

  auto j = model_to_json(m);
  j["schema"] = "disagg-model/0";
  EXPECT_THROW(model_from_json(j), ModelError);
  j = model_to_json(m);
  j["chains"][0]["initial"][0] = 5.0;
  EXPECT_THROW(model_from_json(j), ModelError);
}

}  // namespace
}  // namespace disagg
