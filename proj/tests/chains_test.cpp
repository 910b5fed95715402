#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rawmodel/chains.hpp"

using namespace rawmodel;

namespace {

const SlotDurations kPaper = paper_durations();
constexpr std::int64_t kSigma = 52;
constexpr std::int64_t kTs = 42 * kSigma;

ModelParams tiny(int n) {
  ModelParams p;
  p.n_stations = n;
  p.cw_min = 4;
  p.cw_max = 4;
  p.retry_limit = 2;
  p.prune_floor = 0.0;
  p.epsilon = 1e-15;
  return p;
}

std::size_t nonzero(const std::map<std::int64_t, double>& m) {
  std::size_t n = 0;
  for (const auto& [k, v] : m) n += v > 0.0;
  return n;
}

// Durations that keep (t, c, s) recoverable from the sum.
const SlotDurations kDistinct{Micros{1}, Micros{1000}, Micros{1000000}};

}  // namespace

TEST(StateTime, Examples) {
  EXPECT_EQ(state_time(0, 0, 0, kPaper), Micros{0});
  EXPECT_EQ(state_time(1, 2, 5, kPaper), Micros{6656});
  EXPECT_THROW(state_time(3, 3, 5, kPaper), std::invalid_argument);
}

TEST(StateTime, TradingAnEmptySlotNeverShortensTime) {
  for (int t = 0; t < 30; ++t)
    for (int c = 0; c <= t; ++c)
      for (int s = 0; c + s < t; ++s) {
        const auto base = state_time(c, s, t, kPaper);
        EXPECT_GE(state_time(c + 1, s, t, kPaper), base);
        EXPECT_GE(state_time(c, s + 1, t, kPaper), base);
      }
}

TEST(ProcessA, FirstSlotPeerProbability) {
  const auto p = paper_params(7);
  const auto table = build_tx_prob_table(p, 64);
  const auto layer = StateLayerA::initial(p);
  EXPECT_EQ(cond_tx_prob_state(layer, table, 0, 0), 1.0 / 16);
  EXPECT_EQ(cond_tx_prob_state(layer, table, 3, 1), 0.0);
}

TEST(ProcessA, PeerProbabilityMatchesDenseReference) {
  auto p = paper_params(7);
  p.prune_floor = 0.0;
  const auto table = build_tx_prob_table(p, 64);
  auto layer = StateLayerA::initial(p);
  oracle::DenseProcessA dense(p, 21);
  for (int t = 0; t < 20; ++t) {
    layer = step_process_a(layer, table, p);
    dense.step();
  }
  ASSERT_EQ(layer.t(), 20);
  int checked = 0;
  for (int c = 0; c <= 20; ++c)
    for (int s = 0; s + c <= 20 && s < 7; ++s) {
      double mass = 0.0;
      for (int r = 0; r < 7; ++r) {
        EXPECT_NEAR(layer.mass(c, s, r), dense.at(c, s, r), 1e-13);
        mass += dense.at(c, s, r);
      }
      if (mass <= 0.0) continue;
      EXPECT_NEAR(cond_tx_prob_state(layer, table, c, s), dense.peer_tx(c, s), 1e-12)
          << "c=" << c << " s=" << s;
      ++checked;
    }
  EXPECT_GT(checked, 50);
}

TEST(ProcessA, SingleStationDeliversUniformly) {
  const auto p = paper_params(1);
  const auto table = build_tx_prob_table(p, 64);
  auto layer = StateLayerA::initial(p);
  for (int t = 0; t < 16; ++t) {
    layer = step_process_a(layer, table, p);
    ASSERT_EQ(layer.fresh_successes().size(), 1u);
    const auto& e = layer.fresh_successes().front();
    EXPECT_EQ(e.t, t);
    EXPECT_EQ(e.c, 0);
    EXPECT_EQ(e.s, 0);
    EXPECT_NEAR(e.probability, 1.0 / 16, 1e-15);
  }
  EXPECT_TRUE(layer.exhausted());
  EXPECT_EQ(layer.absorbed_failure(), 0.0);
}

TEST(ProcessA, StepConservesMass) {
  const auto p = paper_params(7);
  const auto table = build_tx_prob_table(p, last_tx_slot(p, 6) + 1);
  auto layer = StateLayerA::initial(p);
  for (int t = 0; t < 400; ++t) {
    const double before = layer.carried();
    const double settled_before = layer.settled();
    layer = step_process_a(layer, table, p);
    const double moved = layer.settled() - settled_before;
    EXPECT_NEAR(layer.carried() + moved, before, 1e-12) << "t=" << t;
    EXPECT_NEAR(layer.carried() + layer.settled(), 1.0, 1e-12);
  }
}

TEST(ProcessA, CarriedStatesRespectBounds) {
  const auto p = paper_params(5);
  const auto table = build_tx_prob_table(p, last_tx_slot(p, 6) + 1);
  auto layer = StateLayerA::initial(p);
  while (!layer.exhausted()) {
    layer = step_process_a(layer, table, p);
    layer.for_each_state([&](int c, int s, int r, double) {
      ASSERT_LE(c + s, layer.t());
      ASSERT_LE(s, p.n_stations - 1);
      ASSERT_LE(r, std::min(c, p.retry_limit - 1));
    });
  }
}

TEST(ProcessA, LastPendingStationSeesNoPeers) {
  const SlotOdds none = slot_odds(0, 0.7);
  EXPECT_EQ(none.empty, 1.0);
  EXPECT_EQ(none.success, 0.0);
  EXPECT_EQ(none.collision, 0.0);
  const SlotOdds sure = slot_odds(1, 1.0);
  EXPECT_EQ(sure.success, 1.0);
  EXPECT_EQ(sure.empty, 0.0);
}

TEST(ProcessA, CapRaisesTruncationSignal) {
  auto p = paper_params(3);
  p.t_max_cap = 5;
  const auto table = build_tx_prob_table(p, 64);
  auto layer = StateLayerA::initial(p);
  for (int t = 0; t < 5; ++t) layer = step_process_a(layer, table, p);
  try {
    step_process_a(layer, table, p);
    FAIL() << "expected CapExceeded";
  } catch (const CapExceeded& e) {
    EXPECT_EQ(e.t(), 5);
    EXPECT_GT(e.deficit(), 0.0);
  }
}

TEST(ProcessB, SingleStationMatchesProcessA) {
  const auto p = paper_params(1);
  const auto table = build_tx_prob_table(p, 64);
  auto a = StateLayerA::initial(p);
  auto b = StateLayerB::initial(p);
  for (int t = 0; t < 16; ++t) {
    b = step_process_b(b, table, a, p);
    a = step_process_a(a, table, p);
    ASSERT_EQ(b.fresh_completions().size(), 1u);
    EXPECT_EQ(b.fresh_completions().front().t, t);
    EXPECT_NEAR(b.fresh_completions().front().probability, 1.0 / 16, 1e-15);
  }
}

TEST(ProcessB, StepConservesMass) {
  const auto p = paper_params(7);
  const auto table = build_tx_prob_table(p, last_tx_slot(p, 6) + 1);
  auto a = StateLayerA::initial(p);
  auto b = StateLayerB::initial(p);
  for (int t = 0; t < 400; ++t) {
    const double before = b.carried();
    const double settled_before = b.settled();
    b = step_process_b(b, table, a, p);
    a = step_process_a(a, table, p);
    EXPECT_NEAR(b.carried() + b.settled() - settled_before, before, 1e-12);
    b.for_each_state([&](int c, int s, double) {
      ASSERT_LE(c + s, b.t());
      ASSERT_LT(s, 7);
    });
  }
  EXPECT_NEAR(b.carried() + b.settled(), 1.0, 1e-12);
}

TEST(ProcessB, RejectsMismatchedSlot) {
  const auto p = paper_params(2);
  const auto table = build_tx_prob_table(p, 64);
  auto a = StateLayerA::initial(p);
  const auto b = StateLayerB::initial(p);
  a = step_process_a(a, table, p);
  EXPECT_THROW(step_process_b(b, table, a, p), std::invalid_argument);
}

TEST(RunChains, SingleStationClosedForm) {
  const auto res = run_chains(paper_params(1), kPaper);
  ASSERT_EQ(res.p_a.size(), 16u);
  for (int k = 0; k < 16; ++k)
    EXPECT_NEAR(res.p_a.mass_at(Micros{k * kSigma + kTs}), 1.0 / 16, 1e-12);
  EXPECT_EQ(res.p_fail_a, 0.0);
  EXPECT_EQ(res.p_a, res.p_b);
  EXPECT_FALSE(res.diagnostics.truncated);
}

TEST(RunChains, BookkeepingClosesToOne) {
  for (int n : {2, 7, 30}) {
    const auto res = run_chains(paper_params(n), kPaper);
    EXPECT_NEAR(res.p_a.total_mass() + res.p_fail_a + res.diagnostics.residual_a(), 1.0, 1e-9)
        << n;
    EXPECT_NEAR(res.p_b.total_mass() + res.diagnostics.residual_b(), 1.0, 1e-9) << n;
    EXPECT_GE(res.p_a.total_mass(), 1.0 - 1e-6 - res.p_fail_a) << n;
  }
}

TEST(RunChains, MatchesHistoryEnumeration) {
  for (int n : {1, 2, 3}) {
    const auto p = tiny(n);
    const auto res = run_chains(p, kDistinct);
    const auto ref = oracle::enumerate_model(p, kDistinct, 64);
    EXPECT_NEAR(res.p_fail_a, ref.p_fail_a, 1e-9) << n;
    ASSERT_EQ(res.p_a.size(), nonzero(ref.p_a)) << n;
    for (const auto& [us, prob] : ref.p_a)
      EXPECT_NEAR(res.p_a.mass_at(Micros{us}), prob, 1e-9) << "n=" << n << " A at " << us;
    ASSERT_EQ(res.p_b.size(), nonzero(ref.p_b)) << n;
    for (const auto& [us, prob] : ref.p_b)
      EXPECT_NEAR(res.p_b.mass_at(Micros{us}), prob, 1e-9) << "n=" << n << " B at " << us;
  }
}

TEST(RunChains, TwoStationsAgainstEnumerationWithPaperTimes) {
  const auto p = tiny(2);
  const auto res = run_chains(p, kPaper);
  const auto ref = oracle::enumerate_model(p, kPaper, 64);
  double total = 0.0;
  for (const auto& [us, prob] : ref.p_a) {
    EXPECT_NEAR(res.p_a.mass_at(Micros{us}), prob, 1e-12);
    total += prob;
  }
  EXPECT_NEAR(res.p_a.total_mass(), total, 1e-12);
  EXPECT_GT(res.p_fail_a, 0.0);
}

TEST(RunChains, CompletionNeedsEverySuccessSlot) {
  const auto res = run_chains(paper_params(7), kPaper);
  ASSERT_FALSE(res.p_b.empty());
  EXPECT_GE(res.p_b.atoms().front().duration, Micros{7 * kTs});
  const auto mode = res.p_b.mode().duration;
  EXPECT_GE(mode, Micros{7 * kTs});
  EXPECT_LT(mode, Micros{8 * kTs});
}

TEST(RunChains, TruncatesAtCapWithWarning) {
  auto p = paper_params(7);
  p.t_max_cap = 40;
  const auto res = run_chains(p, kPaper);
  EXPECT_TRUE(res.diagnostics.truncated);
  EXPECT_EQ(res.diagnostics.slots, 40);
  EXPECT_GT(res.diagnostics.carried_a, 0.0);
  EXPECT_FALSE(res.diagnostics.warnings.empty());
  EXPECT_NEAR(res.p_a.total_mass() + res.p_fail_a + res.diagnostics.residual_a(), 1.0, 1e-9);
}

TEST(Quantile, UniformMedianAndTop) {
  const auto res = run_chains(paper_params(1), kPaper);
  EXPECT_EQ(distribution_quantile(res.p_a, 0.5), Micros{7 * kSigma + kTs});
  EXPECT_EQ(distribution_quantile(res.p_a, 1.0 - 1e-6), Micros{15 * kSigma + kTs});
  EXPECT_EQ(distribution_quantile(res.p_a, 0.01), Micros{kTs});
}

TEST(Quantile, NonDecreasingInLevel) {
  const auto res = run_chains(paper_params(7), kPaper);
  Micros prev{0};
  for (double q = 0.01; q < 0.9999; q += 0.01) {
    const auto v = distribution_quantile(res.p_a, q);
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(Quantile, UnsatisfiableLevelNamesAchievableMass) {
  const auto d = TimeDistribution::from_atoms({{Micros{5}, 0.25}, {Micros{9}, 0.5}});
  EXPECT_EQ(distribution_quantile(d, 0.75), Micros{9});
  try {
    distribution_quantile(d, 0.8);
    FAIL();
  } catch (const UnsatisfiableQuantile& e) {
    EXPECT_DOUBLE_EQ(e.achievable(), 0.75);
  }
  EXPECT_THROW(distribution_quantile(d, 0.0), std::invalid_argument);
}

TEST(Quantile, NonDecreasingInStationCount) {
  Micros prev[4] = {};
  const double qs[4] = {0.5, 0.95, 0.99, 0.999};
  for (int n : {1, 2, 3, 5, 8, 12}) {
    const auto res = run_chains(paper_params(n), kPaper);
    for (int i = 0; i < 4; ++i) {
      const auto v = distribution_quantile(res.p_a, qs[i]);
      EXPECT_GE(v, prev[i]) << "n=" << n << " q=" << qs[i];
      prev[i] = v;
    }
  }
}

TEST(TimeDistribution, MergesDuplicatesAndDropsEmptyAtoms) {
  const auto d = TimeDistribution::from_atoms(
      {{Micros{10}, 0.25}, {Micros{3}, 0.0}, {Micros{10}, 0.25}, {Micros{2}, 0.125}});
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.atoms()[0], (Atom{Micros{2}, 0.125}));
  EXPECT_EQ(d.atoms()[1], (Atom{Micros{10}, 0.5}));
  EXPECT_DOUBLE_EQ(d.total_mass(), 0.625);
  EXPECT_DOUBLE_EQ(d.deficit(), 0.375);
  EXPECT_DOUBLE_EQ(d.cdf(Micros{5}), 0.125);
}
