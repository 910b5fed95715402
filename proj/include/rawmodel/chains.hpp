#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "rawmodel/params.hpp"
#include "rawmodel/process_a.hpp"
#include "rawmodel/process_b.hpp"
#include "rawmodel/time_distribution.hpp"
#include "rawmodel/tx_prob_table.hpp"

namespace rawmodel {

// Real time spent after t virtual slots of which c collided and s succeeded.
inline Micros state_time(std::int64_t c, std::int64_t s, std::int64_t t,
                         const SlotDurations& d) {
  if (c < 0 || s < 0 || c + s > t)
    throw std::invalid_argument("state_time requires 0 <= c, s and c + s <= t");
  return c * d.t_collision + s * d.t_success + (t - c - s) * d.t_empty;
}

struct RunDiagnostics {
  std::int64_t slots = 0;  // model time at which the run stopped
  bool truncated = false;  // stopped by t_max_cap
  double carried_a = 0.0;  // transient mass of A left at the stop
  double carried_b = 0.0;  // transient mass of B left at the stop
  double dropped_a = 0.0;
  double dropped_b = 0.0;
  std::size_t peak_states_a = 0;
  std::size_t peak_states_b = 0;
  std::vector<std::string> warnings;

  // Mass of A that is neither delivered nor failed.
  double residual_a() const { return carried_a + dropped_a; }
  double residual_b() const { return carried_b + dropped_b; }
};

struct ChainResult {
  TimeDistribution p_a;
  TimeDistribution p_b;
  double p_fail_a = 0.0;
  RunDiagnostics diagnostics;
};

// Runs processes A and B side by side until both have settled to within
// epsilon, process A has no transient mass left (B then cannot move), or the
// time cap is hit.
inline ChainResult run_chains(const ModelParams& params, const SlotDurations& durations) {
  params.validate();
  durations.validate();

  const TxProbTable table = build_tx_prob_table(
      params, last_tx_slot(params, params.retry_limit - 1) + 1);
  const std::int64_t cap = params.effective_cap();
  const int n = params.n_stations;

  StateLayerA a = StateLayerA::initial(params);
  StateLayerB b = StateLayerB::initial(params);
  std::map<Micros, double> pa_atoms;
  std::map<Micros, double> pb_atoms;
  RunDiagnostics diag;

  auto states = [](const detail::LayerGrid& g) {
    return g.empty() ? std::size_t{0}
                     : static_cast<std::size_t>(g.c_hi() - g.c_lo() + 1) *
                           static_cast<std::size_t>(g.s_hi() - g.s_lo() + 1) *
                           static_cast<std::size_t>(g.width());
  };

  for (;;) {
    const bool settled = a.settled() >= 1.0 - params.epsilon &&
                         b.settled() >= 1.0 - params.epsilon;
    if (settled || a.exhausted()) break;
    if (a.t() >= cap) {
      diag.truncated = true;
      break;
    }
    const PeerTxGrid peers(a, table);
    b = step_process_b(b, peers, params);
    a = step_process_a(a, table, peers, params);
    for (const auto& e : a.fresh_successes())
      pa_atoms[state_time(e.c, e.s + 1, e.t + 1, durations)] += e.probability;
    for (const auto& e : b.fresh_completions())
      pb_atoms[state_time(e.c, n, e.t + 1, durations)] += e.probability;
    diag.peak_states_a = std::max(diag.peak_states_a, states(a.grid()));
    diag.peak_states_b = std::max(diag.peak_states_b, states(b.grid()));
  }

  ChainResult res;
  res.p_a = TimeDistribution::from_map(pa_atoms);
  res.p_b = TimeDistribution::from_map(pb_atoms);
  res.p_fail_a = a.absorbed_failure();
  diag.slots = a.t();
  diag.carried_a = a.carried();
  diag.carried_b = b.carried();
  diag.dropped_a = a.dropped();
  diag.dropped_b = b.dropped();
  if (diag.truncated) {
    diag.warnings.push_back("time cap of " + std::to_string(cap) +
                            " slots reached before the chains settled");
  }
  if (a.exhausted() && b.settled() < 1.0 - params.epsilon) {
    diag.warnings.push_back(
        "process B stranded with mass " + std::to_string(diag.carried_b) +
        " after process A absorbed (paths in which some station fails)");
  }
  res.diagnostics = std::move(diag);
  return res;
}

}  // namespace rawmodel
