#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rawmodel/kahan.hpp"
#include "rawmodel/layer_grid.hpp"
#include "rawmodel/params.hpp"
#include "rawmodel/tx_prob_table.hpp"

namespace rawmodel {

// Raised when a chain is asked to step past ModelParams::effective_cap().
class CapExceeded : public std::runtime_error {
 public:
  CapExceeded(std::int64_t t, double deficit)
      : std::runtime_error("model time cap reached at t=" + std::to_string(t)),
        t_(t), deficit_(deficit) {}
  std::int64_t t() const { return t_; }
  double deficit() const { return deficit_; }

 private:
  std::int64_t t_;
  double deficit_;
};

// Tagged-station success in slot t from state (t, c, s): the delivery
// completes after T(t + 1, c, s + 1).
struct SuccessEvent {
  std::int64_t t = 0;
  int c = 0;
  int s = 0;
  double probability = 0.0;
};

// Probabilities of the three slot types among `contenders` stations that each
// transmit independently with probability p.
struct SlotOdds {
  double empty = 1.0;
  double success = 0.0;
  double collision = 0.0;
};

inline SlotOdds slot_odds(int contenders, double p) {
  if (contenders <= 0 || p <= 0.0) return {};
  const double idle = 1.0 - p;
  const double one_less = std::pow(idle, contenders - 1);
  SlotOdds o;
  o.empty = one_less * idle;
  o.success = contenders * p * one_less;
  o.collision = std::max(0.0, 1.0 - o.empty - o.success);
  return o;
}

class PeerTxGrid;

// Distribution of process A over (c, s, r) at model time t, together with
// everything that has left the transient states so far.
class StateLayerA {
 public:
  static StateLayerA initial(const ModelParams& params) {
    params.validate();
    StateLayerA layer;
    layer.n_stations_ = params.n_stations;
    layer.grid_ = detail::LayerGrid(0, 0, 0, 0, params.retry_limit);
    layer.grid_.cell(0, 0)[0] = 1.0;
    return layer;
  }

  std::int64_t t() const { return t_; }
  int n_stations() const { return n_stations_; }
  int retry_limit() const { return grid_.width(); }
  bool exhausted() const { return grid_.empty(); }

  double mass(int c, int s, int r) const { return grid_.get(c, s, r); }
  // Sum over r of the mass in (t, c, s).
  double mass(int c, int s) const {
    if (!grid_.contains(c, s)) return 0.0;
    KahanSum acc;
    const double* v = grid_.cell(c, s);
    for (int r = 0; r < grid_.width(); ++r) acc += v[r];
    return acc.value();
  }

  double carried() const { return grid_.total(); }
  double absorbed_success() const { return success_.value(); }
  double absorbed_failure() const { return failure_.value(); }
  double dropped() const { return dropped_.value(); }
  double settled() const {
    KahanSum acc;
    acc += success_.value();
    acc += failure_.value();
    acc += dropped_.value();
    return acc.value();
  }

  // Success absorptions produced by the step that created this layer.
  const std::vector<SuccessEvent>& fresh_successes() const { return fresh_; }

  const detail::LayerGrid& grid() const { return grid_; }

  template <class F>
  void for_each_state(F&& f) const {
    if (grid_.empty()) return;
    for (int c = grid_.c_lo(); c <= grid_.c_hi(); ++c)
      for (int s = grid_.s_lo(); s <= grid_.s_hi(); ++s) {
        const double* v = grid_.cell(c, s);
        for (int r = 0; r < grid_.width(); ++r)
          if (v[r] > 0.0) f(c, s, r, v[r]);
      }
  }

 private:
  friend StateLayerA step_process_a(const StateLayerA&, const TxProbTable&,
                                    const PeerTxGrid&, const ModelParams&);

  std::int64_t t_ = 0;
  int n_stations_ = 1;
  detail::LayerGrid grid_;
  KahanSum success_;
  KahanSum failure_;
  KahanSum dropped_;
  std::vector<SuccessEvent> fresh_;
};

// Probability that a station transmits in slot t given process A is in
// (t, c, s): the retry-count mixture of p_tx(t, r) weighted by the process-A
// mass. Zero for unreachable (t, c, s).
inline double cond_tx_prob_state(const StateLayerA& layer, const TxProbTable& table,
                                 int c, int s) {
  const auto& g = layer.grid();
  if (!g.contains(c, s)) return 0.0;
  const double* v = g.cell(c, s);
  const double* p = table.p_tx_row(layer.t());
  KahanSum num, den;
  for (int r = 0; r < g.width(); ++r) {
    if (v[r] <= 0.0) continue;
    den += v[r];
    if (p) num += p[r] * v[r];
  }
  const double d = den.value();
  return d > 0.0 ? std::clamp(num.value() / d, 0.0, 1.0) : 0.0;
}

// cond_tx_prob_state evaluated once for every (c, s) in a layer's window.
class PeerTxGrid {
 public:
  PeerTxGrid(const StateLayerA& layer, const TxProbTable& table)
      : t_(layer.t()) {
    const auto& g = layer.grid();
    if (g.empty()) return;
    values_ = detail::LayerGrid(g.c_lo(), g.c_hi(), g.s_lo(), g.s_hi(), 1);
    for (int c = g.c_lo(); c <= g.c_hi(); ++c)
      for (int s = g.s_lo(); s <= g.s_hi(); ++s)
        values_.cell(c, s)[0] = cond_tx_prob_state(layer, table, c, s);
  }

  std::int64_t t() const { return t_; }
  double operator()(int c, int s) const { return values_.get(c, s, 0); }

 private:
  std::int64_t t_;
  detail::LayerGrid values_;
};

// Advances process A from t to t + 1.
inline StateLayerA step_process_a(const StateLayerA& layer, const TxProbTable& table,
                                  const PeerTxGrid& peers, const ModelParams& params) {
  if (layer.t() >= params.effective_cap())
    throw CapExceeded(layer.t(), 1.0 - layer.absorbed_success() - layer.absorbed_failure());
  if (peers.t() != layer.t())
    throw std::invalid_argument("peer transmission grid is for a different slot");

  const int n = layer.n_stations();
  const int rl = layer.retry_limit();
  const auto& in = layer.grid();

  StateLayerA out;
  out.t_ = layer.t() + 1;
  out.n_stations_ = n;
  out.success_ = layer.success_;
  out.failure_ = layer.failure_;
  out.dropped_ = layer.dropped_;
  if (in.empty()) {
    out.grid_ = in;
    return out;
  }
  out.grid_ = detail::LayerGrid(in.c_lo(), in.c_hi() + 1, in.s_lo(),
                                std::min(in.s_hi() + 1, n - 1), rl);
  auto& og = out.grid_;
  const double* q_row = table.p_tx_row(layer.t());

  for (int c = in.c_lo(); c <= in.c_hi(); ++c) {
    for (int s = in.s_lo(); s <= in.s_hi(); ++s) {
      const double* v = in.cell(c, s);
      const SlotOdds odds = slot_odds(n - s - 1, peers(c, s));
      KahanSum success;
      double* stay = og.cell(c, s);
      double* peer_ok = odds.success > 0.0 ? og.cell(c, s + 1) : nullptr;
      double* busy = og.cell(c + 1, s);
      for (int r = 0; r < rl; ++r) {
        const double m = v[r];
        if (m <= 0.0) continue;
        const double q = q_row ? q_row[r] : 0.0;
        const double silent = (1.0 - q) * m;
        stay[r] += silent * odds.empty;
        success += q * odds.empty * m;
        if (peer_ok) peer_ok[r] += silent * odds.success;
        busy[r] += silent * odds.collision;
        const double collided = q * (1.0 - odds.empty) * m;
        if (r + 1 == rl)
          out.failure_ += collided;
        else
          busy[r + 1] += collided;
      }
      if (success.value() > 0.0) {
        out.success_ += success.value();
        out.fresh_.push_back({layer.t(), c, s, success.value()});
      }
    }
  }
  og.prune(params.prune_floor, out.dropped_);
  return out;
}

inline StateLayerA step_process_a(const StateLayerA& layer, const TxProbTable& table,
                                  const ModelParams& params) {
  return step_process_a(layer, table, PeerTxGrid(layer, table), params);
}

}  // namespace rawmodel
