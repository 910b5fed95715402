#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "rawmodel/kahan.hpp"
#include "rawmodel/layer_grid.hpp"
#include "rawmodel/params.hpp"
#include "rawmodel/process_a.hpp"
#include "rawmodel/tx_prob_table.hpp"

namespace rawmodel {

// All stations delivered in slot t from (t, c, N - 1); completes after
// T(t + 1, c, N).
struct CompletionEvent {
  std::int64_t t = 0;
  int c = 0;
  double probability = 0.0;
};

// Distribution of process B over (c, s), s < N, at model time t.
class StateLayerB {
 public:
  static StateLayerB initial(const ModelParams& params) {
    params.validate();
    StateLayerB layer;
    layer.n_stations_ = params.n_stations;
    layer.grid_ = detail::LayerGrid(0, 0, 0, 0, 1);
    layer.grid_.cell(0, 0)[0] = 1.0;
    return layer;
  }

  std::int64_t t() const { return t_; }
  int n_stations() const { return n_stations_; }
  bool exhausted() const { return grid_.empty(); }
  double mass(int c, int s) const { return grid_.get(c, s, 0); }
  double carried() const { return grid_.total(); }
  double absorbed() const { return absorbed_.value(); }
  double dropped() const { return dropped_.value(); }
  double settled() const {
    KahanSum acc;
    acc += absorbed_.value();
    acc += dropped_.value();
    return acc.value();
  }

  const std::vector<CompletionEvent>& fresh_completions() const { return fresh_; }
  const detail::LayerGrid& grid() const { return grid_; }

  template <class F>
  void for_each_state(F&& f) const {
    if (grid_.empty()) return;
    for (int c = grid_.c_lo(); c <= grid_.c_hi(); ++c)
      for (int s = grid_.s_lo(); s <= grid_.s_hi(); ++s)
        if (const double m = grid_.cell(c, s)[0]; m > 0.0) f(c, s, m);
  }

 private:
  friend StateLayerB step_process_b(const StateLayerB&, const PeerTxGrid&,
                                    const ModelParams&);

  std::int64_t t_ = 0;
  int n_stations_ = 1;
  detail::LayerGrid grid_;
  KahanSum absorbed_;
  KahanSum dropped_;
  std::vector<CompletionEvent> fresh_;
};

// Advances process B from t to t + 1. The per-station transmission
// probability comes from process A at the same t.
inline StateLayerB step_process_b(const StateLayerB& layer, const PeerTxGrid& peers,
                                  const ModelParams& params) {
  if (layer.t() >= params.effective_cap())
    throw CapExceeded(layer.t(), 1.0 - layer.absorbed());
  if (peers.t() != layer.t())
    throw std::invalid_argument("peer transmission grid is for a different slot");

  const int n = layer.n_stations();
  const auto& in = layer.grid();

  StateLayerB out;
  out.t_ = layer.t() + 1;
  out.n_stations_ = n;
  out.absorbed_ = layer.absorbed_;
  out.dropped_ = layer.dropped_;
  if (in.empty()) {
    out.grid_ = in;
    return out;
  }
  out.grid_ = detail::LayerGrid(in.c_lo(), in.c_hi() + 1, in.s_lo(),
                                std::min(in.s_hi() + 1, n - 1), 1);
  auto& og = out.grid_;

  for (int c = in.c_lo(); c <= in.c_hi(); ++c) {
    for (int s = in.s_lo(); s <= in.s_hi(); ++s) {
      const double m = in.cell(c, s)[0];
      if (m <= 0.0) continue;
      const SlotOdds odds = slot_odds(n - s, peers(c, s));
      og.cell(c, s)[0] += odds.empty * m;
      og.cell(c + 1, s)[0] += odds.collision * m;
      const double done = odds.success * m;
      if (done <= 0.0) continue;
      if (s + 1 == n) {
        out.absorbed_ += done;
        out.fresh_.push_back({layer.t(), c, done});
      } else {
        og.cell(c, s + 1)[0] += done;
      }
    }
  }
  og.prune(params.prune_floor, out.dropped_);
  return out;
}

inline StateLayerB step_process_b(const StateLayerB& layer, const TxProbTable& table,
                                  const StateLayerA& process_a, const ModelParams& params) {
  if (process_a.t() != layer.t())
    throw std::invalid_argument("process A layer is for a different slot");
  return step_process_b(layer, PeerTxGrid(process_a, table), params);
}

}  // namespace rawmodel
