#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "rawmodel/kahan.hpp"
#include "rawmodel/params.hpp"

namespace rawmodel {

// Per-slot transmission probability of a station that has made r failed
// attempts, in the limit of an infinite station population.
//
//   a(t, r)    probability of transmitting in slot t with retry count r
//   b(t, r)    probability of entering slot t with retry count r
//   p_tx(t, r) = a / b, or 0 where b vanishes
//
// Rows past t_extent read as zero.
class TxProbTable {
 public:
  TxProbTable() = default;

  double a(std::int64_t t, int r) const { return at(a_, t, r); }
  double b(std::int64_t t, int r) const { return at(b_, t, r); }
  double p_tx(std::int64_t t, int r) const { return at(p_, t, r); }

  std::int64_t t_extent() const { return t_extent_; }
  int retry_limit() const { return retry_limit_; }
  // One past the last slot in which a(t, r) > 0 for some r.
  std::int64_t support_end() const { return support_end_; }

  // Row of p_tx for slot t; empty past t_extent.
  const double* p_tx_row(std::int64_t t) const {
    if (t < 0 || t >= t_extent_) return nullptr;
    return p_.data() + static_cast<std::size_t>(t) * static_cast<std::size_t>(retry_limit_);
  }

 private:
  friend TxProbTable build_tx_prob_table(const ModelParams&, std::int64_t);

  double at(const std::vector<double>& v, std::int64_t t, int r) const {
    if (t < 0 || t >= t_extent_ || r < 0 || r >= retry_limit_) return 0.0;
    return v[static_cast<std::size_t>(t) * static_cast<std::size_t>(retry_limit_) +
             static_cast<std::size_t>(r)];
  }

  std::vector<double> a_, b_, p_;
  std::int64_t t_extent_ = 0;
  std::int64_t support_end_ = 0;
  int retry_limit_ = 0;
};

// Last slot in which a station can still transmit with retry count r:
// sum_{j<=r} CW_j - 1.
inline std::int64_t last_tx_slot(const ModelParams& params, int r) {
  std::int64_t last = -1;
  for (int j = 0; j <= r; ++j) last += params.contention_window(j);
  return last;
}

inline TxProbTable build_tx_prob_table(const ModelParams& params,
                                       std::int64_t t_extent) {
  params.validate();
  if (t_extent < 1) throw ConfigError("t_extent must be >= 1");

  const int rl = params.retry_limit;
  const std::int64_t support = last_tx_slot(params, rl - 1) + 1;
  // Always materialize the whole support: the tail sums below need it.
  const std::int64_t full = std::max(t_extent, support);
  const auto n = static_cast<std::size_t>(full);

  std::vector<std::vector<double>> a(static_cast<std::size_t>(rl),
                                     std::vector<double>(n, 0.0));
  const int cw0 = params.contention_window(0);
  for (std::int64_t t = 0; t < cw0 && t < full; ++t)
    a[0][static_cast<std::size_t>(t)] = 1.0 / cw0;
  for (int r = 1; r < rl; ++r) {
    const int cw = params.contention_window(r);
    const auto& prev = a[static_cast<std::size_t>(r - 1)];
    auto& cur = a[static_cast<std::size_t>(r)];
    for (std::int64_t t = 0; t < full; ++t) {
      KahanSum acc;
      for (std::int64_t i = std::max<std::int64_t>(0, t - cw); i < t; ++i)
        acc += prev[static_cast<std::size_t>(i)];
      cur[static_cast<std::size_t>(t)] = acc.value() / cw;
    }
  }

  // prefix[r][t] = sum_{i<t} a(i, r); suffix[r][t] = sum_{i>=t} a(i, r).
  std::vector<std::vector<double>> prefix(static_cast<std::size_t>(rl),
                                          std::vector<double>(n + 1, 0.0));
  auto suffix = prefix;
  for (std::size_t r = 0; r < static_cast<std::size_t>(rl); ++r) {
    KahanSum fwd;
    for (std::size_t t = 0; t < n; ++t) {
      fwd += a[r][t];
      prefix[r][t + 1] = fwd.value();
    }
    KahanSum bwd;
    for (std::size_t t = n; t-- > 0;) {
      bwd += a[r][t];
      suffix[r][t] = bwd.value();
    }
  }

  TxProbTable table;
  table.t_extent_ = t_extent;
  table.retry_limit_ = rl;
  table.support_end_ = support;
  const auto cells = static_cast<std::size_t>(t_extent) * static_cast<std::size_t>(rl);
  table.a_.assign(cells, 0.0);
  table.b_.assign(cells, 0.0);
  table.p_.assign(cells, 0.0);

  for (std::int64_t t = 0; t < t_extent; ++t) {
    const auto ti = static_cast<std::size_t>(t);
    for (int r = 0; r < rl; ++r) {
      const auto ri = static_cast<std::size_t>(r);
      const std::size_t k = ti * static_cast<std::size_t>(rl) + ri;
      const double av = a[ri][ti];
      double bv;
      double pv;
      if (r == 0) {
        bv = t < cw0 ? static_cast<double>(cw0 - t) / cw0 : 0.0;
        pv = t < cw0 ? 1.0 / static_cast<double>(cw0 - t) : 0.0;
      } else {
        // b(t, r) = sum_{i<t} (a(i, r-1) - a(i, r)). Equivalently
        // sum_{i>=t} a(i, r) - sum_{i>=t} a(i, r-1) since both levels carry
        // unit total mass. Use whichever form subtracts smaller numbers.
        const double head = prefix[ri - 1][ti];
        const double tail = suffix[ri][ti];
        bv = head <= tail ? head - prefix[ri][ti] : tail - suffix[ri - 1][ti];
        bv = std::max(bv, av);
        pv = bv > 0.0 ? std::clamp(av / bv, 0.0, 1.0) : 0.0;
      }
      table.a_[k] = av;
      table.b_[k] = bv;
      table.p_[k] = pv;
    }
  }
  return table;
}

}  // namespace rawmodel
