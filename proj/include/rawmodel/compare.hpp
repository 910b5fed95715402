#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "rawmodel/kahan.hpp"
#include "rawmodel/time_distribution.hpp"

namespace rawmodel {

struct AtomDifference {
  Micros duration{0};
  double left = 0.0;
  double right = 0.0;
  double abs_diff() const { return std::abs(left - right); }
};

// Aligns two distributions on the union of their atoms.
inline std::vector<AtomDifference> atom_differences(const TimeDistribution& x,
                                                    const TimeDistribution& y) {
  std::map<Micros, AtomDifference> merged;
  for (const auto& a : x.atoms()) {
    auto& d = merged[a.duration];
    d.duration = a.duration;
    d.left = a.probability;
  }
  for (const auto& a : y.atoms()) {
    auto& d = merged[a.duration];
    d.duration = a.duration;
    d.right = a.probability;
  }
  std::vector<AtomDifference> out;
  out.reserve(merged.size());
  for (const auto& [k, v] : merged) out.push_back(v);
  return out;
}

// sup |F_x - F_y| over all durations. Deficits are not renormalized.
inline double kolmogorov_distance(const TimeDistribution& x, const TimeDistribution& y) {
  KahanSum fx, fy;
  double worst = 0.0;
  for (const auto& d : atom_differences(x, y)) {
    fx += d.left;
    fy += d.right;
    worst = std::max(worst, std::abs(fx.value() - fy.value()));
  }
  return worst;
}

// Probability mass binned on a grid of `unit`; index i covers
// [i * unit, (i + 1) * unit).
inline std::vector<double> binned_pmf(const TimeDistribution& dist, Micros unit) {
  if (unit.count() <= 0) throw std::invalid_argument("bin width must be positive");
  if (dist.empty()) return {};
  const auto last = dist.atoms().back().duration.count() / unit.count();
  std::vector<double> pmf(static_cast<std::size_t>(last) + 1, 0.0);
  for (const auto& a : dist.atoms())
    pmf[static_cast<std::size_t>(a.duration.count() / unit.count())] += a.probability;
  return pmf;
}

// Start of every cluster of the binned pmf, a cluster being a maximal run of
// bins with mass above `floor`. Delivery-time distributions are made of such
// clusters, one per count of non-empty slots, each opening with a sharp peak.
inline std::vector<Micros> cluster_onsets(const TimeDistribution& dist, Micros unit,
                                          double floor = 0.0) {
  const auto pmf = binned_pmf(dist, unit);
  std::vector<Micros> onsets;
  bool inside = false;
  for (std::size_t i = 0; i < pmf.size(); ++i) {
    const bool live = pmf[i] > floor;
    if (live && !inside) onsets.push_back(static_cast<std::int64_t>(i) * unit);
    inside = live;
  }
  return onsets;
}

// Distances between successive cluster onsets.
inline std::vector<Micros> peak_spacings(const TimeDistribution& dist, Micros unit,
                                         double floor = 0.0) {
  const auto onsets = cluster_onsets(dist, unit, floor);
  std::vector<Micros> gaps;
  for (std::size_t i = 1; i < onsets.size(); ++i) gaps.push_back(onsets[i] - onsets[i - 1]);
  return gaps;
}

}  // namespace rawmodel
