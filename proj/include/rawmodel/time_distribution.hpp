#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "rawmodel/kahan.hpp"
#include "rawmodel/params.hpp"

namespace rawmodel {

struct Atom {
  Micros duration{0};
  double probability = 0.0;

  friend bool operator==(const Atom&, const Atom&) = default;
};

class UnsatisfiableQuantile : public std::domain_error {
 public:
  UnsatisfiableQuantile(double requested, double achievable)
      : std::domain_error("quantile " + std::to_string(requested) +
                          " exceeds achievable probability " +
                          std::to_string(achievable)),
        requested_(requested),
        achievable_(achievable) {}

  double requested() const { return requested_; }
  double achievable() const { return achievable_; }

 private:
  double requested_;
  double achievable_;
};

// Discrete sub-probability distribution over durations. The missing mass
// (deficit) covers delivery failure plus any truncated or pruned tail.
class TimeDistribution {
 public:
  TimeDistribution() = default;

  // Merges duplicate durations and drops non-positive entries.
  static TimeDistribution from_atoms(std::vector<Atom> atoms) {
    std::sort(atoms.begin(), atoms.end(),
              [](const Atom& x, const Atom& y) { return x.duration < y.duration; });
    TimeDistribution d;
    d.atoms_.reserve(atoms.size());
    for (std::size_t i = 0; i < atoms.size();) {
      KahanSum p;
      const Micros key = atoms[i].duration;
      for (; i < atoms.size() && atoms[i].duration == key; ++i)
        p += atoms[i].probability;
      if (p.value() > 0.0) d.atoms_.push_back({key, p.value()});
    }
    d.recompute_mass();
    return d;
  }

  static TimeDistribution from_map(const std::map<Micros, double>& m) {
    std::vector<Atom> atoms;
    atoms.reserve(m.size());
    for (const auto& [k, v] : m) atoms.push_back({k, v});
    return from_atoms(std::move(atoms));
  }

  const std::vector<Atom>& atoms() const { return atoms_; }
  bool empty() const { return atoms_.empty(); }
  std::size_t size() const { return atoms_.size(); }
  double total_mass() const { return total_mass_; }
  double deficit() const { return 1.0 - total_mass_; }

  // Probability at an exact duration, 0 when absent.
  double mass_at(Micros d) const {
    auto it = std::lower_bound(
        atoms_.begin(), atoms_.end(), d,
        [](const Atom& a, Micros v) { return a.duration < v; });
    return it != atoms_.end() && it->duration == d ? it->probability : 0.0;
  }

  // Cumulative mass over durations <= d.
  double cdf(Micros d) const {
    KahanSum acc;
    for (const auto& a : atoms_) {
      if (a.duration > d) break;
      acc += a.probability;
    }
    return acc.value();
  }

  // Atom with the largest probability; the earliest one on ties.
  const Atom& mode() const {
    if (atoms_.empty()) throw std::logic_error("mode of empty distribution");
    return *std::max_element(
        atoms_.begin(), atoms_.end(),
        [](const Atom& x, const Atom& y) { return x.probability < y.probability; });
  }

  friend bool operator==(const TimeDistribution&, const TimeDistribution&) = default;

 private:
  void recompute_mass() {
    KahanSum acc;
    for (const auto& a : atoms_) acc += a.probability;
    total_mass_ = acc.value();
  }

  std::vector<Atom> atoms_;
  double total_mass_ = 0.0;
};

// Smallest duration whose cumulative mass reaches q.
inline Micros distribution_quantile(const TimeDistribution& dist, double q) {
  if (!(q > 0.0 && q <= 1.0))
    throw std::invalid_argument("quantile level must lie in (0, 1]");
  // Cumulative sums of many atoms can land an ulp or two short of q.
  const double target = q - 1e-12;
  KahanSum acc;
  for (const auto& a : dist.atoms()) {
    acc += a.probability;
    if (acc.value() >= target) return a.duration;
  }
  throw UnsatisfiableQuantile(q, dist.total_mass());
}

}  // namespace rawmodel
