#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "rawmodel/chains.hpp"
#include "rawmodel/kahan.hpp"
#include "rawmodel/params.hpp"
#include "rawmodel/time_distribution.hpp"

namespace rawmodel {

// How the number of contending stations is conditioned when each of N
// stations has a frame with probability p.
enum class Conditioning {
  // The tagged station has a frame; k - 1 of the other N - 1 do.
  TaggedHasPacket,
  // Binomial(N, p) restricted to k >= 1 and renormalized.
  PaperLiteral,
};

struct MixtureSpec {
  int n_total = 1;
  double p_active = 1.0;
  Conditioning conditioning = Conditioning::TaggedHasPacket;

  void validate() const {
    if (n_total < 1) throw ConfigError("n_total must be >= 1");
    if (!(p_active >= 0.0 && p_active <= 1.0))
      throw ConfigError("p_active must lie in [0, 1]");
  }
};

struct WeightedCount {
  int k = 0;
  double weight = 0.0;
};

namespace detail {

// Binomial(n, p) pmf for i = 0..n, normalized to unit sum.
inline std::vector<double> binomial_pmf(int n, double p) {
  std::vector<double> w(static_cast<std::size_t>(n) + 1, 0.0);
  if (p <= 0.0) {
    w.front() = 1.0;
    return w;
  }
  if (p >= 1.0) {
    w.back() = 1.0;
    return w;
  }
  const double lp = std::log(p), lq = std::log1p(-p);
  const double lfn = std::lgamma(n + 1.0);
  KahanSum total;
  for (int i = 0; i <= n; ++i) {
    const double lw = lfn - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) + i * lp +
                      (n - i) * lq;
    w[static_cast<std::size_t>(i)] = std::exp(lw);
    total += w[static_cast<std::size_t>(i)];
  }
  for (double& x : w) x /= total.value();
  return w;
}

}  // namespace detail

// Weights of the per-k delivery-time distributions, k = 1..N.
inline std::vector<WeightedCount> mixture_weights(const MixtureSpec& spec) {
  spec.validate();
  std::vector<WeightedCount> out;
  if (spec.conditioning == Conditioning::TaggedHasPacket) {
    const auto w = detail::binomial_pmf(spec.n_total - 1, spec.p_active);
    for (int k = 1; k <= spec.n_total; ++k)
      out.push_back({k, w[static_cast<std::size_t>(k - 1)]});
  } else {
    if (spec.p_active <= 0.0)
      throw ConfigError("paper-literal mixture with p = 0 has empty support");
    const auto w = detail::binomial_pmf(spec.n_total, spec.p_active);
    KahanSum active;
    for (int k = 1; k <= spec.n_total; ++k) active += w[static_cast<std::size_t>(k)];
    for (int k = 1; k <= spec.n_total; ++k)
      out.push_back({k, w[static_cast<std::size_t>(k)] / active.value()});
  }
  return out;
}

// Which station counts get their own chain run. Counts up to `exact_up_to`
// are all evaluated; above it only every `step`-th count is, and the weight
// of a skipped count is split linearly between its two evaluated neighbours.
struct KGrid {
  int exact_up_to = 1 << 30;
  int step = 1;

  static KGrid exact() { return {}; }
  static KGrid coarse(int exact_up_to, int step) { return {exact_up_to, step}; }

  bool is_exact() const { return step <= 1; }

  // Evaluated counts bracketing k in [1, n_max].
  std::pair<int, int> bracket(int k, int n_max) const {
    if (is_exact() || k <= exact_up_to || k >= n_max) return {k, k};
    const int lo = exact_up_to + (k - exact_up_to) / step * step;
    if (lo == k) return {k, k};
    return {lo, std::min(lo + step, n_max)};
  }
};

struct MixtureOptions {
  KGrid grid = KGrid::exact();
  // Counts whose weight falls below this are skipped; their mass shows up in
  // the deficit.
  double weight_floor = 1e-15;
};

// Projects weights onto the evaluated counts of `grid`.
inline std::vector<WeightedCount> project_weights(const std::vector<WeightedCount>& weights,
                                                  const MixtureOptions& opt) {
  int n_max = 0;
  for (const auto& w : weights) n_max = std::max(n_max, w.k);
  std::map<int, KahanSum> acc;
  for (const auto& w : weights) {
    if (w.weight < opt.weight_floor) continue;
    const auto [lo, hi] = opt.grid.bracket(w.k, n_max);
    if (lo == hi) {
      acc[lo] += w.weight;
      continue;
    }
    const double frac = static_cast<double>(w.k - lo) / (hi - lo);
    acc[lo] += w.weight * (1.0 - frac);
    acc[hi] += w.weight * frac;
  }
  std::vector<WeightedCount> out;
  for (const auto& [k, s] : acc)
    if (s.value() > 0.0) out.push_back({k, s.value()});
  return out;
}

// Chain results per station count for one parameter set. Safe to share
// between threads.
class DistributionCache {
 public:
  DistributionCache(ModelParams params, SlotDurations durations)
      : params_(std::move(params)), durations_(durations) {
    params_.validate();
    durations_.validate();
  }

  const ModelParams& params() const { return params_; }
  const SlotDurations& durations() const { return durations_; }

  std::shared_ptr<const ChainResult> get(int k) {
    if (k < 1) throw std::invalid_argument("station count must be >= 1");
    {
      std::lock_guard lock(mu_);
      if (auto it = cache_.find(k); it != cache_.end()) return it->second;
    }
    ModelParams p = params_;
    p.n_stations = k;
    auto res = std::make_shared<const ChainResult>(run_chains(p, durations_));
    std::lock_guard lock(mu_);
    return cache_.emplace(k, std::move(res)).first->second;
  }

  // Computes every missing count, spreading the runs over `threads` workers
  // (0 = hardware concurrency).
  void prefetch(std::vector<int> ks, unsigned threads = 0) {
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    {
      std::lock_guard lock(mu_);
      std::erase_if(ks, [&](int k) { return cache_.contains(k); });
    }
    // Largest counts first: they dominate the run time.
    std::reverse(ks.begin(), ks.end());
    unsigned workers = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, ks.size()));
    if (workers <= 1) {
      for (int k : ks) get(k);
      return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < ks.size(); i = next++) get(ks[i]);
      });
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return cache_.size();
  }

 private:
  ModelParams params_;
  SlotDurations durations_;
  mutable std::mutex mu_;
  std::map<int, std::shared_ptr<const ChainResult>> cache_;
};

enum class Problem { A, B };

namespace detail {

inline TimeDistribution mix(const std::vector<std::pair<double, const TimeDistribution*>>& parts,
                            double point_mass_at_zero = 0.0) {
  std::size_t total = 0;
  for (const auto& [w, d] : parts) total += d->size();
  std::vector<Atom> atoms;
  atoms.reserve(total + 1);
  if (point_mass_at_zero > 0.0) atoms.push_back({Micros{0}, point_mass_at_zero});
  for (const auto& [w, d] : parts)
    for (const auto& a : d->atoms()) atoms.push_back({a.duration, w * a.probability});
  return TimeDistribution::from_atoms(std::move(atoms));
}

}  // namespace detail

// Delivery-time distribution of one station when the number of contenders
// is random.
inline TimeDistribution mixture_pa(const MixtureSpec& spec, DistributionCache& cache,
                                   const MixtureOptions& opt = {}) {
  const auto weights = project_weights(mixture_weights(spec), opt);
  std::vector<int> ks;
  for (const auto& w : weights) ks.push_back(w.k);
  cache.prefetch(ks);
  std::vector<std::shared_ptr<const ChainResult>> keep;
  std::vector<std::pair<double, const TimeDistribution*>> parts;
  for (const auto& w : weights) {
    keep.push_back(cache.get(w.k));
    parts.emplace_back(w.weight, &keep.back()->p_a);
  }
  return detail::mix(parts);
}

inline TimeDistribution mixture_pa(const MixtureSpec& spec, const ModelParams& params,
                                   const SlotDurations& durations,
                                   const MixtureOptions& opt = {}) {
  DistributionCache cache(params, durations);
  return mixture_pa(spec, cache, opt);
}

// Time for every active station of a group of `group_size` to deliver when
// each is active with probability p. No active station completes at 0.
inline TimeDistribution mixture_pb(int group_size, double p_active, DistributionCache& cache,
                                   const MixtureOptions& opt = {}) {
  if (group_size < 1) throw ConfigError("group size must be >= 1");
  const auto pmf = detail::binomial_pmf(group_size, p_active);
  std::vector<WeightedCount> active;
  for (int k = 1; k <= group_size; ++k) active.push_back({k, pmf[static_cast<std::size_t>(k)]});
  const auto weights = project_weights(active, opt);
  std::vector<int> ks;
  for (const auto& w : weights) ks.push_back(w.k);
  cache.prefetch(ks);
  std::vector<std::shared_ptr<const ChainResult>> keep;
  std::vector<std::pair<double, const TimeDistribution*>> parts;
  for (const auto& w : weights) {
    keep.push_back(cache.get(w.k));
    parts.emplace_back(w.weight, &keep.back()->p_b);
  }
  return detail::mix(parts, pmf.front());
}

// Minimal RAW slot duration in which delivery completes with probability q.
inline Micros plan_slot_duration(const TimeDistribution& dist, double q) {
  return distribution_quantile(dist, q);
}

struct GroupPlan {
  int group_count = 1;
  std::vector<int> group_sizes;
  // Slot of the largest group; all groups get this when sizes are equal.
  Micros per_group_slot{0};
  std::vector<Micros> group_slots;
  Micros total_reserved{0};
  double quantile_target = 0.0;
  bool standard_compliant = false;
  bool feasible = true;
  // Best probability reachable when infeasible.
  double achievable = 1.0;
};

// N split into g sizes differing by at most one, larger groups first.
inline std::vector<int> split_evenly(int n, int g) {
  if (g < 1 || g > n) throw ConfigError("group count must lie in [1, N]");
  std::vector<int> sizes(static_cast<std::size_t>(g), n / g);
  for (int i = 0; i < n % g; ++i) ++sizes[static_cast<std::size_t>(i)];
  return sizes;
}

struct GroupSweep {
  std::vector<GroupPlan> plans;
  std::optional<GroupPlan> best;
};

// Evaluates every group count in [g_min, g_max]. Scheduling overhead per
// group (beacons, RAW parameter sets) is not charged.
inline GroupSweep optimize_groups(const MixtureSpec& spec, DistributionCache& cache, double q,
                                  int g_min, int g_max, Problem problem,
                                  const MixtureOptions& opt = {}) {
  spec.validate();
  if (g_min < 1 || g_max > spec.n_total || g_min > g_max)
    throw ConfigError("group range must lie within [1, N]");
  if (!(q > 0.0 && q <= 1.0)) throw ConfigError("q must lie in (0, 1]");

  // Gather every count the sweep needs so the chain runs can go in parallel.
  std::vector<int> needed;
  for (int g = g_min; g <= g_max; ++g)
    for (int size : {spec.n_total / g, (spec.n_total + g - 1) / g}) {
      if (problem == Problem::A) {
        for (const auto& w : project_weights(
                 mixture_weights({size, spec.p_active, spec.conditioning}), opt))
          needed.push_back(w.k);
      } else {
        const auto pmf = detail::binomial_pmf(size, spec.p_active);
        std::vector<WeightedCount> active;
        for (int k = 1; k <= size; ++k) active.push_back({k, pmf[static_cast<std::size_t>(k)]});
        for (const auto& w : project_weights(active, opt)) needed.push_back(w.k);
      }
    }
  cache.prefetch(needed);

  std::map<int, std::pair<std::optional<Micros>, double>> slot_by_size;
  auto slot_for = [&](int size) {
    if (auto it = slot_by_size.find(size); it != slot_by_size.end()) return it->second;
    const TimeDistribution d =
        problem == Problem::A
            ? mixture_pa({size, spec.p_active, spec.conditioning}, cache, opt)
            : mixture_pb(size, spec.p_active, cache, opt);
    std::pair<std::optional<Micros>, double> v{std::nullopt, d.total_mass()};
    try {
      v.first = plan_slot_duration(d, q);
    } catch (const UnsatisfiableQuantile&) {
    }
    return slot_by_size.emplace(size, v).first->second;
  };

  GroupSweep sweep;
  for (int g = g_min; g <= g_max; ++g) {
    GroupPlan plan;
    plan.group_count = g;
    plan.group_sizes = split_evenly(spec.n_total, g);
    plan.quantile_target = q;
    for (int size : plan.group_sizes) {
      const auto [slot, mass] = slot_for(size);
      if (!slot) {
        plan.feasible = false;
        plan.achievable = std::min(plan.achievable, mass);
        plan.group_slots.push_back(Micros{0});
        continue;
      }
      plan.group_slots.push_back(*slot);
      plan.per_group_slot = std::max(plan.per_group_slot, *slot);
      plan.total_reserved += *slot;
    }
    plan.standard_compliant = plan.feasible && plan.per_group_slot <= kMaxRawSlot;
    sweep.plans.push_back(plan);
    if (plan.feasible && (!sweep.best || plan.total_reserved < sweep.best->total_reserved))
      sweep.best = plan;
  }
  return sweep;
}

inline GroupSweep optimize_groups(const MixtureSpec& spec, const ModelParams& params,
                                  const SlotDurations& durations, double q, int g_min,
                                  int g_max, Problem problem, const MixtureOptions& opt = {}) {
  DistributionCache cache(params, durations);
  return optimize_groups(spec, cache, q, g_min, g_max, problem, opt);
}

}  // namespace rawmodel
