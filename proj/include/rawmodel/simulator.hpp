#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <thread>
#include <vector>

#include "rawmodel/params.hpp"
#include "rawmodel/time_distribution.hpp"

namespace rawmodel {

// SplitMix64 (Steele, Lea, Flood 2014). Each run owns a generator seeded
// from (seed, run index), so results do not depend on how runs are split
// across threads.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t state) : state_(state) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform on [0, bound), Lemire's multiply-and-reject.
  std::uint32_t below(std::uint32_t bound) {
    std::uint64_t m = static_cast<std::uint64_t>(next() >> 32) * bound;
    auto low = static_cast<std::uint32_t>(m);
    if (low < bound) {
      const std::uint32_t threshold = static_cast<std::uint32_t>(-bound) % bound;
      while (low < threshold) {
        m = static_cast<std::uint64_t>(next() >> 32) * bound;
        low = static_cast<std::uint32_t>(m);
      }
    }
    return static_cast<std::uint32_t>(m >> 32);
  }

  // Uniform on [0, 1) with 53 bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  static SplitMix64 for_run(std::uint64_t seed, std::uint64_t run) {
    SplitMix64 mix(seed);
    const std::uint64_t a = mix.next();
    SplitMix64 mix2(a ^ (run * 0xd1342543de82ef95ULL + 0x632be59bd9b4e019ULL));
    return SplitMix64(mix2.next());
  }

 private:
  std::uint64_t state_;
};

struct SimConfig {
  ModelParams params;
  SlotDurations durations;
  std::int64_t runs = 1;
  std::uint64_t seed = 1;
  int tagged_station_index = 0;
  // 0 uses std::thread::hardware_concurrency().
  unsigned threads = 0;

  void validate() const {
    params.validate();
    durations.validate();
    if (runs < 1) throw ConfigError("runs must be >= 1");
    if (tagged_station_index < 0 || tagged_station_index >= params.n_stations)
      throw ConfigError("tagged_station_index must lie in [0, n_stations)");
  }
};

// Histogram of observed durations; `failure_count` runs produced no
// duration.
struct EmpiricalDistribution {
  std::map<Micros, std::int64_t> counts;
  std::int64_t runs = 0;
  std::int64_t failure_count = 0;

  std::int64_t observed() const {
    std::int64_t total = 0;
    for (const auto& [d, n] : counts) total += n;
    return total;
  }

  void merge(const EmpiricalDistribution& other) {
    for (const auto& [d, n] : other.counts) counts[d] += n;
    runs += other.runs;
    failure_count += other.failure_count;
  }

  // Probabilities are counts / runs.
  TimeDistribution to_distribution() const {
    std::vector<Atom> atoms;
    atoms.reserve(counts.size());
    for (const auto& [d, n] : counts)
      atoms.push_back({d, static_cast<double>(n) / static_cast<double>(runs)});
    return TimeDistribution::from_atoms(std::move(atoms));
  }

  friend bool operator==(const EmpiricalDistribution&, const EmpiricalDistribution&) = default;
};

struct SimResult {
  // Tagged-station delivery time; failures counted separately.
  EmpiricalDistribution emp_a;
  // Time until every station delivered. Runs in which some station hit the
  // retry limit are only counted in emp_b.failure_count.
  EmpiricalDistribution emp_b;
  // For the failed runs of emp_b: time at which the last successful station
  // finished.
  EmpiricalDistribution emp_b_partial;
  // Largest number of attempts any tagged station made.
  int max_tagged_attempts = 0;

  friend bool operator==(const SimResult&, const SimResult&) = default;
};

struct RunOutcome {
  bool tagged_delivered = false;
  Micros tagged_time{0};
  int tagged_attempts = 0;
  bool all_delivered = true;
  Micros last_success{0};
  int successes = 0;
  int failures = 0;
};

namespace detail {

struct Station {
  std::int64_t counter = 0;
  int retries = 0;
  bool active = true;
};

}  // namespace detail

// One contention episode of `n` stations from the start of a RAW slot until
// every station has delivered or given up.
inline RunOutcome simulate_episode(const ModelParams& params, const SlotDurations& d,
                                   int n, int tagged, SplitMix64& rng) {
  std::vector<detail::Station> st(static_cast<std::size_t>(n));
  const auto cw0 = static_cast<std::uint32_t>(params.contention_window(0));
  for (auto& s : st) s.counter = rng.below(cw0);

  RunOutcome out;
  Micros now{0};
  int remaining = n;
  std::vector<std::size_t> tx;
  tx.reserve(st.size());
  while (remaining > 0) {
    tx.clear();
    for (std::size_t i = 0; i < st.size(); ++i)
      if (st[i].active && st[i].counter == 0) tx.push_back(i);

    if (tx.empty()) {
      now += d.t_empty;
    } else if (tx.size() == 1) {
      now += d.t_success;
    } else {
      now += d.t_collision;
    }
    for (std::size_t i = 0; i < st.size(); ++i)
      if (st[i].active && st[i].counter > 0) --st[i].counter;

    if (tx.size() == 1) {
      auto& s = st[tx[0]];
      s.active = false;
      --remaining;
      ++out.successes;
      out.last_success = now;
      if (static_cast<int>(tx[0]) == tagged) {
        out.tagged_delivered = true;
        out.tagged_time = now;
        out.tagged_attempts = s.retries + 1;
      }
    } else if (tx.size() > 1) {
      for (std::size_t i : tx) {
        auto& s = st[i];
        ++s.retries;
        if (s.retries >= params.retry_limit) {
          s.active = false;
          --remaining;
          ++out.failures;
          out.all_delivered = false;
          if (static_cast<int>(i) == tagged) out.tagged_attempts = s.retries;
        } else {
          s.counter = rng.below(static_cast<std::uint32_t>(params.contention_window(s.retries)));
        }
      }
    }
  }
  return out;
}

namespace detail {

inline void record(SimResult& res, const RunOutcome& o) {
  ++res.emp_a.runs;
  if (o.tagged_delivered)
    ++res.emp_a.counts[o.tagged_time];
  else
    ++res.emp_a.failure_count;
  ++res.emp_b.runs;
  if (o.all_delivered) {
    ++res.emp_b.counts[o.last_success];
  } else {
    ++res.emp_b.failure_count;
    ++res.emp_b_partial.runs;
    if (o.successes > 0) ++res.emp_b_partial.counts[o.last_success];
    else ++res.emp_b_partial.failure_count;
  }
  res.max_tagged_attempts = std::max(res.max_tagged_attempts, o.tagged_attempts);
}

template <class RunFn>
SimResult run_parallel(std::int64_t runs, unsigned threads, RunFn&& fn) {
  unsigned workers = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::int64_t>(workers, runs));
  std::vector<SimResult> parts(workers);
  auto work = [&](unsigned w) {
    for (std::int64_t i = w; i < runs; i += workers) record(parts[w], fn(i));
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  SimResult total;
  for (const auto& p : parts) {
    total.emp_a.merge(p.emp_a);
    total.emp_b.merge(p.emp_b);
    total.emp_b_partial.merge(p.emp_b_partial);
    total.max_tagged_attempts = std::max(total.max_tagged_attempts, p.max_tagged_attempts);
  }
  return total;
}

}  // namespace detail

inline SimResult simulate(const SimConfig& config) {
  config.validate();
  return detail::run_parallel(config.runs, config.threads, [&](std::int64_t run) {
    auto rng = SplitMix64::for_run(config.seed, static_cast<std::uint64_t>(run));
    return simulate_episode(config.params, config.durations, config.params.n_stations,
                            config.tagged_station_index, rng);
  });
}

// Each of n_total stations independently has a frame with probability
// p_active; the tagged station always has one. Used to check planned slot
// durations against the protocol itself.
inline SimResult simulate_active_mixture(const SimConfig& config, double p_active) {
  config.validate();
  if (!(p_active >= 0.0 && p_active <= 1.0))
    throw ConfigError("p_active must lie in [0, 1]");
  const int n_total = config.params.n_stations;
  return detail::run_parallel(config.runs, config.threads, [&](std::int64_t run) {
    auto rng = SplitMix64::for_run(config.seed, static_cast<std::uint64_t>(run));
    int k = 1;
    for (int i = 1; i < n_total; ++i)
      if (rng.uniform() < p_active) ++k;
    return simulate_episode(config.params, config.durations, k, 0, rng);
  });
}

}  // namespace rawmodel
