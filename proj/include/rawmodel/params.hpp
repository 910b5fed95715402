#pragma once

#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace rawmodel {

using Micros = std::chrono::microseconds;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Contention and backoff configuration plus the numeric controls of the
// chain runner.
struct ModelParams {
  int n_stations = 1;
  int cw_min = 16;
  int cw_max = 1024;
  int retry_limit = 7;
  double epsilon = 1e-6;
  // 0 selects the default of 50 * cw_max * retry_limit slots.
  std::int64_t t_max_cap = 0;
  double prune_floor = 1e-12;

  // CW_r = min(cw_max, cw_min * 2^r).
  int contention_window(int retry) const {
    std::int64_t cw = cw_min;
    for (int i = 0; i < retry && cw < cw_max; ++i) cw *= 2;
    return static_cast<int>(cw < cw_max ? cw : cw_max);
  }

  std::vector<int> contention_windows() const {
    std::vector<int> cws(static_cast<std::size_t>(retry_limit));
    for (int r = 0; r < retry_limit; ++r) cws[static_cast<std::size_t>(r)] = contention_window(r);
    return cws;
  }

  std::int64_t effective_cap() const {
    return t_max_cap > 0 ? t_max_cap
                         : std::int64_t{50} * cw_max * retry_limit;
  }

  void validate() const {
    if (n_stations < 1) throw ConfigError("n_stations must be >= 1");
    if (cw_min < 1) throw ConfigError("cw_min must be >= 1");
    if (cw_max < cw_min) throw ConfigError("cw_max must be >= cw_min");
    if (retry_limit < 1) throw ConfigError("retry_limit must be >= 1");
    if (!(epsilon > 0.0 && epsilon < 1.0))
      throw ConfigError("epsilon must lie in (0, 1)");
    if (t_max_cap < 0) throw ConfigError("t_max_cap must be positive");
    if (!(prune_floor >= 0.0 && prune_floor < 1.0))
      throw ConfigError("prune_floor must lie in [0, 1)");
  }
};

// Real-time lengths of empty, successful and collided virtual slots.
struct SlotDurations {
  Micros t_empty{52};
  Micros t_success{42 * 52};
  Micros t_collision{42 * 52};

  void validate() const {
    if (t_empty.count() <= 0 || t_success.count() <= 0 ||
        t_collision.count() <= 0)
      throw ConfigError("slot durations must be strictly positive");
    if (t_success < t_empty || t_collision < t_empty)
      throw ConfigError("t_success and t_collision must be >= t_empty");
  }
};

inline constexpr Micros kBackoffSlot{52};
// Longest RAW slot the 802.11ah draft permits.
inline constexpr Micros kMaxRawSlot{246140};

// 2 MHz channel, MCS0, 100 byte frames: sigma = 52 us, T_s = T_c = 42 sigma.
inline ModelParams paper_params(int n_stations) {
  ModelParams p;
  p.n_stations = n_stations;
  p.cw_min = 16;
  p.cw_max = 1024;
  p.retry_limit = 7;
  return p;
}

inline SlotDurations paper_durations() {
  return SlotDurations{kBackoffSlot, 42 * kBackoffSlot, 42 * kBackoffSlot};
}

}  // namespace rawmodel
