#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "rawmodel/kahan.hpp"

namespace rawmodel::detail {

// Dense window over (c, s) with `width` values per cell (the retry counter
// for process A, a single value for process B). Cells outside the window
// hold zero mass.
class LayerGrid {
 public:
  LayerGrid() = default;
  LayerGrid(int c_lo, int c_hi, int s_lo, int s_hi, int width)
      : c_lo_(c_lo), s_lo_(s_lo), nc_(std::max(0, c_hi - c_lo + 1)),
        ns_(std::max(0, s_hi - s_lo + 1)), width_(width),
        data_(static_cast<std::size_t>(nc_) * static_cast<std::size_t>(ns_) *
                  static_cast<std::size_t>(width),
              0.0) {}

  bool empty() const { return nc_ == 0 || ns_ == 0; }
  int c_lo() const { return c_lo_; }
  int c_hi() const { return c_lo_ + nc_ - 1; }
  int s_lo() const { return s_lo_; }
  int s_hi() const { return s_lo_ + ns_ - 1; }
  int width() const { return width_; }

  bool contains(int c, int s) const {
    return c >= c_lo_ && c < c_lo_ + nc_ && s >= s_lo_ && s < s_lo_ + ns_;
  }

  double* cell(int c, int s) {
    return data_.data() + offset(c, s);
  }
  const double* cell(int c, int s) const {
    return data_.data() + offset(c, s);
  }

  double get(int c, int s, int k) const {
    if (!contains(c, s) || k < 0 || k >= width_) return 0.0;
    return cell(c, s)[k];
  }

  double total() const {
    KahanSum acc;
    for (double v : data_) acc += v;
    return acc.value();
  }

  // Zeroes every entry below `floor`, adds the removed mass to `dropped`,
  // then shrinks the window to the bounding box of what remains.
  void prune(double floor, KahanSum& dropped) {
    if (empty()) return;
    int c_min = c_hi() + 1, c_max = c_lo_ - 1, s_min = s_hi() + 1, s_max = s_lo_ - 1;
    for (int c = c_lo_; c <= c_hi(); ++c) {
      for (int s = s_lo_; s <= s_hi(); ++s) {
        double* v = cell(c, s);
        bool live = false;
        for (int k = 0; k < width_; ++k) {
          if (v[k] <= 0.0) {
            v[k] = 0.0;
            continue;
          }
          if (v[k] < floor) {
            dropped += v[k];
            v[k] = 0.0;
          } else {
            live = true;
          }
        }
        if (live) {
          c_min = std::min(c_min, c);
          c_max = std::max(c_max, c);
          s_min = std::min(s_min, s);
          s_max = std::max(s_max, s);
        }
      }
    }
    if (c_max < c_min) {
      *this = LayerGrid(0, -1, 0, -1, width_);
      return;
    }
    if (c_min == c_lo_ && c_max == c_hi() && s_min == s_lo_ && s_max == s_hi())
      return;
    LayerGrid shrunk(c_min, c_max, s_min, s_max, width_);
    for (int c = c_min; c <= c_max; ++c)
      for (int s = s_min; s <= s_max; ++s)
        std::copy_n(cell(c, s), width_, shrunk.cell(c, s));
    *this = std::move(shrunk);
  }

 private:
  std::size_t offset(int c, int s) const {
    return (static_cast<std::size_t>(c - c_lo_) * static_cast<std::size_t>(ns_) +
            static_cast<std::size_t>(s - s_lo_)) *
           static_cast<std::size_t>(width_);
  }

  int c_lo_ = 0;
  int s_lo_ = 0;
  int nc_ = 0;
  int ns_ = 0;
  int width_ = 1;
  std::vector<double> data_;
};

}  // namespace rawmodel::detail
