#pragma once

#include <algorithm>
#include <cmath>

#include "densewarp/fusion.hpp"

namespace densewarp::testing {

// Direct evaluation of the fusion rule: for every pixel, scan every pixel of
// every other view and keep the largest value within 0.5 px of the line.
inline Heatmap brute_force_fuse(const ReplicatedGrid& grid, const Rig& rig, double lambda, int view, int column) {
  const ReplicatedEntry& e = grid.at(view, column);
  if (e.anchor) return e.heatmap;
  const Heatmap& self = e.heatmap;
  const int m = grid.views();
  Heatmap out(view, self.frame(), self.joints(), self.height(), self.width());
  for (int j = 0; j < self.joints(); ++j) {
    for (int r = 0; r < self.height(); ++r) {
      for (int c = 0; c < self.width(); ++c) {
        double cross = 0.0;
        for (int u = 0; u < m; ++u) {
          if (u == view) continue;
          const Mat3 f = fundamental_from_cameras(rig[static_cast<std::size_t>(view)], rig[static_cast<std::size_t>(u)]).f;
          const Vec3 raw = f * Vec3(c, r, 1.0);
          const double norm = std::hypot(raw.x(), raw.y());
          if (norm < 1e-12) continue;
          const Vec3 l = raw / norm;
          const Heatmap& other = grid.at(u, column).heatmap;
          double best = 0.0;
          for (int rr = 0; rr < other.height(); ++rr) {
            for (int cc = 0; cc < other.width(); ++cc) {
              if (std::abs(l.x() * cc + l.y() * rr + l.z()) <= 0.5) best = std::max(best, other.at(j, rr, cc));
            }
          }
          cross += best;
        }
        out.set(j, r, c, std::clamp(lambda * self.at(j, r, c) + (1.0 - lambda) / m * cross, 0.0, 1.0));
      }
    }
  }
  return out;
}

}  // namespace densewarp::testing
