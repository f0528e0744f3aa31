#include "densewarp/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "densewarp/parallel.hpp"

namespace densewarp {

void FusionConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw Error(ErrorCode::kBadConfig, "fusion.lambda must lie in [0, 1], got " + std::to_string(lambda));
  }
  if (!(line_step > 0.0 && line_step <= 1.0)) {
    throw Error(ErrorCode::kBadConfig, "fusion.line_step must lie in (0, 1], got " + std::to_string(line_step));
  }
  if (include_self) {
    throw Error(ErrorCode::kBadConfig, "fusion.include_self is not supported: a view has no epipolar line in itself");
  }
  if (!(coarse_radius > 0.0)) {
    throw Error(ErrorCode::kBadConfig, "fusion.coarse_radius must be positive");
  }
}

namespace {

// Parameter interval of the clipped segment p0 + t*dir inside the box.
struct Segment {
  Vec2 origin;
  Vec2 dir;
  double t0;
  double t1;
};

bool clip_line(const EpipolarLine& line, double max_u, double max_v, Segment& seg) {
  const double a = line.coeffs.x();
  const double b = line.coeffs.y();
  const double c = line.coeffs.z();
  seg.origin = Vec2(-c * a, -c * b);
  seg.dir = Vec2(-b, a);
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  const double bounds[2] = {max_u, max_v};
  for (int axis = 0; axis < 2; ++axis) {
    const double p = seg.origin[axis];
    const double d = seg.dir[axis];
    if (std::abs(d) < 1e-15) {
      if (p < 0.0 || p > bounds[axis]) return false;
      continue;
    }
    double ta = (0.0 - p) / d;
    double tb = (bounds[axis] - p) / d;
    if (ta > tb) std::swap(ta, tb);
    lo = std::max(lo, ta);
    hi = std::min(hi, tb);
  }
  if (lo > hi) return false;
  seg.t0 = lo;
  seg.t1 = hi;
  return true;
}

template <typename Visit>
void scan_line(int width, int height, const EpipolarLine& line, double step, Visit&& visit) {
  Segment seg{};
  if (!clip_line(line, width - 1, height - 1, seg)) return;
  const double length = seg.t1 - seg.t0;
  const auto intervals = static_cast<long>(std::ceil(length / step));
  const long samples = std::max(intervals, 0L) + 1;
  const double spacing = intervals > 0 ? length / static_cast<double>(intervals) : 0.0;
  for (long k = 0; k < samples; ++k) {
    const Vec2 p = seg.origin + (seg.t0 + spacing * static_cast<double>(k)) * seg.dir;
    const double u = std::clamp(p.x(), 0.0, static_cast<double>(width - 1));
    const double v = std::clamp(p.y(), 0.0, static_cast<double>(height - 1));
    const int c0 = std::min(static_cast<int>(u), std::max(width - 2, 0));
    const int r0 = std::min(static_cast<int>(v), std::max(height - 2, 0));
    const int c1 = std::min(c0 + 1, width - 1);
    const int r1 = std::min(r0 + 1, height - 1);
    const double fu = u - c0;
    const double fv = v - r0;
    const auto at = [width](int r, int c) {
      return static_cast<std::size_t>(r) * static_cast<std::size_t>(width) + static_cast<std::size_t>(c);
    };
    visit(at(r0, c0), at(r0, c1), at(r1, c0), at(r1, c1), (1 - fu) * (1 - fv), fu * (1 - fv), (1 - fu) * fv,
          fu * fv);
  }
}

// Visits the index of every pixel centre within 0.5 px of the line, using the
// same predicate a full scan would.
template <typename Visit>
void scan_band(int width, int height, const EpipolarLine& line, Visit&& visit) {
  const double a = line.coeffs.x();
  const double b = line.coeffs.y();
  const double c = line.coeffs.z();
  const bool by_column = std::abs(b) >= std::abs(a);
  const int outer = by_column ? width : height;
  const int inner_size = by_column ? height : width;
  const double across = by_column ? b : a;
  const double along = by_column ? a : b;
  for (int i = 0; i < outer; ++i) {
    const double centre = -(along * i + c) / across;
    const double half = 0.5 / std::abs(across);
    const int lo = std::max(0, static_cast<int>(std::floor(centre - half)) - 1);
    const int hi = std::min(inner_size - 1, static_cast<int>(std::ceil(centre + half)) + 1);
    for (int k = lo; k <= hi; ++k) {
      const int col = by_column ? i : k;
      const int row = by_column ? k : i;
      if (std::abs(a * col + b * row + c) <= 0.5) {
        visit(static_cast<std::size_t>(row) * static_cast<std::size_t>(width) + static_cast<std::size_t>(col));
      }
    }
  }
}

}  // namespace

double max_in_band(const Heatmap& h, int joint, const EpipolarLine& line) {
  if (joint < 0 || joint >= h.joints()) throw Error(ErrorCode::kBadDimensions, "joint index out of range");
  const auto plane = h.channel(joint);
  double best = 0.0;
  scan_band(h.width(), h.height(), line, [&](std::size_t i) { best = std::max(best, plane[i]); });
  return best;
}

void max_in_band_all(const Heatmap& h, const EpipolarLine& line, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  const auto values = h.values();
  const std::size_t plane = h.plane_size();
  const int joints = h.joints();
  scan_band(h.width(), h.height(), line, [&](std::size_t i) {
    for (int j = 0; j < joints; ++j) {
      const double v = values[static_cast<std::size_t>(j) * plane + i];
      if (v > out[static_cast<std::size_t>(j)]) out[static_cast<std::size_t>(j)] = v;
    }
  });
}

double max_along_line(const Heatmap& h, int joint, const EpipolarLine& line, double step) {
  if (joint < 0 || joint >= h.joints()) throw Error(ErrorCode::kBadDimensions, "joint index out of range");
  if (!(step > 0.0)) throw Error(ErrorCode::kBadConfig, "line step must be positive");
  const auto plane = h.channel(joint);
  double best = 0.0;
  scan_line(h.width(), h.height(), line, step,
            [&](std::size_t i00, std::size_t i01, std::size_t i10, std::size_t i11, double w00, double w01,
                double w10, double w11) {
              best = std::max(best, w00 * plane[i00] + w01 * plane[i01] + w10 * plane[i10] + w11 * plane[i11]);
            });
  return best;
}

void max_along_line_all(const Heatmap& h, const EpipolarLine& line, double step, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  const auto values = h.values();
  const std::size_t plane = h.plane_size();
  const int joints = h.joints();
  scan_line(h.width(), h.height(), line, step,
            [&](std::size_t i00, std::size_t i01, std::size_t i10, std::size_t i11, double w00, double w01,
                double w10, double w11) {
              for (int j = 0; j < joints; ++j) {
                const double* p = values.data() + static_cast<std::size_t>(j) * plane;
                const double v = w00 * p[i00] + w01 * p[i01] + w10 * p[i10] + w11 * p[i11];
                if (v > out[static_cast<std::size_t>(j)]) out[static_cast<std::size_t>(j)] = v;
              }
            });
}

void check_rig_matches(const ReplicatedGrid& grid, const EpipolarRig& rig) {
  if (static_cast<std::size_t>(grid.views()) != rig.size()) {
    throw Error(ErrorCode::kRigMismatch, "grid has " + std::to_string(grid.views()) + " views, rig has " +
                                             std::to_string(rig.size()));
  }
  for (int v = 0; v < grid.views(); ++v) {
    const Heatmap& h = grid.at(v, 0).heatmap;
    const CameraView& cam = rig.camera(v);
    if (h.width() != cam.width || h.height() != cam.height) {
      throw Error(ErrorCode::kRigMismatch, "heatmap size of view " + std::to_string(v) +
                                               " differs from its camera image size");
    }
  }
}

Heatmap fuse_entry(const ReplicatedGrid& grid, const EpipolarRig& rig, const FusionConfig& cfg, int view,
                   int column) {
  const ReplicatedEntry& entry = grid.at(view, column);
  if (entry.anchor) return entry.heatmap;

  const Heatmap& self = entry.heatmap;
  const int m = grid.views();
  const int joints = self.joints();
  const int width = self.width();
  const int height = self.height();
  const double cross_weight = (1.0 - cfg.lambda) / static_cast<double>(m);

  // Coarse-to-fine window around each joint's replicated peak.
  std::vector<Vec2> centres;
  if (cfg.coarse_to_fine) {
    for (int j = 0; j < joints; ++j) {
      try {
        centres.push_back(decode_peak(self, j).position);
      } catch (const Error&) {
        centres.emplace_back(std::numeric_limits<double>::quiet_NaN(), 0.0);
      }
    }
  }

  Heatmap out(view, self.frame(), joints, height, width);
  auto dst = out.mutable_values();
  const auto src = self.values();
  const std::size_t plane = self.plane_size();
  std::vector<double> line_max(static_cast<std::size_t>(joints));
  std::vector<double> cross(static_cast<std::size_t>(joints));

  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const std::size_t pix = static_cast<std::size_t>(r) * static_cast<std::size_t>(width) +
                              static_cast<std::size_t>(c);
      bool needed = true;
      if (cfg.coarse_to_fine) {
        needed = false;
        for (const Vec2& centre : centres) {
          if ((centre - Vec2(c, r)).norm() <= cfg.coarse_radius) needed = true;
        }
      }
      std::fill(cross.begin(), cross.end(), 0.0);
      if (needed) {
        for (int u = 0; u < m; ++u) {
          if (u == view) continue;
          EpipolarLine line;
          try {
            line = epipolar_line(rig.between(view, u), Vec2(c, r));
          } catch (const Error& e) {
            if (e.code() == ErrorCode::kDegenerateLine) continue;
            throw;
          }
          if (cfg.sampling == LineSampling::kBand) {
            max_in_band_all(grid.at(u, column).heatmap, line, line_max);
          } else {
            max_along_line_all(grid.at(u, column).heatmap, line, cfg.line_step, line_max);
          }
          for (int j = 0; j < joints; ++j) cross[static_cast<std::size_t>(j)] += line_max[static_cast<std::size_t>(j)];
        }
      }
      for (int j = 0; j < joints; ++j) {
        const std::size_t idx = static_cast<std::size_t>(j) * plane + pix;
        double own = src[idx];
        if (cfg.coarse_to_fine && !needed) {
          dst[idx] = std::clamp(cfg.lambda * own, 0.0, 1.0);
          continue;
        }
        const double v = cfg.lambda * own + cross_weight * cross[static_cast<std::size_t>(j)];
        dst[idx] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

ReplicatedGrid fuse_group(const ReplicatedGrid& grid, const EpipolarRig& rig, const FusionConfig& cfg,
                          int threads) {
  cfg.validate();
  check_rig_matches(grid, rig);
  const int m = grid.views();
  std::vector<ReplicatedEntry> entries(static_cast<std::size_t>(m) * static_cast<std::size_t>(m));
  parallel_for(entries.size(), threads, [&](std::size_t i) {
    const int view = static_cast<int>(i) / m;
    const int column = static_cast<int>(i) % m;
    entries[i] = {fuse_entry(grid, rig, cfg, view, column), grid.at(view, column).anchor};
  });
  return {grid.frames(), std::move(entries)};
}

ReplicatedGrid fuse_group(const ReplicatedGrid& grid, const Rig& rig, const FusionConfig& cfg, int threads) {
  return fuse_group(grid, EpipolarRig(rig), cfg, threads);
}

}  // namespace densewarp
