#pragma once

#include <span>

#include "densewarp/geometry.hpp"
#include "densewarp/heatmap.hpp"

namespace densewarp {

enum class LineSampling {
  kBilinear,  // samples every line_step px, bilinear interpolation
  kBand,      // maximum over pixel centres within 0.5 px of the line
};

struct FusionConfig {
  double lambda = 0.5;     // weight of the view's own (replicated) response
  double line_step = 0.5;  // px between samples along an epipolar line
  LineSampling sampling = LineSampling::kBilinear;
  bool include_self = false;
  // Only pixels within coarse_radius px of the replicated peak get the
  // cross-view term; the rest keep lambda * H.
  bool coarse_to_fine = false;
  double coarse_radius = 6.0;

  // Throws kBadConfig naming the offending field.
  void validate() const;
};

// Maximum of the bilinearly interpolated channel along the part of `line`
// inside the pixel-centre rectangle [0, W-1] x [0, H-1]; 0 if the line misses it.
double max_along_line(const Heatmap& h, int joint, const EpipolarLine& line, double step);

// Same scan for every channel at once; out.size() must equal h.joints().
void max_along_line_all(const Heatmap& h, const EpipolarLine& line, double step, std::span<double> out);

// Spatially corrected heatmap for one grid entry. Anchors are returned as is.
// A pixel that coincides with the epipole of a contributing view receives no
// contribution from that view.
Heatmap fuse_entry(const ReplicatedGrid& grid, const EpipolarRig& rig, const FusionConfig& cfg, int view,
                   int column);

ReplicatedGrid fuse_group(const ReplicatedGrid& grid, const Rig& rig, const FusionConfig& cfg, int threads = 1);
ReplicatedGrid fuse_group(const ReplicatedGrid& grid, const EpipolarRig& rig, const FusionConfig& cfg,
                          int threads = 1);

// Maximum over pixel centres p with |l(p)| <= 0.5; 0 if there are none.
double max_in_band(const Heatmap& h, int joint, const EpipolarLine& line);
void max_in_band_all(const Heatmap& h, const EpipolarLine& line, std::span<double> out);

// Checks that heatmap dimensions agree with the cameras' image sizes.
void check_rig_matches(const ReplicatedGrid& grid, const EpipolarRig& rig);

}  // namespace densewarp
