#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "densewarp/geometry.hpp"

namespace densewarp {

struct Keypoint2D {
  int joint = 0;
  Vec2 position = Vec2::Zero();
  double confidence = 1.0;
};

// J x H x W grid of non-negative values for one view at one frame.
//
// Storage is shared between copies; the mutable accessors detach first, so a
// heatmap handed to another owner never changes underneath it.
class Heatmap {
 public:
  Heatmap() = default;
  Heatmap(int view, int frame, int joints, int height, int width);
  Heatmap(int view, int frame, int joints, int height, int width, std::vector<double> values);

  int view() const { return view_; }
  int frame() const { return frame_; }
  int joints() const { return joints_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_); }
  std::size_t size() const { return plane_size() * static_cast<std::size_t>(joints_); }
  bool empty() const { return size() == 0; }

  double at(int joint, int row, int col) const { return (*data_)[index(joint, row, col)]; }
  std::span<const double> values() const;
  std::span<const double> channel(int joint) const;

  std::span<double> mutable_values();
  std::span<double> mutable_channel(int joint);
  void set(int joint, int row, int col, double value) { mutable_values()[index(joint, row, col)] = value; }

  // Same values, different label; storage stays shared.
  Heatmap relabeled(int view, int frame) const;
  bool shares_storage_with(const Heatmap& other) const { return data_ && data_ == other.data_; }
  bool same_shape(const Heatmap& other) const {
    return joints_ == other.joints_ && height_ == other.height_ && width_ == other.width_;
  }

  // Values rounded through 32-bit floats, i.e. exactly what the file format stores.
  Heatmap quantized() const;

  // Bitwise equality of shape and values (labels ignored).
  bool values_equal(const Heatmap& other) const;

 private:
  std::size_t index(int joint, int row, int col) const {
    return (static_cast<std::size_t>(joint) * static_cast<std::size_t>(height_) + static_cast<std::size_t>(row)) *
               static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }
  void detach();

  int view_ = 0;
  int frame_ = 0;
  int joints_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::shared_ptr<std::vector<double>> data_;
};

// Channel k holds exp(-d^2 / (2 sigma^2)) around keypoints[k]; keypoints with
// confidence <= 0 leave their channel empty (a dropped detection).
Heatmap render_gaussian(std::span<const Keypoint2D> keypoints, int width, int height, double sigma, int view = 0,
                        int frame = 0);

// Integer argmax (first in row-major order on ties), refined to sub-pixel
// precision from the 3x3 neighbourhood.
Keypoint2D decode_peak(const Heatmap& h, int joint);

struct ReplicatedEntry {
  Heatmap heatmap;
  bool anchor = false;
};

// Rows are views (ascending id), columns are frames (ascending). Every entry
// of row v shares storage with view v's single observed heatmap.
class ReplicatedGrid {
 public:
  ReplicatedGrid() = default;
  ReplicatedGrid(std::vector<int> frames, std::vector<ReplicatedEntry> entries);

  int views() const { return static_cast<int>(frames_.size()); }
  const std::vector<int>& frames() const { return frames_; }
  int column_of(int frame) const;
  int anchor_column(int view) const;

  const ReplicatedEntry& at(int view, int column) const { return entries_[index(view, column)]; }
  ReplicatedEntry& at(int view, int column) { return entries_[index(view, column)]; }

 private:
  std::size_t index(int view, int column) const {
    return static_cast<std::size_t>(view) * frames_.size() + static_cast<std::size_t>(column);
  }

  std::vector<int> frames_;
  std::vector<ReplicatedEntry> entries_;
};

// Strict interleaved group: heatmap k belongs to view k at frame M*(i-1)+k+1.
ReplicatedGrid replicate_group(std::span<const Heatmap> group);

// Relaxed form for sliding windows: one heatmap per view, pairwise distinct frames.
ReplicatedGrid replicate_window(std::span<const Heatmap> window);

// Binary "DWHM" format: magic, u32 version/view/frame/J/H/W, then J*H*W f32,
// all little-endian, joint-major then row-major.
void write_heatmap(std::ostream& out, const Heatmap& h);
Heatmap read_heatmap(std::istream& in);
void write_heatmap_file(const std::filesystem::path& path, const Heatmap& h);
Heatmap read_heatmap_file(const std::filesystem::path& path);

}  // namespace densewarp
