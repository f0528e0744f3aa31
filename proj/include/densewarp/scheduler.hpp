#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <vector>

#include "densewarp/heatmap.hpp"

namespace densewarp {

// Frames are 1-based, views 0-based throughout.
struct GroupEntry {
  int view = 0;
  int frame = 0;
};

struct InterleavedGroup {
  int index = 1;
  std::vector<GroupEntry> entries;  // view j at frame M*(index-1)+j+1
};

std::vector<InterleavedGroup> build_groups(int total_frames, int views);

enum class SamplingMode { kUniform, kNonUniform };

struct SamplingPlan {
  int views = 4;
  double camera_rate = 12.5;  // samples per second per camera
  double phase_step = 0.02;   // seconds between consecutive frame slots
  SamplingMode mode = SamplingMode::kUniform;
  int window = 4;             // frame slots per cycle (x); equals views in uniform mode
  std::uint64_t seed = 0;     // slot draw for non-uniform mode

  static SamplingPlan uniform(int views, double camera_rate);
  // Each camera fires once per window of x slots spaced phase_step apart.
  static SamplingPlan non_uniform(int views, int window, double phase_step, std::uint64_t seed);

  // Same plan with every slot spacing multiplied by `factor`.
  SamplingPlan with_interval_factor(double factor) const;

  // Throws kBadPlan.
  void validate() const;
};

struct PlannedSample {
  int view = 0;
  int frame = 0;         // slot index, 1-based
  double timestamp = 0;  // seconds, (frame - 1) * phase_step
};

// Samples with timestamp < duration, in timestamp order.
std::vector<PlannedSample> generate_plan_times(const SamplingPlan& plan, double duration);

struct WindowSlot {
  int view = 0;
  int frame = 0;
};

struct CacheStats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;  // fresh computations
  std::uint64_t evictions = 0;
};

// Sliding-window state machine. The window keeps the latest frame of each
// view in arrival (FIFO) order; heatmaps live in a cache keyed by
// (frame, view) and evicted oldest-frame-first. Entries in the current
// window are never evicted.
class WindowState {
 public:
  explicit WindowState(int views, std::size_t capacity = 0);  // 0 -> 4 * views

  // Applies one arrival. Returns the complete window (one heatmap per view,
  // oldest arrival first) once every view has reported, otherwise nothing.
  std::optional<std::vector<Heatmap>> slide(const Heatmap& arrival);

  int views() const { return views_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t cache_size() const { return cache_.size(); }
  const CacheStats& stats() const { return stats_; }
  // Hits recorded by the most recent slide.
  std::uint64_t last_hits() const { return last_hits_; }
  int emitted_through() const { return emitted_through_; }
  const std::deque<WindowSlot>& window() const { return window_; }
  bool cached(int view, int frame) const { return cache_.count({frame, view}) != 0; }

 private:
  int views_;
  std::size_t capacity_;
  std::deque<WindowSlot> window_;
  std::map<std::pair<int, int>, Heatmap> cache_;  // (frame, view)
  std::vector<int> last_frame_;                   // per view, 0 before its first arrival
  CacheStats stats_;
  std::uint64_t last_hits_ = 0;
  int emitted_through_ = 0;
};

struct ScheduleRow {
  int view = 0;
  int frame = 0;
  double timestamp = 0.0;
  std::uint64_t cache_hit_count = 0;
};

// CSV with header: view,frame,timestamp_s,cache_hit_count
void write_schedule_csv(std::ostream& out, const std::vector<ScheduleRow>& rows);
void write_schedule_csv_file(const std::filesystem::path& path, const std::vector<ScheduleRow>& rows);

}  // namespace densewarp
