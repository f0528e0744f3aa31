#include "densewarp/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <random>

#include "densewarp/error.hpp"

namespace densewarp {

std::vector<InterleavedGroup> build_groups(int total_frames, int views) {
  if (views < 2 || total_frames < views) {
    throw Error(ErrorCode::kTooFewFrames, "need N >= M >= 2, got N=" + std::to_string(total_frames) +
                                              " M=" + std::to_string(views));
  }
  std::vector<InterleavedGroup> groups;
  const int count = total_frames / views;
  groups.reserve(static_cast<std::size_t>(count));
  for (int i = 1; i <= count; ++i) {
    InterleavedGroup g;
    g.index = i;
    for (int j = 0; j < views; ++j) g.entries.push_back({j, views * (i - 1) + j + 1});
    groups.push_back(std::move(g));
  }
  return groups;
}

SamplingPlan SamplingPlan::uniform(int views, double camera_rate) {
  SamplingPlan p;
  p.views = views;
  p.camera_rate = camera_rate;
  p.phase_step = 1.0 / (views * camera_rate);
  p.mode = SamplingMode::kUniform;
  p.window = views;
  p.validate();
  return p;
}

SamplingPlan SamplingPlan::non_uniform(int views, int window, double phase_step, std::uint64_t seed) {
  SamplingPlan p;
  p.views = views;
  p.window = window;
  p.phase_step = phase_step;
  p.camera_rate = 1.0 / (window * phase_step);
  p.mode = SamplingMode::kNonUniform;
  p.seed = seed;
  p.validate();
  return p;
}

SamplingPlan SamplingPlan::with_interval_factor(double factor) const {
  if (!(factor > 0.0) || !std::isfinite(factor)) {
    throw Error(ErrorCode::kBadPlan, "interval factor must be positive");
  }
  SamplingPlan p = *this;
  p.phase_step *= factor;
  p.camera_rate /= factor;
  p.validate();
  return p;
}

void SamplingPlan::validate() const {
  if (views < 2) throw Error(ErrorCode::kBadPlan, "views must be >= 2");
  if (!(camera_rate > 0.0) || !std::isfinite(camera_rate)) {
    throw Error(ErrorCode::kBadPlan, "camera_rate must be positive");
  }
  if (!(phase_step > 0.0) || !std::isfinite(phase_step)) {
    throw Error(ErrorCode::kBadPlan, "phase_step must be positive");
  }
  if (mode == SamplingMode::kUniform) {
    if (window != views) throw Error(ErrorCode::kBadPlan, "uniform plan needs window == views");
    const double expected = 1.0 / (views * camera_rate);
    if (std::abs(phase_step - expected) > 1e-9 * expected) {
      throw Error(ErrorCode::kBadPlan, "uniform plan needs phase_step == 1 / (views * camera_rate)");
    }
  } else if (window <= views) {
    throw Error(ErrorCode::kBadPlan, "non-uniform window must exceed views");
  }
}

namespace {

// Slots (0-based, within one window) drawn without replacement, ascending.
std::vector<int> draw_slots(std::mt19937_64& rng, int window, int count) {
  std::vector<int> slots(static_cast<std::size_t>(window));
  for (int i = 0; i < window; ++i) slots[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < count; ++i) {
    const auto span = static_cast<std::uint64_t>(window - i);
    const auto pick = static_cast<std::size_t>(i) + static_cast<std::size_t>(rng() % span);
    std::swap(slots[static_cast<std::size_t>(i)], slots[pick]);
  }
  slots.resize(static_cast<std::size_t>(count));
  std::sort(slots.begin(), slots.end());
  return slots;
}

}  // namespace

std::vector<PlannedSample> generate_plan_times(const SamplingPlan& plan, double duration) {
  plan.validate();
  if (!(duration > 0.0) || !std::isfinite(duration)) throw Error(ErrorCode::kBadPlan, "duration must be positive");
  std::vector<PlannedSample> out;
  const auto slot_time = [&](int frame) { return (frame - 1) * plan.phase_step; };
  if (plan.mode == SamplingMode::kUniform) {
    for (int frame = 1; slot_time(frame) < duration; ++frame) {
      out.push_back({(frame - 1) % plan.views, frame, slot_time(frame)});
    }
    return out;
  }
  std::mt19937_64 rng(plan.seed);
  for (int w = 0;; ++w) {
    const int first = w * plan.window + 1;
    if (slot_time(first) >= duration) break;
    const std::vector<int> slots = draw_slots(rng, plan.window, plan.views);
    for (int j = 0; j < plan.views; ++j) {
      const int frame = first + slots[static_cast<std::size_t>(j)];
      if (slot_time(frame) < duration) out.push_back({j, frame, slot_time(frame)});
    }
  }
  return out;
}

WindowState::WindowState(int views, std::size_t capacity)
    : views_(views), capacity_(capacity == 0 ? 4 * static_cast<std::size_t>(views) : capacity) {
  if (views < 2) throw Error(ErrorCode::kBadPlan, "window needs at least 2 views");
  if (capacity_ < static_cast<std::size_t>(views)) {
    throw Error(ErrorCode::kBadConfig, "cache capacity must be at least the number of views");
  }
  last_frame_.assign(static_cast<std::size_t>(views), 0);
}

std::optional<std::vector<Heatmap>> WindowState::slide(const Heatmap& arrival) {
  const int view = arrival.view();
  const int frame = arrival.frame();
  if (view < 0 || view >= views_) {
    throw Error(ErrorCode::kRigMismatch, "arrival from unknown view " + std::to_string(view));
  }
  const int previous = last_frame_[static_cast<std::size_t>(view)];
  if (frame <= previous) {
    throw Error(ErrorCode::kOutOfOrderArrival, "view " + std::to_string(view) + " frame " + std::to_string(frame) +
                                                   " after frame " + std::to_string(previous));
  }
  if (!cache_.empty() && !cache_.begin()->second.same_shape(arrival)) {
    throw Error(ErrorCode::kGroupShapeMismatch, "arrival shape differs from cached heatmaps");
  }

  const auto old = std::find_if(window_.begin(), window_.end(), [&](const WindowSlot& s) { return s.view == view; });
  if (old != window_.end()) window_.erase(old);
  window_.push_back({view, frame});
  last_frame_[static_cast<std::size_t>(view)] = frame;
  cache_[{frame, view}] = arrival;
  ++stats_.misses;

  while (cache_.size() > capacity_) {
    // Oldest frame first, skipping entries the window still uses.
    auto victim = cache_.begin();
    while (victim != cache_.end()) {
      const auto [f, v] = victim->first;
      const bool pinned =
          std::any_of(window_.begin(), window_.end(), [&](const WindowSlot& s) { return s.view == v && s.frame == f; });
      if (!pinned) break;
      ++victim;
    }
    cache_.erase(victim);
    ++stats_.evictions;
  }

  last_hits_ = 0;
  if (window_.size() < static_cast<std::size_t>(views_)) return std::nullopt;

  std::vector<Heatmap> out;
  out.reserve(window_.size());
  for (const WindowSlot& s : window_) out.push_back(cache_.at({s.frame, s.view}));
  last_hits_ = static_cast<std::uint64_t>(views_ - 1);
  stats_.hits += last_hits_;
  emitted_through_ = std::max(emitted_through_, frame);
  return out;
}

void write_schedule_csv(std::ostream& out, const std::vector<ScheduleRow>& rows) {
  out << "view,frame,timestamp_s,cache_hit_count\n";
  char buf[64];
  for (const ScheduleRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%.9f", r.timestamp);
    out << r.view << ',' << r.frame << ',' << buf << ',' << r.cache_hit_count << '\n';
  }
}

void write_schedule_csv_file(const std::filesystem::path& path, const std::vector<ScheduleRow>& rows) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  write_schedule_csv(f, rows);
  if (!f) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace densewarp
