#include "densewarp/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "binary_io.hpp"

namespace densewarp {

Heatmap::Heatmap(int view, int frame, int joints, int height, int width)
    : Heatmap(view, frame, joints, height, width,
              std::vector<double>(static_cast<std::size_t>(std::max(joints, 0)) *
                                  static_cast<std::size_t>(std::max(height, 0)) *
                                  static_cast<std::size_t>(std::max(width, 0)))) {}

Heatmap::Heatmap(int view, int frame, int joints, int height, int width, std::vector<double> values)
    : view_(view), frame_(frame), joints_(joints), height_(height), width_(width) {
  if (joints < 1 || height < 1 || width < 1) {
    throw Error(ErrorCode::kBadDimensions, "heatmap needs J, H, W >= 1");
  }
  if (values.size() != size()) {
    throw Error(ErrorCode::kShapeMismatch, "heatmap value count does not match J*H*W");
  }
  data_ = std::make_shared<std::vector<double>>(std::move(values));
}

std::span<const double> Heatmap::values() const {
  if (!data_) return {};
  return {data_->data(), data_->size()};
}

std::span<const double> Heatmap::channel(int joint) const {
  return values().subspan(static_cast<std::size_t>(joint) * plane_size(), plane_size());
}

void Heatmap::detach() {
  if (data_ && data_.use_count() > 1) {
    data_ = std::make_shared<std::vector<double>>(*data_);
  }
}

std::span<double> Heatmap::mutable_values() {
  detach();
  if (!data_) return {};
  return {data_->data(), data_->size()};
}

std::span<double> Heatmap::mutable_channel(int joint) {
  return mutable_values().subspan(static_cast<std::size_t>(joint) * plane_size(), plane_size());
}

Heatmap Heatmap::relabeled(int view, int frame) const {
  Heatmap out = *this;
  out.view_ = view;
  out.frame_ = frame;
  return out;
}

Heatmap Heatmap::quantized() const {
  Heatmap out = *this;
  for (double& v : out.mutable_values()) v = static_cast<double>(static_cast<float>(v));
  return out;
}

bool Heatmap::values_equal(const Heatmap& other) const {
  if (!same_shape(other)) return false;
  const auto a = values();
  const auto b = other.values();
  return std::equal(a.begin(), a.end(), b.begin(), b.end(), [](double x, double y) {
    return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
  });
}

Heatmap render_gaussian(std::span<const Keypoint2D> keypoints, int width, int height, double sigma, int view,
                        int frame) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw Error(ErrorCode::kBadDimensions, "sigma must be positive");
  }
  if (keypoints.empty()) {
    throw Error(ErrorCode::kBadDimensions, "at least one keypoint is required");
  }
  if (width < 3.0 * sigma || height < 3.0 * sigma) {
    throw Error(ErrorCode::kBadDimensions, "grid smaller than 3 sigma");
  }
  const int joints = static_cast<int>(keypoints.size());
  Heatmap h(view, frame, joints, height, width);
  auto values = h.mutable_values();
  const double inv = 1.0 / (2.0 * sigma * sigma);
  std::vector<bool> seen(keypoints.size(), false);
  for (const Keypoint2D& kp : keypoints) {
    if (kp.joint < 0 || kp.joint >= joints || seen[static_cast<std::size_t>(kp.joint)]) {
      throw Error(ErrorCode::kBadDimensions, "keypoint joint indices must be a permutation of 0..J-1");
    }
    seen[static_cast<std::size_t>(kp.joint)] = true;
    if (!(kp.confidence > 0.0)) continue;
    if (!kp.position.allFinite()) throw Error(ErrorCode::kNonFinite, "keypoint position is not finite");
    double* plane = values.data() + static_cast<std::size_t>(kp.joint) * h.plane_size();
    for (int r = 0; r < height; ++r) {
      const double dv = r - kp.position.y();
      for (int c = 0; c < width; ++c) {
        const double du = c - kp.position.x();
        const double v = std::exp(-(du * du + dv * dv) * inv);
        plane[static_cast<std::size_t>(r) * static_cast<std::size_t>(width) + static_cast<std::size_t>(c)] =
            v < 1e-8 ? 0.0 : v;
      }
    }
  }
  return h;
}

namespace {

// Vertex offset of the Gaussian through three samples spaced one pixel apart,
// i.e. a parabola fitted to the logarithms. Falls back to a baseline-removed
// centroid when a sample is not strictly positive.
double refine_axis(double left, double centre, double right) {
  constexpr double kTiny = 1e-300;
  double offset = 0.0;
  if (left > kTiny && centre > kTiny && right > kTiny) {
    const double ll = std::log(left);
    const double lc = std::log(centre);
    const double lr = std::log(right);
    const double curvature = ll - 2.0 * lc + lr;
    if (curvature < 0.0) offset = 0.5 * (ll - lr) / curvature;
  } else {
    const double base = std::min({left, centre, right});
    const double wl = left - base;
    const double wc = centre - base;
    const double wr = right - base;
    const double total = wl + wc + wr;
    if (total > 0.0) offset = (wr - wl) / total;
  }
  return std::clamp(offset, -0.5, 0.5);
}

}  // namespace

Keypoint2D decode_peak(const Heatmap& h, int joint) {
  if (joint < 0 || joint >= h.joints()) {
    throw Error(ErrorCode::kBadDimensions, "joint index out of range");
  }
  const auto plane = h.channel(joint);
  std::size_t best = 0;
  for (std::size_t i = 1; i < plane.size(); ++i) {
    if (plane[i] > plane[best]) best = i;
  }
  const double peak = plane[best];
  if (!(peak > 1e-12)) {
    throw Error(ErrorCode::kEmptyChannel, "joint " + std::to_string(joint) + " has no response");
  }
  const int w = h.width();
  const int row = static_cast<int>(best / static_cast<std::size_t>(w));
  const int col = static_cast<int>(best % static_cast<std::size_t>(w));
  double du = 0.0;
  double dv = 0.0;
  if (col > 0 && col + 1 < w) du = refine_axis(h.at(joint, row, col - 1), peak, h.at(joint, row, col + 1));
  if (row > 0 && row + 1 < h.height()) dv = refine_axis(h.at(joint, row - 1, col), peak, h.at(joint, row + 1, col));
  return {joint, Vec2(col + du, row + dv), std::min(peak, 1.0)};
}

ReplicatedGrid::ReplicatedGrid(std::vector<int> frames, std::vector<ReplicatedEntry> entries)
    : frames_(std::move(frames)), entries_(std::move(entries)) {
  if (entries_.size() != frames_.size() * frames_.size()) {
    throw Error(ErrorCode::kGroupShapeMismatch, "replicated grid must be M x M");
  }
}

int ReplicatedGrid::column_of(int frame) const {
  const auto it = std::find(frames_.begin(), frames_.end(), frame);
  if (it == frames_.end()) throw Error(ErrorCode::kGroupShapeMismatch, "frame not in grid");
  return static_cast<int>(it - frames_.begin());
}

int ReplicatedGrid::anchor_column(int view) const {
  for (int c = 0; c < views(); ++c) {
    if (at(view, c).anchor) return c;
  }
  throw Error(ErrorCode::kGroupShapeMismatch, "view has no anchor");
}

ReplicatedGrid replicate_window(std::span<const Heatmap> window) {
  const int m = static_cast<int>(window.size());
  if (m < 2) throw Error(ErrorCode::kGroupShapeMismatch, "a window needs at least two views");
  std::vector<const Heatmap*> by_view(window.size(), nullptr);
  for (const Heatmap& h : window) {
    if (h.view() < 0 || h.view() >= m || by_view[static_cast<std::size_t>(h.view())] != nullptr) {
      throw Error(ErrorCode::kGroupShapeMismatch, "window must hold exactly one heatmap per view");
    }
    if (!h.same_shape(window.front())) throw Error(ErrorCode::kGroupShapeMismatch, "heatmap shapes differ");
    by_view[static_cast<std::size_t>(h.view())] = &h;
  }
  std::vector<int> frames;
  for (const Heatmap& h : window) frames.push_back(h.frame());
  std::sort(frames.begin(), frames.end());
  if (std::adjacent_find(frames.begin(), frames.end()) != frames.end()) {
    throw Error(ErrorCode::kGroupShapeMismatch, "two views share a frame");
  }
  std::vector<ReplicatedEntry> entries;
  entries.reserve(window.size() * window.size());
  for (const Heatmap* h : by_view) {
    for (int frame : frames) entries.push_back({h->relabeled(h->view(), frame), frame == h->frame()});
  }
  return {std::move(frames), std::move(entries)};
}

ReplicatedGrid replicate_group(std::span<const Heatmap> group) {
  const int m = static_cast<int>(group.size());
  if (m < 2) throw Error(ErrorCode::kGroupShapeMismatch, "a group needs at least two views");
  const int first = group.front().frame();
  if (first < 1 || (first - 1) % m != 0) {
    throw Error(ErrorCode::kGroupShapeMismatch, "group must start at frame M*(i-1)+1");
  }
  for (int k = 0; k < m; ++k) {
    if (group[static_cast<std::size_t>(k)].view() != k || group[static_cast<std::size_t>(k)].frame() != first + k) {
      throw Error(ErrorCode::kGroupShapeMismatch, "entry " + std::to_string(k) + " must be view " +
                                                      std::to_string(k) + " at frame " + std::to_string(first + k));
    }
  }
  return replicate_window(group);
}

void write_heatmap(std::ostream& out, const Heatmap& h) {
  detail::put_magic(out, "DWHM");
  detail::put_u32(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(h.view()));
  detail::put_u32(out, static_cast<std::uint32_t>(h.frame()));
  detail::put_u32(out, static_cast<std::uint32_t>(h.joints()));
  detail::put_u32(out, static_cast<std::uint32_t>(h.height()));
  detail::put_u32(out, static_cast<std::uint32_t>(h.width()));
  for (double v : h.values()) detail::put_f32(out, static_cast<float>(v));
  if (!out) throw Error(ErrorCode::kIo, "failed writing heatmap");
}

Heatmap read_heatmap(std::istream& in) {
  detail::expect_magic(in, "DWHM");
  const std::uint32_t version = detail::get_u32(in);
  if (version != 1) throw Error(ErrorCode::kFormat, "unsupported heatmap version " + std::to_string(version));
  const auto view = static_cast<int>(detail::get_u32(in));
  const auto frame = static_cast<int>(detail::get_u32(in));
  const std::uint32_t joints = detail::get_u32(in);
  const std::uint32_t height = detail::get_u32(in);
  const std::uint32_t width = detail::get_u32(in);
  constexpr std::uint64_t kMaxValues = 1ull << 28;
  const std::uint64_t count = std::uint64_t{joints} * height * width;
  if (count == 0 || count > kMaxValues) throw Error(ErrorCode::kFormat, "implausible heatmap dimensions");
  std::vector<double> values(static_cast<std::size_t>(count));
  for (double& v : values) {
    v = detail::get_f32(in);
    if (!std::isfinite(v) || v < 0.0) throw Error(ErrorCode::kFormat, "heatmap value is negative or non-finite");
  }
  return {view, frame, static_cast<int>(joints), static_cast<int>(height), static_cast<int>(width),
          std::move(values)};
}

void write_heatmap_file(const std::filesystem::path& path, const Heatmap& h) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  write_heatmap(out, h);
}

Heatmap read_heatmap_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return read_heatmap(in);
}

}  // namespace densewarp
