#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <vector>

#include "densewarp/heatmap.hpp"

namespace densewarp {

// Dense C x H x W array of doubles; unlike Heatmap it may hold negative values.
struct Tensor3 {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;

  Tensor3() = default;
  Tensor3(int c, int h, int w) : channels(c), height(h), width(w), values(static_cast<std::size_t>(c) * h * w) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
  double& at(int c, int y, int x) { return values[static_cast<std::size_t>(c) * plane() + static_cast<std::size_t>(y) * width + x]; }
  double at(int c, int y, int x) const {
    return values[static_cast<std::size_t>(c) * plane() + static_cast<std::size_t>(y) * width + x];
  }
  bool same_shape(const Tensor3& o) const { return channels == o.channels && height == o.height && width == o.width; }
};

Tensor3 to_tensor(const Heatmap& h);

// 3x3 (or 1x1) convolution with "same" zero padding.
struct Conv2d {
  int in = 0;
  int out = 0;
  int kernel = 3;
  int dilation = 1;
  std::vector<double> weight;  // out x in x kernel x kernel
  std::vector<double> bias;    // out

  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel_size, int dilation_rate);
  std::size_t fan_in() const { return static_cast<std::size_t>(in) * kernel * kernel; }
};

struct ResidualBlock {
  Conv2d first;
  Conv2d second;
};

// Parameters of one temporal-mode warper. File order (and visiting order of
// for_each_tensor): stem, residual blocks in order (first then second conv,
// weight then bias), offset heads by ascending dilation, output head.
struct WarperWeights {
  static constexpr int kResidualBlocks = 3;
  static constexpr std::array<int, 5> kDilations{3, 6, 12, 18, 24};

  int temporal_mode = 1;
  int channels = 16;
  int joints = 1;
  Conv2d stem;  // J -> C, followed by a rectifier
  std::array<ResidualBlock, kResidualBlocks> residual_blocks;
  std::array<Conv2d, 5> offset_heads;  // C -> 2 (dx, dy)
  Conv2d output_head;                  // 1x1, J -> J

  // Trunk kernels ~ U(-a, a) with variance 2/fan_in, zero biases, zero offset
  // heads, output head = identity / 5. The result is a near-identity warper.
  static WarperWeights initialize(int temporal_mode, int joints, int channels, std::uint64_t seed);
  // Same architecture with every parameter zero.
  static WarperWeights zeros_like(const WarperWeights& shape);

  void validate() const;
  std::size_t parameter_count() const;
  bool bitwise_equal(const WarperWeights& other) const;

  template <typename F>
  void for_each_tensor(F&& f) {
    visit_convs([&](Conv2d& c) {
      f(c.weight);
      f(c.bias);
    });
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    const_cast<WarperWeights*>(this)->visit_convs([&](Conv2d& c) {
      f(static_cast<const std::vector<double>&>(c.weight));
      f(static_cast<const std::vector<double>&>(c.bias));
    });
  }

 private:
  template <typename F>
  void visit_convs(F&& f) {
    f(stem);
    for (auto& b : residual_blocks) {
      f(b.first);
      f(b.second);
    }
    for (auto& h : offset_heads) f(h);
    f(output_head);
  }
};

struct WarpInput {
  Heatmap corrected;  // spatially fused heatmap at the target frame
  Heatmap anchor;     // the view's own observed heatmap
  int relative_offset = 1;
};

// corrected - anchor, element-wise.
Tensor3 difference_map(const WarpInput& inp);

// out(c, x) = bilinear(base(c), x + offsets(x)), zero outside the grid.
// offsets channel 0 is dx (columns), channel 1 is dy (rows).
Tensor3 deformable_warp(const Tensor3& base, const Tensor3& offsets);

Heatmap warper_forward(const WarperWeights& weights, const WarpInput& inp);

// Per-head offset fields for inspection (five 2 x H x W tensors).
std::array<Tensor3, 5> warper_offsets(const WarperWeights& weights, const WarpInput& inp);

struct WarperSample {
  WarpInput input;
  Heatmap target;
};

// Mean squared error of the forward output against the target, and its
// gradient with respect to every parameter (accumulated into `grads` when
// non-null, scaled by `scale`).
double warper_loss(const WarperWeights& weights, const WarperSample& sample, WarperWeights* grads = nullptr,
                   double scale = 1.0);

enum class Optimizer { kSgd, kAdam };

struct TrainHyper {
  Optimizer optimizer = Optimizer::kSgd;
  double learning_rate = 0.05;
  int epochs = 50;
  int batch = 8;
  double momentum = 0.9;  // Adam: first-moment decay
  std::uint64_t seed = 1;
  int channels = 16;
};

struct TrainResult {
  WarperWeights weights;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> epoch_loss;  // full-dataset loss after each epoch
};

// Mini-batch SGD with momentum, or Adam (second-moment decay 0.999), on the
// mean squared error. Returns the weights
// with the lowest full-dataset loss seen (never worse than the initial ones).
TrainResult warper_train(const std::vector<WarperSample>& dataset, int mode, const TrainHyper& hyper);
// Continues from given weights instead of a fresh initialization.
TrainResult warper_train(const std::vector<WarperSample>& dataset, const WarperWeights& start, const TrainHyper& hyper);

double dataset_loss(const WarperWeights& weights, const std::vector<WarperSample>& dataset);

// "DWWT" file: magic, u32 version=1, u32 mode (two's complement), u32 C, u32 J,
// then every parameter as little-endian f32 in for_each_tensor order.
void write_weights(std::ostream& out, const WarperWeights& w);
WarperWeights read_weights(std::istream& in);
void write_weights_file(const std::filesystem::path& path, const WarperWeights& w);
WarperWeights read_weights_file(const std::filesystem::path& path);

// One set of weights per signed temporal mode.
using WarperBank = std::map<int, WarperWeights>;

}  // namespace densewarp
