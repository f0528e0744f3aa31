#include "densewarp/warper.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "binary_io.hpp"
#include "densewarp/parallel.hpp"

namespace densewarp {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

constexpr std::uint32_t kWeightsVersion = 1;

// Row (ci, ky, kx) of the column matrix is the input plane ci shifted by the tap offset.
void im2col(const Tensor3& in, int kernel, int dilation, RowMat& col) {
  const int h = in.height;
  const int w = in.width;
  const int half = kernel / 2;
  col.setZero(static_cast<Eigen::Index>(in.channels) * kernel * kernel, static_cast<Eigen::Index>(in.plane()));
  Eigen::Index row = 0;
  for (int ci = 0; ci < in.channels; ++ci) {
    for (int ky = 0; ky < kernel; ++ky) {
      const int dy = (ky - half) * dilation;
      for (int kx = 0; kx < kernel; ++kx, ++row) {
        const int dx = (kx - half) * dilation;
        double* dst = col.row(row).data();
        const int y0 = std::max(0, -dy);
        const int y1 = std::min(h, h - dy);
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = y0; y < y1; ++y) {
          for (int x = x0; x < x1; ++x) dst[y * w + x] = in.at(ci, y + dy, x + dx);
        }
      }
    }
  }
}

void col2im(const RowMat& col, int kernel, int dilation, Tensor3& grad_in) {
  const int h = grad_in.height;
  const int w = grad_in.width;
  const int half = kernel / 2;
  Eigen::Index row = 0;
  for (int ci = 0; ci < grad_in.channels; ++ci) {
    for (int ky = 0; ky < kernel; ++ky) {
      const int dy = (ky - half) * dilation;
      for (int kx = 0; kx < kernel; ++kx, ++row) {
        const int dx = (kx - half) * dilation;
        const double* src = col.row(row).data();
        const int y0 = std::max(0, -dy);
        const int y1 = std::min(h, h - dy);
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = y0; y < y1; ++y) {
          for (int x = x0; x < x1; ++x) grad_in.at(ci, y + dy, x + dx) += src[y * w + x];
        }
      }
    }
  }
}

Tensor3 conv_forward(const Conv2d& conv, const Tensor3& in, RowMat& col) {
  im2col(in, conv.kernel, conv.dilation, col);
  Tensor3 out(conv.out, in.height, in.width);
  ConstRowMap wmat(conv.weight.data(), conv.out, static_cast<Eigen::Index>(conv.fan_in()));
  RowMap omat(out.values.data(), conv.out, static_cast<Eigen::Index>(in.plane()));
  omat.noalias() = wmat * col;
  for (int o = 0; o < conv.out; ++o) omat.row(o).array() += conv.bias[static_cast<std::size_t>(o)];
  return out;
}

// Accumulates parameter gradients into `g` and, when grad_in is non-null, the
// input gradient into *grad_in.
void conv_backward(const Conv2d& conv, const RowMat& col, const Tensor3& grad_out, Conv2d& g, Tensor3* grad_in) {
  const auto hw = static_cast<Eigen::Index>(grad_out.plane());
  ConstRowMap gout(grad_out.values.data(), conv.out, hw);
  RowMap gw(g.weight.data(), conv.out, static_cast<Eigen::Index>(conv.fan_in()));
  gw.noalias() += gout * col.transpose();
  // Plain loop: a vectorized reduction over unaligned storage would make the
  // summation order depend on the buffer address.
  for (int o = 0; o < conv.out; ++o) {
    const double* row = grad_out.values.data() + static_cast<std::size_t>(o) * grad_out.plane();
    double total = 0.0;
    for (Eigen::Index i = 0; i < hw; ++i) total += row[i];
    g.bias[static_cast<std::size_t>(o)] += total;
  }
  if (grad_in != nullptr) {
    ConstRowMap wmat(conv.weight.data(), conv.out, static_cast<Eigen::Index>(conv.fan_in()));
    RowMat gcol = wmat.transpose() * gout;
    col2im(gcol, conv.kernel, conv.dilation, *grad_in);
  }
}

void relu_inplace(Tensor3& t) {
  for (double& v : t.values) v = v > 0.0 ? v : 0.0;
}

struct Bilinear {
  int x0, y0;
  double fx, fy;
};

// Coordinates are clamped a few pixels outside the grid before the integer
// conversion; every tap out there reads zero either way.
Bilinear bilinear_at(double sx, double sy, int width, int height) {
  const double fx0 = std::floor(std::clamp(sx, -4.0, width + 4.0));
  const double fy0 = std::floor(std::clamp(sy, -4.0, height + 4.0));
  return {static_cast<int>(fx0), static_cast<int>(fy0), std::clamp(sx - fx0, 0.0, 1.0), std::clamp(sy - fy0, 0.0, 1.0)};
}

double sample_or_zero(const Tensor3& t, int c, int y, int x) {
  if (y < 0 || y >= t.height || x < 0 || x >= t.width) return 0.0;
  return t.at(c, y, x);
}

void check_offsets(const Tensor3& base, const Tensor3& offsets) {
  if (offsets.channels != 2 || offsets.height != base.height || offsets.width != base.width) {
    throw Error(ErrorCode::kShapeMismatch, "offset field must be 2 x H x W matching the base grid");
  }
}

// Gradient of sum_c grad_out(c) * warp(base, offsets)(c) with respect to the offsets.
Tensor3 warp_offset_gradient(const Tensor3& base, const Tensor3& offsets, const Tensor3& grad_out) {
  Tensor3 g(2, base.height, base.width);
  for (int y = 0; y < base.height; ++y) {
    for (int x = 0; x < base.width; ++x) {
      const Bilinear b = bilinear_at(x + offsets.at(0, y, x), y + offsets.at(1, y, x), base.width, base.height);
      double gx = 0.0;
      double gy = 0.0;
      for (int c = 0; c < base.channels; ++c) {
        const double go = grad_out.at(c, y, x);
        if (go == 0.0) continue;
        const double v00 = sample_or_zero(base, c, b.y0, b.x0);
        const double v01 = sample_or_zero(base, c, b.y0, b.x0 + 1);
        const double v10 = sample_or_zero(base, c, b.y0 + 1, b.x0);
        const double v11 = sample_or_zero(base, c, b.y0 + 1, b.x0 + 1);
        gx += go * ((1.0 - b.fy) * (v01 - v00) + b.fy * (v11 - v10));
        gy += go * ((1.0 - b.fx) * (v10 - v00) + b.fx * (v11 - v01));
      }
      g.at(0, y, x) = gx;
      g.at(1, y, x) = gy;
    }
  }
  return g;
}

struct BlockCache {
  RowMat col_first;
  Tensor3 hidden;  // after the rectifier
  RowMat col_second;
};

struct ForwardCache {
  Tensor3 anchor;
  RowMat stem_col;
  Tensor3 stem_out;  // after the rectifier
  std::array<BlockCache, WarperWeights::kResidualBlocks> blocks;
  Tensor3 trunk;
  std::array<RowMat, 5> head_cols;
  std::array<Tensor3, 5> offsets;
  Tensor3 summed;
  RowMat output_col;
  Tensor3 pre_clamp;
  Tensor3 output;
};

void check_input(const WarperWeights& w, const WarpInput& inp) {
  if (inp.relative_offset != w.temporal_mode) {
    throw Error(ErrorCode::kModeMismatch, "warper trained for mode " + std::to_string(w.temporal_mode) +
                                              " applied to offset " + std::to_string(inp.relative_offset));
  }
  if (inp.relative_offset == 0) throw Error(ErrorCode::kModeMismatch, "relative offset must be non-zero");
  if (inp.corrected.empty() || !inp.corrected.same_shape(inp.anchor)) {
    throw Error(ErrorCode::kShapeMismatch, "corrected and anchor heatmaps differ in shape");
  }
  if (inp.corrected.joints() != w.joints) {
    throw Error(ErrorCode::kShapeMismatch, "warper expects " + std::to_string(w.joints) + " joints, input has " +
                                               std::to_string(inp.corrected.joints()));
  }
}

ForwardCache run_forward(const WarperWeights& w, const WarpInput& inp) {
  check_input(w, inp);
  ForwardCache fc;
  fc.anchor = to_tensor(inp.anchor);
  const Tensor3 diff = difference_map(inp);

  fc.stem_out = conv_forward(w.stem, diff, fc.stem_col);
  relu_inplace(fc.stem_out);
  Tensor3 x = fc.stem_out;
  for (int b = 0; b < WarperWeights::kResidualBlocks; ++b) {
    const ResidualBlock& block = w.residual_blocks[static_cast<std::size_t>(b)];
    BlockCache& bc = fc.blocks[static_cast<std::size_t>(b)];
    bc.hidden = conv_forward(block.first, x, bc.col_first);
    relu_inplace(bc.hidden);
    const Tensor3 branch = conv_forward(block.second, bc.hidden, bc.col_second);
    for (std::size_t i = 0; i < x.values.size(); ++i) x.values[i] += branch.values[i];
  }
  fc.trunk = std::move(x);

  fc.summed = Tensor3(w.joints, fc.anchor.height, fc.anchor.width);
  for (std::size_t k = 0; k < fc.offsets.size(); ++k) {
    fc.offsets[k] = conv_forward(w.offset_heads[k], fc.trunk, fc.head_cols[k]);
    const Tensor3 warped = deformable_warp(fc.anchor, fc.offsets[k]);
    for (std::size_t i = 0; i < warped.values.size(); ++i) fc.summed.values[i] += warped.values[i];
  }
  fc.pre_clamp = conv_forward(w.output_head, fc.summed, fc.output_col);
  fc.output = fc.pre_clamp;
  for (double& v : fc.output.values) v = std::clamp(v, 0.0, 1.0);
  return fc;
}

void run_backward(const WarperWeights& w, const ForwardCache& fc, Tensor3 grad, WarperWeights& g) {
  // Clamp: pass the gradient where the value was inside [0, 1].
  for (std::size_t i = 0; i < grad.values.size(); ++i) {
    const double z = fc.pre_clamp.values[i];
    if (z < 0.0 || z > 1.0) grad.values[i] = 0.0;
  }
  Tensor3 grad_summed(fc.summed.channels, fc.summed.height, fc.summed.width);
  conv_backward(w.output_head, fc.output_col, grad, g.output_head, &grad_summed);

  Tensor3 grad_trunk(fc.trunk.channels, fc.trunk.height, fc.trunk.width);
  for (std::size_t k = 0; k < fc.offsets.size(); ++k) {
    const Tensor3 grad_offsets = warp_offset_gradient(fc.anchor, fc.offsets[k], grad_summed);
    conv_backward(w.offset_heads[k], fc.head_cols[k], grad_offsets, g.offset_heads[k], &grad_trunk);
  }

  Tensor3 gx = std::move(grad_trunk);
  for (int b = WarperWeights::kResidualBlocks - 1; b >= 0; --b) {
    const ResidualBlock& block = w.residual_blocks[static_cast<std::size_t>(b)];
    ResidualBlock& gblock = g.residual_blocks[static_cast<std::size_t>(b)];
    const BlockCache& bc = fc.blocks[static_cast<std::size_t>(b)];
    Tensor3 grad_hidden(bc.hidden.channels, bc.hidden.height, bc.hidden.width);
    conv_backward(block.second, bc.col_second, gx, gblock.second, &grad_hidden);
    for (std::size_t i = 0; i < grad_hidden.values.size(); ++i) {
      if (bc.hidden.values[i] <= 0.0) grad_hidden.values[i] = 0.0;
    }
    conv_backward(block.first, bc.col_first, grad_hidden, gblock.first, &gx);
  }
  for (std::size_t i = 0; i < gx.values.size(); ++i) {
    if (fc.stem_out.values[i] <= 0.0) gx.values[i] = 0.0;
  }
  conv_backward(w.stem, fc.stem_col, gx, g.stem, nullptr);
}

void check_dataset(const std::vector<WarperSample>& dataset, int mode) {
  if (dataset.empty()) throw Error(ErrorCode::kEmptyDataset, "warper training needs at least one sample");
  const Heatmap& ref = dataset.front().input.anchor;
  for (const WarperSample& s : dataset) {
    if (s.input.relative_offset != mode) {
      throw Error(ErrorCode::kModeMismatch, "sample with offset " + std::to_string(s.input.relative_offset) +
                                                " in dataset for mode " + std::to_string(mode));
    }
    if (!s.input.anchor.same_shape(ref) || !s.input.corrected.same_shape(ref) || !s.target.same_shape(ref)) {
      throw Error(ErrorCode::kShapeMismatch, "training samples differ in shape");
    }
  }
}

}  // namespace

Tensor3 to_tensor(const Heatmap& h) {
  Tensor3 t(h.joints(), h.height(), h.width());
  const auto v = h.values();
  std::copy(v.begin(), v.end(), t.values.begin());
  return t;
}

Conv2d::Conv2d(int in_channels, int out_channels, int kernel_size, int dilation_rate)
    : in(in_channels),
      out(out_channels),
      kernel(kernel_size),
      dilation(dilation_rate),
      weight(static_cast<std::size_t>(out_channels) * static_cast<std::size_t>(in_channels) *
             static_cast<std::size_t>(kernel_size) * static_cast<std::size_t>(kernel_size)),
      bias(static_cast<std::size_t>(out_channels)) {}

WarperWeights WarperWeights::initialize(int temporal_mode, int joints, int channels, std::uint64_t seed) {
  if (temporal_mode == 0) throw Error(ErrorCode::kModeMismatch, "temporal mode must be non-zero");
  if (joints < 1 || channels < 1) throw Error(ErrorCode::kBadDimensions, "warper needs J >= 1 and C >= 1");
  WarperWeights w;
  w.temporal_mode = temporal_mode;
  w.channels = channels;
  w.joints = joints;
  w.stem = Conv2d(joints, channels, 3, 1);
  for (auto& b : w.residual_blocks) {
    b.first = Conv2d(channels, channels, 3, 1);
    b.second = Conv2d(channels, channels, 3, 1);
  }
  for (std::size_t k = 0; k < kDilations.size(); ++k) w.offset_heads[k] = Conv2d(channels, 2, 3, kDilations[k]);
  w.output_head = Conv2d(joints, joints, 1, 1);

  std::mt19937_64 rng(seed);
  const auto fill = [&rng](Conv2d& c) {
    const double a = std::sqrt(6.0 / static_cast<double>(c.fan_in()));
    std::uniform_real_distribution<double> dist(-a, a);
    for (double& v : c.weight) v = dist(rng);
  };
  fill(w.stem);
  for (auto& b : w.residual_blocks) {
    fill(b.first);
    fill(b.second);
  }
  for (int j = 0; j < joints; ++j) {
    w.output_head.weight[static_cast<std::size_t>(j) * static_cast<std::size_t>(joints) + static_cast<std::size_t>(j)] =
        1.0 / static_cast<double>(kDilations.size());
  }
  return w;
}

WarperWeights WarperWeights::zeros_like(const WarperWeights& shape) {
  WarperWeights z = shape;
  z.for_each_tensor([](std::vector<double>& t) { std::fill(t.begin(), t.end(), 0.0); });
  return z;
}

void WarperWeights::validate() const {
  if (temporal_mode == 0) throw Error(ErrorCode::kModeMismatch, "temporal mode must be non-zero");
  if (channels < 1 || joints < 1) throw Error(ErrorCode::kBadDimensions, "warper needs J >= 1 and C >= 1");
  const auto check = [](const Conv2d& c, int in, int out, int kernel, int dilation) {
    if (c.in != in || c.out != out || c.kernel != kernel || c.dilation != dilation ||
        c.weight.size() != static_cast<std::size_t>(out) * c.fan_in() || c.bias.size() != static_cast<std::size_t>(out)) {
      throw Error(ErrorCode::kShapeMismatch, "warper layer has inconsistent shape");
    }
  };
  check(stem, joints, channels, 3, 1);
  for (const auto& b : residual_blocks) {
    check(b.first, channels, channels, 3, 1);
    check(b.second, channels, channels, 3, 1);
  }
  for (std::size_t k = 0; k < kDilations.size(); ++k) check(offset_heads[k], channels, 2, 3, kDilations[k]);
  check(output_head, joints, joints, 1, 1);
  for_each_tensor([](const std::vector<double>& t) {
    for (double v : t) {
      if (!std::isfinite(v)) throw Error(ErrorCode::kNonFinite, "warper parameter is not finite");
    }
  });
}

std::size_t WarperWeights::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor([&n](const std::vector<double>& t) { n += t.size(); });
  return n;
}

bool WarperWeights::bitwise_equal(const WarperWeights& other) const {
  if (temporal_mode != other.temporal_mode || channels != other.channels || joints != other.joints) return false;
  std::vector<const std::vector<double>*> mine;
  std::vector<const std::vector<double>*> theirs;
  for_each_tensor([&](const std::vector<double>& t) { mine.push_back(&t); });
  other.for_each_tensor([&](const std::vector<double>& t) { theirs.push_back(&t); });
  if (mine.size() != theirs.size()) return false;
  for (std::size_t i = 0; i < mine.size(); ++i) {
    const auto& a = *mine[i];
    const auto& b = *theirs[i];
    if (a.size() != b.size()) return false;
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (std::bit_cast<std::uint64_t>(a[k]) != std::bit_cast<std::uint64_t>(b[k])) return false;
    }
  }
  return true;
}

Tensor3 difference_map(const WarpInput& inp) {
  if (!inp.corrected.same_shape(inp.anchor)) {
    throw Error(ErrorCode::kShapeMismatch, "corrected and anchor heatmaps differ in shape");
  }
  Tensor3 d(inp.corrected.joints(), inp.corrected.height(), inp.corrected.width());
  const auto a = inp.corrected.values();
  const auto b = inp.anchor.values();
  for (std::size_t i = 0; i < d.values.size(); ++i) d.values[i] = a[i] - b[i];
  return d;
}

Tensor3 deformable_warp(const Tensor3& base, const Tensor3& offsets) {
  check_offsets(base, offsets);
  Tensor3 out(base.channels, base.height, base.width);
  for (int y = 0; y < base.height; ++y) {
    for (int x = 0; x < base.width; ++x) {
      const double ox = offsets.at(0, y, x);
      const double oy = offsets.at(1, y, x);
      if (!std::isfinite(ox) || !std::isfinite(oy)) throw Error(ErrorCode::kNonFinite, "offset is not finite");
      const Bilinear b = bilinear_at(x + ox, y + oy, base.width, base.height);
      const double w00 = (1.0 - b.fx) * (1.0 - b.fy);
      const double w01 = b.fx * (1.0 - b.fy);
      const double w10 = (1.0 - b.fx) * b.fy;
      const double w11 = b.fx * b.fy;
      for (int c = 0; c < base.channels; ++c) {
        out.at(c, y, x) = w00 * sample_or_zero(base, c, b.y0, b.x0) + w01 * sample_or_zero(base, c, b.y0, b.x0 + 1) +
                          w10 * sample_or_zero(base, c, b.y0 + 1, b.x0) +
                          w11 * sample_or_zero(base, c, b.y0 + 1, b.x0 + 1);
      }
    }
  }
  return out;
}

Heatmap warper_forward(const WarperWeights& weights, const WarpInput& inp) {
  weights.validate();
  ForwardCache fc = run_forward(weights, inp);
  return Heatmap(inp.corrected.view(), inp.corrected.frame(), fc.output.channels, fc.output.height,
                 fc.output.width, std::move(fc.output.values));
}

std::array<Tensor3, 5> warper_offsets(const WarperWeights& weights, const WarpInput& inp) {
  weights.validate();
  return run_forward(weights, inp).offsets;
}

double warper_loss(const WarperWeights& weights, const WarperSample& sample, WarperWeights* grads, double scale) {
  if (!sample.target.same_shape(sample.input.anchor)) {
    throw Error(ErrorCode::kShapeMismatch, "target differs in shape from the input");
  }
  const ForwardCache fc = run_forward(weights, sample.input);
  const auto target = sample.target.values();
  const double n = static_cast<double>(target.size());
  double loss = 0.0;
  Tensor3 grad(fc.output.channels, fc.output.height, fc.output.width);
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double r = fc.output.values[i] - target[i];
    loss += r * r;
    grad.values[i] = scale * 2.0 * r / n;
  }
  loss /= n;
  if (!std::isfinite(loss)) throw Error(ErrorCode::kDivergedLoss, "warper loss is not finite");
  if (grads != nullptr) run_backward(weights, fc, std::move(grad), *grads);
  return loss;
}

double dataset_loss(const WarperWeights& weights, const std::vector<WarperSample>& dataset) {
  std::vector<double> losses(dataset.size());
  parallel_for(dataset.size(), default_threads(), [&](std::size_t i) { losses[i] = warper_loss(weights, dataset[i]); });
  double total = 0.0;
  for (double l : losses) total += l;
  return dataset.empty() ? 0.0 : total / static_cast<double>(dataset.size());
}

TrainResult warper_train(const std::vector<WarperSample>& dataset, int mode, const TrainHyper& hyper) {
  if (dataset.empty()) throw Error(ErrorCode::kEmptyDataset, "warper training needs at least one sample");
  const WarperWeights start =
      WarperWeights::initialize(mode, dataset.front().input.anchor.joints(), hyper.channels, hyper.seed);
  return warper_train(dataset, start, hyper);
}

TrainResult warper_train(const std::vector<WarperSample>& dataset, const WarperWeights& start, const TrainHyper& hyper) {
  start.validate();
  check_dataset(dataset, start.temporal_mode);
  if (dataset.front().input.anchor.joints() != start.joints) {
    throw Error(ErrorCode::kShapeMismatch, "dataset joint count differs from the warper's");
  }
  if (!(hyper.learning_rate >= 0.0) || hyper.epochs < 0 || hyper.batch < 1 ||
      !(hyper.momentum >= 0.0 && hyper.momentum < 1.0)) {
    throw Error(ErrorCode::kBadConfig, "invalid warper training hyper-parameters");
  }

  TrainResult result;
  result.weights = start;
  result.initial_loss = dataset_loss(start, dataset);
  if (!std::isfinite(result.initial_loss)) throw Error(ErrorCode::kDivergedLoss, "initial loss is not finite");
  double best = result.initial_loss;

  WarperWeights w = start;
  WarperWeights velocity = WarperWeights::zeros_like(start);
  WarperWeights second = WarperWeights::zeros_like(start);
  const bool adam = hyper.optimizer == Optimizer::kAdam;
  constexpr double kBeta2 = 0.999;
  constexpr double kAdamEps = 1e-8;
  long step = 0;
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(hyper.seed ^ 0x9e3779b97f4a7c15ULL);
  const int threads = default_threads();

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(hyper.batch)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(hyper.batch));
      const double scale = 1.0 / static_cast<double>(end - begin);
      // Per-sample gradients summed in a fixed order keep training deterministic
      // regardless of the thread count.
      std::vector<WarperWeights> sample_grads(end - begin, WarperWeights::zeros_like(w));
      try {
        parallel_for(end - begin, threads,
                     [&](std::size_t i) { warper_loss(w, dataset[order[begin + i]], &sample_grads[i], scale); });
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kNonFinite) throw Error(ErrorCode::kDivergedLoss, e.what());
        throw;
      }
      if (hyper.learning_rate == 0.0) continue;

      std::vector<std::vector<double>*> wt;
      std::vector<std::vector<double>*> vt;
      std::vector<std::vector<double>*> st;
      w.for_each_tensor([&](std::vector<double>& t) { wt.push_back(&t); });
      velocity.for_each_tensor([&](std::vector<double>& t) { vt.push_back(&t); });
      second.for_each_tensor([&](std::vector<double>& t) { st.push_back(&t); });
      ++step;
      const double bias1 = 1.0 - std::pow(hyper.momentum, static_cast<double>(step));
      const double bias2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      std::vector<std::vector<std::vector<double>*>> gts(sample_grads.size());
      for (std::size_t s = 0; s < sample_grads.size(); ++s) {
        sample_grads[s].for_each_tensor([&](std::vector<double>& t) { gts[s].push_back(&t); });
      }
      for (std::size_t t = 0; t < wt.size(); ++t) {
        auto& wv = *wt[t];
        auto& vv = *vt[t];
        auto& sv = *st[t];
        for (std::size_t k = 0; k < wv.size(); ++k) {
          double g = 0.0;
          for (const auto& gs : gts) g += (*gs[t])[k];
          if (adam) {
            vv[k] = hyper.momentum * vv[k] + (1.0 - hyper.momentum) * g;
            sv[k] = kBeta2 * sv[k] + (1.0 - kBeta2) * g * g;
            wv[k] -= hyper.learning_rate * (vv[k] / bias1) / (std::sqrt(sv[k] / bias2) + kAdamEps);
          } else {
            vv[k] = hyper.momentum * vv[k] - hyper.learning_rate * g;
            wv[k] += vv[k];
          }
          if (!std::isfinite(wv[k])) {
            throw Error(ErrorCode::kDivergedLoss, "warper parameter diverged in epoch " + std::to_string(epoch));
          }
        }
      }
    }
    double loss = 0.0;
    try {
      loss = dataset_loss(w, dataset);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kNonFinite) throw Error(ErrorCode::kDivergedLoss, e.what());
      throw;
    }
    if (!std::isfinite(loss)) throw Error(ErrorCode::kDivergedLoss, "warper loss diverged in epoch " + std::to_string(epoch));
    result.epoch_loss.push_back(loss);
    if (loss < best) {
      best = loss;
      result.weights = w;
    }
  }
  result.final_loss = best;
  return result;
}

void write_weights(std::ostream& out, const WarperWeights& w) {
  w.validate();
  detail::put_magic(out, "DWWT");
  detail::put_u32(out, kWeightsVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(w.temporal_mode));
  detail::put_u32(out, static_cast<std::uint32_t>(w.channels));
  detail::put_u32(out, static_cast<std::uint32_t>(w.joints));
  w.for_each_tensor([&out](const std::vector<double>& t) {
    for (double v : t) detail::put_f32(out, static_cast<float>(v));
  });
  if (!out) throw Error(ErrorCode::kIo, "failed writing warper weights");
}

WarperWeights read_weights(std::istream& in) {
  detail::expect_magic(in, "DWWT");
  const std::uint32_t version = detail::get_u32(in);
  if (version != kWeightsVersion) throw Error(ErrorCode::kFormat, "unsupported weights version " + std::to_string(version));
  const auto mode = static_cast<std::int32_t>(detail::get_u32(in));
  const std::uint32_t channels = detail::get_u32(in);
  const std::uint32_t joints = detail::get_u32(in);
  if (mode == 0 || mode < -1024 || mode > 1024 || channels < 1 || channels > 1024 || joints < 1 || joints > 1024) {
    throw Error(ErrorCode::kFormat, "implausible warper header");
  }
  WarperWeights w = WarperWeights::initialize(mode, static_cast<int>(joints), static_cast<int>(channels), 0);
  w.for_each_tensor([&in](std::vector<double>& t) {
    for (double& v : t) {
      const float f = detail::get_f32(in);
      if (!std::isfinite(f)) throw Error(ErrorCode::kFormat, "non-finite warper parameter");
      v = f;
    }
  });
  return w;
}

void write_weights_file(const std::filesystem::path& path, const WarperWeights& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  write_weights(out, w);
}

WarperWeights read_weights_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return read_weights(in);
}

}  // namespace densewarp
