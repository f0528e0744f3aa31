// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "../common/brute_force_fusion.hpp"
#include "../common/test_rigs.hpp"
#include "../common/warper_fixtures.hpp"
#include "densewarp/config.hpp"
#include "densewarp/eval.hpp"
#include "densewarp/fusion.hpp"
#include "densewarp/geometry.hpp"
#include "densewarp/scheduler.hpp"
#include "densewarp/synth.hpp"
#include "densewarp/triangulate.hpp"
#include "densewarp/warper.hpp"

namespace fs = std::filesystem;
using namespace densewarp;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back(std::string(ok ? "" : "!! ") + what);
  }
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt2(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Cameras on a jittered ring around the working volume.
Rig random_rig(std::mt19937_64& rng, int views) {
  std::uniform_real_distribution<double> radius(3.0, 6.0);
  std::uniform_real_distribution<double> height(0.5, 3.5);
  std::uniform_real_distribution<double> jitter(-0.4, 0.4);
  std::uniform_real_distribution<double> focal(30.0, 80.0);
  Rig rig;
  for (int v = 0; v < views; ++v) {
    const double a = 2.0 * std::numbers::pi * v / views + jitter(rng);
    const double r = radius(rng);
    rig.push_back(testing::look_at_camera(v, Vec3(r * std::cos(a), r * std::sin(a), height(rng)),
                                          Vec3(jitter(rng) * 0.2, jitter(rng) * 0.2, 1.0), focal(rng), 32, 32));
  }
  return rig;
}

// ---- 1

Outcome epipolar_suite() {
  Outcome o;
  std::mt19937_64 rng(101);
  double worst_constraint = 0.0;
  double worst_line = 0.0;
  double worst_rank = 0.0;
  double worst_norm = 0.0;
  int rigs = 0;
  for (int k = 0; k < 10; ++k) {
    const Rig rig = k == 0 ? build_rig(RigSpec{}) : random_rig(rng, 4);
    ++rigs;
    const EpipolarRig epi(rig);
    std::vector<Vec3> points;
    for (int i = 0; i < 1000; ++i) points.push_back(testing::random_volume_point(rng));
    for (int a = 0; a < 4; ++a) {
      for (int b = 0; b < 4; ++b) {
        if (a == b) continue;
        const FundamentalMatrix& f = epi.between(a, b);
        const Vec3 sv = Eigen::JacobiSVD<Mat3>(f.f).singularValues();
        worst_rank = std::max(worst_rank, sv(2) / sv(0));
        worst_norm = std::max(worst_norm, std::abs(f.f.norm() - 1.0));
        for (const Vec3& x : points) {
          const Vec2 q = project_point(rig[static_cast<std::size_t>(a)], x);
          const Vec2 qp = project_point(rig[static_cast<std::size_t>(b)], x);
          worst_constraint = std::max(worst_constraint, std::abs(Vec3(qp.x(), qp.y(), 1.0).dot(f.f * Vec3(q.x(), q.y(), 1.0))));
          worst_line = std::max(worst_line, std::abs(epipolar_line(f, q).signed_distance(qp)));
        }
      }
    }
  }
  o.check(worst_constraint < 1e-9, fmt("max |q'Fq| %.3g (< 1e-9)", worst_constraint));
  o.check(worst_rank < 1e-12, fmt("max s3/s1 %.3g (rank 2)", worst_rank));
  o.check(worst_norm < 1e-12, fmt("max | ||F|| - 1 | %.3g", worst_norm));
  o.check(worst_line < 1e-6, fmt("max line distance %.3g px (< 1e-6)", worst_line));
  o.notes.push_back(std::to_string(rigs) + " rigs x 12 ordered pairs x 1000 points");
  return o;
}

// ---- 2

Outcome triangulation_suite() {
  Outcome o;
  const Rig rig = build_rig(RigSpec{});
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> ux(-0.6, 0.6);
  std::uniform_real_distribution<double> uz(0.2, 1.8);

  double worst_exact = 0.0;
  bool monotone = true;
  for (int i = 0; i < 500; ++i) {
    const Vec3 x(ux(rng), ux(rng), uz(rng));
    std::vector<Observation> obs;
    for (const CameraView& cam : rig) obs.push_back({cam.id, project_point(cam, x), 1.0});
    worst_exact = std::max(worst_exact, (triangulate_dlt(obs, rig) - x).norm());
  }
  o.check(worst_exact < 1e-9, fmt("noiseless DLT max error %.3g m (< 1e-9)", worst_exact));

  std::map<double, std::vector<double>> errors;
  for (double sigma : {0.25, 0.5, 1.0}) {
    std::normal_distribution<double> noise(0.0, sigma);
    for (int i = 0; i < 500; ++i) {
      const Vec3 x(ux(rng), ux(rng), uz(rng));
      std::vector<Observation> obs;
      for (const CameraView& cam : rig) obs.push_back({cam.id, project_point(cam, x) + Vec2(noise(rng), noise(rng)), 1.0});
      const Vec3 dlt = triangulate_dlt(obs, rig);
      // Objective after k iterations must not increase with k.
      double prev = reprojection_objective(dlt, obs, rig);
      for (int k = 1; k <= 8; ++k) {
        const double cur = refine_gauss_newton(dlt, obs, rig, k).objective;
        if (cur > prev * (1.0 + 1e-12) + 1e-15) monotone = false;
        prev = cur;
      }
      errors[sigma].push_back((refine_gauss_newton(dlt, obs, rig).point - x).norm());
    }
  }
  o.check(monotone, "Gauss-Newton objective non-increasing per iteration (1500 problems)");
  const double m1 = median(errors[0.25]);
  const double m2 = median(errors[0.5]);
  const double m3 = median(errors[1.0]);
  o.check(m1 < m2 && m2 < m3, "median 3D error " + fmt("%.3f", m1 * 1000) + " / " + fmt("%.3f", m2 * 1000) + " / " +
                                   fmt("%.3f mm at sigma 0.25 / 0.5 / 1.0 px", m3 * 1000));
  o.check(m2 / m1 >= 1.4 && m2 / m1 <= 2.8 && m3 / m2 >= 1.4 && m3 / m2 <= 2.8,
          fmt2("successive median ratios %.3f, %.3f (in [1.4, 2.8])", m2 / m1, m3 / m2));
  return o;
}

// ---- 3

std::vector<Heatmap> observe_static(const Rig& rig, const std::vector<Vec3>& joints, int size) {
  std::vector<Heatmap> g;
  for (const CameraView& cam : rig) {
    std::vector<Keypoint2D> kps;
    for (std::size_t j = 0; j < joints.size(); ++j) kps.push_back({static_cast<int>(j), project_point(cam, joints[j]), 1.0});
    g.push_back(render_gaussian(kps, size, size, 2.0, cam.id, 1 + cam.id));
  }
  return g;
}

Outcome fusion_suite() {
  Outcome o;
  std::mt19937_64 rng(303);
  const Rig rig = build_rig(RigSpec{});
  const std::vector<Vec3> pose = rest_skeleton();
  const ReplicatedGrid grid = replicate_group(observe_static(rig, pose, 32));

  FusionConfig identity;
  identity.lambda = 1.0;
  const ReplicatedGrid same = fuse_group(grid, rig, identity);
  bool bitwise = true;
  for (int v = 0; v < 4; ++v) {
    for (int c = 0; c < 4; ++c) bitwise = bitwise && same.at(v, c).heatmap.values_equal(grid.at(v, c).heatmap);
  }
  o.check(bitwise, "lambda = 1 reproduces every entry bitwise");

  bool anchors = true;
  for (double lambda : {0.0, 0.5}) {
    FusionConfig cfg;
    cfg.lambda = lambda;
    const ReplicatedGrid out = fuse_group(grid, rig, cfg);
    for (int v = 0; v < 4; ++v) anchors = anchors && out.at(v, v).heatmap.values_equal(grid.at(v, v).heatmap);
  }
  o.check(anchors, "anchor entries unchanged for lambda 0 and 0.5");

  // Static scenes. Two views at lambda = 0 leave a ridge along one epipolar
  // line, so that case runs with the self term; three views pin the point.
  const auto worst_static = [&](const Rig& r, const std::vector<Vec3>& pts, const FusionConfig& cfg) {
    const ReplicatedGrid out = fuse_group(replicate_group(observe_static(r, pts, r.front().width)), r, cfg);
    double worst = 0.0;
    for (std::size_t v = 0; v < r.size(); ++v) {
      for (std::size_t c = 0; c < r.size(); ++c) {
        if (c == v) continue;
        for (std::size_t j = 0; j < pts.size(); ++j) {
          const Vec2 got = decode_peak(out.at(static_cast<int>(v), static_cast<int>(c)).heatmap, static_cast<int>(j)).position;
          worst = std::max(worst, (got - project_point(r[v], pts[j])).norm());
        }
      }
    }
    return worst;
  };
  double three = 0.0;
  double two = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    FusionConfig cfg;
    cfg.lambda = 0.0;
    three = std::max(three, worst_static(testing::circle_rig(3), {testing::random_volume_point(rng)}, cfg));
    cfg.lambda = 0.5;
    two = std::max(two, worst_static(testing::circle_rig(2), {testing::random_volume_point(rng)}, cfg));
  }
  FusionConfig defaults;
  const double skeleton = worst_static(rig, pose, defaults);
  defaults.sampling = LineSampling::kBand;
  const double skeleton_band = worst_static(rig, pose, defaults);
  o.check(three < 0.3, fmt("static scene, 3 views, lambda 0: worst peak %.4f px (< 0.3), 20 points", three));
  o.check(two < 0.3, fmt("static scene, 2 views, lambda 0.5: worst peak %.4f px (< 0.3), 20 points", two));
  o.check(skeleton < 0.3 && skeleton_band < 0.3,
          fmt2("static scene, default rig, 17 joints, lambda 0.5: worst peak %.4f px bilinear, %.4f px band (< 0.3)",
               skeleton, skeleton_band));

  double worst_oracle = 0.0;
  for (int trial = 0; trial < 4; ++trial) {
    const Rig small = testing::circle_rig(4, 4.0, 3.0, 29.0, 16, 16, 0.3 + trial);
    std::vector<Vec3> pts{testing::random_volume_point(rng), testing::random_volume_point(rng)};
    std::vector<Heatmap> g;
    for (const CameraView& cam : small) {
      // Independent points per view so the cross-view maxima are not trivially aligned.
      std::vector<Keypoint2D> kps{{0, project_point(cam, testing::random_volume_point(rng)), 1.0},
                                  {1, project_point(cam, pts[1]), 1.0}};
      g.push_back(render_gaussian(kps, 16, 16, 2.0, cam.id, 1 + cam.id));
    }
    const ReplicatedGrid sgrid = replicate_group(g);
    FusionConfig cfg;
    cfg.lambda = 0.3;
    cfg.sampling = LineSampling::kBand;
    const ReplicatedGrid out = fuse_group(sgrid, small, cfg);
    for (int v = 0; v < 4; ++v) {
      for (int c = 0; c < 4; ++c) {
        const auto a = testing::brute_force_fuse(sgrid, small, 0.3, v, c).values();
        const auto b = out.at(v, c).heatmap.values();
        for (std::size_t i = 0; i < a.size(); ++i) worst_oracle = std::max(worst_oracle, std::abs(a[i] - b[i]));
      }
    }
  }
  o.check(worst_oracle < 5e-3, fmt("band sampling vs brute force, 16x16: max |diff| %.3g (< 5e-3)", worst_oracle));
  return o;
}

// ---- 4

Outcome warper_suite() {
  Outcome o;
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor3 base(3, 16, 16);
  for (double& v : base.values) v = u(rng);
  const Tensor3 warped = deformable_warp(base, Tensor3(2, 16, 16));
  o.check(warped.values == base.values, "zero-offset warp is a bitwise identity");
  const WarperWeights fresh = WarperWeights::initialize(2, 3, 16, 5);
  const Heatmap a = testing::blobs({{8.2, 9.1}, {20.4, 13.3}, {15.0, 25.5}}, 32);
  const Heatmap c = testing::blobs({{9.0, 9.6}, {21.0, 12.9}, {15.5, 25.0}}, 32);
  double fresh_diff = 0.0;
  const auto fa = a.values();
  const auto fo = warper_forward(fresh, {c, a, 2}).values();
  for (std::size_t i = 0; i < fa.size(); ++i) fresh_diff = std::max(fresh_diff, std::abs(fa[i] - fo[i]));
  o.check(fresh_diff < 1e-15, fmt("fresh warper returns the anchor (max |diff| %.3g)", fresh_diff));

  // Gradient check: every element of small tensors, 8 random elements of large ones.
  const WarperWeights w = testing::gradient_check_weights(2, 6);
  const WarperSample sample{{testing::blobs({{7.2, 8.1}, {9.4, 6.3}}, 16), testing::blobs({{6.1, 7.6}, {8.2, 6.0}}, 16), 1},
                            testing::blobs({{7.0, 8.3}, {8.9, 6.6}}, 16)};
  WarperWeights grads = WarperWeights::zeros_like(w);
  warper_loss(w, sample, &grads);
  std::vector<const std::vector<double>*> analytic;
  grads.for_each_tensor([&](const std::vector<double>& t) { analytic.push_back(&t); });
  WarperWeights probe = w;
  std::vector<std::vector<double>*> params;
  probe.for_each_tensor([&](std::vector<double>& t) { params.push_back(&t); });
  // Relative error 1e-4 on top of the rounding floor of the central
  // difference itself, a few ulps of the loss divided by the step.
  const double eps = 1e-4;
  const double floor = 8.0 * std::numeric_limits<double>::epsilon() * warper_loss(w, sample) / eps;
  double worst_excess = 0.0;
  double worst_rel = 0.0;
  int checked = 0;
  int below_floor = 0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    std::vector<double>& p = *params[t];
    std::vector<std::size_t> picks;
    if (p.size() <= 8) {
      for (std::size_t i = 0; i < p.size(); ++i) picks.push_back(i);
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, p.size() - 1);
      for (int i = 0; i < 8; ++i) picks.push_back(pick(rng));
    }
    for (std::size_t i : picks) {
      const double saved = p[i];
      p[i] = saved + eps;
      const double plus = warper_loss(probe, sample);
      p[i] = saved - eps;
      const double minus = warper_loss(probe, sample);
      p[i] = saved;
      const double numeric = (plus - minus) / (2 * eps);
      const double an = (*analytic[t])[i];
      const double scale = std::max(std::abs(an), std::abs(numeric));
      const double diff = std::abs(an - numeric);
      worst_excess = std::max(worst_excess, diff / (1e-4 * scale + floor));
      if (scale > 1e5 * floor) {
        worst_rel = std::max(worst_rel, diff / scale);
      } else {
        ++below_floor;
      }
      ++checked;
    }
  }
  o.check(params.size() == 2u * (1 + 2 * WarperWeights::kResidualBlocks + 5 + 1),
          std::to_string(checked) + " entries checked in " + std::to_string(params.size()) + " tensors (all of them)");
  o.check(worst_rel < 1e-4, fmt("gradient check: worst relative error %.3g (< 1e-4)", worst_rel) + " over " +
                                 std::to_string(checked - below_floor) + " entries with |g| > " +
                                 fmt("%.1e", 1e5 * floor));
  o.check(worst_excess <= 1.0, fmt2("remaining %.0f entries: worst |diff| / (1e-4 |g| + %.1e rounding floor)",
                                    below_floor, floor) +
                                   fmt(" = %.3f (<= 1)", worst_excess));

  // Toy training on static data: identical samples, target one pixel off the anchor.
  const Heatmap anchor = testing::blobs({{10, 12}, {20, 18}, {14, 22}, {24, 9}}, 32);
  const Heatmap moved = testing::blobs({{11, 12.5}, {21, 18.5}, {15, 22.5}, {25, 9.5}}, 32);
  const std::vector<WarperSample> data(40, WarperSample{{moved, anchor, 1}, moved});
  for (Optimizer opt : {Optimizer::kAdam, Optimizer::kSgd}) {
    TrainHyper hyper;
    hyper.optimizer = opt;
    hyper.learning_rate = opt == Optimizer::kAdam ? 1e-3 : 0.05;
    hyper.batch = opt == Optimizer::kAdam ? 4 : 8;
    hyper.epochs = 50;
    hyper.channels = 16;
    const TrainResult r = warper_train(data, 1, hyper);
    o.check(r.final_loss < 0.1 * r.initial_loss,
            std::string(opt == Optimizer::kAdam ? "Adam" : "SGD") +
                fmt(" toy training: final/initial loss %.4f (< 0.1), 50 epochs, 40 samples, 32x32",
                    r.final_loss / r.initial_loss));
  }
  return o;
}

// ---- 5, 7, 8

RunConfig experiment_config() {
  RunConfig cfg;
  cfg.eval.seeds = 20;
  return cfg;
}

struct SharedBank {
  WarperBank bank;
  double train_seconds = 0.0;
  std::string losses;
};

SharedBank& shared_bank() {
  static SharedBank b = [] {
    SharedBank s;
    const auto t0 = std::chrono::steady_clock::now();
    const BankTraining t = train_warper_bank(experiment_config());
    s.train_seconds = seconds_since(t0);
    s.bank = t.bank;
    for (const auto& [mode, r] : t.results) {
      s.losses += (s.losses.empty() ? "" : ", ") + std::string("mode ") + std::to_string(mode) +
                  fmt2(" %.3g -> %.3g", r.initial_loss, r.final_loss);
    }
    return s;
  }();
  return b;
}

Outcome ablation() {
  Outcome o;
  SharedBank& b = shared_bank();
  o.notes.push_back(fmt("warper training %.1f s: ", b.train_seconds) + b.losses);
  const AblationResult r = run_ablation(experiment_config(), b.bank);
  const double rep = r.rows[0].mean_mpjpe;
  const double fus = r.rows[1].mean_mpjpe;
  const double war = r.rows[2].mean_mpjpe;
  const double den = r.rows[3].mean_mpjpe;
  o.notes.push_back("mean MPJPE over 20 seeds: replicate_only " + fmt("%.2f", rep) + ", spatial_fusion " +
                    fmt("%.2f", fus) + ", fusion_plus_warper " + fmt("%.2f", war) + ", dense_oracle " +
                    fmt("%.2f mm", den));
  o.check(rep > fus, fmt2("replicate_only > spatial_fusion (gap %.2f mm, %.1f%%)", rep - fus, 100 * (rep - fus) / rep));
  o.check(fus > war, fmt2("spatial_fusion > fusion_plus_warper (gap %.2f mm, %.1f%%)", fus - war, 100 * (fus - war) / fus));
  o.check(war <= 2.0 * den, fmt2("fusion_plus_warper / dense_oracle = %.3f (<= 2), dense %.2f mm", war / den, den));
  return o;
}

Outcome interval_sweep() {
  Outcome o;
  const SweepResult r = run_interval_sweep(experiment_config(), shared_bank().bank);
  std::string row;
  for (const SweepRow& s : r.rows) row += fmt("%g: ", s.parameter) + fmt("%.2f mm  ", s.mean_mpjpe);
  o.notes.push_back("fusion_plus_warper, 20 seeds, factor " + row);
  o.check(r.monotone, "mean MPJPE non-decreasing in the interval factor");
  const double ratio = r.rows.back().mean_mpjpe / r.rows.front().mean_mpjpe;
  o.check(ratio >= 1.5, fmt("factor 12 / factor 1 = %.3f (>= 1.5)", ratio));
  return o;
}

Outcome window_sweep() {
  Outcome o;
  const SweepResult r = run_window_sweep(experiment_config(), shared_bank().bank);
  std::string row;
  for (const SweepRow& s : r.rows) row += fmt("x=%g: ", s.parameter) + fmt("%.2f mm  ", s.mean_mpjpe);
  o.notes.push_back("fusion_plus_warper, 20 seeds, " + row);
  o.check(r.monotone, "mean MPJPE non-decreasing in the window size");
  return o;
}

// ---- 6

Outcome upsampling() {
  Outcome o;
  RunConfig cfg;
  cfg.scene.frames = 44;  // a warm-up period, then ten full camera periods
  const std::array<PipelineVariant, 1> variants{PipelineVariant::kReplicateOnly};
  const Scene scene = make_scene(cfg, 7);
  const StreamResult r = evaluate_scene(scene, cfg.scene.frames, pipeline_options(cfg), nullptr, variants);
  const double period = 1.0 / scene.plan().camera_rate;
  std::map<int, int> per_period;
  for (int frame : r.reports.at(PipelineVariant::kReplicateOnly).frames) {
    ++per_period[static_cast<int>(std::floor(scene.time_of(frame) / period + 1e-9))];
  }
  bool four = per_period.size() == 11;
  for (int p = 1; p <= 10; ++p) four = four && per_period[p] == 4;
  o.check(four, "4 poses in each of camera periods 2-11 (first period is the window warm-up: " +
                    std::to_string(per_period[0]) + " pose)");
  bool hits = true;
  for (std::size_t i = 3; i < r.schedule.size(); ++i) hits = hits && r.schedule[i].cache_hit_count == 3;
  o.check(hits, "cache hits = M - 1 = 3 on every arrival after warm-up (" + std::to_string(r.schedule.size() - 3) +
                    " arrivals)");
  o.check(r.cache.hits == 3 * (r.schedule.size() - 3), "cumulative hit counter agrees");
  return o;
}

// ---- 9

Outcome metrics() {
  Outcome o;
  const auto skel = [](std::vector<Vec3> j) {
    Skeleton3D s;
    s.joints = std::move(j);
    return s;
  };
  const Skeleton3D a = skel({Vec3(0, 0, 0), Vec3(1, 2, 3)});
  o.check(mpjpe(a, a) == 0.0 && mpjpe(skel({Vec3(3, 4, 0)}), skel({Vec3(0, 0, 0)})) == 5.0 &&
              mpjpe(skel({Vec3(3, 4, 0), Vec3(1, 1, 1)}), skel({Vec3(0, 0, 0), Vec3(1, 1, 1)})) == 2.5,
          "mpjpe hand cases 0, 5.0, 2.5 exact");

  std::mt19937_64 rng(909);
  std::normal_distribution<double> n(0.0, 0.5);
  std::normal_distribution<double> noise(0.0, 0.05);
  int violations = 0;
  double worst_copy = 0.0;
  for (int f = 0; f < 1000; ++f) {
    Skeleton3D truth;
    for (int j = 0; j < 17; ++j) truth.joints.emplace_back(n(rng), n(rng), n(rng));
    Skeleton3D pred = truth;
    for (Vec3& x : pred.joints) x += Vec3(noise(rng), noise(rng), noise(rng));
    if (pmpjpe(pred, truth) > mpjpe(pred, truth)) ++violations;

    const Mat3 r = Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)).normalized().toRotationMatrix();
    const double s = 0.2 + std::abs(n(rng)) * 4.0;
    const Vec3 t(n(rng) * 5, n(rng) * 5, n(rng) * 5);
    Skeleton3D copy;
    for (const Vec3& x : truth.joints) copy.joints.push_back(s * r * x + t);
    worst_copy = std::max(worst_copy, pmpjpe(copy, truth));
  }
  o.check(violations == 0, std::to_string(violations) + " of 1000 noisy random frames with pmpjpe > mpjpe");
  o.check(worst_copy < 1e-9, fmt("similarity-transformed copies: max pmpjpe %.3g (< 1e-9)", worst_copy));
  return o;
}

// ---- 10

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream f(e.path(), std::ios::binary);
    files[fs::relative(e.path(), dir).string()] = {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
  }
  return files;
}

Outcome determinism() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / "densewarp_acceptance_determinism";
  const std::string cli = std::string("env -u DENSEWARP_SEED \"") + DENSEWARP_CLI + "\" ";
  const std::string small = " --scene.frames 16 --warper.epochs 1 --warper.train_scenes 1 --eval.seeds 2";
  const std::vector<std::string> commands{
      "synth --dense" + small + " --output_dir " + (root / "synth").string(),
      "run --input " + (root / "synth").string() + " --eval.variant spatial_fusion" + small + " --output_dir " +
          (root / "run").string(),
      "run --input " + (root / "synth").string() + " --eval.variant dense_oracle" + small + " --output_dir " +
          (root / "dense").string(),
      "train-warper" + small + " --output_dir " + (root / "train").string(),
      "run --synth --eval.variant fusion_plus_warper --warper.weights_dir " + (root / "train" / "weights").string() +
          small + " --output_dir " + (root / "warp").string(),
      "experiment ablation --warper.weights_dir " + (root / "train" / "weights").string() + small + " --output_dir " +
          (root / "ablation").string(),
      "experiment window_sweep --eval.variant spatial_fusion" + small + " --output_dir " + (root / "window").string(),
  };
  std::map<std::string, std::string> first;
  for (int pass = 0; pass < 2; ++pass) {
    fs::remove_all(root);
    for (const std::string& c : commands) {
      const int status = std::system((cli + c + " >/dev/null 2>&1").c_str());
      if (status != 0) {
        o.check(false, "command failed: " + c);
        return o;
      }
    }
    if (pass == 0) {
      first = snapshot(root);
    } else {
      const auto second = snapshot(root);
      std::size_t bytes = 0;
      for (const auto& [k, v] : first) bytes += v.size();
      std::vector<std::string> differ;
      for (const auto& [k, v] : first) {
        const auto it = second.find(k);
        if (it == second.end() || it->second != v) differ.push_back(k);
      }
      o.check(first.size() == second.size() && differ.empty(),
              std::to_string(first.size()) + " artifacts (" + std::to_string(bytes) + " bytes) from " +
                  std::to_string(commands.size()) + " commands, " + std::to_string(differ.size()) + " differ" +
                  (differ.empty() ? "" : " (first: " + differ.front() + ")"));
    }
  }
  fs::remove_all(root);
  return o;
}

struct Criterion {
  int id;
  std::string name;
  double limit_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  const std::vector<Criterion> criteria{
      {1, "epipolar suite", 5.0, epipolar_suite},
      {2, "triangulation suite", 30.0, triangulation_suite},
      {3, "fusion correctness", 60.0, fusion_suite},
      {4, "warper correctness", 300.0, warper_suite},
      {5, "ablation ordering", 900.0, ablation},
      {6, "upsampling", 0.0, upsampling},
      {7, "interval degradation", 0.0, interval_sweep},
      {8, "non-uniform windows", 0.0, window_sweep},
      {9, "metric suite", 0.0, metrics},
      {10, "determinism", 0.0, determinism},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    double secs = seconds_since(t0);
    // Criterion 5's budget includes warper training, which runs inside it.
    if (c.limit_seconds > 0.0) o.check(secs < c.limit_seconds, fmt2("runtime %.1f s (< %.0f s)", secs, c.limit_seconds));
    std::printf("%s %2d %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name.c_str(), secs);
    for (const std::string& n : o.notes) std::printf("        %s\n", n.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
