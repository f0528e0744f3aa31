#include "densewarp/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "densewarp/error.hpp"
#include "densewarp/parallel.hpp"
#include "densewarp/scheduler.hpp"

namespace densewarp {

using Json = nlohmann::ordered_json;

double mpjpe(const Skeleton3D& pred, const Skeleton3D& truth) {
  if (pred.joints.size() != truth.joints.size() || truth.joints.empty()) {
    throw Error(ErrorCode::kJointCountMismatch, "prediction has " + std::to_string(pred.joints.size()) +
                                                    " joints, truth " + std::to_string(truth.joints.size()));
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < truth.joints.size(); ++j) sum += (pred.joints[j] - truth.joints[j]).norm();
  return sum / static_cast<double>(truth.joints.size());
}

namespace {

// Weighted least-squares similarity (Umeyama). `truth` is assumed non-degenerate.
Similarity weighted_align(std::span<const Vec3> pred, std::span<const Vec3> truth, std::span<const double> w) {
  const auto n = static_cast<Eigen::Index>(truth.size());
  double total = 0.0;
  Vec3 mp = Vec3::Zero();
  Vec3 mt = Vec3::Zero();
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    total += w[k];
    mp += w[k] * pred[k];
    mt += w[k] * truth[k];
  }
  mp /= total;
  mt /= total;
  Mat3 cov = Mat3::Zero();
  double var_p = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const Vec3 p = pred[k] - mp;
    cov += w[k] * (truth[k] - mt) * p.transpose();
    var_p += w[k] * p.squaredNorm();
  }
  cov /= total;
  var_p /= total;
  const Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 s(1.0, 1.0, 1.0);
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s(2) = -1.0;
  Similarity out;
  out.rotation = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
  out.scale = var_p > 0.0 ? svd.singularValues().dot(s) / var_p : 0.0;
  out.translation = mt - out.scale * out.rotation * mp;
  return out;
}

double aligned_error(const Similarity& sim, std::span<const Vec3> pred, std::span<const Vec3> truth,
                     std::vector<double>* dist = nullptr) {
  double sum = 0.0;
  for (std::size_t j = 0; j < truth.size(); ++j) {
    const double d = (sim.apply(pred[j]) - truth[j]).norm();
    if (dist != nullptr) (*dist)[j] = d;
    sum += d;
  }
  return sum / static_cast<double>(truth.size());
}

}  // namespace

Similarity similarity_align(std::span<const Vec3> pred, std::span<const Vec3> truth) {
  if (pred.size() != truth.size()) throw Error(ErrorCode::kJointCountMismatch, "alignment needs matching joints");
  const auto n = static_cast<Eigen::Index>(truth.size());
  if (n < 3) throw Error(ErrorCode::kDegenerateConfiguration, "alignment needs at least 3 joints");
  Eigen::Matrix3Xd t(3, n);
  for (Eigen::Index i = 0; i < n; ++i) t.col(i) = truth[static_cast<std::size_t>(i)];
  t.colwise() -= Vec3(t.rowwise().mean());
  const Vec3 spread = Eigen::JacobiSVD<Eigen::Matrix3Xd>(t).singularValues();
  if (!(spread(0) > 1e-12) || spread(1) <= 1e-9 * spread(0)) {
    throw Error(ErrorCode::kDegenerateConfiguration, "truth joints are collinear or coincident");
  }
  const std::vector<double> ones(truth.size(), 1.0);
  return weighted_align(pred, truth, ones);
}

Similarity mean_distance_align(std::span<const Vec3> pred, std::span<const Vec3> truth) {
  const Similarity ls = similarity_align(pred, truth);
  const std::size_t n = truth.size();
  std::vector<double> dist(n);
  Similarity best;
  double best_err = aligned_error(best, pred, truth, &dist);
  std::vector<double> ls_dist(n);
  const double ls_err = aligned_error(ls, pred, truth, &ls_dist);
  if (ls_err <= best_err) {
    best = ls;
    best_err = ls_err;
    dist = ls_dist;
  }
  // Reweighted least squares: each step minimizes a quadratic upper bound of
  // the summed distances, so accepted steps never increase the error.
  std::vector<double> w(n);
  std::vector<double> next_dist(n);
  for (int iter = 0; iter < 100 && best_err > 1e-15; ++iter) {
    const double floor = 1e-9 * best_err;
    for (std::size_t j = 0; j < n; ++j) w[j] = 1.0 / std::max(dist[j], floor);
    const Similarity cand = weighted_align(pred, truth, w);
    const double err = aligned_error(cand, pred, truth, &next_dist);
    if (!(err < best_err)) break;
    const bool settled = best_err - err <= 1e-12 * best_err;
    best = cand;
    best_err = err;
    dist.swap(next_dist);
    if (settled) break;
  }
  return best;
}

double pmpjpe(const Skeleton3D& pred, const Skeleton3D& truth) {
  if (pred.joints.size() != truth.joints.size() || truth.joints.empty()) {
    throw Error(ErrorCode::kJointCountMismatch, "prediction and truth differ in joint count");
  }
  return aligned_error(mean_distance_align(pred.joints, truth.joints), pred.joints, truth.joints);
}

std::string_view to_string(PipelineVariant v) {
  switch (v) {
    case PipelineVariant::kReplicateOnly:
      return "replicate_only";
    case PipelineVariant::kSpatialFusion:
      return "spatial_fusion";
    case PipelineVariant::kFusionPlusWarper:
      return "fusion_plus_warper";
    case PipelineVariant::kDenseOracle:
      return "dense_oracle";
  }
  return "unknown";
}

PipelineVariant parse_variant(std::string_view name) {
  for (PipelineVariant v : kAllVariants) {
    if (to_string(v) == name) return v;
  }
  throw Error(ErrorCode::kBadConfig, "unknown variant '" + std::string(name) + "'");
}

std::vector<int> arrival_modes(std::span<const Heatmap> window) {
  std::vector<int> modes(window.size(), 0);
  for (std::size_t k = 0; k < window.size(); ++k) {
    const auto view = static_cast<std::size_t>(window[k].view());
    if (view >= window.size()) throw Error(ErrorCode::kGroupShapeMismatch, "window view id out of range");
    modes[view] = static_cast<int>(window.size() - 1 - k);
  }
  return modes;
}

namespace {

void apply_warpers(WindowStages& st, const WarperBank* bank) {
  if (bank == nullptr) throw Error(ErrorCode::kModeMismatch, "warping needs trained warper weights");
  st.warped = st.anchors;
  for (std::size_t v = 0; v < st.modes.size(); ++v) {
    const int mode = st.modes[v];
    if (mode == 0) continue;
    const auto it = bank->find(mode);
    if (it == bank->end()) throw Error(ErrorCode::kModeMismatch, "no warper for mode " + std::to_string(mode));
    st.warped[v] = warper_forward(it->second, {st.fused[v], st.anchors[v], mode});
  }
}

}  // namespace

WindowStages run_stages(std::span<const Heatmap> window, const EpipolarRig& rig, const FusionConfig& fusion,
                        const WarperBank* bank, bool fuse, bool warp) {
  if (window.empty()) throw Error(ErrorCode::kGroupShapeMismatch, "empty window");
  const std::size_t m = window.size();
  WindowStages st;
  st.target_frame = window.back().frame();
  st.modes = arrival_modes(window);
  st.anchors.resize(m);
  for (const Heatmap& h : window) st.anchors[static_cast<std::size_t>(h.view())] = h;
  st.fused = st.anchors;
  if (fuse || warp) {
    const ReplicatedGrid grid = replicate_window(window);
    const int column = grid.column_of(st.target_frame);
    for (std::size_t v = 0; v < m; ++v) {
      if (st.modes[v] != 0) st.fused[v] = fuse_entry(grid, rig, fusion, static_cast<int>(v), column);
    }
  }
  if (warp) apply_warpers(st, bank);
  return st;
}

Skeleton3D triangulate_heatmaps(std::span<const Heatmap> per_view, const Rig& rig, const PipelineOptions& opts,
                                const Skeleton3D* previous, int frame) {
  if (per_view.size() != rig.size()) throw Error(ErrorCode::kRigMismatch, "one heatmap per camera expected");
  const int joints = per_view.front().joints();
  Skeleton3D out;
  out.frame = frame;
  out.joints.assign(static_cast<std::size_t>(joints), Vec3::Zero());
  out.per_joint_residual.assign(static_cast<std::size_t>(joints), std::numeric_limits<double>::infinity());
  std::vector<Observation> obs;
  for (int j = 0; j < joints; ++j) {
    obs.clear();
    for (std::size_t v = 0; v < per_view.size(); ++v) {
      try {
        const Keypoint2D k = decode_peak(per_view[v], j);
        if (k.confidence >= opts.weight_floor) obs.push_back({static_cast<int>(v), k.position, k.confidence});
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kEmptyChannel) throw;
      }
    }
    const auto ju = static_cast<std::size_t>(j);
    bool solved = false;
    if (obs.size() >= 2) {
      try {
        Vec3 x = triangulate_dlt(obs, rig);
        if (opts.gn_iterations > 0) {
          try {
            x = refine_gauss_newton(x, obs, rig, opts.gn_iterations).point;
          } catch (const Error& e) {
            if (e.code() != ErrorCode::kPointBehindCamera) throw;
          }
        }
        out.joints[ju] = x;
        out.per_joint_residual[ju] = rms_reprojection(x, obs, rig);
        solved = true;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kInsufficientViews && e.code() != ErrorCode::kDegenerateGeometry) throw;
      }
    }
    if (!solved && previous != nullptr && ju < previous->joints.size()) out.joints[ju] = previous->joints[ju];
  }
  return out;
}

PosePipeline::PosePipeline(Rig rig, PipelineOptions opts, const WarperBank* bank)
    : rig_(std::move(rig)), epi_(rig_), opts_(opts), bank_(bank) {
  opts_.fusion.validate();
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::map<PipelineVariant, Skeleton3D> PosePipeline::process(std::span<const Heatmap> window,
                                                            std::span<const PipelineVariant> variants,
                                                            std::span<const Heatmap> dense) {
  const auto wants = [&](PipelineVariant v) { return std::find(variants.begin(), variants.end(), v) != variants.end(); };
  const bool warp = wants(PipelineVariant::kFusionPlusWarper);
  const bool fuse = warp || wants(PipelineVariant::kSpatialFusion);

  auto t0 = std::chrono::steady_clock::now();
  WindowStages st = run_stages(window, epi_, opts_.fusion, bank_, fuse, false);
  seconds_.fusion += seconds_since(t0);
  if (warp) {
    t0 = std::chrono::steady_clock::now();
    apply_warpers(st, bank_);
    seconds_.warp += seconds_since(t0);
  }

  t0 = std::chrono::steady_clock::now();
  std::map<PipelineVariant, Skeleton3D> out;
  for (PipelineVariant v : variants) {
    std::span<const Heatmap> views;
    switch (v) {
      case PipelineVariant::kReplicateOnly:
        views = st.anchors;
        break;
      case PipelineVariant::kSpatialFusion:
        views = st.fused;
        break;
      case PipelineVariant::kFusionPlusWarper:
        views = st.warped;
        break;
      case PipelineVariant::kDenseOracle:
        if (dense.size() != rig_.size()) {
          throw Error(ErrorCode::kBadConfig, "dense_oracle needs every view at every frame");
        }
        views = dense;
        break;
    }
    const auto prev = previous_.find(v);
    Skeleton3D s = triangulate_heatmaps(views, rig_, opts_, prev == previous_.end() ? nullptr : &prev->second,
                                        st.target_frame);
    previous_[v] = s;
    out.emplace(v, std::move(s));
  }
  seconds_.triangulate += seconds_since(t0);
  return out;
}

PipelineOptions pipeline_options(const RunConfig& cfg) {
  PipelineOptions o;
  o.fusion = cfg.fusion;
  o.weight_floor = cfg.eval.weight_floor;
  o.gn_iterations = cfg.eval.gn_iterations;
  return o;
}

namespace {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

StreamResult evaluate_stream(const StreamSource& source, const PipelineOptions& opts, const WarperBank* bank,
                             std::span<const PipelineVariant> variants) {
  const bool dense = std::find(variants.begin(), variants.end(), PipelineVariant::kDenseOracle) != variants.end();
  if (dense && !source.dense) throw Error(ErrorCode::kBadConfig, "dense_oracle needs every view at every frame");
  StreamResult result;
  WindowState state(static_cast<int>(source.rig.size()));
  PosePipeline pipe(source.rig, opts, bank);
  for (PipelineVariant v : variants) result.reports[v].variant = std::string(to_string(v));

  for (const PlannedSample& s : source.samples) {
    const auto window = state.slide(source.observe(s));
    result.schedule.push_back({s.view, s.frame, s.timestamp, state.last_hits()});
    if (!window) continue;
    std::vector<Heatmap> all;
    if (dense) all = source.dense(s.frame);
    const auto skeletons = pipe.process(*window, variants, all);
    const std::optional<Skeleton3D> truth = source.truth ? source.truth(s.frame) : std::nullopt;
    for (const auto& [variant, skel] : skeletons) {
      result.skeletons[variant].push_back(skel);
      if (!truth) continue;
      EvalReport& r = result.reports[variant];
      if (r.per_joint_mpjpe.empty()) r.per_joint_mpjpe.assign(truth->joints.size(), 0.0);
      r.frames.push_back(s.frame);
      r.per_frame_mpjpe.push_back(kMetresToMm * mpjpe(skel, *truth));
      double p = std::numeric_limits<double>::quiet_NaN();
      if (truth->joints.size() >= 3) p = kMetresToMm * pmpjpe(skel, *truth);
      r.per_frame_pmpjpe.push_back(p);
      for (std::size_t j = 0; j < truth->joints.size(); ++j) {
        r.per_joint_mpjpe[j] += kMetresToMm * (skel.joints[j] - truth->joints[j]).norm();
      }
    }
  }
  for (auto& [variant, r] : result.reports) {
    r.avg_mpjpe = mean_of(r.per_frame_mpjpe);
    r.avg_pmpjpe = mean_of(r.per_frame_pmpjpe);
    for (double& e : r.per_joint_mpjpe) e /= static_cast<double>(r.frames.size());
    r.seconds = pipe.seconds();
  }
  result.cache = state.stats();
  return result;
}

StreamSource scene_source(const Scene& scene, int slots) {
  const SamplingPlan& plan = scene.plan();
  StreamSource src;
  src.rig = scene.rig();
  src.samples = generate_plan_times(plan, slots * plan.phase_step - 0.5 * plan.phase_step);
  src.observe = [&scene](const PlannedSample& s) { return scene.observe(s.view, s.frame); };
  src.truth = [&scene](int frame) { return std::optional<Skeleton3D>(scene.truth(frame)); };
  src.dense = [&scene](int frame) {
    std::vector<Heatmap> all;
    for (int v = 0; v < scene.views(); ++v) all.push_back(scene.observe(v, frame));
    return all;
  };
  return src;
}

StreamResult evaluate_scene(const Scene& scene, int slots, const PipelineOptions& opts, const WarperBank* bank,
                            std::span<const PipelineVariant> variants) {
  return evaluate_stream(scene_source(scene, slots), opts, bank, variants);
}

std::map<int, std::vector<WarperSample>> warper_dataset(const RunConfig& cfg) {
  std::vector<std::map<int, std::vector<WarperSample>>> per_scene(static_cast<std::size_t>(cfg.warper.train_scenes));
  parallel_for(per_scene.size(), cfg.threads, [&](std::size_t k) {
    const Scene scene = make_scene(cfg, cfg.warper.train_seed + k);
    const EpipolarRig epi(scene.rig());
    WindowState state(scene.views());
    const SamplingPlan& plan = scene.plan();
    for (const PlannedSample& s :
         generate_plan_times(plan, cfg.scene.frames * plan.phase_step - 0.5 * plan.phase_step)) {
      const auto window = state.slide(scene.observe(s.view, s.frame));
      if (!window) continue;
      const WindowStages st = run_stages(*window, epi, cfg.fusion, nullptr, true, false);
      for (std::size_t v = 0; v < st.modes.size(); ++v) {
        const int mode = st.modes[v];
        if (mode == 0) continue;
        per_scene[k][mode].push_back(
            {{st.fused[v], st.anchors[v], mode}, scene.clean(static_cast<int>(v), st.target_frame)});
      }
    }
  });
  std::map<int, std::vector<WarperSample>> out;
  for (auto& scene : per_scene) {
    for (auto& [mode, samples] : scene) {
      auto& dst = out[mode];
      dst.insert(dst.end(), std::make_move_iterator(samples.begin()), std::make_move_iterator(samples.end()));
    }
  }
  return out;
}

BankTraining train_warper_bank(const RunConfig& cfg) {
  BankTraining out;
  for (auto& [mode, samples] : warper_dataset(cfg)) {
    TrainHyper hyper = cfg.warper.hyper;
    hyper.seed = derive_seed(cfg.warper.hyper.seed, static_cast<std::uint64_t>(mode));
    TrainResult r = warper_train(samples, mode, hyper);
    out.bank.emplace(mode, r.weights);
    out.results.emplace(mode, std::move(r));
  }
  return out;
}

std::filesystem::path weights_path(const std::filesystem::path& dir, int mode) {
  return dir / ("warper_mode_" + std::to_string(mode) + ".dwwt");
}

void save_bank(const std::filesystem::path& dir, const WarperBank& bank) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string());
  for (const auto& [mode, w] : bank) write_weights_file(weights_path(dir, mode), w);
}

WarperBank load_or_train_bank(const RunConfig& cfg) {
  if (!cfg.warper.weights_dir.empty()) {
    const std::filesystem::path dir(cfg.warper.weights_dir);
    WarperBank bank;
    bool complete = true;
    for (int mode = 1; mode < cfg.rig.views && complete; ++mode) {
      const auto path = weights_path(dir, mode);
      if (!std::filesystem::exists(path)) {
        complete = false;
        break;
      }
      WarperWeights w = read_weights_file(path);
      if (w.temporal_mode != mode || w.joints != cfg.scene.motion.joints) {
        throw Error(ErrorCode::kModeMismatch, path.string() + " does not match the configured scene");
      }
      bank.emplace(mode, std::move(w));
    }
    if (complete) return bank;
    WarperBank trained = train_warper_bank(cfg).bank;
    save_bank(dir, trained);
    return trained;
  }
  return train_warper_bank(cfg).bank;
}

std::vector<std::uint64_t> experiment_seeds(const RunConfig& cfg) {
  std::vector<std::uint64_t> seeds;
  for (int k = 0; k < cfg.eval.seeds; ++k) seeds.push_back(cfg.seed + static_cast<std::uint64_t>(k));
  return seeds;
}

AblationResult run_ablation(const RunConfig& cfg, const WarperBank& bank) {
  AblationResult out;
  out.seeds = experiment_seeds(cfg);
  const PipelineOptions opts = pipeline_options(cfg);
  std::vector<StreamResult> runs(out.seeds.size());
  parallel_for(runs.size(), cfg.threads, [&](std::size_t i) {
    runs[i] = evaluate_scene(make_scene(cfg, out.seeds[i]), cfg.scene.frames, opts, &bank, kAllVariants);
  });
  for (PipelineVariant v : kAllVariants) {
    VariantRow row;
    row.variant = v;
    std::vector<double> p;
    for (const StreamResult& r : runs) {
      row.per_seed.push_back(r.reports.at(v).avg_mpjpe);
      p.push_back(r.reports.at(v).avg_pmpjpe);
    }
    row.mean_mpjpe = mean_of(row.per_seed);
    row.mean_pmpjpe = mean_of(p);
    out.rows.push_back(std::move(row));
  }
  const double rep = out.rows[0].mean_mpjpe;
  const double fus = out.rows[1].mean_mpjpe;
  const double war = out.rows[2].mean_mpjpe;
  const double den = out.rows[3].mean_mpjpe;
  char buf[160];
  if (!(rep > fus)) {
    std::snprintf(buf, sizeof buf, "replicate_only %.4f <= spatial_fusion %.4f", rep, fus);
    out.violations.emplace_back(buf);
  }
  if (!(fus > war)) {
    std::snprintf(buf, sizeof buf, "spatial_fusion %.4f <= fusion_plus_warper %.4f", fus, war);
    out.violations.emplace_back(buf);
  }
  // The oracle only has to be the lower bound up to 5 % of its own error.
  if (!(war >= 0.95 * den)) {
    std::snprintf(buf, sizeof buf, "fusion_plus_warper %.4f < 0.95 x dense_oracle %.4f", war, den);
    out.violations.emplace_back(buf);
  }
  out.ordering_holds = out.violations.empty();
  for (std::size_t i = 0; i < out.seeds.size(); ++i) {
    const double d = out.rows[3].per_seed[i];
    if (out.rows[0].per_seed[i] < d || out.rows[1].per_seed[i] < d || out.rows[2].per_seed[i] < d) {
      out.oracle_not_lowest.push_back(out.seeds[i]);
    }
  }
  return out;
}

namespace {

SweepResult run_sweep(const RunConfig& cfg, const WarperBank& bank, std::string name, std::string parameter,
                      const std::vector<double>& values, const std::function<RunConfig(double)>& configure,
                      const std::function<int(double)>& slots) {
  SweepResult out;
  out.name = std::move(name);
  out.parameter = std::move(parameter);
  out.variant = cfg.eval.variant;
  out.seeds = experiment_seeds(cfg);
  const PipelineVariant variant = parse_variant(cfg.eval.variant);
  const std::array<PipelineVariant, 1> variants{variant};
  const PipelineOptions opts = pipeline_options(cfg);
  const std::size_t n = out.seeds.size();
  std::vector<double> errors(values.size() * n);
  std::vector<RunConfig> configs;
  for (double v : values) configs.push_back(configure(v));
  parallel_for(errors.size(), cfg.threads, [&](std::size_t i) {
    const std::size_t row = i / n;
    const Scene scene = make_scene(configs[row], out.seeds[i % n]);
    errors[i] = evaluate_scene(scene, slots(values[row]), opts, &bank, variants).reports.at(variant).avg_mpjpe;
  });
  for (std::size_t r = 0; r < values.size(); ++r) {
    SweepRow row;
    row.parameter = values[r];
    row.per_seed.assign(errors.begin() + static_cast<std::ptrdiff_t>(r * n),
                        errors.begin() + static_cast<std::ptrdiff_t>((r + 1) * n));
    row.mean_mpjpe = mean_of(row.per_seed);
    out.rows.push_back(std::move(row));
  }
  char buf[160];
  for (std::size_t r = 1; r < out.rows.size(); ++r) {
    if (!(out.rows[r].mean_mpjpe >= out.rows[r - 1].mean_mpjpe)) {
      std::snprintf(buf, sizeof buf, "%s %g: %.4f < %s %g: %.4f", out.parameter.c_str(), out.rows[r].parameter,
                    out.rows[r].mean_mpjpe, out.parameter.c_str(), out.rows[r - 1].parameter,
                    out.rows[r - 1].mean_mpjpe);
      out.violations.emplace_back(buf);
    }
  }
  out.monotone = out.violations.empty();
  return out;
}

}  // namespace

SweepResult run_interval_sweep(const RunConfig& cfg, const WarperBank& bank) {
  std::vector<double> factors = cfg.eval.interval_factors;
  return run_sweep(
      cfg, bank, "interval_sweep", "interval_factor", factors,
      [&](double f) {
        RunConfig c = cfg;
        c.plan.interval_factor = f;
        return c;
      },
      [&](double) { return cfg.scene.frames; });
}

SweepResult run_window_sweep(const RunConfig& cfg, const WarperBank& bank) {
  std::vector<double> windows(cfg.eval.windows.begin(), cfg.eval.windows.end());
  const int m = cfg.rig.views;
  return run_sweep(
      cfg, bank, "window_sweep", "window", windows,
      [&](double x) {
        RunConfig c = cfg;
        const int w = static_cast<int>(x);
        if (w == m) {
          // Every slot used: the uniform plan at the same slot spacing.
          c.plan.mode = "uniform";
          c.plan.camera_rate = 1.0 / (m * cfg.plan.phase_step);
        } else {
          c.plan.mode = "non_uniform";
          c.plan.window = w;
        }
        return c;
      },
      // Same number of arrivals per sequence whatever the window.
      [&](double x) { return static_cast<int>(std::lround(cfg.scene.frames * x / m)); });
}

namespace {

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json numbers(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(number_or_null(x));
  return a;
}

Json config_echo(const RunConfig& cfg) { return Json::parse(config_to_json(cfg)); }

}  // namespace

std::string report_json(const EvalReport& r, const RunConfig& cfg) {
  Json j;
  j["variant"] = r.variant;
  j["units"] = "mm";
  j["pmpjpe_protocol"] = "per-frame similarity alignment (rotation, translation, uniform scale) minimizing mean joint distance";
  j["avg_mpjpe"] = number_or_null(r.avg_mpjpe);
  j["avg_pmpjpe"] = number_or_null(r.avg_pmpjpe);
  j["frames"] = r.frames;
  j["per_frame_mpjpe"] = numbers(r.per_frame_mpjpe);
  j["per_frame_pmpjpe"] = numbers(r.per_frame_pmpjpe);
  j["per_joint_mpjpe"] = numbers(r.per_joint_mpjpe);
  j["config"] = config_echo(cfg);
  return j.dump(2) + "\n";
}

std::string ablation_json(const AblationResult& r, const RunConfig& cfg) {
  Json j;
  j["experiment"] = "ablation";
  j["units"] = "mm";
  j["seeds"] = r.seeds;
  Json rows = Json::array();
  for (const VariantRow& row : r.rows) {
    rows.push_back({{"variant", std::string(to_string(row.variant))},
                    {"mean_mpjpe", number_or_null(row.mean_mpjpe)},
                    {"mean_pmpjpe", number_or_null(row.mean_pmpjpe)},
                    {"per_seed_mpjpe", numbers(row.per_seed)}});
  }
  j["rows"] = rows;
  j["ordering_holds"] = r.ordering_holds;
  j["violations"] = r.violations;
  j["oracle_not_lowest_seeds"] = r.oracle_not_lowest;
  j["config"] = config_echo(cfg);
  return j.dump(2) + "\n";
}

std::string ablation_text(const AblationResult& r) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-20s %12s %12s\n", "variant", "mpjpe_mm", "pmpjpe_mm");
  out << buf;
  for (const VariantRow& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%-20s %12.3f %12.3f\n", std::string(to_string(row.variant)).c_str(),
                  row.mean_mpjpe, row.mean_pmpjpe);
    out << buf;
  }
  out << "seeds: " << r.seeds.size() << "\n";
  out << "ordering: " << (r.ordering_holds ? "holds" : "VIOLATED") << "\n";
  for (const std::string& v : r.violations) out << "  " << v << "\n";
  if (!r.oracle_not_lowest.empty()) {
    out << "seeds where a sparse variant beat the dense oracle:";
    for (auto s : r.oracle_not_lowest) out << ' ' << s;
    out << "\n";
  }
  return out.str();
}

std::string sweep_json(const SweepResult& r, const RunConfig& cfg) {
  Json j;
  j["experiment"] = r.name;
  j["parameter"] = r.parameter;
  j["variant"] = r.variant;
  j["units"] = "mm";
  j["seeds"] = r.seeds;
  Json rows = Json::array();
  for (const SweepRow& row : r.rows) {
    rows.push_back({{r.parameter, row.parameter},
                    {"mean_mpjpe", number_or_null(row.mean_mpjpe)},
                    {"per_seed_mpjpe", numbers(row.per_seed)}});
  }
  j["rows"] = rows;
  j["monotone"] = r.monotone;
  j["violations"] = r.violations;
  j["config"] = config_echo(cfg);
  return j.dump(2) + "\n";
}

std::string sweep_text(const SweepResult& r) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-16s %12s\n", r.parameter.c_str(), "mpjpe_mm");
  out << buf;
  for (const SweepRow& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%-16g %12.3f\n", row.parameter, row.mean_mpjpe);
    out << buf;
  }
  out << "variant: " << r.variant << ", seeds: " << r.seeds.size() << "\n";
  out << "non-decreasing: " << (r.monotone ? "yes" : "NO") << "\n";
  for (const std::string& v : r.violations) out << "  " << v << "\n";
  return out.str();
}

std::string sweep_svg(const SweepResult& r) {
  const double w = 480.0;
  const double h = 320.0;
  const double left = 60.0;
  const double right = 20.0;
  const double top = 30.0;
  const double bottom = 50.0;
  double xmin = r.rows.empty() ? 0.0 : r.rows.front().parameter;
  double xmax = xmin;
  double ymax = 0.0;
  for (const SweepRow& row : r.rows) {
    xmin = std::min(xmin, row.parameter);
    xmax = std::max(xmax, row.parameter);
    if (std::isfinite(row.mean_mpjpe)) ymax = std::max(ymax, row.mean_mpjpe);
  }
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= 0.0) ymax = 1.0;
  ymax *= 1.1;
  const auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * (w - left - right); };
  const auto py = [&](double y) { return h - bottom - y / ymax * (h - top - bottom); };

  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" font-family=\"sans-serif\" "
                "font-size=\"12\">\n",
                w, h);
  out << buf;
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"18\" text-anchor=\"middle\">%s (%s)</text>\n", w / 2,
                r.name.c_str(), r.variant.c_str());
  out << buf;
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n"
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                left, h - bottom, w - right, h - bottom, left, top, left, h - bottom);
  out << buf;
  std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%s</text>\n", (left + w - right) / 2,
                h - 12, r.parameter.c_str());
  out << buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"16\" y=\"%.1f\" text-anchor=\"middle\" transform=\"rotate(-90 16 %.1f)\">MPJPE (mm)</text>\n",
                (top + h - bottom) / 2, (top + h - bottom) / 2);
  out << buf;
  for (int k = 0; k <= 4; ++k) {
    const double y = ymax * k / 4.0;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.1f</text>\n", left - 6,
                  py(y) + 4, y);
    out << buf;
  }
  std::string points;
  for (const SweepRow& row : r.rows) {
    if (!std::isfinite(row.mean_mpjpe)) continue;
    std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(row.parameter), py(row.mean_mpjpe));
    points += buf;
    std::snprintf(buf, sizeof buf,
                  "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"steelblue\"/>\n"
                  "<text x=\"%.2f\" y=\"%.1f\" text-anchor=\"middle\">%g</text>\n",
                  px(row.parameter), py(row.mean_mpjpe), px(row.parameter), h - bottom + 16, row.parameter);
    out << buf;
  }
  if (!points.empty()) points.pop_back();
  out << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"" << points << "\"/>\n";
  out << "</svg>\n";
  return out.str();
}

std::string ablation_svg(const AblationResult& r) {
  const double w = 480.0;
  const double h = 320.0;
  const double left = 60.0;
  const double bottom = 60.0;
  const double top = 30.0;
  double ymax = 0.0;
  for (const VariantRow& row : r.rows) {
    if (std::isfinite(row.mean_mpjpe)) ymax = std::max(ymax, row.mean_mpjpe);
  }
  if (ymax <= 0.0) ymax = 1.0;
  ymax *= 1.1;
  const double slot = (w - left - 20.0) / std::max<std::size_t>(r.rows.size(), 1);
  std::ostringstream out;
  char buf[320];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" font-family=\"sans-serif\" "
                "font-size=\"11\">\n<rect width=\"100%%\" height=\"100%%\" fill=\"white\"/>\n"
                "<text x=\"%.1f\" y=\"18\" text-anchor=\"middle\">ablation, %zu seeds</text>\n"
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                w, h, w / 2, r.seeds.size(), left, h - bottom, w - 20.0, h - bottom);
  out << buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"16\" y=\"%.1f\" text-anchor=\"middle\" transform=\"rotate(-90 16 %.1f)\">MPJPE (mm)</text>\n",
                (top + h - bottom) / 2, (top + h - bottom) / 2);
  out << buf;
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const VariantRow& row = r.rows[i];
    const double v = std::isfinite(row.mean_mpjpe) ? row.mean_mpjpe : 0.0;
    const double bh = v / ymax * (h - top - bottom);
    const double x = left + slot * static_cast<double>(i) + 0.15 * slot;
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"steelblue\"/>\n"
                  "<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"middle\">%.1f</text>\n"
                  "<text x=\"%.2f\" y=\"%.1f\" text-anchor=\"middle\">%s</text>\n",
                  x, h - bottom - bh, 0.7 * slot, bh, x + 0.35 * slot, h - bottom - bh - 4, v, x + 0.35 * slot,
                  h - bottom + 16, std::string(to_string(row.variant)).c_str());
    out << buf;
  }
  out << "</svg>\n";
  return out.str();
}

std::string training_json(const BankTraining& t, const RunConfig& cfg) {
  Json j;
  j["experiment"] = "train_warper";
  Json modes = Json::array();
  for (const auto& [mode, r] : t.results) {
    modes.push_back({{"mode", mode},
                     {"initial_loss", number_or_null(r.initial_loss)},
                     {"final_loss", number_or_null(r.final_loss)},
                     {"epoch_loss", numbers(r.epoch_loss)}});
  }
  j["modes"] = modes;
  j["config"] = config_echo(cfg);
  return j.dump(2) + "\n";
}

void write_skeleton_csv(std::ostream& out, const std::vector<Skeleton3D>& skeletons) {
  out << "frame,joint,x,y,z,residual\n";
  char buf[160];
  for (const Skeleton3D& s : skeletons) {
    for (std::size_t j = 0; j < s.joints.size(); ++j) {
      const double res = j < s.per_joint_residual.size() ? s.per_joint_residual[j] : 0.0;
      std::snprintf(buf, sizeof buf, "%d,%zu,%.9f,%.9f,%.9f,%.9g\n", s.frame, j, s.joints[j].x(), s.joints[j].y(),
                    s.joints[j].z(), res);
      out << buf;
    }
  }
}

}  // namespace densewarp
