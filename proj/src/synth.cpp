#include "densewarp/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "densewarp/error.hpp"
#include "densewarp/parallel.hpp"

namespace densewarp {

const std::vector<Vec3>& rest_skeleton() {
  static const std::vector<Vec3> pose = {
      {0.0, 0.0, 0.95},     {-0.12, 0.0, 0.93},  {-0.13, 0.03, 0.52}, {-0.14, 0.0, 0.10},  {0.12, 0.0, 0.93},
      {0.13, 0.03, 0.52},   {0.14, 0.0, 0.10},   {0.0, -0.01, 1.18},  {0.0, 0.0, 1.42},    {0.0, 0.01, 1.52},
      {0.0, 0.03, 1.65},    {0.18, 0.0, 1.42},   {0.30, 0.04, 1.17},  {0.36, 0.10, 0.94},  {-0.18, 0.0, 1.42},
      {-0.30, 0.04, 1.17},  {-0.36, 0.10, 0.94},
  };
  return pose;
}

std::vector<Vec3> Box3::corners() const {
  std::vector<Vec3> out;
  for (int i = 0; i < 8; ++i) {
    out.emplace_back((i & 1) ? max.x() : min.x(), (i & 2) ? max.y() : min.y(), (i & 4) ? max.z() : min.z());
  }
  return out;
}

void MotionModel::validate() const {
  const std::size_t j = base_pose.size();
  if (j == 0) throw Error(ErrorCode::kBadConfig, "motion: no joints");
  if (amplitude.size() != j || frequency.size() != j || phase.size() != j) {
    throw Error(ErrorCode::kBadConfig, "motion: per-joint arrays disagree in length");
  }
  for (std::size_t k = 0; k < j; ++k) {
    if (!base_pose[k].allFinite() || !amplitude[k].allFinite() || !std::isfinite(frequency[k]) ||
        !std::isfinite(phase[k])) {
      throw Error(ErrorCode::kNonFinite, "motion: joint " + std::to_string(k));
    }
    if ((amplitude[k].array() < 0.0).any()) throw Error(ErrorCode::kBadConfig, "motion: negative amplitude");
    if (frequency[k] < 0.0) throw Error(ErrorCode::kBadConfig, "motion: negative frequency");
    if (!box.contains(base_pose[k] + amplitude[k]) || !box.contains(base_pose[k] - amplitude[k])) {
      throw Error(ErrorCode::kOutOfBounds, "motion envelope of joint " + std::to_string(k) + " leaves the box");
    }
  }
}

MotionModel make_motion(const MotionSpec& spec, std::uint64_t seed) {
  if (spec.joints < 1 || spec.joints > kSkeletonJoints) {
    throw Error(ErrorCode::kBadConfig, "scene.joints must be in [1, 17]");
  }
  if (!(spec.sway_amplitude >= 0.0) || !(spec.limb_amplitude >= 0.0)) {
    throw Error(ErrorCode::kBadConfig, "scene.sway_amplitude and scene.limb_amplitude must be >= 0");
  }
  if (!(spec.frequency >= 0.0) || !std::isfinite(spec.frequency)) {
    throw Error(ErrorCode::kBadConfig, "scene.frequency must be >= 0");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double heading = 0.5 * std::numbers::pi * unit(rng);
  const double freq = spec.frequency * (0.8 + 0.4 * unit(rng));
  const double phase = 2.0 * std::numbers::pi * unit(rng);
  const Vec3 dir(std::cos(heading), std::sin(heading), 0.0);

  MotionModel m;
  m.box = spec.box;
  m.seed = seed;
  const auto& rest = rest_skeleton();
  for (int j = 0; j < spec.joints; ++j) {
    const Vec3& b = rest[static_cast<std::size_t>(j)];
    const double lean = 0.4 + 0.6 * b.z() / 1.65;
    const Vec3 limb(unit(rng), unit(rng), 0.5 * unit(rng));
    m.base_pose.push_back(b);
    m.amplitude.push_back(spec.sway_amplitude * lean * dir + spec.limb_amplitude * limb);
    m.frequency.push_back(freq);
    m.phase.push_back(phase + 0.3 * (unit(rng) - 0.5));
  }
  m.validate();
  return m;
}

std::vector<Vec3> pose_at(const MotionModel& model, double t) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw Error(ErrorCode::kBadConfig, "pose_at needs t >= 0");
  std::vector<Vec3> out(model.base_pose.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    const double s = std::sin(2.0 * std::numbers::pi * model.frequency[j] * t + model.phase[j]);
    out[j] = model.base_pose[j] + model.amplitude[j] * s;
    if (!model.box.contains(out[j])) {
      throw Error(ErrorCode::kOutOfBounds, "joint " + std::to_string(j) + " leaves the box at t=" + std::to_string(t));
    }
  }
  return out;
}

void RigSpec::validate() const {
  if (views < 2) throw Error(ErrorCode::kBadConfig, "rig.views must be >= 2");
  if (!(radius > 0.0) || !std::isfinite(radius)) throw Error(ErrorCode::kBadConfig, "rig.radius must be > 0");
  if (!std::isfinite(height) || !look_at.allFinite()) throw Error(ErrorCode::kBadConfig, "rig.look_at must be finite");
  if (!(fx > 0.0) || !(fy > 0.0)) throw Error(ErrorCode::kBadConfig, "rig.fx and rig.fy must be > 0");
  if (width < 1 || image_height < 1) throw Error(ErrorCode::kBadConfig, "rig.width and rig.height must be >= 1");
  if (!std::isfinite(cx) || !std::isfinite(cy)) throw Error(ErrorCode::kBadConfig, "rig.cx and rig.cy must be finite");
}

Rig build_rig(const RigSpec& spec) {
  spec.validate();
  Rig rig;
  for (int j = 0; j < spec.views; ++j) {
    const double a = 2.0 * std::numbers::pi * j / spec.views;
    const Vec3 centre(spec.radius * std::cos(a), spec.radius * std::sin(a), spec.height);
    const Vec3 axis = spec.look_at - centre;
    if (axis.norm() < 1e-9) throw Error(ErrorCode::kLookAtDegenerate, "camera " + std::to_string(j) + " sits at look_at");
    const Vec3 forward = axis.normalized();
    const Vec3 side = forward.cross(Vec3::UnitZ());
    if (side.norm() < 1e-9) {
      throw Error(ErrorCode::kLookAtDegenerate, "camera " + std::to_string(j) + " looks straight up or down");
    }
    const Vec3 right = side.normalized();
    CameraView cam;
    cam.id = j;
    cam.rotation.row(0) = right;
    cam.rotation.row(1) = forward.cross(right);
    cam.rotation.row(2) = forward;
    cam.translation = -cam.rotation * centre;
    cam.intrinsics << spec.fx, 0.0, spec.cx, 0.0, spec.fy, spec.cy, 0.0, 0.0, 1.0;
    cam.width = spec.width;
    cam.height = spec.image_height;
    cam.validate();
    rig.push_back(cam);
  }
  return rig;
}

void check_coverage(const Rig& rig, const Box3& box) {
  for (const CameraView& cam : rig) {
    for (const Vec3& c : box.corners()) {
      const bool in_front = cam.depth(c) > 1e-9;
      const Vec2 q = in_front ? project_point(cam, c) : Vec2(-1.0, -1.0);
      if (!in_front || q.x() < 0.0 || q.y() < 0.0 || q.x() > cam.width - 1 || q.y() > cam.height - 1) {
        throw Error(ErrorCode::kOutOfBounds, "camera " + std::to_string(cam.id) + " does not see the whole box");
      }
    }
  }
}

void NoiseSpec::validate() const {
  if (!(peak_jitter_px >= 0.0) || !std::isfinite(peak_jitter_px)) {
    throw Error(ErrorCode::kBadConfig, "noise.peak_jitter_px must be >= 0");
  }
  if (!(dropout_prob >= 0.0 && dropout_prob <= 1.0)) {
    throw Error(ErrorCode::kBadConfig, "noise.dropout_prob must be in [0, 1]");
  }
}

Scene::Scene(MotionModel motion, Rig rig, SamplingPlan plan, double sigma_px, NoiseSpec noise)
    : motion_(std::move(motion)), rig_(std::move(rig)), plan_(plan), sigma_(sigma_px), noise_(noise) {
  motion_.validate();
  plan_.validate();
  noise_.validate();
  if (!(sigma_ > 0.0) || !std::isfinite(sigma_)) throw Error(ErrorCode::kBadConfig, "synth.sigma must be > 0");
  if (static_cast<int>(rig_.size()) != plan_.views) {
    throw Error(ErrorCode::kRigMismatch, "rig has " + std::to_string(rig_.size()) + " cameras, plan expects " +
                                             std::to_string(plan_.views));
  }
  check_coverage(rig_, motion_.box);
}

Skeleton3D Scene::truth(int frame) const {
  Skeleton3D s;
  s.frame = frame;
  s.joints = pose_at(motion_, time_of(frame));
  s.per_joint_residual.assign(s.joints.size(), 0.0);
  return s;
}

std::vector<Vec2> Scene::truth_2d(int view, int frame) const {
  const CameraView& cam = rig_.at(static_cast<std::size_t>(view));
  std::vector<Vec2> out;
  for (const Vec3& p : pose_at(motion_, time_of(frame))) out.push_back(project_point(cam, p));
  return out;
}

Heatmap Scene::observe(int view, int frame) const {
  const CameraView& cam = rig_.at(static_cast<std::size_t>(view));
  std::seed_seq seq{static_cast<std::uint32_t>(noise_.seed), static_cast<std::uint32_t>(noise_.seed >> 32),
                    static_cast<std::uint32_t>(view), static_cast<std::uint32_t>(frame)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> jitter(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Keypoint2D> kps;
  const std::vector<Vec2> truth = truth_2d(view, frame);
  for (int j = 0; j < joints(); ++j) {
    // Draw every variate regardless of settings so streams stay aligned.
    const Vec2 offset(jitter(rng), jitter(rng));
    const double u = unit(rng);
    Keypoint2D k;
    k.joint = j;
    k.position = truth[static_cast<std::size_t>(j)] + noise_.peak_jitter_px * offset;
    k.confidence = u < noise_.dropout_prob ? 0.0 : 1.0;
    kps.push_back(k);
  }
  return render_gaussian(kps, cam.width, cam.height, sigma_, view, frame).quantized();
}

Heatmap Scene::clean(int view, int frame) const {
  const CameraView& cam = rig_.at(static_cast<std::size_t>(view));
  std::vector<Keypoint2D> kps;
  const std::vector<Vec2> truth = truth_2d(view, frame);
  for (int j = 0; j < joints(); ++j) kps.push_back({j, truth[static_cast<std::size_t>(j)], 1.0});
  return render_gaussian(kps, cam.width, cam.height, sigma_, view, frame);
}

Sequence sample_sequence(const Scene& scene, double duration, int threads) {
  Sequence seq;
  seq.samples = generate_plan_times(scene.plan(), duration);
  seq.heatmaps.resize(seq.samples.size());
  parallel_for(seq.samples.size(), threads, [&](std::size_t i) {
    seq.heatmaps[i] = scene.observe(seq.samples[i].view, seq.samples[i].frame);
  });
  const int last = seq.samples.empty() ? 0 : seq.samples.back().frame;
  seq.truth.resize(static_cast<std::size_t>(last));
  parallel_for(seq.truth.size(), threads, [&](std::size_t i) { seq.truth[i] = scene.truth(static_cast<int>(i) + 1); });
  return seq;
}

void write_truth_csv(std::ostream& out, const std::vector<Skeleton3D>& truth) {
  out << "frame,joint,x,y,z\n";
  char buf[128];
  for (const Skeleton3D& s : truth) {
    for (std::size_t j = 0; j < s.joints.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%d,%zu,%.9f,%.9f,%.9f\n", s.frame, j, s.joints[j].x(), s.joints[j].y(),
                    s.joints[j].z());
      out << buf;
    }
  }
}

void write_rig(std::ostream& out, const Rig& rig) {
  out << "# id width height K(9) R(9) t(3)\n";
  char buf[32];
  for (const CameraView& cam : rig) {
    out << cam.id << ' ' << cam.width << ' ' << cam.height;
    const auto put = [&](double v) {
      std::snprintf(buf, sizeof buf, " %.17g", v);
      out << buf;
    };
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) put(cam.intrinsics(r, c));
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) put(cam.rotation(r, c));
    for (int r = 0; r < 3; ++r) put(cam.translation(r));
    out << '\n';
  }
}

Rig read_rig(std::istream& in) {
  Rig rig;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream s(line);
    CameraView cam;
    s >> cam.id >> cam.width >> cam.height;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) s >> cam.intrinsics(r, c);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) s >> cam.rotation(r, c);
    for (int r = 0; r < 3; ++r) s >> cam.translation(r);
    if (!s) throw Error(ErrorCode::kFormat, "malformed rig line: " + line);
    cam.validate();
    rig.push_back(cam);
  }
  if (rig.empty()) throw Error(ErrorCode::kFormat, "rig file has no cameras");
  return rig;
}

void write_rig_file(const std::filesystem::path& path, const Rig& rig) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  write_rig(f, rig);
  if (!f) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

Rig read_rig_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return read_rig(f);
}

}  // namespace densewarp
