#include "densewarp/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "densewarp/error.hpp"

namespace densewarp {

using Json = nlohmann::ordered_json;

namespace {

Json vec3_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::string sampling_name(LineSampling s) { return s == LineSampling::kBand ? "band" : "bilinear"; }

Json to_tree(const RunConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["output_dir"] = c.output_dir;
  j["scene"] = {
      {"joints", c.scene.motion.joints},
      {"sway_amplitude", c.scene.motion.sway_amplitude},
      {"limb_amplitude", c.scene.motion.limb_amplitude},
      {"frequency", c.scene.motion.frequency},
      {"box_min", vec3_json(c.scene.motion.box.min)},
      {"box_max", vec3_json(c.scene.motion.box.max)},
      {"frames", c.scene.frames},
      {"sigma", c.scene.sigma},
  };
  j["rig"] = {
      {"views", c.rig.views}, {"radius", c.rig.radius}, {"height", c.rig.height},
      {"look_at", vec3_json(c.rig.look_at)}, {"fx", c.rig.fx}, {"fy", c.rig.fy}, {"cx", c.rig.cx}, {"cy", c.rig.cy},
      {"width", c.rig.width}, {"image_height", c.rig.image_height},
  };
  j["plan"] = {
      {"mode", c.plan.mode},
      {"camera_rate", c.plan.camera_rate},
      {"phase_step", c.plan.phase_step},
      {"window", c.plan.window},
      {"interval_factor", c.plan.interval_factor},
  };
  j["noise"] = {{"peak_jitter_px", c.noise.peak_jitter_px}, {"dropout_prob", c.noise.dropout_prob}};
  j["fusion"] = {
      {"lambda", c.fusion.lambda},
      {"line_step", c.fusion.line_step},
      {"sampling", sampling_name(c.fusion.sampling)},
      {"include_self", c.fusion.include_self},
      {"coarse_to_fine", c.fusion.coarse_to_fine},
      {"coarse_radius", c.fusion.coarse_radius},
  };
  j["warper"] = {
      {"optimizer", c.warper.hyper.optimizer == Optimizer::kAdam ? "adam" : "sgd"},
      {"channels", c.warper.hyper.channels},
      {"learning_rate", c.warper.hyper.learning_rate},
      {"epochs", c.warper.hyper.epochs},
      {"batch", c.warper.hyper.batch},
      {"momentum", c.warper.hyper.momentum},
      {"init_seed", c.warper.hyper.seed},
      {"train_scenes", c.warper.train_scenes},
      {"train_seed", c.warper.train_seed},
      {"weights_dir", c.warper.weights_dir},
  };
  j["eval"] = {
      {"variant", c.eval.variant},
      {"seeds", c.eval.seeds},
      {"interval_factors", c.eval.interval_factors},
      {"windows", c.eval.windows},
      {"weight_floor", c.eval.weight_floor},
      {"gn_iterations", c.eval.gn_iterations},
      {"plots", c.eval.plots},
  };
  return j;
}

// Reads one leaf, reporting type errors against its dotted key.
template <typename T, typename Fn>
void read_leaf(const Json& tree, const std::string& section, const std::string& key, Fn&& assign) {
  const Json& node = section.empty() ? tree.at(key) : tree.at(section).at(key);
  const std::string name = section.empty() ? key : section + "." + key;
  try {
    if constexpr (std::is_same_v<T, Vec3>) {
      assign(vec3_from(node));
    } else {
      if constexpr (std::is_unsigned_v<T>) {
        if (node.is_number_integer() && node.get<long long>() < 0) throw std::invalid_argument("must be >= 0");
      }
      if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!node.is_number_integer()) throw std::invalid_argument("expected an integer");
      }
      assign(node.get<T>());
    }
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kBadConfig, name + ": " + e.what());
  }
}

RunConfig from_tree(const Json& t) {
  RunConfig c;
  read_leaf<std::uint64_t>(t, "", "seed", [&](auto v) { c.seed = v; });
  read_leaf<int>(t, "", "threads", [&](auto v) { c.threads = v; });
  read_leaf<std::string>(t, "", "output_dir", [&](auto v) { c.output_dir = v; });

  read_leaf<int>(t, "scene", "joints", [&](auto v) { c.scene.motion.joints = v; });
  read_leaf<double>(t, "scene", "sway_amplitude", [&](auto v) { c.scene.motion.sway_amplitude = v; });
  read_leaf<double>(t, "scene", "limb_amplitude", [&](auto v) { c.scene.motion.limb_amplitude = v; });
  read_leaf<double>(t, "scene", "frequency", [&](auto v) { c.scene.motion.frequency = v; });
  read_leaf<Vec3>(t, "scene", "box_min", [&](auto v) { c.scene.motion.box.min = v; });
  read_leaf<Vec3>(t, "scene", "box_max", [&](auto v) { c.scene.motion.box.max = v; });
  read_leaf<int>(t, "scene", "frames", [&](auto v) { c.scene.frames = v; });
  read_leaf<double>(t, "scene", "sigma", [&](auto v) { c.scene.sigma = v; });

  read_leaf<int>(t, "rig", "views", [&](auto v) { c.rig.views = v; });
  read_leaf<double>(t, "rig", "radius", [&](auto v) { c.rig.radius = v; });
  read_leaf<double>(t, "rig", "height", [&](auto v) { c.rig.height = v; });
  read_leaf<Vec3>(t, "rig", "look_at", [&](auto v) { c.rig.look_at = v; });
  read_leaf<double>(t, "rig", "fx", [&](auto v) { c.rig.fx = v; });
  read_leaf<double>(t, "rig", "fy", [&](auto v) { c.rig.fy = v; });
  read_leaf<double>(t, "rig", "cx", [&](auto v) { c.rig.cx = v; });
  read_leaf<double>(t, "rig", "cy", [&](auto v) { c.rig.cy = v; });
  read_leaf<int>(t, "rig", "width", [&](auto v) { c.rig.width = v; });
  read_leaf<int>(t, "rig", "image_height", [&](auto v) { c.rig.image_height = v; });

  read_leaf<std::string>(t, "plan", "mode", [&](auto v) { c.plan.mode = v; });
  read_leaf<double>(t, "plan", "camera_rate", [&](auto v) { c.plan.camera_rate = v; });
  read_leaf<double>(t, "plan", "phase_step", [&](auto v) { c.plan.phase_step = v; });
  read_leaf<int>(t, "plan", "window", [&](auto v) { c.plan.window = v; });
  read_leaf<double>(t, "plan", "interval_factor", [&](auto v) { c.plan.interval_factor = v; });

  read_leaf<double>(t, "noise", "peak_jitter_px", [&](auto v) { c.noise.peak_jitter_px = v; });
  read_leaf<double>(t, "noise", "dropout_prob", [&](auto v) { c.noise.dropout_prob = v; });

  read_leaf<double>(t, "fusion", "lambda", [&](auto v) { c.fusion.lambda = v; });
  read_leaf<double>(t, "fusion", "line_step", [&](auto v) { c.fusion.line_step = v; });
  read_leaf<std::string>(t, "fusion", "sampling", [&](const std::string& v) {
    if (v == "bilinear") {
      c.fusion.sampling = LineSampling::kBilinear;
    } else if (v == "band") {
      c.fusion.sampling = LineSampling::kBand;
    } else {
      throw std::invalid_argument("expected \"bilinear\" or \"band\"");
    }
  });
  read_leaf<bool>(t, "fusion", "include_self", [&](auto v) { c.fusion.include_self = v; });
  read_leaf<bool>(t, "fusion", "coarse_to_fine", [&](auto v) { c.fusion.coarse_to_fine = v; });
  read_leaf<double>(t, "fusion", "coarse_radius", [&](auto v) { c.fusion.coarse_radius = v; });

  read_leaf<std::string>(t, "warper", "optimizer", [&](const std::string& v) {
    if (v == "sgd") {
      c.warper.hyper.optimizer = Optimizer::kSgd;
    } else if (v == "adam") {
      c.warper.hyper.optimizer = Optimizer::kAdam;
    } else {
      throw std::invalid_argument("expected \"sgd\" or \"adam\"");
    }
  });
  read_leaf<int>(t, "warper", "channels", [&](auto v) { c.warper.hyper.channels = v; });
  read_leaf<double>(t, "warper", "learning_rate", [&](auto v) { c.warper.hyper.learning_rate = v; });
  read_leaf<int>(t, "warper", "epochs", [&](auto v) { c.warper.hyper.epochs = v; });
  read_leaf<int>(t, "warper", "batch", [&](auto v) { c.warper.hyper.batch = v; });
  read_leaf<double>(t, "warper", "momentum", [&](auto v) { c.warper.hyper.momentum = v; });
  read_leaf<std::uint64_t>(t, "warper", "init_seed", [&](auto v) { c.warper.hyper.seed = v; });
  read_leaf<int>(t, "warper", "train_scenes", [&](auto v) { c.warper.train_scenes = v; });
  read_leaf<std::uint64_t>(t, "warper", "train_seed", [&](auto v) { c.warper.train_seed = v; });
  read_leaf<std::string>(t, "warper", "weights_dir", [&](auto v) { c.warper.weights_dir = v; });

  read_leaf<std::string>(t, "eval", "variant", [&](auto v) { c.eval.variant = v; });
  read_leaf<int>(t, "eval", "seeds", [&](auto v) { c.eval.seeds = v; });
  read_leaf<std::vector<double>>(t, "eval", "interval_factors", [&](auto v) { c.eval.interval_factors = v; });
  read_leaf<std::vector<int>>(t, "eval", "windows", [&](auto v) { c.eval.windows = v; });
  read_leaf<double>(t, "eval", "weight_floor", [&](auto v) { c.eval.weight_floor = v; });
  read_leaf<int>(t, "eval", "gn_iterations", [&](auto v) { c.eval.gn_iterations = v; });
  read_leaf<bool>(t, "eval", "plots", [&](auto v) { c.eval.plots = v; });
  return c;
}

bool same_kind(const Json& a, const Json& b) {
  if (a.is_number() && b.is_number()) return true;
  return a.type() == b.type();
}

// Overlays `src` onto `dst`, which holds the defaults and defines the key set.
void merge(Json& dst, const Json& src, const std::string& prefix) {
  if (!src.is_object()) throw Error(ErrorCode::kBadConfig, (prefix.empty() ? "config" : prefix) + ": expected an object");
  for (const auto& [key, value] : src.items()) {
    const std::string name = prefix.empty() ? key : prefix + "." + key;
    if (!dst.contains(key)) throw Error(ErrorCode::kBadConfig, "unknown key " + name);
    Json& slot = dst[key];
    if (slot.is_object()) {
      merge(slot, value, name);
    } else {
      if (!same_kind(slot, value)) throw Error(ErrorCode::kBadConfig, name + ": wrong value type");
      slot = value;
    }
  }
}

void collect_keys(const Json& j, const std::string& prefix, std::vector<std::string>& out) {
  for (const auto& [key, value] : j.items()) {
    const std::string name = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object()) {
      collect_keys(value, name, out);
    } else {
      out.push_back(name);
    }
  }
}

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorCode::kBadConfig, message);
}

}  // namespace

void RunConfig::validate() const {
  require(threads >= 0, "threads must be >= 0");
  require(!output_dir.empty(), "output_dir must not be empty");
  const MotionSpec& m = scene.motion;
  require(m.joints >= 1 && m.joints <= kSkeletonJoints, "scene.joints must be in [1, 17]");
  require(m.sway_amplitude >= 0.0, "scene.sway_amplitude must be >= 0");
  require(m.limb_amplitude >= 0.0, "scene.limb_amplitude must be >= 0");
  require(m.frequency >= 0.0 && std::isfinite(m.frequency), "scene.frequency must be >= 0");
  require((m.box.min.array() < m.box.max.array()).all(), "scene.box_min must be below scene.box_max");
  require(scene.frames >= rig.views, "scene.frames must be >= rig.views");
  require(scene.sigma > 0.0 && std::isfinite(scene.sigma), "scene.sigma must be > 0");
  rig.validate();
  require(plan.mode == "uniform" || plan.mode == "non_uniform", "plan.mode must be uniform or non_uniform");
  require(plan.camera_rate > 0.0, "plan.camera_rate must be > 0");
  require(plan.phase_step > 0.0, "plan.phase_step must be > 0");
  require(plan.mode == "uniform" || plan.window > rig.views, "plan.window must exceed rig.views");
  require(plan.interval_factor > 0.0, "plan.interval_factor must be > 0");
  noise.validate();
  fusion.validate();
  const TrainHyper& h = warper.hyper;
  require(h.channels >= 1 && h.channels <= 1024, "warper.channels must be in [1, 1024]");
  require(h.learning_rate >= 0.0 && std::isfinite(h.learning_rate), "warper.learning_rate must be >= 0");
  require(h.epochs >= 0, "warper.epochs must be >= 0");
  require(h.batch >= 1, "warper.batch must be >= 1");
  require(h.momentum >= 0.0 && h.momentum < 1.0, "warper.momentum must be in [0, 1)");
  require(warper.train_scenes >= 1, "warper.train_scenes must be >= 1");
  require(eval.variant == "replicate_only" || eval.variant == "spatial_fusion" ||
              eval.variant == "fusion_plus_warper" || eval.variant == "dense_oracle",
          "eval.variant must be one of replicate_only, spatial_fusion, fusion_plus_warper, dense_oracle");
  require(eval.seeds >= 1, "eval.seeds must be >= 1");
  require(!eval.interval_factors.empty(), "eval.interval_factors must not be empty");
  for (double f : eval.interval_factors) require(f > 0.0, "eval.interval_factors entries must be > 0");
  require(!eval.windows.empty(), "eval.windows must not be empty");
  for (int x : eval.windows) require(x >= rig.views, "eval.windows entries must be >= rig.views");
  require(eval.weight_floor >= 0.0 && eval.weight_floor < 1.0, "eval.weight_floor must be in [0, 1)");
  require(eval.gn_iterations >= 0, "eval.gn_iterations must be >= 0");
}

std::string config_to_json(const RunConfig& cfg) { return to_tree(cfg).dump(2) + "\n"; }

RunConfig config_from_json(const std::string& text) {
  Json user;
  try {
    user = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::kBadConfig, std::string("config is not valid JSON: ") + e.what());
  }
  Json tree = to_tree(RunConfig{});
  merge(tree, user, "");
  RunConfig cfg = from_tree(tree);
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot open config " + path.string());
  std::ostringstream text;
  text << f.rdbuf();
  return config_from_json(text.str());
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  collect_keys(to_tree(RunConfig{}), "", out);
  return out;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  Json tree = to_tree(cfg);
  Json* node = &tree;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw Error(ErrorCode::kBadConfig, "unknown key " + key);
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) throw Error(ErrorCode::kBadConfig, key + " is a section, not a value");
  Json parsed;
  if (node->is_string()) {
    parsed = value;
  } else {
    try {
      parsed = Json::parse(value);
    } catch (const Json::parse_error&) {
      throw Error(ErrorCode::kBadConfig, key + ": cannot parse '" + value + "'");
    }
  }
  if (!same_kind(*node, parsed)) throw Error(ErrorCode::kBadConfig, key + ": wrong value type");
  *node = parsed;
  cfg = from_tree(tree);
}

void apply_seed_override(RunConfig& cfg) {
  const char* env = std::getenv("DENSEWARP_SEED");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (end == env || *end != '\0' || env[0] == '-') {
    throw Error(ErrorCode::kBadConfig, std::string("DENSEWARP_SEED is not a non-negative integer: ") + env);
  }
  cfg.seed = v;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the pair.
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + stream + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

SamplingPlan make_plan(const RunConfig& cfg, std::uint64_t seed) {
  SamplingPlan p = cfg.plan.mode == "uniform"
                       ? SamplingPlan::uniform(cfg.rig.views, cfg.plan.camera_rate)
                       : SamplingPlan::non_uniform(cfg.rig.views, cfg.plan.window, cfg.plan.phase_step,
                                                   derive_seed(seed, 3));
  return p.with_interval_factor(cfg.plan.interval_factor);
}

Scene make_scene(const RunConfig& cfg, std::uint64_t seed) {
  NoiseSpec noise = cfg.noise;
  noise.seed = derive_seed(seed, 2);
  return Scene(make_motion(cfg.scene.motion, derive_seed(seed, 1)), build_rig(cfg.rig), make_plan(cfg, seed),
               cfg.scene.sigma, noise);
}

}  // namespace densewarp
