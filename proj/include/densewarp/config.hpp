#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "densewarp/fusion.hpp"
#include "densewarp/scheduler.hpp"
#include "densewarp/synth.hpp"
#include "densewarp/warper.hpp"

namespace densewarp {

struct SceneConfig {
  MotionSpec motion;
  int frames = 48;     // frame slots per sequence
  double sigma = 2.0;  // px
};

struct PlanConfig {
  std::string mode = "uniform";  // uniform | non_uniform
  double camera_rate = 12.5;     // Hz, uniform mode
  double phase_step = 0.02;      // s, non-uniform mode
  int window = 6;                // slots per cycle, non-uniform mode
  double interval_factor = 1.0;
};

struct WarperConfig {
  TrainHyper hyper{Optimizer::kAdam, 0.001, 10, 4, 0.9, 1, 16};
  int train_scenes = 4;
  std::uint64_t train_seed = 1000;  // training scenes use train_seed, train_seed + 1, ...
  std::string weights_dir;          // empty: train in memory when needed
};

struct EvalConfig {
  std::string variant = "fusion_plus_warper";
  int seeds = 20;
  std::vector<double> interval_factors{1.0, 6.0, 12.0};
  std::vector<int> windows{4, 6, 10, 12};
  double weight_floor = 1e-3;
  int gn_iterations = 20;
  bool plots = true;
};

struct RunConfig {
  std::uint64_t seed = 1;
  int threads = 0;  // 0: machine parallelism
  std::string output_dir = "out";
  SceneConfig scene;
  RigSpec rig;
  PlanConfig plan;
  NoiseSpec noise{0.3, 0.0, 0};
  FusionConfig fusion;
  WarperConfig warper;
  EvalConfig eval;

  // Throws kBadConfig naming the offending key.
  void validate() const;
};

// The config dialect is JSON. Every key is optional; missing keys keep their
// defaults, unknown keys are rejected.
std::string config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

// Dotted leaf keys ("fusion.lambda", ...) in document order.
std::vector<std::string> config_keys();
// Sets one leaf from text: a JSON literal, or a bare string.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

// Replaces cfg.seed with DENSEWARP_SEED when that variable is set.
void apply_seed_override(RunConfig& cfg);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

SamplingPlan make_plan(const RunConfig& cfg, std::uint64_t seed);
Scene make_scene(const RunConfig& cfg, std::uint64_t seed);

}  // namespace densewarp
