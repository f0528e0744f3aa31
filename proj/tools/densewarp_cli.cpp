// densewarp command-line tool: synth, run, train-warper, experiment, inspect.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "densewarp/config.hpp"
#include "densewarp/error.hpp"
#include "densewarp/eval.hpp"
#include "densewarp/heatmap.hpp"
#include "densewarp/parallel.hpp"
#include "densewarp/scheduler.hpp"
#include "densewarp/synth.hpp"

namespace fs = std::filesystem;
using namespace densewarp;

namespace {

enum Exit { kOk = 0, kExitIo = 1, kExitConfig = 2, kExitOrder = 3, kExitStrict = 4 };

int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::kBadConfig:
    case ErrorCode::kBadPlan:
    case ErrorCode::kOutOfBounds:
    case ErrorCode::kLookAtDegenerate:
    case ErrorCode::kRigMismatch:
    case ErrorCode::kModeMismatch:
      return kExitConfig;
    case ErrorCode::kOutOfOrderArrival:
      return kExitOrder;
    default:
      return kExitIo;
  }
}

// Config resolution: defaults, then --config, then DENSEWARP_SEED, then one
// flag per config key.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config file (every key optional)")->check(CLI::ExistingFile);
    for (const std::string& key : config_keys()) {
      app->add_option("--" + key, values[key], "config key " + key);
    }
  }

  RunConfig resolve(const CLI::App* app) const {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    apply_seed_override(cfg);
    for (const std::string& key : config_keys()) {
      if (app->count("--" + key) > 0) set_config_value(cfg, key, values.at(key));
    }
    cfg.validate();
    if (cfg.threads > 0) set_thread_limit(cfg.threads);
    return cfg;
  }
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  f << text;
  if (!f) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

template <typename Fn>
void write_with(const fs::path& path, Fn fn) {
  std::ostringstream s;
  fn(s);
  write_text(path, s.str());
}

std::string heatmap_name(int view, int frame) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "v%d_f%05d.dwhm", view, frame);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream s(line);
  std::string cell;
  while (std::getline(s, cell, ',')) out.push_back(cell);
  return out;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path, const std::string& header) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line) || line != header) {
    throw Error(ErrorCode::kFormat, path.string() + ": expected header '" + header + "'");
  }
  std::vector<std::vector<std::string>> rows;
  const std::size_t cols = split_csv(header).size();
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto row = split_csv(line);
    if (row.size() != cols) throw Error(ErrorCode::kFormat, path.string() + ": bad row '" + line + "'");
    rows.push_back(std::move(row));
  }
  return rows;
}

double to_double(const std::string& s, const fs::path& path) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw Error(ErrorCode::kFormat, path.string() + ": bad number '" + s + "'");
  return v;
}

int to_int(const std::string& s, const fs::path& path) {
  const double v = to_double(s, path);
  if (v != static_cast<int>(v)) throw Error(ErrorCode::kFormat, path.string() + ": bad integer '" + s + "'");
  return static_cast<int>(v);
}

std::map<int, Skeleton3D> read_truth_csv(const fs::path& path) {
  std::map<int, Skeleton3D> out;
  for (const auto& row : read_csv(path, "frame,joint,x,y,z")) {
    const int frame = to_int(row[0], path);
    const int joint = to_int(row[1], path);
    Skeleton3D& s = out[frame];
    s.frame = frame;
    if (joint != static_cast<int>(s.joints.size())) throw Error(ErrorCode::kFormat, path.string() + ": joints out of order");
    s.joints.emplace_back(to_double(row[2], path), to_double(row[3], path), to_double(row[4], path));
  }
  return out;
}

// ---- synth

struct SynthOptions {
  bool dense = false;
};

int cmd_synth(const RunConfig& cfg, const SynthOptions& opt) {
  const Scene scene = make_scene(cfg, cfg.seed);
  const fs::path out(cfg.output_dir);
  ensure_dir(out / "heatmaps");
  const SamplingPlan& plan = scene.plan();
  const double duration = cfg.scene.frames * plan.phase_step - 0.5 * plan.phase_step;
  const Sequence seq = sample_sequence(scene, duration, cfg.threads);

  std::ostringstream arrivals;
  arrivals << "view,frame,timestamp_s,file\n";
  for (std::size_t i = 0; i < seq.samples.size(); ++i) {
    const PlannedSample& s = seq.samples[i];
    const std::string name = heatmap_name(s.view, s.frame);
    write_heatmap_file(out / "heatmaps" / name, seq.heatmaps[i]);
    char buf[128];
    std::snprintf(buf, sizeof buf, "%d,%d,%.9f,heatmaps/%s\n", s.view, s.frame, s.timestamp, name.c_str());
    arrivals << buf;
  }
  write_text(out / "arrivals.csv", arrivals.str());
  if (opt.dense) {
    ensure_dir(out / "dense");
    for (const Skeleton3D& t : seq.truth) {
      for (int v = 0; v < scene.views(); ++v) {
        write_heatmap_file(out / "dense" / heatmap_name(v, t.frame), scene.observe(v, t.frame));
      }
    }
  }
  write_with(out / "truth.csv", [&](std::ostream& s) { write_truth_csv(s, seq.truth); });
  write_rig_file(out / "rig.txt", scene.rig());
  write_text(out / "config.json", config_to_json(cfg));
  std::printf("synth: %zu arrivals over %zu frames, %d views%s -> %s\n", seq.samples.size(), seq.truth.size(),
              scene.views(), opt.dense ? " (+dense)" : "", out.string().c_str());
  return kOk;
}

// ---- run

struct RunOptions {
  std::string input;
  bool synth = false;
};

// Keeps the scene or the loaded files alive for the StreamSource callbacks.
struct LoadedInput {
  std::optional<Scene> scene;
  std::map<int, Skeleton3D> truth;
  fs::path dir;
  StreamSource source;
};

LoadedInput load_input_dir(const fs::path& dir, PipelineVariant variant) {
  LoadedInput in;
  in.dir = dir;
  if (!fs::is_directory(dir)) throw Error(ErrorCode::kIo, "input directory not found: " + dir.string());
  in.source.rig = read_rig_file(dir / "rig.txt");
  const fs::path arrivals = dir / "arrivals.csv";
  std::vector<std::string> files;
  for (const auto& row : read_csv(arrivals, "view,frame,timestamp_s,file")) {
    in.source.samples.push_back({to_int(row[0], arrivals), to_int(row[1], arrivals), to_double(row[2], arrivals)});
    files.push_back(row[3]);
  }
  auto paths = std::make_shared<std::map<std::pair<int, int>, fs::path>>();
  for (std::size_t i = 0; i < files.size(); ++i) {
    (*paths)[{in.source.samples[i].view, in.source.samples[i].frame}] = dir / files[i];
  }
  in.source.observe = [paths](const PlannedSample& s) {
    const Heatmap h = read_heatmap_file(paths->at({s.view, s.frame}));
    if (h.view() != s.view || h.frame() != s.frame) {
      throw Error(ErrorCode::kFormat, "heatmap header disagrees with arrivals.csv at view " + std::to_string(s.view) +
                                          " frame " + std::to_string(s.frame));
    }
    return h;
  };
  if (fs::exists(dir / "truth.csv")) in.truth = read_truth_csv(dir / "truth.csv");
  if (variant == PipelineVariant::kDenseOracle) {
    if (!fs::is_directory(dir / "dense")) {
      throw Error(ErrorCode::kBadConfig,
                  "dense_oracle needs every view at every frame, but " + dir.string() + " holds sparse input only");
    }
    const fs::path dense = dir / "dense";
    const int views = static_cast<int>(in.source.rig.size());
    in.source.dense = [dense, views](int frame) {
      std::vector<Heatmap> all;
      for (int v = 0; v < views; ++v) {
        const fs::path p = dense / heatmap_name(v, frame);
        if (!fs::exists(p)) throw Error(ErrorCode::kBadConfig, "dense_oracle input missing " + p.string());
        all.push_back(read_heatmap_file(p));
      }
      return all;
    };
  }
  return in;
}

int cmd_run(const RunConfig& cfg, const RunOptions& opt) {
  const PipelineVariant variant = parse_variant(cfg.eval.variant);
  LoadedInput in;
  if (!opt.input.empty() && !opt.synth) {
    in = load_input_dir(opt.input, variant);
    if (!in.truth.empty()) {
      const auto* truth = &in.truth;
      in.source.truth = [truth](int frame) -> std::optional<Skeleton3D> {
        const auto it = truth->find(frame);
        if (it == truth->end()) return std::nullopt;
        return it->second;
      };
    }
  } else {
    in.scene.emplace(make_scene(cfg, cfg.seed));
    in.source = scene_source(*in.scene, cfg.scene.frames);
  }

  WarperBank bank;
  if (variant == PipelineVariant::kFusionPlusWarper) bank = load_or_train_bank(cfg);
  const std::array<PipelineVariant, 1> variants{variant};
  const StreamResult r = evaluate_stream(in.source, pipeline_options(cfg), &bank, variants);

  const fs::path out(cfg.output_dir);
  ensure_dir(out);
  const auto& skeletons = r.skeletons.count(variant) ? r.skeletons.at(variant) : std::vector<Skeleton3D>{};
  write_with(out / "skeletons.csv", [&](std::ostream& s) { write_skeleton_csv(s, skeletons); });
  write_schedule_csv_file(out / "schedule.csv", r.schedule);
  const EvalReport& report = r.reports.at(variant);
  if (!report.frames.empty()) write_text(out / "report.json", report_json(report, cfg));

  std::printf("run: %s, %zu arrivals, %zu poses", std::string(to_string(variant)).c_str(), r.schedule.size(),
              skeletons.size());
  if (!report.frames.empty()) std::printf(", avg MPJPE %.3f mm, P-MPJPE %.3f mm", report.avg_mpjpe, report.avg_pmpjpe);
  std::printf("\n");
  std::fprintf(stderr, "stage seconds: fusion %.2f, warp %.2f, triangulate %.2f\n", report.seconds.fusion,
               report.seconds.warp, report.seconds.triangulate);
  return kOk;
}

// ---- train-warper

int cmd_train(RunConfig cfg) {
  const fs::path out(cfg.output_dir);
  if (cfg.warper.weights_dir.empty()) cfg.warper.weights_dir = (out / "weights").string();
  const BankTraining t = train_warper_bank(cfg);
  save_bank(cfg.warper.weights_dir, t.bank);
  ensure_dir(out);
  write_text(out / "training.json", training_json(t, cfg));
  for (const auto& [mode, r] : t.results) {
    std::printf("mode %d: loss %.6g -> %.6g over %zu epochs\n", mode, r.initial_loss, r.final_loss, r.epoch_loss.size());
  }
  std::printf("weights -> %s\n", cfg.warper.weights_dir.c_str());
  return kOk;
}

// ---- experiment

struct ExperimentOptions {
  std::string name;
  bool strict = false;
};

int cmd_experiment(const RunConfig& cfg, const ExperimentOptions& opt) {
  const fs::path out(cfg.output_dir);
  const bool needs_bank = opt.name == "ablation" || parse_variant(cfg.eval.variant) == PipelineVariant::kFusionPlusWarper;
  const WarperBank bank = needs_bank ? load_or_train_bank(cfg) : WarperBank{};
  ensure_dir(out);
  bool ok = true;
  std::string text;
  if (opt.name == "ablation") {
    const AblationResult r = run_ablation(cfg, bank);
    text = ablation_text(r);
    write_text(out / "ablation.json", ablation_json(r, cfg));
    if (cfg.eval.plots) write_text(out / "ablation.svg", ablation_svg(r));
    ok = r.ordering_holds;
  } else {
    const SweepResult r = opt.name == "interval_sweep" ? run_interval_sweep(cfg, bank) : run_window_sweep(cfg, bank);
    text = sweep_text(r);
    write_text(out / (opt.name + ".json"), sweep_json(r, cfg));
    if (cfg.eval.plots) write_text(out / (opt.name + ".svg"), sweep_svg(r));
    ok = r.monotone;
  }
  write_text(out / (opt.name + ".txt"), text);
  std::fputs(text.c_str(), stdout);
  if (!ok && opt.strict) {
    std::fprintf(stderr, "%s: expected ordering violated (--strict)\n", opt.name.c_str());
    return kExitStrict;
  }
  return kOk;
}

// ---- inspect

int cmd_inspect(const std::string& path) {
  const Heatmap h = read_heatmap_file(path);
  std::printf("%s: DWHM view %d frame %d joints %d height %d width %d\n", path.c_str(), h.view(), h.frame(), h.joints(),
              h.height(), h.width());
  std::printf("%5s %12s %12s %12s %10s %10s\n", "joint", "min", "max", "sum", "peak_x", "peak_y");
  for (int j = 0; j < h.joints(); ++j) {
    const auto c = h.channel(j);
    const auto [lo, hi] = std::minmax_element(c.begin(), c.end());
    double sum = 0.0;
    for (double v : c) sum += v;
    std::string px = "-";
    std::string py = "-";
    try {
      const Keypoint2D k = decode_peak(h, j);
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", k.position.x());
      px = buf;
      std::snprintf(buf, sizeof buf, "%.3f", k.position.y());
      py = buf;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kEmptyChannel) throw;
    }
    std::printf("%5d %12.6g %12.6g %12.6g %10s %10s\n", j, *lo, *hi, sum, px.c_str(), py.c_str());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense multi-view pose estimation from sparse interleaved heatmaps"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  ConfigFlags synth_flags, run_flags, train_flags, exp_flags;
  SynthOptions synth_opt;
  RunOptions run_opt;
  ExperimentOptions exp_opt;
  std::string inspect_path;

  CLI::App* synth = app.add_subcommand("synth", "Synthesize a scene: heatmaps, truth, rig");
  synth_flags.attach(synth);
  synth->add_flag("--dense", synth_opt.dense, "Also write every view at every frame (for dense_oracle)");

  CLI::App* run = app.add_subcommand("run", "Run the pipeline on a synthesized or saved stream");
  run_flags.attach(run);
  run->add_option("--input", run_opt.input, "Directory written by 'synth'");
  run->add_flag("--synth", run_opt.synth, "Synthesize the stream from the config (default without --input)");

  CLI::App* train = app.add_subcommand("train-warper", "Train one warper per temporal mode and save the weights");
  train_flags.attach(train);

  CLI::App* exp = app.add_subcommand("experiment", "Run the ablation or a sweep over the configured seeds");
  exp_flags.attach(exp);
  exp->add_option("name", exp_opt.name, "ablation | interval_sweep | window_sweep")
      ->required()
      ->check(CLI::IsMember({"ablation", "interval_sweep", "window_sweep"}));
  exp->add_flag("--strict", exp_opt.strict, "Exit 4 when the expected ordering does not hold");

  CLI::App* inspect = app.add_subcommand("inspect", "Print a DWHM heatmap file's header and channel statistics");
  inspect->add_option("file", inspect_path, "Heatmap file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kExitConfig;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_flags.resolve(synth), synth_opt);
    if (run->parsed()) return cmd_run(run_flags.resolve(run), run_opt);
    if (train->parsed()) return cmd_train(train_flags.resolve(train));
    if (exp->parsed()) return cmd_experiment(exp_flags.resolve(exp), exp_opt);
    if (inspect->parsed()) return cmd_inspect(inspect_path);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  }
  return kOk;
}
