#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "densewarp/config.hpp"
#include "densewarp/fusion.hpp"
#include "densewarp/geometry.hpp"
#include "densewarp/heatmap.hpp"
#include "densewarp/scheduler.hpp"
#include "densewarp/synth.hpp"
#include "densewarp/triangulate.hpp"
#include "densewarp/warper.hpp"

namespace densewarp {

// Scene metres to reported millimetres.
inline constexpr double kMetresToMm = 1000.0;

double mpjpe(const Skeleton3D& pred, const Skeleton3D& truth);

struct Similarity {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
};

// Least-squares s, R (det +1), t taking pred onto truth. Throws
// kDegenerateConfiguration for collinear or coincident truth joints.
Similarity similarity_align(std::span<const Vec3> pred, std::span<const Vec3> truth);

// Similarity minimizing the mean joint distance: least-squares alignment or the
// identity, whichever is closer, refined by reweighted least squares. The
// result is never worse than either starting point.
Similarity mean_distance_align(std::span<const Vec3> pred, std::span<const Vec3> truth);

// MPJPE after per-frame similarity alignment (mean_distance_align).
double pmpjpe(const Skeleton3D& pred, const Skeleton3D& truth);

enum class PipelineVariant { kReplicateOnly, kSpatialFusion, kFusionPlusWarper, kDenseOracle };
inline constexpr std::array<PipelineVariant, 4> kAllVariants{
    PipelineVariant::kReplicateOnly, PipelineVariant::kSpatialFusion, PipelineVariant::kFusionPlusWarper,
    PipelineVariant::kDenseOracle};

std::string_view to_string(PipelineVariant v);
PipelineVariant parse_variant(std::string_view name);  // kBadConfig

struct PipelineOptions {
  FusionConfig fusion;
  double weight_floor = 1e-3;  // decoded peaks below this are ignored
  int gn_iterations = 20;
};

// Per-view heatmaps of one sliding window at its newest frame.
struct WindowStages {
  int target_frame = 0;
  std::vector<Heatmap> anchors;  // indexed by view
  std::vector<int> modes;        // arrivals after the view's anchor; 0 for the newest view
  std::vector<Heatmap> fused;    // anchor for the newest view
  std::vector<Heatmap> warped;   // anchor for the newest view
};

// The warper mode of a window entry is its arrival rank: the newest view is 0,
// the one before it 1, and so on.
std::vector<int> arrival_modes(std::span<const Heatmap> window);

// `window` is one heatmap per view, oldest arrival first.
WindowStages run_stages(std::span<const Heatmap> window, const EpipolarRig& rig, const FusionConfig& fusion,
                        const WarperBank* bank, bool fuse, bool warp);

// Decodes every joint in every view and triangulates (DLT, then Gauss-Newton).
// Joints seen by fewer than two views keep their position from `previous`.
Skeleton3D triangulate_heatmaps(std::span<const Heatmap> per_view, const Rig& rig, const PipelineOptions& opts,
                                const Skeleton3D* previous, int frame);

struct StageSeconds {
  double fusion = 0.0;
  double warp = 0.0;
  double triangulate = 0.0;
};

// Sliding-window pose estimation for one or more variants over the same stream.
class PosePipeline {
 public:
  PosePipeline(Rig rig, PipelineOptions opts, const WarperBank* bank = nullptr);

  // One skeleton per requested variant for the window's newest frame. The dense
  // oracle needs `dense` (one heatmap per view at that frame); sparse variants ignore it.
  std::map<PipelineVariant, Skeleton3D> process(std::span<const Heatmap> window,
                                                std::span<const PipelineVariant> variants,
                                                std::span<const Heatmap> dense = {});

  const StageSeconds& seconds() const { return seconds_; }
  const Rig& rig() const { return rig_; }

 private:
  Rig rig_;
  EpipolarRig epi_;
  PipelineOptions opts_;
  const WarperBank* bank_;
  std::map<PipelineVariant, Skeleton3D> previous_;
  StageSeconds seconds_;
};

struct EvalReport {
  std::string variant;
  std::vector<int> frames;
  std::vector<double> per_frame_mpjpe;   // mm
  std::vector<double> per_frame_pmpjpe;  // mm
  std::vector<double> per_joint_mpjpe;   // mm
  double avg_mpjpe = 0.0;
  double avg_pmpjpe = 0.0;
  StageSeconds seconds;  // wall clock; never written to artifacts
};

struct StreamResult {
  std::map<PipelineVariant, EvalReport> reports;
  std::map<PipelineVariant, std::vector<Skeleton3D>> skeletons;
  std::vector<ScheduleRow> schedule;
  CacheStats cache;
};

PipelineOptions pipeline_options(const RunConfig& cfg);

// An arrival stream with optional ground truth and dense views.
struct StreamSource {
  Rig rig;
  std::vector<PlannedSample> samples;  // arrival order
  std::function<Heatmap(const PlannedSample&)> observe;
  std::function<std::optional<Skeleton3D>(int frame)> truth;  // may be empty
  std::function<std::vector<Heatmap>(int frame)> dense;       // may be empty; needed by dense_oracle
};

// Streams every arrival through a WindowState and the pipeline. Reports carry
// metrics only for frames with truth.
StreamResult evaluate_stream(const StreamSource& source, const PipelineOptions& opts, const WarperBank* bank,
                             std::span<const PipelineVariant> variants);

// The scene's plan for `slots` frame slots. The scene must outlive the source.
StreamSource scene_source(const Scene& scene, int slots);

StreamResult evaluate_scene(const Scene& scene, int slots, const PipelineOptions& opts, const WarperBank* bank,
                            std::span<const PipelineVariant> variants);

// Training pairs per mode from scenes seeded train_seed, train_seed + 1, ...
std::map<int, std::vector<WarperSample>> warper_dataset(const RunConfig& cfg);

struct BankTraining {
  WarperBank bank;
  std::map<int, TrainResult> results;
};
BankTraining train_warper_bank(const RunConfig& cfg);

// Loads every mode 1..M-1 from weights_dir, or trains when the directory is
// unset or incomplete.
WarperBank load_or_train_bank(const RunConfig& cfg);
void save_bank(const std::filesystem::path& dir, const WarperBank& bank);
std::filesystem::path weights_path(const std::filesystem::path& dir, int mode);

std::vector<std::uint64_t> experiment_seeds(const RunConfig& cfg);

struct VariantRow {
  PipelineVariant variant;
  double mean_mpjpe = 0.0;
  double mean_pmpjpe = 0.0;
  std::vector<double> per_seed;
};

struct AblationResult {
  std::vector<std::uint64_t> seeds;
  std::vector<VariantRow> rows;  // kAllVariants order
  bool ordering_holds = false;
  std::vector<std::string> violations;
  std::vector<std::uint64_t> oracle_not_lowest;  // seeds where a sparse variant beat the dense oracle
};

AblationResult run_ablation(const RunConfig& cfg, const WarperBank& bank);

struct SweepRow {
  double parameter = 0.0;
  double mean_mpjpe = 0.0;
  std::vector<double> per_seed;
};

struct SweepResult {
  std::string name;       // interval_sweep | window_sweep
  std::string parameter;  // interval_factor | window
  std::string variant;
  std::vector<std::uint64_t> seeds;
  std::vector<SweepRow> rows;
  bool monotone = false;  // mean MPJPE non-decreasing in the parameter
  std::vector<std::string> violations;
};

SweepResult run_interval_sweep(const RunConfig& cfg, const WarperBank& bank);
SweepResult run_window_sweep(const RunConfig& cfg, const WarperBank& bank);

// Machine- and human-readable reports; byte-identical for identical inputs.
std::string report_json(const EvalReport& r, const RunConfig& cfg);
std::string ablation_json(const AblationResult& r, const RunConfig& cfg);
std::string ablation_text(const AblationResult& r);
std::string ablation_svg(const AblationResult& r);
std::string sweep_json(const SweepResult& r, const RunConfig& cfg);
std::string sweep_text(const SweepResult& r);
std::string sweep_svg(const SweepResult& r);
std::string training_json(const BankTraining& t, const RunConfig& cfg);

void write_skeleton_csv(std::ostream& out, const std::vector<Skeleton3D>& skeletons);

}  // namespace densewarp
