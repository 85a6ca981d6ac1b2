#pragma once

#include "occtrack/baseline.hpp"
#include "occtrack/network.hpp"
#include "occtrack/training.hpp"
#include "occtrack/world.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace occtrack {

/// Occupancy [1, M, M] and, when available, class distribution [K, M, M].
struct Belief {
  Tensor<float> occupancy;
  Tensor<float> semantics;
};

/// Anything that can be scored: fed an episode frame by frame, it returns its
/// current belief and can roll forward on empty inputs without disturbing its state.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual void begin(const Episode& episode) = 0;
  /// Feeds frame t; frames arrive in order starting at 0.
  virtual Belief observe(int t) = 0;
  /// Beliefs after 1..n empty inputs following the last observed frame.
  virtual std::vector<Belief> forecast(int n) = 0;
};

using PredictorFactory = std::function<std::unique_ptr<Predictor>()>;

/// The recurrent network. Semantics are decoded only when `semantics` is set.
PredictorFactory network_predictor(const NetworkConfig& config, const ParameterStore<float>& params,
                                   bool semantics = true);
/// Ground truth of the frame being predicted; class distributions are one-hot.
PredictorFactory oracle_predictor();
/// Constant occupancy everywhere, uniform class distribution.
PredictorFactory constant_predictor(float occupancy, int classes = kNumClasses);
/// Repeats the last observed occupancy.
PredictorFactory persistence_predictor();
/// Cluster + constant-velocity tracker.
PredictorFactory baseline_predictor(const BaselineSettings& settings = {});
/// Feed-forward classifier on x_t alone; forecasts see the empty observation.
PredictorFactory one_shot_predictor(const ParameterStore<float>& params);

struct EvalSettings {
  int horizon = 10;            // N
  double threshold = 0.5;      // occupancy decision threshold
  int anchor_spacing = 10;     // anchors after 10, 20, ... observed frames
  int occluded_horizon = 5;    // horizons 1..5 for the occluded confusion / NLL variants
};

/// Numbers of observed frames after which a forecast starts: spacing, 2*spacing, ...
/// as long as the forecast stays inside the episode.
std::vector<int> anchors(int episode_length, const EvalSettings& settings);

struct F1Counts {
  std::int64_t tp = 0, fp = 0, fn = 0;
  std::int64_t support = 0;  // observed cells scored

  double precision() const { return tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0; }
  double recall() const { return tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0; }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  F1Counts& operator+=(const F1Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    support += o.support;
    return *this;
  }
};

/// Compares thresholded predictions against the observed occupancy of `truth`, on its visible cells only.
F1Counts score_occupancy(const Tensor<float>& prediction, const PartialObservation& truth, double threshold);

struct F1Curve {
  double threshold = 0.5;
  std::vector<F1Counts> horizons;  // index n-1 holds horizon n

  double mean_f1(int from, int to) const;  // inclusive horizon range
};

F1Curve f1_curve(const PredictorFactory& predictor, const std::vector<Episode>& episodes,
                 const EvalSettings& settings = {});

/// One pass, several thresholds; curves are returned in threshold order.
std::vector<F1Curve> f1_sweep(const PredictorFactory& predictor, const std::vector<Episode>& episodes,
                              const EvalSettings& settings, const std::vector<double>& thresholds);

/// Threshold from `thresholds` with the highest mean F1 over all horizons.
double calibrated_threshold(const PredictorFactory& predictor, const std::vector<Episode>& validation,
                            const EvalSettings& settings, const std::vector<double>& thresholds);

enum class ConfusionVariant { visible, occluded };
const char* variant_name(ConfusionVariant v);

struct ConfusionMatrix {
  ConfusionVariant variant = ConfusionVariant::visible;
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;  // rows true, columns predicted

  std::int64_t total() const { return counts.sum(); }
  double recall(int cls) const;
  /// Largest off-diagonal entry as (true, predicted).
  std::pair<int, int> largest_confusion() const;
};

/// Visible: argmax class at the labeled cells of every frame after the first
/// anchor, given x_1..x_t. Occluded: argmax after n empty inputs from each
/// anchor (n = 1..occluded_horizon) against the labels of frame t+n.
ConfusionMatrix confusion_matrix(const PredictorFactory& predictor, const std::vector<Episode>& episodes,
                                 ConfusionVariant variant, int classes, const EvalSettings& settings = {});

struct NllTotals {
  double nll_h = 0;  // recurrent model
  double nll_x = 0;  // one-shot model
  std::int64_t cells = 0;
};

struct NllComparison {
  NllTotals visible;
  NllTotals occluded;
};

/// Summed -ln p(true label) of both models on identical cells, for both variants.
NllComparison nll_comparison(const PredictorFactory& recurrent, const PredictorFactory& one_shot,
                             const std::vector<Episode>& episodes, const EvalSettings& settings = {});

/// Occupancy maps y_1..y_T from h_0 = 0 with empty inputs only.
std::vector<Tensor<float>> static_memory_probe(const NetworkConfig& config, const ParameterStore<float>& params,
                                               int steps = 20);

struct MeanOccupancy {
  Eigen::ArrayXXd mean;     // observed-occupied / observed, per cell (0 where never observed)
  Eigen::ArrayXXd support;  // number of frames the cell was observed
};

MeanOccupancy mean_occupancy_map(const std::vector<Episode>& episodes);

/// Cells occupied in y_true in every frame of every episode.
ByteGrid persistent_cells(const std::vector<Episode>& episodes);

struct ProbeReport {
  double pearson = 0;
  double static_mean = 0;  // mean probe probability over observable static cells
  double open_mean = 0;    // mean probe probability over observable non-static cells
  std::int64_t static_cells = 0;
  std::int64_t open_cells = 0;
};

/// Correlates a probe map with the mean-occupancy map over cells observed at least once.
ProbeReport compare_probe(const Tensor<float>& probe, const MeanOccupancy& mean, const ByteGrid& static_mask);

struct OccludedFrameScore {
  int t = 0;
  bool miss = false;
  double error = 0;  // cells, between weighted predicted centroid and true centroid
};

struct OcclusionReport {
  std::vector<OccludedFrameScore> frames;
  int misses = 0;
  double mean_error = 0;  // over non-missed frames
};

/// Scores every frame in which the moving object (y_true minus persistent
/// cells) is entirely unobserved. Mass inside the object's shadow region
/// (the connected unobserved, non-static area containing it) above the
/// region's median prediction is used for the centroid; less than half a cell
/// of such mass is a miss.
OcclusionReport occlusion_tracking_score(Predictor& predictor, const Episode& episode);

/// Worker count from DT_THREADS (default: hardware concurrency); 1 when DT_DETERMINISTIC=1.
int worker_count();

void write_f1_csv(const std::filesystem::path& path, const F1Curve& curve);
void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm);
void write_nll_csv(const std::filesystem::path& path, const NllComparison& nll);
void write_probe_csv(const std::filesystem::path& path, const ProbeReport& report);

}  // namespace occtrack
