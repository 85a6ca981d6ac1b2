#include "occtrack/evaluation.hpp"

#include "occtrack/binary_io.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>

namespace occtrack {
namespace {

Tensor<float> grid_probability(const ByteGrid& g) { return to_tensor<float>((g != 0).cast<std::uint8_t>()); }

Tensor<float> one_hot(const ByteGrid& classes, int k) {
  const int m = static_cast<int>(classes.rows());
  // Unlabeled cells get a uniform distribution.
  Tensor<float> t = Tensor<float>::constant({k, m, m}, 1.0f / static_cast<float>(k));
  for (int y = 0; y < m; ++y)
    for (int x = 0; x < m; ++x) {
      const auto c = classes(y, x);
      if (c == kIgnoreLabel || c >= k) continue;
      for (int j = 0; j < k; ++j) t(j, y, x) = j == c ? 1.0f : 0.0f;
    }
  return t;
}

class NetworkPredictor final : public Predictor {
 public:
  NetworkPredictor(NetworkConfig config, std::shared_ptr<const NetworkWeights<Tensor<float>>> weights, bool semantics)
      : config_(config), w_(std::move(weights)), semantics_(semantics) {}

  void begin(const Episode& episode) override {
    episode_ = &episode;
    h_ = zero_hidden<float>(config_);
  }
  Belief observe(int t) override {
    h_ = advance(*w_, h_, encode_observation<float>(episode_->frames.at(static_cast<std::size_t>(t)).observation));
    return decode(h_);
  }
  std::vector<Belief> forecast(int n) override {
    std::vector<Belief> out;
    auto h = h_;
    const Tensor<float> empty({kInputChannels, config_.grid, config_.grid});
    for (int i = 0; i < n; ++i) {
      h = advance(*w_, h, empty);
      out.push_back(decode(h));
    }
    return out;
  }

 private:
  Belief decode(const HiddenState<Tensor<float>>& h) const {
    Belief b{decode_occupancy(*w_, h), {}};
    if (semantics_) b.semantics = decode_semantics(*w_, h);
    return b;
  }

  NetworkConfig config_;
  std::shared_ptr<const NetworkWeights<Tensor<float>>> w_;
  bool semantics_;
  const Episode* episode_ = nullptr;
  HiddenState<Tensor<float>> h_;
};

class OraclePredictor final : public Predictor {
 public:
  void begin(const Episode& episode) override {
    episode_ = &episode;
    t_ = -1;
  }
  Belief observe(int t) override {
    t_ = t;
    return truth(t);
  }
  std::vector<Belief> forecast(int n) override {
    std::vector<Belief> out;
    for (int i = 1; i <= n; ++i) out.push_back(truth(t_ + i));
    return out;
  }

 private:
  Belief truth(int t) const {
    const auto& f = episode_->frames.at(static_cast<std::size_t>(t));
    return {grid_probability(f.occupancy), one_hot(f.classes, episode_->classes)};
  }
  const Episode* episode_ = nullptr;
  int t_ = -1;
};

class ConstantPredictor final : public Predictor {
 public:
  ConstantPredictor(float value, int classes) : value_(value), classes_(classes) {}
  void begin(const Episode& episode) override { m_ = episode.grid.size; }
  Belief observe(int) override { return belief(); }
  std::vector<Belief> forecast(int n) override { return std::vector<Belief>(static_cast<std::size_t>(n), belief()); }

 private:
  Belief belief() const {
    return {Tensor<float>::constant({1, m_, m_}, value_),
            Tensor<float>::constant({classes_, m_, m_}, 1.0f / static_cast<float>(classes_))};
  }
  float value_;
  int classes_;
  int m_ = 0;
};

class PersistencePredictor final : public Predictor {
 public:
  void begin(const Episode& episode) override { episode_ = &episode; }
  Belief observe(int t) override {
    last_ = grid_probability(episode_->frames.at(static_cast<std::size_t>(t)).observation.occupancy);
    return {last_, {}};
  }
  std::vector<Belief> forecast(int n) override { return std::vector<Belief>(static_cast<std::size_t>(n), {last_, {}}); }

 private:
  const Episode* episode_ = nullptr;
  Tensor<float> last_;
};

class BaselinePredictor final : public Predictor {
 public:
  explicit BaselinePredictor(BaselineSettings settings) : tracker_(settings) {}
  void begin(const Episode& episode) override {
    episode_ = &episode;
    tracker_.reset();
  }
  Belief observe(int t) override {
    tracker_.observe(episode_->frames.at(static_cast<std::size_t>(t)).observation);
    return {grid_probability(tracker_.predict(0)), {}};
  }
  std::vector<Belief> forecast(int n) override {
    std::vector<Belief> out;
    for (int i = 1; i <= n; ++i) out.push_back({grid_probability(tracker_.predict(i)), {}});
    return out;
  }

 private:
  ConstantVelocityTracker tracker_;
  const Episode* episode_ = nullptr;
};

class OneShotPredictor final : public Predictor {
 public:
  explicit OneShotPredictor(std::shared_ptr<const ParameterStore<float>> params) : params_(std::move(params)) {}
  void begin(const Episode& episode) override {
    episode_ = &episode;
    empty_ = Belief{};
  }
  Belief observe(int t) override {
    const auto& x = episode_->frames.at(static_cast<std::size_t>(t)).observation;
    return {grid_probability(x.occupancy), one_shot_predict(*params_, x)};
  }
  std::vector<Belief> forecast(int n) override {
    if (empty_.semantics.empty()) {
      const auto x = empty_observation(episode_->grid);
      empty_ = {grid_probability(x.occupancy), one_shot_predict(*params_, x)};
    }
    return std::vector<Belief>(static_cast<std::size_t>(n), empty_);
  }

 private:
  std::shared_ptr<const ParameterStore<float>> params_;
  const Episode* episode_ = nullptr;
  Belief empty_;
};

/// Runs `job(predictor, episode_index)` over all episodes with one predictor per worker.
template <typename Result, typename Job>
std::vector<Result> per_episode(const PredictorFactory& factory, std::size_t count, Job&& job) {
  std::vector<Result> results(count);
  const auto workers = static_cast<std::size_t>(std::max(1, std::min<int>(worker_count(), static_cast<int>(count))));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    try {
      auto predictor = factory();
      for (std::size_t i = next++; i < count; i = next++) results[i] = job(*predictor, i);
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
      next = count;
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return results;
}

int argmax_class(const Tensor<float>& semantics, int y, int x) {
  int best = 0;
  for (int k = 1; k < semantics.dim(0); ++k)
    if (semantics(k, y, x) > semantics(best, y, x)) best = k;
  return best;
}

void add_confusion(ConfusionMatrix& cm, const Tensor<float>& semantics, const ByteGrid& labels) {
  if (semantics.empty()) throw std::invalid_argument("predictor does not produce class distributions");
  for (int y = 0; y < labels.rows(); ++y)
    for (int x = 0; x < labels.cols(); ++x) {
      const auto l = labels(y, x);
      if (l == kIgnoreLabel) continue;
      if (l >= cm.counts.rows()) throw std::out_of_range("label outside class range");
      cm.counts(l, argmax_class(semantics, y, x)) += 1;
    }
}

double label_nll(const Tensor<float>& semantics, const ByteGrid& labels, std::int64_t* cells) {
  if (semantics.empty()) throw std::invalid_argument("predictor does not produce class distributions");
  double total = 0;
  for (int y = 0; y < labels.rows(); ++y)
    for (int x = 0; x < labels.cols(); ++x) {
      const auto l = labels(y, x);
      if (l == kIgnoreLabel) continue;
      total -= std::log(std::max<double>(semantics(l, y, x), 1e-7));
      if (cells) ++*cells;
    }
  return total;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

double median(std::vector<double> v) {
  if (v.empty()) return 0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

}  // namespace

PredictorFactory network_predictor(const NetworkConfig& config, const ParameterStore<float>& params, bool semantics) {
  auto w = std::make_shared<const NetworkWeights<Tensor<float>>>(bind(config, params));
  return [config, w, semantics] { return std::make_unique<NetworkPredictor>(config, w, semantics); };
}

PredictorFactory oracle_predictor() {
  return [] { return std::make_unique<OraclePredictor>(); };
}

PredictorFactory constant_predictor(float occupancy, int classes) {
  return [occupancy, classes] { return std::make_unique<ConstantPredictor>(occupancy, classes); };
}

PredictorFactory persistence_predictor() {
  return [] { return std::make_unique<PersistencePredictor>(); };
}

PredictorFactory baseline_predictor(const BaselineSettings& settings) {
  return [settings] { return std::make_unique<BaselinePredictor>(settings); };
}

PredictorFactory one_shot_predictor(const ParameterStore<float>& params) {
  auto p = std::make_shared<const ParameterStore<float>>(params);
  return [p] { return std::make_unique<OneShotPredictor>(p); };
}

std::vector<int> anchors(int episode_length, const EvalSettings& settings) {
  std::vector<int> out;
  if (settings.anchor_spacing < 1) throw std::invalid_argument("anchor spacing must be >= 1");
  for (int t = settings.anchor_spacing; t + settings.horizon <= episode_length; t += settings.anchor_spacing)
    out.push_back(t);
  return out;
}

F1Counts score_occupancy(const Tensor<float>& prediction, const PartialObservation& truth, double threshold) {
  const int m = truth.size();
  if (!same_spatial(prediction.shape(), {m, m})) throw ShapeError("prediction does not match observation grid");
  F1Counts c;
  for (int y = 0; y < m; ++y)
    for (int x = 0; x < m; ++x) {
      if (!truth.visibility(y, x)) continue;
      ++c.support;
      const bool p = prediction[static_cast<Eigen::Index>(y) * m + x] > threshold;
      const bool o = truth.occupancy(y, x) != 0;
      c.tp += p && o;
      c.fp += p && !o;
      c.fn += !p && o;
    }
  return c;
}

double F1Curve::mean_f1(int from, int to) const {
  double s = 0;
  for (int n = from; n <= to; ++n) s += horizons.at(static_cast<std::size_t>(n - 1)).f1();
  return s / (to - from + 1);
}

std::vector<F1Curve> f1_sweep(const PredictorFactory& predictor, const std::vector<Episode>& episodes,
                              const EvalSettings& settings, const std::vector<double>& thresholds) {
  using Table = std::vector<std::vector<F1Counts>>;  // [threshold][horizon]
  const auto n = static_cast<std::size_t>(settings.horizon);
  auto per = per_episode<Table>(predictor, episodes.size(), [&](Predictor& p, std::size_t i) {
    const auto& ep = episodes[i];
    Table table(thresholds.size(), std::vector<F1Counts>(n));
    const auto anchor_list = anchors(ep.length(), settings);
    p.begin(ep);
    int fed = 0;
    for (int a : anchor_list) {
      while (fed < a) p.observe(fed++);
      const auto future = p.forecast(settings.horizon);
      for (std::size_t h = 0; h < n; ++h) {
        const auto& truth = ep.frames[static_cast<std::size_t>(a) + h].observation;
        for (std::size_t k = 0; k < thresholds.size(); ++k)
          table[k][h] += score_occupancy(future[h].occupancy, truth, thresholds[k]);
      }
    }
    return table;
  });
  std::vector<F1Curve> curves;
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    F1Curve c{thresholds[k], std::vector<F1Counts>(n)};
    for (const auto& t : per)
      for (std::size_t h = 0; h < n; ++h) c.horizons[h] += t[k][h];
    curves.push_back(std::move(c));
  }
  return curves;
}

F1Curve f1_curve(const PredictorFactory& predictor, const std::vector<Episode>& episodes,
                 const EvalSettings& settings) {
  return f1_sweep(predictor, episodes, settings, {settings.threshold}).front();
}

double calibrated_threshold(const PredictorFactory& predictor, const std::vector<Episode>& validation,
                            const EvalSettings& settings, const std::vector<double>& thresholds) {
  const auto curves = f1_sweep(predictor, validation, settings, thresholds);
  double best = thresholds.at(0), best_f1 = -1;
  for (const auto& c : curves) {
    const double f = c.mean_f1(1, settings.horizon);
    if (f > best_f1) {
      best_f1 = f;
      best = c.threshold;
    }
  }
  return best;
}

const char* variant_name(ConfusionVariant v) { return v == ConfusionVariant::visible ? "visible" : "occluded"; }

double ConfusionMatrix::recall(int cls) const {
  const auto row = counts.row(cls).sum();
  return row ? static_cast<double>(counts(cls, cls)) / static_cast<double>(row) : 0.0;
}

std::pair<int, int> ConfusionMatrix::largest_confusion() const {
  std::pair<int, int> best{-1, -1};
  std::int64_t most = -1;
  for (int i = 0; i < counts.rows(); ++i)
    for (int j = 0; j < counts.cols(); ++j)
      if (i != j && counts(i, j) > most) {
        most = counts(i, j);
        best = {i, j};
      }
  return best;
}

ConfusionMatrix confusion_matrix(const PredictorFactory& predictor, const std::vector<Episode>& episodes,
                                 ConfusionVariant variant, int classes, const EvalSettings& settings) {
  auto empty = [&] {
    ConfusionMatrix cm;
    cm.variant = variant;
    cm.counts.setZero(classes, classes);
    return cm;
  };
  auto per = per_episode<ConfusionMatrix>(predictor, episodes.size(), [&](Predictor& p, std::size_t i) {
    const auto& ep = episodes[i];
    auto cm = empty();
    p.begin(ep);
    if (variant == ConfusionVariant::visible) {
      for (int t = 0; t < ep.length(); ++t) {
        const auto b = p.observe(t);
        if (t + 1 >= settings.anchor_spacing) add_confusion(cm, b.semantics, label_mask(ep.frames[static_cast<std::size_t>(t)]));
      }
    } else {
      int fed = 0;
      for (int a : anchors(ep.length(), settings)) {
        while (fed < a) p.observe(fed++);
        const auto future = p.forecast(settings.occluded_horizon);
        for (int h = 0; h < settings.occluded_horizon; ++h)
          add_confusion(cm, future[static_cast<std::size_t>(h)].semantics,
                        label_mask(ep.frames[static_cast<std::size_t>(a + h)]));
      }
    }
    return cm;
  });
  auto total = empty();
  for (const auto& cm : per) total.counts += cm.counts;
  return total;
}

NllComparison nll_comparison(const PredictorFactory& recurrent, const PredictorFactory& one_shot,
                             const std::vector<Episode>& episodes, const EvalSettings& settings) {
  // Both models see the same frames and are scored on the same label masks.
  auto run = [&](const PredictorFactory& factory) {
    return per_episode<NllComparison>(factory, episodes.size(), [&](Predictor& p, std::size_t i) {
      const auto& ep = episodes[i];
      NllComparison r;
      p.begin(ep);
      int fed = 0;
      for (int a : anchors(ep.length(), settings)) {
        while (fed < a) {
          const auto b = p.observe(fed);
          if (fed + 1 >= settings.anchor_spacing)
            r.visible.nll_h += label_nll(b.semantics, label_mask(ep.frames[static_cast<std::size_t>(fed)]), &r.visible.cells);
          ++fed;
        }
        const auto future = p.forecast(settings.occluded_horizon);
        for (int h = 0; h < settings.occluded_horizon; ++h)
          r.occluded.nll_h += label_nll(future[static_cast<std::size_t>(h)].semantics,
                                        label_mask(ep.frames[static_cast<std::size_t>(a + h)]), &r.occluded.cells);
      }
      return r;
    });
  };
  const auto h = run(recurrent);
  const auto x = run(one_shot);
  NllComparison out;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    out.visible.nll_h += h[i].visible.nll_h;
    out.visible.nll_x += x[i].visible.nll_h;
    out.visible.cells += h[i].visible.cells;
    out.occluded.nll_h += h[i].occluded.nll_h;
    out.occluded.nll_x += x[i].occluded.nll_h;
    out.occluded.cells += h[i].occluded.cells;
  }
  return out;
}

std::vector<Tensor<float>> static_memory_probe(const NetworkConfig& config, const ParameterStore<float>& params,
                                               int steps) {
  const auto w = bind(config, params);
  auto h = zero_hidden<float>(config);
  const Tensor<float> empty({kInputChannels, config.grid, config.grid});
  std::vector<Tensor<float>> maps;
  for (int t = 0; t < steps; ++t) {
    h = advance(w, h, empty);
    maps.push_back(decode_occupancy(w, h));
  }
  return maps;
}

MeanOccupancy mean_occupancy_map(const std::vector<Episode>& episodes) {
  if (episodes.empty()) throw std::invalid_argument("mean_occupancy_map: no episodes");
  const int m = episodes.front().grid.size;
  Eigen::ArrayXXd occupied = Eigen::ArrayXXd::Zero(m, m), seen = Eigen::ArrayXXd::Zero(m, m);
  for (const auto& ep : episodes)
    for (const auto& f : ep.frames) {
      // ByteGrid is row-major (y, x); keep the same (y, x) indexing here.
      for (int y = 0; y < m; ++y)
        for (int x = 0; x < m; ++x) {
          seen(y, x) += f.observation.visibility(y, x);
          occupied(y, x) += f.observation.occupancy(y, x);
        }
    }
  MeanOccupancy out;
  out.support = seen;
  out.mean = (seen > 0).select(occupied / seen.max(1.0), 0.0);
  return out;
}

ByteGrid persistent_cells(const std::vector<Episode>& episodes) {
  if (episodes.empty()) throw std::invalid_argument("persistent_cells: no episodes");
  const int m = episodes.front().grid.size;
  ByteGrid mask = ByteGrid::Ones(m, m);
  for (const auto& ep : episodes)
    for (const auto& f : ep.frames) mask = mask.min((f.occupancy != 0).cast<std::uint8_t>());
  return mask;
}

ProbeReport compare_probe(const Tensor<float>& probe, const MeanOccupancy& mean, const ByteGrid& static_mask) {
  const int m = static_cast<int>(mean.mean.rows());
  ProbeReport r;
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0, st = 0, so = 0;
  std::int64_t n = 0;
  for (int y = 0; y < m; ++y)
    for (int x = 0; x < m; ++x) {
      if (mean.support(y, x) <= 0) continue;
      const double p = probe[static_cast<Eigen::Index>(y) * m + x];
      const double q = mean.mean(y, x);
      ++n;
      sx += p;
      sy += q;
      sxx += p * p;
      syy += q * q;
      sxy += p * q;
      if (static_mask(y, x)) {
        st += p;
        ++r.static_cells;
      } else {
        so += p;
        ++r.open_cells;
      }
    }
  if (n > 1) {
    const double cov = sxy - sx * sy / static_cast<double>(n);
    const double vx = sxx - sx * sx / static_cast<double>(n);
    const double vy = syy - sy * sy / static_cast<double>(n);
    r.pearson = vx > 0 && vy > 0 ? cov / std::sqrt(vx * vy) : 0.0;
  }
  r.static_mean = r.static_cells ? st / static_cast<double>(r.static_cells) : 0.0;
  r.open_mean = r.open_cells ? so / static_cast<double>(r.open_cells) : 0.0;
  return r;
}

OcclusionReport occlusion_tracking_score(Predictor& predictor, const Episode& episode) {
  const ByteGrid fixed = persistent_cells({episode});
  const int m = episode.grid.size;
  OcclusionReport report;
  predictor.begin(episode);
  double total = 0;
  for (int t = 0; t < episode.length(); ++t) {
    const auto belief = predictor.observe(t);
    const auto& f = episode.frames[static_cast<std::size_t>(t)];
    const ByteGrid object = ((f.occupancy != 0) && (fixed == 0)).cast<std::uint8_t>();
    if (!object.any() || (object != 0 && f.observation.visibility != 0).any()) continue;

    const ByteGrid hidden = ((f.observation.visibility == 0) && (fixed == 0)).cast<std::uint8_t>();
    ByteGrid shadow = ByteGrid::Zero(m, m);
    for (const auto& c : connected_clusters(hidden)) {
      const bool holds = std::any_of(c.cells.begin(), c.cells.end(), [&](const CellIndex& k) { return object(k.y, k.x) != 0; });
      if (holds)
        for (const auto& k : c.cells) shadow(k.y, k.x) = 1;
    }
    std::vector<double> values;
    for (int y = 0; y < m; ++y)
      for (int x = 0; x < m; ++x)
        if (shadow(y, x)) values.push_back(belief.occupancy[static_cast<Eigen::Index>(y) * m + x]);
    const double background = median(values);

    double mass = 0;
    Eigen::Vector2d weighted = Eigen::Vector2d::Zero(), truth = Eigen::Vector2d::Zero();
    int object_cells = 0;
    for (int y = 0; y < m; ++y)
      for (int x = 0; x < m; ++x) {
        if (object(y, x)) {
          truth += Eigen::Vector2d(x, y);
          ++object_cells;
        }
        if (!shadow(y, x)) continue;
        const double wgt = std::max(0.0, belief.occupancy[static_cast<Eigen::Index>(y) * m + x] - background);
        mass += wgt;
        weighted += wgt * Eigen::Vector2d(x, y);
      }
    truth /= object_cells;
    OccludedFrameScore s{t, mass < 0.5, 0};
    if (s.miss) {
      ++report.misses;
    } else {
      s.error = (weighted / mass - truth).norm();
      total += s.error;
    }
    report.frames.push_back(s);
  }
  const auto scored = static_cast<int>(report.frames.size()) - report.misses;
  report.mean_error = scored > 0 ? total / scored : 0.0;
  return report;
}

int worker_count() {
  if (const char* d = std::getenv("DT_DETERMINISTIC"); d && std::string(d) == "1") return 1;
  if (const char* n = std::getenv("DT_THREADS")) {
    const int v = std::atoi(n);
    if (v >= 1) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void write_f1_csv(const std::filesystem::path& path, const F1Curve& curve) {
  std::string s = "horizon,precision,recall,f1,support\n";
  for (std::size_t h = 0; h < curve.horizons.size(); ++h) {
    const auto& c = curve.horizons[h];
    s += std::to_string(h + 1) + "," + fmt(c.precision()) + "," + fmt(c.recall()) + "," + fmt(c.f1()) + "," +
         std::to_string(c.support) + "\n";
  }
  write_text(path, s);
}

void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm) {
  std::string s;
  for (int i = 0; i < cm.counts.rows(); ++i) {
    for (int j = 0; j < cm.counts.cols(); ++j) s += (j ? "," : "") + std::to_string(cm.counts(i, j));
    s += "\n";
  }
  write_text(path, s);
}

void write_nll_csv(const std::filesystem::path& path, const NllComparison& nll) {
  std::string s = "variant,nll_h,nll_x,cells\n";
  s += "visible," + fmt(nll.visible.nll_h) + "," + fmt(nll.visible.nll_x) + "," + std::to_string(nll.visible.cells) + "\n";
  s += "occluded," + fmt(nll.occluded.nll_h) + "," + fmt(nll.occluded.nll_x) + "," +
       std::to_string(nll.occluded.cells) + "\n";
  write_text(path, s);
}

void write_probe_csv(const std::filesystem::path& path, const ProbeReport& r) {
  std::string s = "pearson_r,static_mean,open_mean,static_cells,open_cells\n";
  s += fmt(r.pearson) + "," + fmt(r.static_mean) + "," + fmt(r.open_mean) + "," + std::to_string(r.static_cells) +
       "," + std::to_string(r.open_cells) + "\n";
  write_text(path, s);
}

}  // namespace occtrack
