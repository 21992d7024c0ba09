#pragma once

#include <functional>
#include <string>
#include <vector>

#include "armd/autodiff.hpp"
#include "armd/router.hpp"
#include "armd/scenario.hpp"

namespace armd {

struct StpmConfig {
  int d_model = 64;
  int heads = 8;
  int layers = 2;
  int window = 12;   // input steps
  int horizon = 12;  // forecast steps
  double lr = 0.001;
  // Forecast = last observed value + head output (persistence when the head
  // is zero). When false the base is the free-flow time.
  bool residual = true;
  double horizon_min = 48.0 * 60.0;  // for the time-of-day input
  std::uint64_t seed = 11;
};

inline constexpr int kStpmInputs = 3;

// (T*E) x E stack of the row-normalised line-graph adjacency D^-1 A.
ad::Mat gcn_mask(const LineGraph& lg, int blocks);

// relu((D^-1 A (.) S) H W) per run of E rows, S = softmax(H H^T / sqrt(d))
// taken over each edge's line-graph neighbours.
ad::Tape::Id dynamic_gcn(ad::Tape& t, ad::ParamStore& p, const std::string& w_name, ad::Tape::Id h,
                         const ad::Mat& mask, int block);

// Width-3 temporal convolutions form queries and keys, a linear map the
// values; multi-head attention over each run of T rows, projected by W^O.
// Parameters "<prefix>.q0..q2", ".k0..k2", ".v", ".o".
ad::Tape::Id temporal_attention(ad::Tape& t, ad::ParamStore& p, const std::string& prefix, ad::Tape::Id z, int T,
                                int heads);
void add_temporal_attention(ad::ParamStore& p, const std::string& prefix, std::size_t d, Rng& rng);

class StpmModel {
 public:
  StpmModel() = default;
  StpmModel(const RoadNetwork& net, StpmConfig cfg);
  StpmModel(const RoadNetwork& net, StpmConfig cfg, ad::ParamStore params);

  const StpmConfig& config() const { return cfg_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }
  std::size_t edges() const { return ff_.size(); }
  const std::vector<double>& free_flow() const { return ff_; }

  // window: T x E minutes (time-major); end_min is the time the window ends.
  // Returns the horizon x E forecast node.
  ad::Tape::Id forward(ad::Tape& t, const ad::Mat& window, double end_min);
  ad::Mat predict(const ad::Mat& window, double end_min);
  // MSE in minutes^2 over the forecast against target (horizon x E).
  ad::Tape::Id loss(ad::Tape& t, const ad::Mat& window, double end_min, const ad::Mat& target);

 private:
  StpmConfig cfg_;
  std::vector<double> ff_;
  double ff_scale_ = 1.0;
  ad::Mat mask_;
  std::vector<int> to_edge_major_;
  std::vector<int> to_time_major_;
  ad::ParamStore params_;
};

// Sliding windows over a set of episode fields.
struct TrafficDataset {
  int window = 12;
  int horizon = 12;
  std::size_t edges = 0;
  double step_min = 5.0;
  std::vector<ad::Mat> fields;  // one steps x E matrix per scenario

  std::size_t windows_per_field(std::size_t f) const;
  std::size_t window_count() const;
  // Window w of field f: input rows [w, w+window), target the next horizon rows.
  ad::Mat input(std::size_t f, std::size_t w) const;
  ad::Mat target(std::size_t f, std::size_t w) const;
  double end_min(std::size_t w) const { return static_cast<double>(w + static_cast<std::size_t>(window)) * step_min; }

  void save(const std::string& path) const;
  static TrafficDataset load(const std::string& path);
};

// Unreachable entries replaced by 3x the largest finite value in the matrix.
ad::Mat cap_unreachable(const ad::Mat& m);

// No-MCT episodes, one field per seed.
TrafficDataset generate_training_data(const Scenario& scenario, const std::vector<std::uint64_t>& seeds,
                                      int window = 12, int horizon = 12);

struct DatasetSplit {
  std::vector<std::size_t> train;  // field indices
  std::vector<std::size_t> test;
};
// First 80% of the fields train, the rest test.
DatasetSplit split_by_scenario(const TrafficDataset& d, double train_share = 0.8);

struct StpmTrainOptions {
  int epochs = 1;
  int window_stride = 1;      // subsample training windows
  int batch = 4;              // windows per optimizer step
  int validation_fields = 1;  // taken from the end of the training fields
  int validation_stride = 24;
  int eval_every = 50;        // optimizer steps
  std::uint64_t seed = 5;
};

struct StpmTrainLogRow {
  int step = 0;
  double train_loss = 0.0;
  double validation_mse = 0.0;
};

struct StpmTrainResult {
  std::vector<StpmTrainLogRow> log;
  double best_validation = 0.0;
};

// Adam on MSE; the model ends at the best-on-validation parameters.
StpmTrainResult train_stpm(StpmModel& model, const TrafficDataset& data, const std::vector<std::size_t>& fields,
                           const StpmTrainOptions& opt,
                           const std::function<void(const StpmTrainLogRow&)>& on_eval = nullptr);

struct ForecastSkill {
  double model_mse = 0.0;
  double persistence_mse = 0.0;
  std::size_t windows = 0;
};
ForecastSkill evaluate_forecast(StpmModel& model, const TrafficDataset& data, const std::vector<std::size_t>& fields,
                                int stride = 1);

class StpmForecaster : public Forecaster {
 public:
  explicit StpmForecaster(StpmModel model) : model_(std::move(model)) {}
  Forecast forecast(const TravelTimeField& history, std::span<const double> current, double now_min,
                    double step_min) const override;

 private:
  mutable StpmModel model_;
};

}  // namespace armd
