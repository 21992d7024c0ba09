#pragma once

#include <functional>
#include <string>
#include <vector>

#include "armd/autodiff.hpp"
#include "armd/simulator.hpp"

namespace armd {

struct FeatureScales {
  double queue = 50.0;
  double chargers = 10.0;
  double travel_min = 120.0;
  double travel_cap_min = 480.0;  // unreachable or far stations are capped here
  double capability_kwh = 3000.0;
  double hazard_h = 48.0;
};

inline constexpr int kStationFeatures = 7;
inline constexpr int kTruckSummaryFeatures = 4;

struct MappoConfig {
  int d_model = 64;
  int heads = 2;
  double gamma = 0.99;
  double lambda = 0.95;
  double lr = 0.005;
  double clip = 0.15;
  double entropy_coef = 0.01;
  int passes = 4;
  int episodes_per_iteration = 4;
  double reward_scale = 0.05;
  std::uint64_t seed = 7;
  FeatureScales scales;
};

// Per-station rows [Q, R, m, c/K, L, u, H], normalised.
ad::Mat station_features(const Observation& obs, int fleet, const FeatureScales& s);
ad::Mat critic_features(const GlobalState& g, int fleet, const FeatureScales& s);
ad::Mat truck_summary(const GlobalState& g, const FeatureScales& s);
// 1 for reachable candidates.
ad::Mat reach_mask(const Observation& obs);

ad::ParamStore make_actor(const MappoConfig& cfg, Rng& rng);
ad::ParamStore make_critic(const MappoConfig& cfg, Rng& rng);
ad::ParamStore make_ca(const MappoConfig& cfg, Rng& rng);

// Two tanh layers, rows independent.
ad::Tape::Id embed_stations(ad::Tape& t, ad::ParamStore& p, const std::string& prefix, ad::Tape::Id x);
// Embedding refined by multi-head attention with a residual connection.
ad::Tape::Id relational_encoder(ad::Tape& t, ad::ParamStore& p, const std::string& prefix, ad::Tape::Id x,
                                int block, int heads);

// Log-probabilities (B x n) for observations that all have n candidates.
ad::Tape::Id actor_logprobs(ad::Tape& t, ad::ParamStore& actor, const std::vector<const Observation*>& batch,
                            int fleet, const MappoConfig& cfg);
// Probabilities over obs.candidates. Throws InvalidAction when no candidate
// is reachable.
std::vector<double> actor_probs(ad::ParamStore& actor, const Observation& obs, int fleet, const MappoConfig& cfg);

// Values (B x 1).
ad::Tape::Id critic_values(ad::Tape& t, ad::ParamStore& critic, const std::vector<const GlobalState*>& batch,
                           int fleet, const MappoConfig& cfg);
double critic_value(ad::ParamStore& critic, const GlobalState& g, int fleet, const MappoConfig& cfg);

// Centralised actor: one encoder over every station and a logit head shared by
// the trucks, fed each truck's capability and travel times. Returns 1 x n
// log-probabilities for each listed truck (masked to `masks[j]`).
std::vector<ad::Tape::Id> ca_logprobs(ad::Tape& t, ad::ParamStore& ca, const GlobalState& g,
                                      const std::vector<int>& trucks, const std::vector<ad::Mat>& masks,
                                      int fleet, const MappoConfig& cfg);

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};
// Terminal bootstrap value 0; advantages are not normalised here.
GaeResult gae(const std::vector<double>& rewards, const std::vector<double>& values, double gamma, double lambda);
void normalize(std::vector<double>& v);

struct AgentSample {
  Observation obs;
  int action = 0;  // index into obs.candidates
  double logp = 0.0;
  double advantage = 0.0;
  int episode = 0;
  int epoch = 0;
};

struct StateSample {
  GlobalState state;
  double value = 0.0;
  double reward = 0.0;
  double advantage = 0.0;
  double ret = 0.0;
  int episode = 0;
  int epoch = 0;
};

struct PpoBatch {
  std::vector<AgentSample> agents;
  std::vector<StateSample> states;
  int fleet = 0;
};

struct PpoStats {
  double actor_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double kl = 0.0;  // mean KL(old || new) after the update
};

// Clipped-surrogate actor loss (with entropy bonus) on the current parameters.
ad::Tape::Id ppo_actor_loss(ad::Tape& t, ad::ParamStore& actor, const std::vector<const AgentSample*>& group,
                            int fleet, const MappoConfig& cfg, double* entropy_out = nullptr);
PpoStats ppo_update(ad::ParamStore& actor, ad::ParamStore& critic, const PpoBatch& batch, const MappoConfig& cfg);
double mean_kl(ad::ParamStore& old_actor, ad::ParamStore& new_actor, const std::vector<AgentSample>& samples,
               int fleet, const MappoConfig& cfg);

// Dispatch with the shared actor. Sampling draws from ctx.rng.
class ActorPolicy : public DispatchPolicy {
 public:
  ActorPolicy(ad::ParamStore actor, MappoConfig cfg, std::string name = "armd-nf")
      : actor_(std::move(actor)), cfg_(cfg), name_(std::move(name)) {}
  std::string name() const override { return name_; }
  JointAction decide(DecisionContext& ctx) override;
  void on_episode_start(const Simulator&) override;

  // Rollout recording for training.
  bool record = false;
  std::vector<AgentSample> agent_log;
  std::vector<StateSample> state_log;
  ad::ParamStore& actor() { return actor_; }

 protected:
  ad::ParamStore actor_;
  MappoConfig cfg_;
  std::string name_;
};

class CaPolicy : public DispatchPolicy {
 public:
  CaPolicy(ad::ParamStore ca, MappoConfig cfg) : ca_(std::move(ca)), cfg_(cfg) {}
  std::string name() const override { return "ca"; }
  JointAction decide(DecisionContext& ctx) override;

  struct JointSample {
    GlobalState state;
    std::vector<int> trucks;
    std::vector<ad::Mat> masks;
    std::vector<int> actions;  // station ids
    double logp = 0.0;         // sum over heads
    double advantage = 0.0;
    int episode = 0;
    int epoch = 0;
  };
  bool record = false;
  std::vector<JointSample> joint_log;
  std::vector<StateSample> state_log;
  ad::ParamStore& params() { return ca_; }

 private:
  ad::ParamStore ca_;
  MappoConfig cfg_;
};

struct TrainLogRow {
  int iteration = 0;
  double mean_return = 0.0;  // unscaled episode return (negative total risk)
  double actor_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
};

struct TrainResult {
  ad::ParamStore actor;
  ad::ParamStore critic;
  std::vector<TrainLogRow> log;
};

// Rollout -> GAE -> PPO. Episode seeds are drawn from the config seed, never
// from the scenario's evaluation seeds.
TrainResult train_mappo(const Scenario& scenario, int iterations, const MappoConfig& cfg,
                        const std::function<void(const TrainLogRow&)>& on_iteration = nullptr,
                        SimOptions options = {});

struct CaTrainResult {
  ad::ParamStore ca;
  ad::ParamStore critic;
  std::vector<TrainLogRow> log;
};
CaTrainResult train_ca(const Scenario& scenario, int iterations, const MappoConfig& cfg, SimOptions options = {});

std::string train_log_csv(const std::vector<TrainLogRow>& log);

}  // namespace armd
