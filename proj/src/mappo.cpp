#include "armd/mappo.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "armd/trace_io.hpp"

namespace armd {

using ad::Mat;
using ad::ParamStore;
using ad::Tape;

namespace {

double capped_travel(double l, const FeatureScales& s) { return std::min(l, s.travel_cap_min) / s.travel_min; }

double phase_flag(TruckPhase p, TruckPhase want) { return p == want ? 1.0 : 0.0; }

int sample_index(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  int last = -1;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last = static_cast<int>(i);
    if (u < acc) return last;
  }
  return last;
}

bool any_reachable(const Observation& o) {
  return std::any_of(o.candidates.begin(), o.candidates.end(),
                     [](const StationObs& c) { return is_reachable(c.travel_min); });
}

}  // namespace

Mat station_features(const Observation& obs, int fleet, const FeatureScales& s) {
  const auto n = static_cast<Eigen::Index>(obs.candidates.size());
  Mat x(n, kStationFeatures);
  const double k = std::max(fleet, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const StationObs& c = obs.candidates[static_cast<std::size_t>(i)];
    x.row(i) << c.queue / s.queue, c.risk, c.chargers / s.chargers, c.serving / k, capped_travel(c.travel_min, s),
        obs.capability_kwh / s.capability_kwh, obs.hazard_h / s.hazard_h;
  }
  return x;
}

Mat critic_features(const GlobalState& g, int fleet, const FeatureScales& s) {
  const auto n = static_cast<Eigen::Index>(g.stations.size());
  Mat x(n, kStationFeatures);
  const double k = std::max(fleet, 1);
  double mean_u = 0.0;
  for (const auto& t : g.trucks) mean_u += t.capability_kwh;
  if (!g.trucks.empty()) mean_u /= static_cast<double>(g.trucks.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const StationObs& c = g.stations[static_cast<std::size_t>(i)];
    x.row(i) << c.queue / s.queue, c.risk, c.chargers / s.chargers, c.serving / k, capped_travel(c.travel_min, s),
        mean_u / s.capability_kwh, g.hazard_h / s.hazard_h;
  }
  return x;
}

Mat truck_summary(const GlobalState& g, const FeatureScales& s) {
  Mat x = Mat::Zero(1, kTruckSummaryFeatures);
  if (g.trucks.empty()) return x;
  for (const auto& t : g.trucks) {
    x(0, 0) += t.capability_kwh / s.capability_kwh;
    x(0, 1) += phase_flag(t.phase, TruckPhase::Idle);
    x(0, 2) += phase_flag(t.phase, TruckPhase::Traveling);
    x(0, 3) += phase_flag(t.phase, TruckPhase::Serving);
  }
  return x / static_cast<double>(g.trucks.size());
}

Mat reach_mask(const Observation& obs) {
  Mat m(1, static_cast<Eigen::Index>(obs.candidates.size()));
  for (std::size_t i = 0; i < obs.candidates.size(); ++i)
    m(0, static_cast<Eigen::Index>(i)) = is_reachable(obs.candidates[i].travel_min) ? 1.0 : 0.0;
  return m;
}

namespace {

void add_encoder(ParamStore& p, const std::string& pre, std::size_t d, Rng& rng) {
  ad::add_linear(p, pre + ".emb1", kStationFeatures, d, rng);
  ad::add_linear(p, pre + ".emb2", d, d, rng);
  ad::add_mha(p, pre + ".att", d, rng);
}

}  // namespace

ParamStore make_actor(const MappoConfig& cfg, Rng& rng) {
  ParamStore p;
  p.init_scheme = "glorot-uniform;zero-bias";
  const auto d = static_cast<std::size_t>(cfg.d_model);
  add_encoder(p, "actor", d, rng);
  ad::add_linear(p, "actor.head", d, 1, rng);
  return p;
}

ParamStore make_critic(const MappoConfig& cfg, Rng& rng) {
  ParamStore p;
  p.init_scheme = "glorot-uniform;zero-bias";
  const auto d = static_cast<std::size_t>(cfg.d_model);
  add_encoder(p, "critic", d, rng);
  ad::add_linear(p, "critic.truck", kTruckSummaryFeatures, d, rng);
  ad::add_linear(p, "critic.v1", 2 * d, d, rng);
  ad::add_linear(p, "critic.v2", d, 1, rng);
  return p;
}

ParamStore make_ca(const MappoConfig& cfg, Rng& rng) {
  ParamStore p;
  p.init_scheme = "glorot-uniform;zero-bias";
  const auto d = static_cast<std::size_t>(cfg.d_model);
  add_encoder(p, "ca", d, rng);
  ad::add_linear(p, "ca.h1", d + 2, d, rng);
  ad::add_linear(p, "ca.out", d, 1, rng);
  return p;
}

Tape::Id embed_stations(Tape& t, ParamStore& p, const std::string& prefix, Tape::Id x) {
  const Tape::Id h = t.tanh(ad::linear(t, p, prefix + ".emb1", x));
  return t.tanh(ad::linear(t, p, prefix + ".emb2", h));
}

Tape::Id relational_encoder(Tape& t, ParamStore& p, const std::string& prefix, Tape::Id x, int block, int heads) {
  const Tape::Id e = embed_stations(t, p, prefix, x);
  return t.add(e, ad::mha(t, p, prefix + ".att", e, block, heads));
}

Tape::Id actor_logprobs(Tape& t, ParamStore& actor, const std::vector<const Observation*>& batch, int fleet,
                        const MappoConfig& cfg) {
  if (batch.empty()) throw ad::ShapeError("actor_logprobs: empty batch");
  const int n = static_cast<int>(batch[0]->candidates.size());
  if (n == 0) throw InvalidAction("observation has no candidate stations");
  const int B = static_cast<int>(batch.size());
  Mat x(static_cast<Eigen::Index>(B) * n, kStationFeatures);
  Mat mask(B, n);
  for (int b = 0; b < B; ++b) {
    if (static_cast<int>(batch[static_cast<std::size_t>(b)]->candidates.size()) != n)
      throw ad::ShapeError("actor_logprobs: candidate counts differ within batch");
    x.middleRows(static_cast<Eigen::Index>(b) * n, n) = station_features(*batch[static_cast<std::size_t>(b)], fleet, cfg.scales);
    mask.row(b) = reach_mask(*batch[static_cast<std::size_t>(b)]);
    if (mask.row(b).sum() == 0.0) throw InvalidAction("all candidate stations are unreachable");
  }
  const Tape::Id enc = relational_encoder(t, actor, "actor", t.constant(std::move(x)), n, cfg.heads);
  const Tape::Id logits = ad::linear(t, actor, "actor.head", enc);
  return t.masked_log_softmax(t.reshape(logits, B, n), mask);
}

std::vector<double> actor_probs(ParamStore& actor, const Observation& obs, int fleet, const MappoConfig& cfg) {
  Tape t;
  const Tape::Id lp = actor_logprobs(t, actor, {&obs}, fleet, cfg);
  const Mat mask = reach_mask(obs);
  std::vector<double> out(obs.candidates.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    out[i] = mask(0, c) != 0.0 ? std::exp(t.value(lp)(0, c)) : 0.0;
  }
  return out;
}

Tape::Id critic_values(Tape& t, ParamStore& critic, const std::vector<const GlobalState*>& batch, int fleet,
                       const MappoConfig& cfg) {
  if (batch.empty()) throw ad::ShapeError("critic_values: empty batch");
  const int n = static_cast<int>(batch[0]->stations.size());
  const int B = static_cast<int>(batch.size());
  Mat x(static_cast<Eigen::Index>(B) * n, kStationFeatures);
  Mat s(B, kTruckSummaryFeatures);
  for (int b = 0; b < B; ++b) {
    const GlobalState& g = *batch[static_cast<std::size_t>(b)];
    if (static_cast<int>(g.stations.size()) != n) throw ad::ShapeError("critic_values: station counts differ");
    x.middleRows(static_cast<Eigen::Index>(b) * n, n) = critic_features(g, fleet, cfg.scales);
    s.row(b) = truck_summary(g, cfg.scales);
  }
  const Tape::Id enc = relational_encoder(t, critic, "critic", t.constant(std::move(x)), n, cfg.heads);
  const Tape::Id pooled = t.block_mean_rows(enc, n);
  const Tape::Id trucks = t.tanh(ad::linear(t, critic, "critic.truck", t.constant(std::move(s))));
  const Tape::Id h = t.tanh(ad::linear(t, critic, "critic.v1", t.concat_cols({pooled, trucks})));
  return ad::linear(t, critic, "critic.v2", h);
}

double critic_value(ParamStore& critic, const GlobalState& g, int fleet, const MappoConfig& cfg) {
  Tape t;
  return t.scalar(critic_values(t, critic, {&g}, fleet, cfg));
}

std::vector<Tape::Id> ca_logprobs(Tape& t, ParamStore& ca, const GlobalState& g, const std::vector<int>& trucks,
                                  const std::vector<Mat>& masks, int fleet, const MappoConfig& cfg) {
  const int n = static_cast<int>(g.stations.size());
  const Tape::Id enc =
      relational_encoder(t, ca, "ca", t.constant(critic_features(g, fleet, cfg.scales)), n, cfg.heads);
  std::vector<Tape::Id> out;
  for (std::size_t j = 0; j < trucks.size(); ++j) {
    const auto& tr = g.trucks.at(static_cast<std::size_t>(trucks[j]));
    Mat extra(n, 2);
    for (int i = 0; i < n; ++i)
      extra.row(i) << tr.capability_kwh / cfg.scales.capability_kwh,
          capped_travel(tr.travel_min[static_cast<std::size_t>(i)], cfg.scales);
    const Tape::Id x = t.concat_cols({enc, t.constant(std::move(extra))});
    const Tape::Id h = t.tanh(ad::linear(t, ca, "ca.h1", x));
    const Tape::Id logits = t.reshape(ad::linear(t, ca, "ca.out", h), 1, n);
    out.push_back(t.masked_log_softmax(logits, masks[j]));
  }
  return out;
}

GaeResult gae(const std::vector<double>& rewards, const std::vector<double>& values, double gamma, double lambda) {
  if (rewards.size() != values.size()) throw std::invalid_argument("gae: rewards and values differ in length");
  GaeResult r;
  const std::size_t T = rewards.size();
  r.advantages.assign(T, 0.0);
  r.returns.assign(T, 0.0);
  double next_adv = 0.0;
  for (std::size_t k = T; k-- > 0;) {
    const double next_v = k + 1 < T ? values[k + 1] : 0.0;
    const double delta = rewards[k] + gamma * next_v - values[k];
    next_adv = delta + gamma * lambda * next_adv;
    r.advantages[k] = next_adv;
    r.returns[k] = next_adv + values[k];
  }
  return r;
}

void normalize(std::vector<double>& v) {
  if (v.empty()) return;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  const double sd = std::sqrt(var);
  for (double& x : v) x = sd > 1e-12 ? (x - mean) / sd : x - mean;
}

namespace {

std::map<std::size_t, std::vector<const AgentSample*>> group_by_size(const std::vector<const AgentSample*>& s) {
  std::map<std::size_t, std::vector<const AgentSample*>> g;
  for (const AgentSample* a : s) g[a->obs.candidates.size()].push_back(a);
  return g;
}

}  // namespace

Tape::Id ppo_actor_loss(Tape& t, ParamStore& actor, const std::vector<const AgentSample*>& samples, int fleet,
                        const MappoConfig& cfg, double* entropy_out) {
  if (samples.empty()) throw std::invalid_argument("ppo_actor_loss: no samples");
  std::vector<Tape::Id> terms;
  std::vector<Tape::Id> ents;
  for (const auto& [n, group] : group_by_size(samples)) {
    std::vector<const Observation*> obs;
    std::vector<int> actions;
    Mat old_lp(static_cast<Eigen::Index>(group.size()), 1);
    Mat adv(static_cast<Eigen::Index>(group.size()), 1);
    for (std::size_t i = 0; i < group.size(); ++i) {
      obs.push_back(&group[i]->obs);
      actions.push_back(group[i]->action);
      old_lp(static_cast<Eigen::Index>(i), 0) = group[i]->logp;
      adv(static_cast<Eigen::Index>(i), 0) = group[i]->advantage;
    }
    const Tape::Id lp = actor_logprobs(t, actor, obs, fleet, cfg);
    const Tape::Id lp_a = t.pick(lp, actions);
    const Tape::Id ratio = t.exp(t.sub(lp_a, t.constant(old_lp)));
    const Tape::Id a = t.constant(adv);
    const Tape::Id s1 = t.mul(ratio, a);
    const Tape::Id s2 = t.mul(t.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip), a);
    terms.push_back(t.sum(t.minimum(s1, s2)));
    ents.push_back(t.scale(t.sum(t.mul(t.exp(lp), lp)), -1.0));
  }
  const double N = static_cast<double>(samples.size());
  Tape::Id surr = terms[0];
  Tape::Id ent = ents[0];
  for (std::size_t i = 1; i < terms.size(); ++i) {
    surr = t.add(surr, terms[i]);
    ent = t.add(ent, ents[i]);
  }
  if (entropy_out) *entropy_out = t.scalar(ent) / N;
  return t.scale(t.add(surr, t.scale(ent, cfg.entropy_coef)), -1.0 / N);
}

double mean_kl(ParamStore& old_actor, ParamStore& new_actor, const std::vector<AgentSample>& samples, int fleet,
               const MappoConfig& cfg) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const AgentSample& s : samples) {
    const auto p = actor_probs(old_actor, s.obs, fleet, cfg);
    const auto q = actor_probs(new_actor, s.obs, fleet, cfg);
    for (std::size_t i = 0; i < p.size(); ++i)
      if (p[i] > 0.0) total += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return total / static_cast<double>(samples.size());
}

PpoStats ppo_update(ParamStore& actor, ParamStore& critic, const PpoBatch& batch, const MappoConfig& cfg) {
  PpoStats st;
  const ParamStore old = actor;
  const ad::Adam opt{cfg.lr};
  std::vector<const AgentSample*> agents;
  for (const AgentSample& a : batch.agents) agents.push_back(&a);
  std::vector<const GlobalState*> states;
  Mat targets(static_cast<Eigen::Index>(batch.states.size()), 1);
  for (std::size_t i = 0; i < batch.states.size(); ++i) {
    states.push_back(&batch.states[i].state);
    targets(static_cast<Eigen::Index>(i), 0) = batch.states[i].ret;
  }
  for (int pass = 0; pass < cfg.passes; ++pass) {
    if (!agents.empty()) {
      actor.zero_grad();
      Tape t;
      double ent = 0.0;
      const Tape::Id loss = ppo_actor_loss(t, actor, agents, batch.fleet, cfg, &ent);
      if (pass == 0) {
        st.actor_loss = t.scalar(loss);
        st.entropy = ent;
      }
      t.backward(loss);
      opt.step(actor);
    }
    if (!states.empty()) {
      critic.zero_grad();
      Tape t;
      const Tape::Id v = critic_values(t, critic, states, batch.fleet, cfg);
      const Tape::Id d = t.sub(v, t.constant(targets));
      const Tape::Id loss = t.mean(t.mul(d, d));
      if (pass == 0) st.value_loss = t.scalar(loss);
      t.backward(loss);
      opt.step(critic);
    }
  }
  ParamStore old_copy = old;
  st.kl = mean_kl(old_copy, actor, batch.agents, batch.fleet, cfg);
  return st;
}

// -------------------------------------------------------------- policies

void ActorPolicy::on_episode_start(const Simulator&) {
  agent_log.clear();
  state_log.clear();
}

JointAction ActorPolicy::decide(DecisionContext& ctx) {
  const int fleet = ctx.sim.scenario().fleet.trucks;
  if (record) {
    StateSample s;
    s.state = ctx.sim.global_state();
    s.epoch = ctx.epoch;
    state_log.push_back(std::move(s));
  }
  JointAction out;
  for (const Observation& o : ctx.observations) {
    if (!any_reachable(o)) continue;
    const auto probs = actor_probs(actor_, o, fleet, cfg_);
    const int idx = sample_index(probs, ctx.rng);
    out.emplace_back(o.truck, o.candidates[static_cast<std::size_t>(idx)].station);
    if (record) {
      AgentSample a;
      a.obs = o;
      a.action = idx;
      a.logp = std::log(probs[static_cast<std::size_t>(idx)]);
      a.epoch = ctx.epoch;
      agent_log.push_back(std::move(a));
    }
  }
  return out;
}

JointAction CaPolicy::decide(DecisionContext& ctx) {
  const int fleet = ctx.sim.scenario().fleet.trucks;
  const GlobalState g = ctx.sim.global_state();
  if (record) {
    StateSample s;
    s.state = g;
    s.epoch = ctx.epoch;
    state_log.push_back(std::move(s));
  }
  JointSample js;
  const std::size_t n = g.stations.size();
  for (const Observation& o : ctx.observations) {
    Mat m = Mat::Zero(1, static_cast<Eigen::Index>(n));
    for (const StationObs& c : o.candidates)
      if (is_reachable(c.travel_min)) m(0, c.station) = 1.0;
    if (m.sum() == 0.0) continue;
    js.trucks.push_back(o.truck);
    js.masks.push_back(std::move(m));
  }
  JointAction out;
  if (js.trucks.empty()) return out;
  Tape t;
  const auto lps = ca_logprobs(t, ca_, g, js.trucks, js.masks, fleet, cfg_);
  for (std::size_t j = 0; j < js.trucks.size(); ++j) {
    std::vector<double> probs(n);
    for (std::size_t i = 0; i < n; ++i)
      probs[i] = js.masks[j](0, static_cast<Eigen::Index>(i)) != 0.0
                     ? std::exp(t.value(lps[j])(0, static_cast<Eigen::Index>(i)))
                     : 0.0;
    const int idx = sample_index(probs, ctx.rng);
    js.actions.push_back(idx);
    js.logp += std::log(probs[static_cast<std::size_t>(idx)]);
    out.emplace_back(js.trucks[j], idx);
  }
  if (record) {
    js.state = g;
    js.epoch = ctx.epoch;
    joint_log.push_back(std::move(js));
  }
  return out;
}

// -------------------------------------------------------------- training

namespace {

std::uint64_t training_seed(Rng& r) { return 1000000ULL + r.next_u64() % 1000000000ULL; }

// Fills value/advantage/return of one episode's state samples.
void finish_episode(std::vector<StateSample>& states, const EpisodeResult& res, ParamStore& critic, int fleet,
                    const MappoConfig& cfg, int episode) {
  std::vector<double> rewards, values;
  for (StateSample& s : states) {
    s.episode = episode;
    s.reward = res.epoch_rewards.at(static_cast<std::size_t>(s.epoch)) * cfg.reward_scale;
    s.value = critic_value(critic, s.state, fleet, cfg);
    rewards.push_back(s.reward);
    values.push_back(s.value);
  }
  const GaeResult g = gae(rewards, values, cfg.gamma, cfg.lambda);
  for (std::size_t i = 0; i < states.size(); ++i) {
    states[i].advantage = g.advantages[i];
    states[i].ret = g.returns[i];
  }
}

}  // namespace

TrainResult train_mappo(const Scenario& scenario, int iterations, const MappoConfig& cfg,
                        const std::function<void(const TrainLogRow&)>& on_iteration, SimOptions options) {
  Rng init = Rng::stream(cfg.seed, "mappo-init");
  Rng seeds = Rng::stream(cfg.seed, "mappo-episodes");
  TrainResult out;
  ActorPolicy policy(make_actor(cfg, init), cfg, "mappo-train");
  out.critic = make_critic(cfg, init);
  policy.record = true;
  options.record_trucks = false;
  const int fleet = scenario.fleet.trucks;
  for (int it = 0; it < iterations; ++it) {
    PpoBatch batch;
    batch.fleet = fleet;
    double ret = 0.0;
    for (int e = 0; e < cfg.episodes_per_iteration; ++e) {
      const EpisodeResult res = run_episode(scenario, policy, training_seed(seeds), options);
      for (double r : res.epoch_rewards) ret += r;
      finish_episode(policy.state_log, res, out.critic, fleet, cfg, e);
      std::map<int, double> adv;
      for (const StateSample& s : policy.state_log) adv[s.epoch] = s.advantage;
      for (AgentSample& a : policy.agent_log) {
        a.episode = e;
        a.advantage = adv.at(a.epoch);
        batch.agents.push_back(std::move(a));
      }
      for (StateSample& s : policy.state_log) batch.states.push_back(std::move(s));
    }
    std::vector<double> advs;
    for (const AgentSample& a : batch.agents) advs.push_back(a.advantage);
    normalize(advs);
    for (std::size_t i = 0; i < advs.size(); ++i) batch.agents[i].advantage = advs[i];
    const PpoStats st = ppo_update(policy.actor(), out.critic, batch, cfg);
    TrainLogRow row{it, ret / cfg.episodes_per_iteration, st.actor_loss, st.value_loss, st.entropy};
    out.log.push_back(row);
    if (on_iteration) on_iteration(row);
  }
  out.actor = policy.actor();
  return out;
}

CaTrainResult train_ca(const Scenario& scenario, int iterations, const MappoConfig& cfg, SimOptions options) {
  Rng init = Rng::stream(cfg.seed, "ca-init");
  Rng seeds = Rng::stream(cfg.seed, "ca-episodes");
  CaTrainResult out;
  CaPolicy policy(make_ca(cfg, init), cfg);
  out.critic = make_critic(cfg, init);
  policy.record = true;
  options.record_trucks = false;
  const int fleet = scenario.fleet.trucks;
  const ad::Adam opt{cfg.lr};
  for (int it = 0; it < iterations; ++it) {
    std::vector<CaPolicy::JointSample> joints;
    std::vector<StateSample> states;
    double ret = 0.0;
    for (int e = 0; e < cfg.episodes_per_iteration; ++e) {
      policy.joint_log.clear();
      policy.state_log.clear();
      const EpisodeResult res = run_episode(scenario, policy, training_seed(seeds), options);
      for (double r : res.epoch_rewards) ret += r;
      finish_episode(policy.state_log, res, out.critic, fleet, cfg, e);
      std::map<int, double> adv;
      for (const StateSample& s : policy.state_log) adv[s.epoch] = s.advantage;
      for (auto& j : policy.joint_log) {
        j.episode = e;
        j.advantage = adv.at(j.epoch);
        joints.push_back(std::move(j));
      }
      for (StateSample& s : policy.state_log) states.push_back(std::move(s));
    }
    std::vector<double> advs;
    for (const auto& j : joints) advs.push_back(j.advantage);
    normalize(advs);
    for (std::size_t i = 0; i < advs.size(); ++i) joints[i].advantage = advs[i];
    TrainLogRow row;
    row.iteration = it;
    row.mean_return = ret / cfg.episodes_per_iteration;
    for (int pass = 0; pass < cfg.passes; ++pass) {
      if (!joints.empty()) {
        policy.params().zero_grad();
        Tape t;
        std::vector<Tape::Id> terms;
        std::vector<Tape::Id> ents;
        for (const auto& j : joints) {
          const auto lps = ca_logprobs(t, policy.params(), j.state, j.trucks, j.masks, fleet, cfg);
          std::vector<Tape::Id> picked;
          for (std::size_t h = 0; h < lps.size(); ++h) {
            picked.push_back(t.pick(lps[h], {j.actions[h]}));
            ents.push_back(t.scale(t.sum(t.mul(t.exp(lps[h]), lps[h])), -1.0));
          }
          Tape::Id lp = picked[0];
          for (std::size_t h = 1; h < picked.size(); ++h) lp = t.add(lp, picked[h]);
          const Tape::Id ratio = t.exp(t.add_scalar(lp, -j.logp));
          const Tape::Id s1 = t.scale(ratio, j.advantage);
          const Tape::Id s2 = t.scale(t.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip), j.advantage);
          terms.push_back(t.minimum(s1, s2));
        }
        const Tape::Id surr = t.sum(t.concat_rows(terms));
        const Tape::Id ent = t.sum(t.concat_rows(ents));
        const double N = static_cast<double>(joints.size());
        const Tape::Id loss = t.scale(t.add(surr, t.scale(ent, cfg.entropy_coef)), -1.0 / N);
        if (pass == 0) {
          row.actor_loss = t.scalar(loss);
          row.entropy = t.scalar(ent) / N;
        }
        t.backward(loss);
        opt.step(policy.params());
      }
      if (!states.empty()) {
        out.critic.zero_grad();
        std::vector<const GlobalState*> gs;
        Mat targets(static_cast<Eigen::Index>(states.size()), 1);
        for (std::size_t i = 0; i < states.size(); ++i) {
          gs.push_back(&states[i].state);
          targets(static_cast<Eigen::Index>(i), 0) = states[i].ret;
        }
        Tape t;
        const Tape::Id d = t.sub(critic_values(t, out.critic, gs, fleet, cfg), t.constant(targets));
        const Tape::Id loss = t.mean(t.mul(d, d));
        if (pass == 0) row.value_loss = t.scalar(loss);
        t.backward(loss);
        opt.step(out.critic);
      }
    }
    out.log.push_back(row);
  }
  out.ca = policy.params();
  return out;
}

std::string train_log_csv(const std::vector<TrainLogRow>& log) {
  std::ostringstream s;
  s << "iteration,mean_return,actor_loss,value_loss,entropy\n";
  for (const auto& r : log)
    s << r.iteration << ',' << fmt_double(r.mean_return) << ',' << fmt_double(r.actor_loss) << ','
      << fmt_double(r.value_loss) << ',' << fmt_double(r.entropy) << '\n';
  return s.str();
}

}  // namespace armd
