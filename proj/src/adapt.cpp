#include "armd/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "armd/binio.hpp"
#include "armd/trace_io.hpp"

namespace armd {

using ad::Mat;
using ad::ParamStore;
using ad::Tape;

void ExperienceBank::add(ExperienceRecord r) { records_.push_back(std::move(r)); }

void ExperienceBank::finalize() {
  mean_ = {0.0, 0.0};
  std_ = {0.0, 0.0};
  if (records_.empty()) return;
  const double n = static_cast<double>(records_.size());
  for (const auto& r : records_)
    for (int d = 0; d < 2; ++d) mean_[d] += r.context[d] / n;
  for (const auto& r : records_)
    for (int d = 0; d < 2; ++d) std_[d] += (r.context[d] - mean_[d]) * (r.context[d] - mean_[d]) / n;
  for (int d = 0; d < 2; ++d) std_[d] = std::sqrt(std_[d]);
}

double ExperienceBank::distance(const Context& a, const Context& b) const {
  double s = 0.0;
  for (int d = 0; d < 2; ++d) {
    if (!(std_[d] > 0.0)) continue;
    const double z = (a[d] - b[d]) / std_[d];
    s += z * z;
  }
  return std::sqrt(s);
}

namespace {
constexpr char kBankMagic[8] = {'A', 'R', 'M', 'D', 'B', 'K', '0', '1'};
constexpr std::uint32_t kBankVersion = 1;
}  // namespace

std::string ExperienceBank::serialize() const {
  using namespace binio;
  std::string out(kBankMagic, kBankMagic + 8);
  put_u32(out, kBankVersion);
  put_u64(out, records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const ExperienceRecord& r = records_[i];
    put_u64(out, i);
    put_f64(out, r.context[0]);
    put_f64(out, r.context[1]);
    put_f64(out, r.reward);
    put_f64(out, r.advantage);
    put_u32(out, static_cast<std::uint32_t>(r.action));
    put_u32(out, static_cast<std::uint32_t>(r.obs.truck));
    put_u32(out, static_cast<std::uint32_t>(r.obs.epoch));
    put_f64(out, r.obs.hazard_h);
    put_f64(out, r.obs.capability_kwh);
    put_u32(out, static_cast<std::uint32_t>(r.obs.candidates.size()));
    for (const StationObs& c : r.obs.candidates) {
      put_u32(out, static_cast<std::uint32_t>(c.station));
      put_f64(out, c.queue);
      put_f64(out, c.risk);
      put_f64(out, c.chargers);
      put_f64(out, c.serving);
      put_f64(out, c.travel_min);
    }
  }
  return out;
}

ExperienceBank ExperienceBank::deserialize(const std::string& bytes) {
  if (bytes.size() < 8 || !std::equal(kBankMagic, kBankMagic + 8, bytes.begin()))
    throw std::runtime_error("not an experience bank (bad magic)");
  binio::Reader rd{bytes, 8};
  if (rd.u32() != kBankVersion) throw std::runtime_error("unsupported bank version");
  const std::uint64_t n = rd.u64();
  ExperienceBank bank;
  for (std::uint64_t i = 0; i < n; ++i) {
    if (rd.u64() != i) throw std::runtime_error("bank record index out of sequence");
    ExperienceRecord r;
    r.context[0] = rd.f64();
    r.context[1] = rd.f64();
    r.reward = rd.f64();
    r.advantage = rd.f64();
    r.action = static_cast<int>(rd.u32());
    r.obs.truck = static_cast<int>(rd.u32());
    r.obs.epoch = static_cast<int>(rd.u32());
    r.obs.hazard_h = rd.f64();
    r.obs.capability_kwh = rd.f64();
    const std::uint32_t nc = rd.u32();
    for (std::uint32_t c = 0; c < nc; ++c) {
      StationObs so;
      so.station = static_cast<int>(rd.u32());
      so.queue = rd.f64();
      so.risk = rd.f64();
      so.chargers = rd.f64();
      so.serving = rd.f64();
      so.travel_min = rd.f64();
      r.obs.candidates.push_back(so);
    }
    bank.add(std::move(r));
  }
  if (!rd.at_end()) throw std::runtime_error("trailing bytes in bank file");
  bank.finalize();
  return bank;
}

void ExperienceBank::save(const std::string& path) const { write_file(path, serialize()); }

ExperienceBank ExperienceBank::load(const std::string& path) { return deserialize(read_file(path)); }

Context context_descriptor(const Observation& obs) {
  double q = 0.0, m = 0.0;
  for (const StationObs& c : obs.candidates) {
    q += c.queue;
    m += c.chargers;
  }
  return {obs.hazard_h, q / (m > 0.0 ? m : 1.0)};
}

std::vector<std::size_t> retrieve(const ExperienceBank& bank, const Context& c, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i) d.emplace_back(bank.distance(bank.records()[i].context, c), i);
  const std::size_t take = std::min(k, d.size());
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(take), d.end());
  std::vector<std::size_t> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(d[i].second);
  return out;
}

std::vector<double> advantage_weights(const std::vector<double>& advantages, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("advantage_weights: beta must be positive");
  std::vector<double> w;
  w.reserve(advantages.size());
  for (double a : advantages) w.push_back(std::clamp(std::exp(a / beta), std::exp(-5.0), std::exp(5.0)));
  return w;
}

namespace {

using Groups = std::map<std::size_t, std::vector<std::size_t>>;

Groups group_subset(const std::vector<const ExperienceRecord*>& subset) {
  Groups g;
  for (std::size_t i = 0; i < subset.size(); ++i) g[subset[i]->obs.candidates.size()].push_back(i);
  return g;
}

std::vector<const Observation*> group_obs(const std::vector<const ExperienceRecord*>& subset,
                                          const std::vector<std::size_t>& idx) {
  std::vector<const Observation*> o;
  for (std::size_t i : idx) o.push_back(&subset[i]->obs);
  return o;
}

// Sum over the subset of KL(actor || reference) as a tape node.
Tape::Id kl_sum(Tape& t, ParamStore& actor, ParamStore& reference, const std::vector<const ExperienceRecord*>& subset,
                int fleet, const MappoConfig& cfg) {
  std::vector<Tape::Id> parts;
  for (const auto& [n, idx] : group_subset(subset)) {
    const auto obs = group_obs(subset, idx);
    Mat ref_lp;
    {
      Tape r;
      ref_lp = r.value(actor_logprobs(r, reference, obs, fleet, cfg));
    }
    const Tape::Id lp = actor_logprobs(t, actor, obs, fleet, cfg);
    parts.push_back(t.sum(t.mul(t.exp(lp), t.sub(lp, t.constant(std::move(ref_lp))))));
  }
  return parts.size() == 1 ? parts[0] : t.sum(t.concat_rows(parts));
}

}  // namespace

Tape::Id weighted_loglik(Tape& t, ParamStore& actor, const std::vector<const ExperienceRecord*>& subset,
                         const std::vector<double>& weights, int fleet, const MappoConfig& cfg) {
  if (subset.empty() || weights.size() != subset.size())
    throw std::invalid_argument("weighted_loglik: subset and weights must be non-empty and aligned");
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<Tape::Id> parts;
  for (const auto& [n, idx] : group_subset(subset)) {
    std::vector<int> actions;
    Mat w(static_cast<Eigen::Index>(idx.size()), 1);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      actions.push_back(subset[idx[j]]->action);
      w(static_cast<Eigen::Index>(j), 0) = weights[idx[j]];
    }
    const Tape::Id lp = actor_logprobs(t, actor, group_obs(subset, idx), fleet, cfg);
    parts.push_back(t.sum(t.mul(t.pick(lp, actions), t.constant(std::move(w)))));
  }
  const Tape::Id total = parts.size() == 1 ? parts[0] : t.sum(t.concat_rows(parts));
  return t.scale(total, 1.0 / wsum);
}

double subset_kl(ParamStore& actor, ParamStore& reference, const std::vector<const ExperienceRecord*>& subset,
                 int fleet, const MappoConfig& cfg) {
  if (subset.empty()) return 0.0;
  Tape t;
  return t.scalar(kl_sum(t, actor, reference, subset, fleet, cfg)) / static_cast<double>(subset.size());
}

FinetuneResult finetune_actor(const ParamStore& pretrained, const std::vector<const ExperienceRecord*>& subset,
                              int fleet, const MappoConfig& cfg, const FinetuneConfig& fc) {
  FinetuneResult best{pretrained, 0.0, 0};
  if (subset.empty() || fc.max_steps <= 0) return best;
  ParamStore ref = pretrained;
  ParamStore cur = pretrained;
  cur.step = 0;
  for (ad::Tensor& t : cur.tensors()) {
    t.adam_m.resize(0, 0);
    t.adam_v.resize(0, 0);
  }
  std::vector<double> adv;
  for (const auto* r : subset) adv.push_back(r->advantage);
  const std::vector<double> w = advantage_weights(adv, fc.beta);
  const ad::Adam opt{fc.lr};
  const double inv_n = 1.0 / static_cast<double>(subset.size());
  for (int s = 0; s < fc.max_steps; ++s) {
    cur.zero_grad();
    {
      Tape t;
      const Tape::Id ll = weighted_loglik(t, cur, subset, w, fleet, cfg);
      const Tape::Id kl = t.scale(kl_sum(t, cur, ref, subset, fleet, cfg), inv_n);
      t.backward(t.sub(t.scale(kl, fc.lambda_kl), ll));
    }
    opt.step(cur);
    const double kl = subset_kl(cur, ref, subset, fleet, cfg);
    if (!(kl <= fc.eps_kl)) break;
    best.actor = cur;
    best.mean_kl = kl;
    best.steps_taken = s + 1;
  }
  return best;
}

ExperienceBank build_bank(const Scenario& scenario, const ParamStore& actor, ParamStore& critic,
                          const std::vector<std::uint64_t>& seeds, const MappoConfig& cfg, SimOptions options) {
  ExperienceBank bank;
  ActorPolicy policy(actor, cfg, "bank");
  policy.record = true;
  options.record_trucks = false;
  const int fleet = scenario.fleet.trucks;
  for (std::uint64_t seed : seeds) {
    const EpisodeResult res = run_episode(scenario, policy, seed, options);
    std::vector<double> rewards, values;
    for (const StateSample& s : policy.state_log) {
      rewards.push_back(res.epoch_rewards.at(static_cast<std::size_t>(s.epoch)) * cfg.reward_scale);
      values.push_back(critic_value(critic, s.state, fleet, cfg));
    }
    const GaeResult g = gae(rewards, values, cfg.gamma, cfg.lambda);
    std::map<int, std::size_t> at;
    for (std::size_t i = 0; i < policy.state_log.size(); ++i) at[policy.state_log[i].epoch] = i;
    for (const AgentSample& a : policy.agent_log) {
      const std::size_t i = at.at(a.epoch);
      ExperienceRecord r;
      r.context = context_descriptor(a.obs);
      r.obs = a.obs;
      r.action = a.action;
      r.reward = rewards[i];
      r.advantage = g.advantages[i];
      bank.add(std::move(r));
    }
  }
  std::vector<double> adv;
  for (const auto& r : bank.records()) adv.push_back(r.advantage);
  normalize(adv);
  ExperienceBank out;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    ExperienceRecord r = bank.records()[i];
    r.advantage = adv[i];
    out.add(std::move(r));
  }
  out.finalize();
  return out;
}

ArmdPolicy::ArmdPolicy(ParamStore actor, const ExperienceBank& bank, MappoConfig cfg, FinetuneConfig fc,
                       std::string name)
    : ActorPolicy(std::move(actor), cfg, std::move(name)), bank_(bank), fc_(fc), pretrained_hash_(actor_.hash()) {}

JointAction ArmdPolicy::decide(DecisionContext& ctx) {
  if (actor_.hash() != pretrained_hash_) ++stats_.reset_violations;
  const int fleet = ctx.sim.scenario().fleet.trucks;
  JointAction out;
  for (const Observation& o : ctx.observations) {
    const bool reachable = std::any_of(o.candidates.begin(), o.candidates.end(),
                                       [](const StationObs& c) { return is_reachable(c.travel_min); });
    if (!reachable) continue;
    std::vector<double> probs;
    if (bank_.empty()) {
      probs = actor_probs(actor_, o, fleet, cfg_);
    } else {
      std::vector<const ExperienceRecord*> subset;
      for (std::size_t i : retrieve(bank_, context_descriptor(o), fc_.k_ret)) subset.push_back(&bank_.records()[i]);
      FinetuneResult ft = finetune_actor(actor_, subset, fleet, cfg_, fc_);
      ++stats_.adaptations;
      stats_.max_kl = std::max(stats_.max_kl, ft.mean_kl);
      probs = actor_probs(ft.actor, o, fleet, cfg_);
    }
    const double u = ctx.rng.uniform();
    double acc = 0.0;
    int idx = -1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] <= 0.0) continue;
      acc += probs[i];
      idx = static_cast<int>(i);
      if (u < acc) break;
    }
    out.emplace_back(o.truck, o.candidates[static_cast<std::size_t>(idx)].station);
  }
  return out;
}

}  // namespace armd
