#pragma once

#include <array>
#include <string>
#include <vector>

#include "armd/mappo.hpp"

namespace armd {

using Context = std::array<double, 2>;

struct ExperienceRecord {
  Context context{0.0, 0.0};
  Observation obs;
  int action = 0;  // index into obs.candidates
  double reward = 0.0;
  double advantage = 0.0;
};

class ExperienceBank {
 public:
  void add(ExperienceRecord r);
  // Recomputes per-dimension mean and std of the stored contexts.
  void finalize();
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::vector<ExperienceRecord>& records() const { return records_; }
  const Context& mean() const { return mean_; }
  const Context& stddev() const { return std_; }
  // Standardised distance; dimensions with zero spread are ignored.
  double distance(const Context& a, const Context& b) const;

  std::string serialize() const;
  static ExperienceBank deserialize(const std::string& bytes);
  void save(const std::string& path) const;
  static ExperienceBank load(const std::string& path);

 private:
  std::vector<ExperienceRecord> records_;
  Context mean_{0.0, 0.0};
  Context std_{0.0, 0.0};
};

// [H, Q_tot / m_tot] over the observable stations; m_tot = 0 divides by 1.
Context context_descriptor(const Observation& obs);

// Indices of the k records closest to c, nearest first, ties by index.
std::vector<std::size_t> retrieve(const ExperienceBank& bank, const Context& c, std::size_t k = 256);

// exp(A / beta) clipped to [e^-5, e^5].
std::vector<double> advantage_weights(const std::vector<double>& advantages, double beta);

struct FinetuneConfig {
  std::size_t k_ret = 256;
  double beta = 1.0;
  double eps_kl = 0.05;
  double lambda_kl = 1.0;
  int max_steps = 10;
  double lr = 0.001;
};

struct FinetuneResult {
  ad::ParamStore actor;
  double mean_kl = 0.0;  // of the returned iterate on the subset
  int steps_taken = 0;   // accepted gradient steps
};

// Weighted log-likelihood of the subset, normalised by the weight sum.
ad::Tape::Id weighted_loglik(ad::Tape& t, ad::ParamStore& actor, const std::vector<const ExperienceRecord*>& subset,
                             const std::vector<double>& weights, int fleet, const MappoConfig& cfg);
// Mean KL(actor || reference) over the subset's observations.
double subset_kl(ad::ParamStore& actor, ad::ParamStore& reference, const std::vector<const ExperienceRecord*>& subset,
                 int fleet, const MappoConfig& cfg);

FinetuneResult finetune_actor(const ad::ParamStore& pretrained, const std::vector<const ExperienceRecord*>& subset,
                              int fleet, const MappoConfig& cfg, const FinetuneConfig& fc);

// Rolls the frozen actor over `seeds` and stores one record per agent
// decision, with GAE advantages from `critic` normalised over the bank.
ExperienceBank build_bank(const Scenario& scenario, const ad::ParamStore& actor, ad::ParamStore& critic,
                          const std::vector<std::uint64_t>& seeds, const MappoConfig& cfg, SimOptions options = {});

struct AdaptStats {
  long adaptations = 0;
  double max_kl = 0.0;
  long reset_violations = 0;  // epochs starting from non-pretrained parameters
};

// ARMD deployment: per agent, retrieve, adapt a private copy of the actor,
// act, and discard the copy.
class ArmdPolicy : public ActorPolicy {
 public:
  ArmdPolicy(ad::ParamStore actor, const ExperienceBank& bank, MappoConfig cfg, FinetuneConfig fc,
             std::string name = "armd");
  JointAction decide(DecisionContext& ctx) override;
  const AdaptStats& stats() const { return stats_; }

 private:
  const ExperienceBank& bank_;
  FinetuneConfig fc_;
  std::uint64_t pretrained_hash_;
  AdaptStats stats_;
};

}  // namespace armd
