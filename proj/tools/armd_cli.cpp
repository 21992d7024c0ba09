// armd: command-line driver for simulation, training, MIP benchmarks and
// evaluation sweeps.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "armd/adapt.hpp"
#include "armd/metrics.hpp"
#include "armd/mip.hpp"
#include "armd/policies.hpp"
#include "armd/stpm.hpp"
#include "armd/trace_io.hpp"

namespace fs = std::filesystem;
using namespace armd;

namespace {

// Seed ranges kept apart from the evaluation seeds listed in scenario files.
constexpr std::uint64_t kProfileSeedBase = 1000;
constexpr std::uint64_t kBankSeedBase = 500000;
constexpr std::uint64_t kStpmSeedBase = 200000;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Scenario scenario_from(const std::string& path) { return path.empty() ? default_scenario() : load_scenario(path); }

std::vector<std::uint64_t> seed_range(std::uint64_t base, int n) {
  std::vector<std::uint64_t> s;
  for (int i = 0; i < n; ++i) s.push_back(base + static_cast<std::uint64_t>(i));
  return s;
}

int worker_count() {
  const char* env = std::getenv("ARMD_WORKERS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1 || n > 256) throw UsageError("ARMD_WORKERS must be an integer in [1, 256]");
  return static_cast<int>(n);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory '" + dir + "': " + ec.message());
}

// Everything a policy may need; loaded lazily from the command line.
struct Assets {
  std::string actor_path, critic_path, bank_path, stpm_path;
  bool no_finetune = false;
  bool no_reroute = false;
  int profile_runs = 10;

  std::optional<ad::ParamStore> actor;
  std::optional<ExperienceBank> bank;
  std::optional<StpmForecaster> stpm;
  std::map<std::string, Profiles> profiles;  // by scenario name

  void load(const std::vector<std::string>& policies) {
    auto needs = [&](const char* p) { return std::find(policies.begin(), policies.end(), p) != policies.end(); };
    if (needs("armd") || needs("armd-nf")) {
      if (actor_path.empty()) throw UsageError("policy armd/armd-nf needs --actor");
      actor = ad::ParamStore::load(actor_path);
    }
    if (needs("armd") && !no_finetune) {
      if (bank_path.empty()) throw UsageError("policy armd needs --bank (or --no-finetune)");
      bank = ExperienceBank::load(bank_path);
    }
    if (!stpm_path.empty() && !no_reroute) stpm_path_loaded = true;
  }
  bool stpm_path_loaded = false;

  void load_stpm(const Scenario& sc) {
    if (!stpm_path_loaded || stpm) return;
    stpm.emplace(StpmModel(sc.network, StpmConfig{}, ad::ParamStore::load(stpm_path)));
  }

  const Profiles& profiles_for(const Scenario& sc) {
    auto it = profiles.find(sc.name);
    if (it == profiles.end())
      it = profiles.emplace(sc.name, forecast_profiles(sc, seed_range(kProfileSeedBase, profile_runs))).first;
    return it->second;
  }

  SimOptions options() const {
    SimOptions o;
    o.routing = no_reroute ? RoutingMode::Static : RoutingMode::Predictive;
    if (stpm) o.forecaster = &*stpm;
    return o;
  }

  std::unique_ptr<DispatchPolicy> make(const std::string& name, const Scenario& sc) {
    const MappoConfig cfg;
    if (name == "none" || name == "greedy") return std::make_unique<GreedyPolicy>();
    if (name == "armd-nf") return std::make_unique<ActorPolicy>(*actor, cfg, "armd-nf");
    if (name == "armd") {
      if (no_finetune) return std::make_unique<ActorPolicy>(*actor, cfg, "armd");
      return std::make_unique<ArmdPolicy>(*actor, *bank, cfg, FinetuneConfig{});
    }
    if (name == "of-mip") return std::make_unique<MipPolicy>(MipMode::Offline, profiles_for(sc));
    if (name == "rh-mip") return std::make_unique<MipPolicy>(MipMode::Rolling, profiles_for(sc));
    throw UsageError("unknown policy '" + name + "' (none, greedy, armd, armd-nf, of-mip, rh-mip)");
  }
};

const std::vector<std::string> kPolicies{"none", "greedy", "armd", "armd-nf", "of-mip", "rh-mip"};

EpisodeResult run_one(Assets& assets, const Scenario& base, const std::string& policy, int fleet, std::uint64_t seed) {
  Scenario sc = base;
  sc.fleet.trucks = policy == "none" ? 0 : fleet;
  std::unique_ptr<DispatchPolicy> p = assets.make(policy, sc);
  EpisodeResult r = run_episode(sc, *p, seed, assets.options());
  r.policy = policy;
  return r;
}

std::string summary_text(const std::vector<SummaryRow>& rows) {
  std::ostringstream out;
  out << kSummaryHeader << '\n';
  for (const SummaryRow& r : rows) write_summary_row(out, r);
  return out.str();
}

void add_asset_flags(CLI::App* cmd, Assets& a) {
  cmd->add_option("--actor", a.actor_path, "actor checkpoint (armd, armd-nf)");
  cmd->add_option("--bank", a.bank_path, "experience bank (armd)");
  cmd->add_option("--stpm", a.stpm_path, "STPM checkpoint for predictive truck routing");
  cmd->add_flag("--no-finetune", a.no_finetune, "armd without online adaptation");
  cmd->add_flag("--no-reroute", a.no_reroute, "static snapshot truck routes");
  cmd->add_option("--profile-runs", a.profile_runs, "No-MCT runs behind the MIP forecast profiles")
      ->check(CLI::Range(1, 1000));
}

// ------------------------------------------------------------------ commands

int cmd_simulate(const std::string& scen, const std::string& policy, std::vector<std::uint64_t> seeds, int fleet,
                 const std::string& out, Assets& assets) {
  const Scenario sc = scenario_from(scen);
  if (seeds.empty()) seeds = sc.seeds;
  if (fleet < 0) fleet = sc.fleet.trucks;
  assets.load({policy});
  assets.load_stpm(sc);
  ensure_dir(out);
  std::vector<SummaryRow> rows;
  for (std::uint64_t seed : seeds) {
    const EpisodeResult r = run_one(assets, sc, policy, fleet, seed);
    const std::string stem = policy + "_k" + std::to_string(r.fleet) + "_s" + std::to_string(seed);
    std::ostringstream st, tr;
    write_station_trace(st, r.trace);
    write_truck_trace(tr, r.truck_rows);
    write_file((fs::path(out) / ("stations_" + stem + ".csv")).string(), st.str());
    write_file((fs::path(out) / ("trucks_" + stem + ".csv")).string(), tr.str());
    rows.push_back(summarize_episode(r));
  }
  write_file((fs::path(out) / "summary.csv").string(), summary_text(rows));
  return 0;
}

int cmd_train_mappo(const std::string& scen, int iterations, std::uint64_t seed, const std::string& actor_out,
                    const std::string& critic_out, const std::string& log_out, bool ca) {
  const Scenario sc = scenario_from(scen);
  MappoConfig cfg;
  cfg.seed = seed;
  if (ca) {
    const CaTrainResult r = train_ca(sc, iterations, cfg);
    r.ca.save(actor_out);
    if (!critic_out.empty()) r.critic.save(critic_out);
    if (!log_out.empty()) write_file(log_out, train_log_csv(r.log));
    return 0;
  }
  const TrainResult r = train_mappo(sc, iterations, cfg, [](const TrainLogRow& row) {
    if (row.iteration % 25 == 0)
      std::cerr << "iteration " << row.iteration << " mean_return " << fmt_double(row.mean_return) << '\n';
  });
  r.actor.save(actor_out);
  if (!critic_out.empty()) r.critic.save(critic_out);
  if (!log_out.empty()) write_file(log_out, train_log_csv(r.log));
  return 0;
}

int cmd_train_stpm(const std::string& scen, int scenarios, int epochs, int stride, const std::string& out,
                   const std::string& log_out, const std::string& data_out) {
  const Scenario sc = scenario_from(scen);
  const TrafficDataset data = generate_training_data(sc, seed_range(kStpmSeedBase, scenarios));
  if (!data_out.empty()) data.save(data_out);
  const DatasetSplit split = split_by_scenario(data);
  StpmModel model(sc.network, StpmConfig{});
  StpmTrainOptions opt;
  opt.epochs = epochs;
  opt.window_stride = stride;
  const StpmTrainResult r = train_stpm(model, data, split.train, opt);
  model.params().save(out);
  const ForecastSkill skill = evaluate_forecast(model, data, split.test, 1);
  std::ostringstream log;
  log << "step,train_loss,validation_mse\n";
  for (const auto& row : r.log)
    log << row.step << ',' << fmt_double(row.train_loss) << ',' << fmt_double(row.validation_mse) << '\n';
  if (!log_out.empty()) write_file(log_out, log.str());
  std::cout << "test_mse," << fmt_double(skill.model_mse) << "\npersistence_mse," << fmt_double(skill.persistence_mse)
            << "\nwindows," << skill.windows << '\n';
  return 0;
}

int cmd_build_bank(const std::string& scen, const std::string& actor_path, const std::string& critic_path, int runs,
                   const std::string& out) {
  const Scenario sc = scenario_from(scen);
  const ad::ParamStore actor = ad::ParamStore::load(actor_path);
  ad::ParamStore critic = ad::ParamStore::load(critic_path);
  const ExperienceBank bank = build_bank(sc, actor, critic, seed_range(kBankSeedBase, runs), MappoConfig{});
  bank.save(out);
  std::cout << "records," << bank.size() << '\n';
  return 0;
}

int cmd_mip(const std::string& scen, const std::string& mode, std::vector<std::uint64_t> seeds, int fleet,
            const std::string& out, const std::string& lp_out, Assets& assets) {
  Scenario sc = scenario_from(scen);
  if (seeds.empty()) seeds = sc.seeds;
  if (fleet >= 0) sc.fleet.trucks = fleet;
  if (mode != "offline" && mode != "rolling") throw UsageError("--mode must be offline or rolling");
  ensure_dir(out);
  const Profiles& prof = assets.profiles_for(sc);
  const MipMode m = mode == "offline" ? MipMode::Offline : MipMode::Rolling;
  std::vector<SummaryRow> rows;
  for (std::uint64_t seed : seeds) {
    MipPolicy policy(m, prof);
    const EpisodeResult r = run_episode(sc, policy, seed, assets.options());
    rows.push_back(summarize_episode(r));
    std::ostringstream plan;
    plan << "epoch,truck,station\n";
    if (m == MipMode::Offline) {
      const int K = sc.fleet.trucks;
      for (std::size_t g = 0; K > 0 && g < policy.plan().size(); ++g)
        plan << g / static_cast<std::size_t>(K) << ',' << g % static_cast<std::size_t>(K) << ',' << policy.plan()[g] << '\n';
    } else {
      for (const TripRecord& t : r.trips)
        plan << static_cast<int>(t.dispatch_min / (sc.epochs.epoch_h * 60.0)) << ',' << t.truck << ',' << t.station << '\n';
    }
    write_file((fs::path(out) / (policy.name() + "_plan_s" + std::to_string(seed) + ".csv")).string(), plan.str());
  }
  write_file((fs::path(out) / "summary.csv").string(), summary_text(rows));

  if (!lp_out.empty() || m == MipMode::Offline) {
    // The full-horizon instance as planned before deployment.
    const Simulator sim(sc, seeds.front());
    const MipInstance inst = offline_instance(sim, prof);
    const MipSolution sol = solve_mip(inst, MipOptions{12, 200000, true});
    write_file((fs::path(out) / "of-mip_solution.csv").string(), solution_csv(inst, sol));
    if (!lp_out.empty()) export_lp_file(inst, lp_out);
  }
  return 0;
}

struct Job {
  std::size_t scenario = 0;
  std::string policy;
  int fleet = 0;
  std::uint64_t seed = 0;
};

int cmd_evaluate(const std::vector<std::string>& scen_paths, std::vector<std::string> policies, std::vector<int> fleets,
                 std::vector<std::uint64_t> seeds, const std::string& out, Assets& assets) {
  std::vector<Scenario> scenarios;
  if (scen_paths.empty()) scenarios.push_back(default_scenario());
  for (const auto& p : scen_paths) scenarios.push_back(load_scenario(p));
  if (policies.empty()) policies = {"none", "greedy"};
  for (const auto& p : policies)
    if (std::find(kPolicies.begin(), kPolicies.end(), p) == kPolicies.end()) throw UsageError("unknown policy '" + p + "'");
  assets.load(policies);
  assets.load_stpm(scenarios.front());
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    const std::vector<std::uint64_t> ss = seeds.empty() ? scenarios[s].seeds : seeds;
    const std::vector<int> fl = fleets.empty() ? std::vector<int>{scenarios[s].fleet.trucks} : fleets;
    // Profiles are built up front so workers only read them.
    if (std::find(policies.begin(), policies.end(), "of-mip") != policies.end() ||
        std::find(policies.begin(), policies.end(), "rh-mip") != policies.end())
      assets.profiles_for(scenarios[s]);
    for (const auto& p : policies)
      for (int f : (p == "none" ? std::vector<int>{0} : fl))
        for (std::uint64_t seed : ss) jobs.push_back(Job{s, p, f, seed});
  }
  std::vector<SummaryRow> rows(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto work = [&]() {
    for (;;) {
      const std::size_t j = next++;
      if (j >= jobs.size()) return;
      try {
        const Job& job = jobs[j];
        rows[j] = summarize_episode(run_one(assets, scenarios[job.scenario], job.policy, job.fleet, job.seed));
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        next = jobs.size();
      }
    }
  };
  const int workers = std::min<int>(worker_count(), static_cast<int>(std::max<std::size_t>(jobs.size(), 1)));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  write_file(out, summary_text(rows));
  return 0;
}

int cmd_afd(const std::string& scen, int runs, std::vector<std::uint64_t> seeds, const std::string& out) {
  const Scenario sc = scenario_from(scen);
  if (seeds.empty()) seeds = sc.seeds;
  const Profiles prof = forecast_profiles(sc, seed_range(kProfileSeedBase, runs));
  const auto pred = prof.arrival_grid();
  std::ostringstream csv;
  csv << "seed,station,afd\n";
  std::ostringstream tail;
  tail << "seed,mean_afd,gini\n";
  Scenario none = sc;
  none.fleet.trucks = 0;
  for (std::uint64_t seed : seeds) {
    GreedyPolicy p;
    const EpisodeResult r = run_episode(none, p, seed);
    const AfdReport rep = afd_report(r.arrivals, pred);
    for (std::size_t i = 0; i < rep.per_station.size(); ++i)
      csv << seed << ',' << i << ',' << fmt_double(rep.per_station[i]) << '\n';
    tail << seed << ',' << fmt_double(rep.mean) << ',' << fmt_double(rep.gini) << '\n';
  }
  write_file(out, csv.str());
  const fs::path p(out);
  write_file((p.parent_path() / (p.stem().string() + "_summary.csv")).string(), tail.str());
  return 0;
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const ScenarioError*>(&e)) return "scenario";
  if (dynamic_cast<const UsageError*>(&e)) return "usage";
  if (dynamic_cast<const MipError*>(&e)) return "mip";
  if (dynamic_cast<const InvalidAction*>(&e)) return "invalid_action";
  if (dynamic_cast<const NetworkError*>(&e)) return "network";
  return "runtime";
}

void report(const std::string& kind, const std::string& message) {
  nlohmann::json j{{"error", kind}, {"message", message}};
  std::cerr << j.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"armd: evacuation charging simulator and mobile charging truck dispatch"};
  app.require_subcommand(1);
  Assets assets;

  std::string scen, out, policy = "greedy", mode = "offline", lp_out, log_out, actor_out, critic_out, data_out;
  std::vector<std::string> scen_list, policies;
  std::vector<std::uint64_t> seeds;
  std::vector<int> fleets;
  int fleet = -1, iterations = 300, scenarios = 64, epochs = 1, stride = 16, runs = 10;
  std::uint64_t seed = 7;
  bool ca = false;

  auto* sim = app.add_subcommand("simulate", "run episodes and write traces plus a summary");
  sim->add_option("--scenario", scen, "scenario file (default: built-in network)");
  sim->add_option("--policy", policy, "none, greedy, armd, armd-nf, of-mip, rh-mip");
  sim->add_option("--seed", seeds, "episode seeds (default: the scenario's)");
  sim->add_option("--fleet", fleet, "truck count (default: the scenario's)")->check(CLI::Range(0, 64));
  sim->add_option("--out", out, "output directory")->required();
  add_asset_flags(sim, assets);

  auto* tm = app.add_subcommand("train-mappo", "train the shared actor and centralized critic");
  tm->add_option("--scenario", scen, "scenario file");
  tm->add_option("--iterations", iterations, "PPO iterations")->check(CLI::Range(0, 100000));
  tm->add_option("--seed", seed, "training seed");
  tm->add_option("--actor-out", actor_out, "actor checkpoint path")->required();
  tm->add_option("--critic-out", critic_out, "critic checkpoint path");
  tm->add_option("--log", log_out, "training log CSV");
  tm->add_flag("--centralized", ca, "train the centralized-actor baseline instead");

  auto* ts = app.add_subcommand("train-stpm", "train the travel-time predictor on No-MCT traffic");
  ts->add_option("--scenario", scen, "scenario file");
  ts->add_option("--scenarios", scenarios, "simulated episodes in the dataset")->check(CLI::Range(2, 100000));
  ts->add_option("--epochs", epochs, "passes over the training windows")->check(CLI::Range(0, 1000));
  ts->add_option("--window-stride", stride, "use every n-th training window")->check(CLI::Range(1, 1000));
  ts->add_option("--out", out, "checkpoint path")->required();
  ts->add_option("--log", log_out, "training log CSV");
  ts->add_option("--dataset-out", data_out, "also write the dataset file");

  auto* bb = app.add_subcommand("build-bank", "roll the frozen actor and store experience records");
  bb->add_option("--scenario", scen, "scenario file");
  bb->add_option("--actor", assets.actor_path, "actor checkpoint")->required();
  bb->add_option("--critic", assets.critic_path, "critic checkpoint")->required();
  bb->add_option("--runs", runs, "episodes")->check(CLI::Range(1, 100000));
  bb->add_option("--out", out, "bank path")->required();

  auto* mp = app.add_subcommand("mip", "run the OF-MIP or RH-MIP benchmark");
  mp->add_option("--scenario", scen, "scenario file");
  mp->add_option("--mode", mode, "offline or rolling");
  mp->add_option("--seed", seeds, "episode seeds");
  mp->add_option("--fleet", fleet, "truck count")->check(CLI::Range(0, 64));
  mp->add_option("--out", out, "output directory")->required();
  mp->add_option("--lp", lp_out, "also export the full-horizon model as an LP file");
  mp->add_option("--profile-runs", assets.profile_runs, "No-MCT runs behind the profiles")->check(CLI::Range(1, 1000));
  mp->add_flag("--no-reroute", assets.no_reroute, "static snapshot truck routes");

  auto* ev = app.add_subcommand("evaluate", "sweep policies x scenarios x fleets x seeds into one summary CSV");
  ev->add_option("--scenario", scen_list, "scenario files (repeatable)");
  ev->add_option("--policy", policies, "policies (repeatable)");
  ev->add_option("--fleet", fleets, "fleet sizes (repeatable)");
  ev->add_option("--seed", seeds, "seeds (default: each scenario's)");
  ev->add_option("--out", out, "summary CSV path")->required();
  add_asset_flags(ev, assets);

  auto* af = app.add_subcommand("afd-report", "arrival forecast deviation of the No-MCT profiles");
  af->add_option("--scenario", scen, "scenario file");
  af->add_option("--runs", runs, "profile runs")->check(CLI::Range(1, 1000));
  af->add_option("--seed", seeds, "held-out seeds (default: the scenario's)");
  af->add_option("--out", out, "per-station CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report("usage", e.what());
    return 2;
  }

  try {
    if (*sim) return cmd_simulate(scen, policy, seeds, fleet, out, assets);
    if (*tm) return cmd_train_mappo(scen, iterations, seed, actor_out, critic_out, log_out, ca);
    if (*ts) return cmd_train_stpm(scen, scenarios, epochs, stride, out, log_out, data_out);
    if (*bb) return cmd_build_bank(scen, assets.actor_path, assets.critic_path, runs, out);
    if (*mp) return cmd_mip(scen, mode, seeds, fleet, out, lp_out, assets);
    if (*ev) return cmd_evaluate(scen_list, policies, fleets, seeds, out, assets);
    if (*af) return cmd_afd(scen, runs, seeds, out);
  } catch (const std::exception& e) {
    const std::string kind = error_kind(e);
    report(kind, e.what());
    return kind == "scenario" || kind == "usage" ? 2 : 1;
  }
  return 0;
}
