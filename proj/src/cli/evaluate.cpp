#include "delip/cli/evaluate.hpp"

#include <cmath>
#include <exception>
#include <fstream>
#include <optional>
#include <sstream>

#include "delip/env/dataset_csv.hpp"
#include "delip/numerics/errors.hpp"

namespace delip::cli {

const char* method_name(Method m) {
  switch (m) {
    case Method::Delip: return "delip";
    case Method::Oracle: return "oracle";
    case Method::Random: return "random";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "delip") return Method::Delip;
  if (s == "oracle") return Method::Oracle;
  if (s == "random") return Method::Random;
  throw UsageError("unknown planner '" + s + "' (expected delip, oracle or random)");
}

EpisodeResult run_episode(Method method, const env::EnvConfig& env_cfg, const WorldModel* model,
                          const planner::PlannerConfig& planner_cfg, const EvalConfig& eval_cfg, const Rng& rng,
                          std::size_t episode) {
  Rng env_rng = rng.split(episode).split(0);
  Rng agent_rng = rng.split(episode).split(1);
  EpisodeResult out;
  out.episode = episode;

  double position = env::reset(env_cfg, env_rng);
  const env::Observation first = env::observe(position, env_cfg, env_rng);

  const bool planning = method != Method::Random;
  if (planning && model == nullptr) throw ContractError("evaluation: planner method needs a world model");
  belief::BeliefParticles belief;
  std::optional<planner::Pomcp> pomcp;
  if (planning) {
    belief = belief::condition(belief::init_belief(*model, eval_cfg.particles, agent_rng), first, *model, agent_rng,
                                eval_cfg.filter)
                 .belief;
    pomcp.emplace(*model, planner_cfg);
  }

  for (std::size_t t = 0; t < eval_cfg.length; ++t) {
    env::Action a;
    if (planning) {
      planner::SearchDiagnostics d;
      a = pomcp->search(belief, agent_rng, &d);
      out.decisions.push_back(d);
    } else {
      a = planner::random_action(agent_rng);
    }
    auto [next, step] = env::step(position, a, env_cfg, env_rng);
    StepRecord rec{t, a, position, step.observation, step.reward, false};
    if (planning) {
      auto upd = belief::update(belief, a, step.observation, step.reward, *model, agent_rng, eval_cfg.filter);
      belief = std::move(upd.belief);
      rec.reinitialized = upd.reinitialized;
      if (eval_cfg.dump_belief) out.beliefs.push_back(belief);
    }
    out.return_total += step.reward;
    if (a == env::Action::Open && step.reward > 0.0) out.success = true;
    out.steps.push_back(rec);
    position = next;
  }
  return out;
}

std::vector<EpisodeResult> run_eval(Method method, const env::EnvConfig& env_cfg, const WorldModel* model,
                                    const planner::PlannerConfig& planner_cfg, const EvalConfig& eval_cfg,
                                    const Rng& rng) {
  std::vector<EpisodeResult> results(eval_cfg.episodes);
  std::exception_ptr failure;
  const long n = static_cast<long>(eval_cfg.episodes);
#pragma omp parallel for schedule(dynamic, 1) if (eval_cfg.parallel)
  for (long e = 0; e < n; ++e) {
    try {
      results[static_cast<std::size_t>(e)] =
          run_episode(method, env_cfg, model, planner_cfg, eval_cfg, rng, static_cast<std::size_t>(e));
    } catch (...) {
#pragma omp critical(delip_eval_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

Summary summarize(const std::vector<EpisodeResult>& results) {
  Summary s;
  const double n = static_cast<double>(results.size());
  if (results.empty()) return s;
  double successes = 0.0;
  for (const auto& r : results) {
    s.mean += r.return_total;
    successes += r.success ? 1.0 : 0.0;
  }
  s.mean /= n;
  s.success_rate = successes / n;
  if (results.size() > 1) {
    double ss = 0.0;
    for (const auto& r : results) ss += (r.return_total - s.mean) * (r.return_total - s.mean);
    s.stderr_ = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return s;
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw ContractError("cannot open " + p.string() + " for writing");
  return os;
}

}  // namespace

void write_eval_outputs(const std::filesystem::path& dir, const RunTag& tag, const std::vector<EpisodeResult>& results) {
  std::filesystem::create_directories(dir);
  {
    auto os = open_out(dir / "metrics.csv");
    os << kMetricsHeader << '\n';
    for (const auto& r : results) {
      os << method_name(tag.method) << ',' << tag.dataset_size << ',' << tag.seed << ',' << r.episode << ','
         << env::format_real(r.return_total) << ',' << (r.success ? 1 : 0) << ',' << tag.config_hash << '\n';
    }
  }
  {
    auto os = open_out(dir / "steps.csv");
    os << kStepsHeader << '\n';
    for (const auto& r : results) {
      for (const auto& s : r.steps) {
        os << r.episode << ',' << s.t << ',' << env::format_real(s.position) << ',' << static_cast<int>(s.action);
        for (double o : s.observation) os << ',' << env::format_real(o);
        os << ',' << env::format_real(s.reward) << ',' << (s.reinitialized ? 1 : 0) << '\n';
      }
    }
  }
  if (tag.method != Method::Random) {
    auto os = open_out(dir / "decisions.csv");
    os << "episode,";
    planner::write_diagnostics_header(os);
    for (const auto& r : results) {
      for (std::size_t t = 0; t < r.decisions.size(); ++t) {
        os << r.episode << ',';
        planner::append_diagnostics_row(os, t, r.decisions[t]);
      }
    }
  }
  bool any_belief = false;
  for (const auto& r : results) any_belief = any_belief || !r.beliefs.empty();
  if (any_belief) {
    auto os = open_out(dir / "belief.csv");
    os << "episode,";
    belief::write_belief_header(os, results.front().beliefs.front().particles.cols());
    for (const auto& r : results) {
      for (std::size_t t = 0; t < r.beliefs.size(); ++t) {
        // one prefix per row: write into a buffer and prepend the episode id
        std::ostringstream buf;
        belief::append_belief_rows(buf, t, r.beliefs[t]);
        std::istringstream lines(buf.str());
        for (std::string line; std::getline(lines, line);) os << r.episode << ',' << line << '\n';
      }
    }
  }
}

}  // namespace delip::cli
