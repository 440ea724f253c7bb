#include "delip/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "delip/cli/config.hpp"
#include "delip/cli/evaluate.hpp"
#include "delip/env/dataset_csv.hpp"
#include "delip/env/oracle_world.hpp"
#include "delip/numerics/checkpoint.hpp"
#include "delip/numerics/errors.hpp"
#include "delip/numerics/runtime.hpp"
#include "delip/ssm/diagnostics.hpp"
#include "delip/ssm/elbo.hpp"
#include "delip/ssm/model_io.hpp"
#include "delip/trainer/dataset.hpp"
#include "delip/trainer/trainer.hpp"

namespace delip::cli {
namespace fs = std::filesystem;

namespace {

void refuse_overwrite(const fs::path& p, bool force) {
  if (!force && fs::exists(p)) throw UsageError(p.string() + " exists (use --force to overwrite)");
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw ContractError("cannot open " + p.string() + " for writing");
  return os;
}

trainer::Dataset load_dataset(const fs::path& csv, const RunConfig& cfg) {
  if (!fs::exists(csv)) throw UsageError("dataset not found: " + csv.string());
  const auto meta = env::read_dataset_meta(env::meta_path_for(csv));
  if (meta.env.hash() != cfg.env.hash()) {
    throw ContractError("dataset " + csv.string() + " was collected under a different env config");
  }
  auto trajectories = env::read_dataset_csv(csv);
  if (trajectories.size() != meta.episodes) throw ContractError("dataset row count disagrees with its metadata");
  return trainer::Dataset::from(std::move(trajectories), meta.env.hash(), meta.seed);
}

void check_env(const Checkpoint& ckpt, const RunConfig& cfg) {
  if (ssm::meta_value(ckpt, "env_hash") != std::to_string(cfg.env.hash())) {
    throw ContractError("checkpoint was trained under a different env config; refusing to mix them");
  }
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

int run_collect(const CollectArgs& args, std::ostream& log) {
  const RunConfig cfg = load_config(args.common.config, args.common.overrides);
  if (args.out.empty()) throw UsageError("collect: --out is required");
  if (args.episodes < 1 || args.length < 1) throw UsageError("collect: --episodes and --len must be >= 1");
  refuse_overwrite(args.out, args.common.force);
  Rng rng(args.common.seed);
  const auto data = trainer::collect(cfg.env, args.episodes, args.length, rng);
  if (args.out.has_parent_path()) fs::create_directories(args.out.parent_path());
  env::write_dataset_csv(args.out, data.trajectories);
  env::write_dataset_meta(env::meta_path_for(args.out), {cfg.env, args.common.seed, args.episodes, args.length});
  log << "collected " << args.episodes << " episodes x " << args.length << " steps -> " << args.out.string() << "\n";
  return 0;
}

int run_train(const TrainArgs& args, std::ostream& log) {
  configure_allocator();
  std::vector<std::string> overrides = args.common.overrides;
  if (args.mode == "pretrain") {
    // Full-mode training with the reward channel zeroed and no stratified
    // sampler: the starting point for a rewards-only run.
    overrides.insert(overrides.begin(), {"train.mode=full", "train.zero_reward_channel=1", "train.stratified=0"});
  } else {
    overrides.insert(overrides.begin(), "train.mode=" + args.mode);
  }
  const RunConfig cfg = load_config(args.common.config, overrides);
  if (args.data.empty() || args.out.empty()) throw UsageError("train: --data and --out are required");
  if (cfg.train.mode == trainer::TrainMode::RewardsOnly && !args.pretrained) {
    throw UsageError("train: --mode rewards-only needs --pretrained <checkpoint>");
  }
  refuse_overwrite(args.out / "checkpoint.bin", args.common.force);
  const auto data = load_dataset(args.data, cfg);

  Rng root(args.common.seed);
  Rng train_rng = root.split(1);
  trainer::TrainResult result;
  if (cfg.train.mode == trainer::TrainMode::Full) {
    Rng init_rng = root.split(0);
    ssm::DelipModel model(cfg.model, init_rng);
    result = trainer::train_full(model, data, cfg.train, train_rng);
  } else {
    if (!fs::exists(*args.pretrained)) throw UsageError("pretrained checkpoint not found: " + args.pretrained->string());
    const Checkpoint pre = read_checkpoint(*args.pretrained);
    check_env(pre, cfg);
    auto model = ssm::load_model(pre);
    result = trainer::train_rewards_only(*model, pre, data, cfg.train, train_rng);
  }
  for (Checkpoint* c : {&result.final, &result.best}) {
    c->meta["train.seed"] = std::to_string(args.common.seed);
    c->meta["config_hash"] = cfg.hash_hex();
  }
  fs::create_directories(args.out);
  write_checkpoint(args.out / "checkpoint.bin", result.final);
  write_checkpoint(args.out / "best.bin", result.best);
  auto os = open_out(args.out / "train_log.csv");
  os << "epoch,mean_elbo,wall_seconds,config_hash\n";
  for (const auto& row : result.log) {
    os << row.epoch << ',' << env::format_real(row.mean_elbo) << ',' << env::format_real(row.wall_seconds) << ','
       << cfg.hash_hex() << '\n';
  }
  log << "trained " << result.epochs_run << " epochs (" << (result.converged ? "converged" : "epoch cap")
      << "), final objective " << (result.log.empty() ? 0.0 : result.log.back().mean_elbo) << " -> "
      << args.out.string() << "\n";
  return 0;
}

int run_eval(const EvalArgs& args, std::ostream& log) {
  configure_allocator();
  std::vector<std::string> overrides = args.common.overrides;
  if (args.episodes) overrides.push_back("eval.episodes=" + std::to_string(*args.episodes));
  if (args.length) overrides.push_back("eval.length=" + std::to_string(*args.length));
  const RunConfig cfg = load_config(args.common.config, overrides);
  if (args.out.empty()) throw UsageError("eval: --out is required");
  const Method method = method_from_string(args.planner);
  refuse_overwrite(args.out / "metrics.csv", args.common.force);

  RunTag tag{method, 0, args.common.seed, cfg.hash_hex()};
  std::unique_ptr<ssm::DelipModel> model;
  std::unique_ptr<WorldModel> world;
  if (method == Method::Delip) {
    if (!args.checkpoint) throw UsageError("eval: --planner delip needs --checkpoint");
    if (!fs::exists(*args.checkpoint)) throw UsageError("checkpoint not found: " + args.checkpoint->string());
    const Checkpoint ckpt = read_checkpoint(*args.checkpoint);
    check_env(ckpt, cfg);
    model = ssm::load_model(ckpt);
    world = std::make_unique<ssm::LearnedWorld>(*model);
    tag.dataset_size = std::stoull(ssm::meta_value(ckpt, "data.size"));
  } else if (method == Method::Oracle) {
    world = std::make_unique<env::OracleWorld>(cfg.env, cfg.oracle_reward_sigma);
  }
  const auto results = cli::run_eval(method, cfg.env, world.get(), cfg.planner, cfg.eval, Rng(args.common.seed));
  write_eval_outputs(args.out, tag, results);
  const auto s = summarize(results);
  log << method_name(method) << ": " << results.size() << " episodes, mean return " << s.mean << " (se "
      << s.stderr_ << "), success rate " << s.success_rate << "\n";
  return 0;
}

std::vector<MetricRow> read_metrics_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("metrics file not found: " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != kMetricsHeader) {
    throw ContractError(path.string() + ": not a metrics file (header mismatch)");
  }
  std::vector<MetricRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 7) throw ContractError(path.string() + ":" + std::to_string(lineno) + ": expected 7 fields");
    try {
      MetricRow r;
      r.method = f[0];
      r.dataset_size = std::stoull(f[1]);
      r.seed = std::stoull(f[2]);
      r.episode = std::stoull(f[3]);
      r.return_total = std::stod(f[4]);
      r.success = f[5] == "1";
      r.config_hash = f[6];
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw ContractError(path.string() + ":" + std::to_string(lineno) + ": unparsable field");
    }
  }
  return rows;
}

std::vector<ReportRow> aggregate(const std::vector<MetricRow>& rows, bool with_regret) {
  std::map<std::pair<std::string, std::size_t>, std::vector<const MetricRow*>> groups;
  double oracle_sum = 0.0;
  std::size_t oracle_n = 0;
  for (const auto& r : rows) {
    groups[{r.method, r.dataset_size}].push_back(&r);
    if (r.method == "oracle") {
      oracle_sum += r.return_total;
      ++oracle_n;
    }
  }
  if (with_regret && oracle_n == 0) throw ContractError("regret requested but no oracle rows were given");
  const double oracle_mean = oracle_n ? oracle_sum / static_cast<double>(oracle_n) : 0.0;

  std::vector<ReportRow> out;
  for (const auto& [key, members] : groups) {
    ReportRow row;
    row.method = key.first;
    row.dataset_size = key.second;
    row.n = members.size();
    const double n = static_cast<double>(row.n);
    double succ = 0.0;
    for (const auto* m : members) {
      row.mean_return += m->return_total;
      succ += m->success ? 1.0 : 0.0;
    }
    row.mean_return /= n;
    row.success_rate = succ / n;
    if (row.n > 1) {
      double ss = 0.0;
      for (const auto* m : members) ss += (m->return_total - row.mean_return) * (m->return_total - row.mean_return);
      row.stderr_ = std::sqrt(ss / (n - 1.0) / n);
    }
    if (with_regret) row.regret = oracle_mean - row.mean_return;
    out.push_back(row);
  }
  return out;
}

void write_report_csv(std::ostream& os, const std::vector<ReportRow>& rows) {
  os << "method,dataset_size,n,mean_return,stderr,success_rate,regret\n";
  for (const auto& r : rows) {
    os << r.method << ',' << r.dataset_size << ',' << r.n << ',' << env::format_real(r.mean_return) << ','
       << env::format_real(r.stderr_) << ',' << env::format_real(r.success_rate) << ','
       << (r.regret ? env::format_real(*r.regret) : std::string()) << '\n';
  }
}

int run_report(const ReportArgs& args, std::ostream& log) {
  if (args.inputs.empty()) throw UsageError("report-data: at least one metrics file is required");
  if (args.out.empty()) throw UsageError("report-data: --out is required");
  refuse_overwrite(args.out, args.force);
  std::vector<MetricRow> rows;
  for (const auto& p : args.inputs) {
    auto part = read_metrics_csv(p);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  const auto report = aggregate(rows, args.regret);
  auto os = open_out(args.out);
  write_report_csv(os, report);
  log << "wrote " << report.size() << " rows -> " << args.out.string() << "\n";
  return 0;
}

int run_dump_model(const DumpArgs& args, std::ostream& log) {
  configure_allocator();
  const RunConfig cfg = load_config(args.common.config, args.common.overrides);
  if (args.out.empty()) throw UsageError("dump-model: --out is required");
  if (!fs::exists(args.checkpoint)) throw UsageError("checkpoint not found: " + args.checkpoint.string());
  refuse_overwrite(args.out, args.common.force);
  const Checkpoint ckpt = read_checkpoint(args.checkpoint);
  check_env(ckpt, cfg);
  auto model = ssm::load_model(ckpt);
  Rng rng(args.common.seed);
  const auto held_out = trainer::collect(cfg.env, args.episodes, args.length, rng);
  const bool zeroed = ssm::meta_value(ckpt, "train.reward_input") == "zeroed";
  const auto rows = ssm::one_step_predictions(*model, cfg.env, held_out.trajectories, zeroed);
  auto os = open_out(args.out);
  ssm::write_predictions_csv(os, rows);
  const auto rmse = ssm::channel_rmse(rows);
  log << "one-step RMSE left " << rmse[0] << " door " << rmse[1] << " right " << rmse[2] << " -> "
      << args.out.string() << "\n";
  return 0;
}

}  // namespace delip::cli
