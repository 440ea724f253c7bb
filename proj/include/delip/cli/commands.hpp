#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace delip::cli {

struct CommonArgs {
  std::optional<std::filesystem::path> config;
  std::vector<std::string> overrides;  // key=value
  std::uint64_t seed = 0;
  bool force = false;
};

struct CollectArgs {
  CommonArgs common;
  std::size_t episodes = 2000;
  std::size_t length = 100;
  std::filesystem::path out;
};

struct TrainArgs {
  CommonArgs common;
  std::string mode = "full";  // full | rewards-only | pretrain
  std::filesystem::path data;
  std::optional<std::filesystem::path> pretrained;
  std::filesystem::path out;  // directory
};

struct EvalArgs {
  CommonArgs common;
  std::string planner = "oracle";
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::size_t> episodes;
  std::optional<std::size_t> length;
  std::filesystem::path out;  // directory
};

struct ReportArgs {
  std::vector<std::filesystem::path> inputs;
  std::filesystem::path out;
  bool regret = true;
  bool force = false;
};

struct DumpArgs {
  CommonArgs common;
  std::filesystem::path checkpoint;
  std::size_t episodes = 20;
  std::size_t length = 100;
  std::filesystem::path out;
};

// Each returns 0 and writes a short summary to `log`; failures are thrown
// (UsageError, ContractError, NumericError).
int run_collect(const CollectArgs& args, std::ostream& log);
int run_train(const TrainArgs& args, std::ostream& log);
int run_eval(const EvalArgs& args, std::ostream& log);
int run_report(const ReportArgs& args, std::ostream& log);
int run_dump_model(const DumpArgs& args, std::ostream& log);

/// One row of a metrics file.
struct MetricRow {
  std::string method;
  std::size_t dataset_size = 0;
  std::uint64_t seed = 0;
  std::size_t episode = 0;
  double return_total = 0.0;
  bool success = false;
  std::string config_hash;
};

struct ReportRow {
  std::string method;
  std::size_t dataset_size = 0;
  std::size_t n = 0;
  double mean_return = 0.0;
  double stderr_ = 0.0;
  double success_rate = 0.0;
  std::optional<double> regret;  // Oracle mean return minus this mean
};

std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);
// Groups by (method, dataset_size), sorted by method then size. Regret uses
// the mean over every oracle row; without oracle rows it is a ContractError.
std::vector<ReportRow> aggregate(const std::vector<MetricRow>& rows, bool with_regret);
void write_report_csv(std::ostream& os, const std::vector<ReportRow>& rows);

}  // namespace delip::cli
