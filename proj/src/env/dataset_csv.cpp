#include "delip/env/dataset_csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "delip/numerics/errors.hpp"

namespace delip::env {
namespace {

double parse_real(const std::string& s, const std::string& what) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw ContractError("cannot parse " + what + ": '" + s + "'");
  return v;
}

long long parse_int(const std::string& s, const std::string& what) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ContractError("cannot parse " + what + ": '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ContractError("cannot parse " + what + ": '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw ContractError("format_real: conversion failed");
  return std::string(buf, ptr);
}

void write_dataset_csv(const std::filesystem::path& path, const std::vector<Trajectory>& trajectories) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ContractError("cannot open for writing: " + path.string());
  f << kDatasetHeader << "\n";
  for (std::size_t e = 0; e < trajectories.size(); ++e) {
    const auto& steps = trajectories[e].steps;
    for (std::size_t t = 0; t < steps.size(); ++t) {
      const Step& s = steps[t];
      f << e << ',' << t << ',' << static_cast<int>(s.action) << ',' << format_real(s.observation[0]) << ','
        << format_real(s.observation[1]) << ',' << format_real(s.observation[2]) << ',' << format_real(s.reward)
        << "\n";
    }
  }
  if (!f) throw ContractError("write failed: " + path.string());
}

std::vector<Trajectory> read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ContractError("cannot open dataset: " + path.string());
  std::string line;
  if (!std::getline(f, line) || trim(line) != kDatasetHeader) {
    throw ContractError("dataset " + path.string() + ": missing or unexpected header");
  }
  std::vector<Trajectory> out;
  std::size_t line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cols = split(trim(line), ',');
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (cols.size() != 7) throw ContractError(where + ": expected 7 columns");
    const auto episode = parse_int(cols[0], "episode_id");
    const auto t = parse_int(cols[1], "t");
    if (episode == static_cast<long long>(out.size())) out.emplace_back();
    if (episode != static_cast<long long>(out.size()) - 1) throw ContractError(where + ": episodes must be contiguous");
    auto& steps = out.back().steps;
    if (t != static_cast<long long>(steps.size())) throw ContractError(where + ": steps must be contiguous");
    Step s;
    s.action = action_from_int(static_cast<int>(parse_int(cols[2], "action")));
    for (int k = 0; k < 3; ++k) s.observation[k] = parse_real(cols[3 + k], "observation");
    s.reward = parse_real(cols[6], "reward");
    steps.push_back(s);
  }
  for (const auto& tr : out) {
    if (tr.length() != out.front().length()) throw ContractError("dataset " + path.string() + ": ragged episode lengths");
  }
  return out;
}

std::filesystem::path meta_path_for(const std::filesystem::path& csv) {
  return std::filesystem::path(csv.string() + ".meta");
}

void write_dataset_meta(const std::filesystem::path& path, const DatasetMeta& meta) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ContractError("cannot open for writing: " + path.string());
  std::istringstream env_lines(meta.env.canonical());
  std::string line;
  while (std::getline(env_lines, line)) f << "env." << line << "\n";
  f << "env_hash=" << meta.env.hash() << "\n";
  f << "seed=" << meta.seed << "\n";
  f << "episodes=" << meta.episodes << "\n";
  f << "length=" << meta.length << "\n";
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ContractError("cannot open: " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ContractError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

bool apply_env_key(EnvConfig& cfg, const std::string& key, const std::string& value) {
  auto real = [&](double& dst) { dst = parse_real(value, "env." + key); };
  if (key == "lower_bound") real(cfg.lower_bound);
  else if (key == "upper_bound") real(cfg.upper_bound);
  else if (key == "doors") {
    cfg.doors.clear();
    for (const auto& part : split(value, ',')) cfg.doors.push_back(parse_real(trim(part), "env.doors"));
  } else if (key == "correct_door_index") cfg.correct_door_index = static_cast<int>(parse_int(value, "env." + key));
  else if (key == "step_size") real(cfg.step_size);
  else if (key == "init_mean") real(cfg.init_mean);
  else if (key == "init_std") real(cfg.init_std);
  else if (key == "boundary_penalty") real(cfg.boundary_penalty);
  else if (key == "open_tolerance") real(cfg.open_tolerance);
  else if (key == "obs_noise_std") real(cfg.obs_noise_std);
  else if (key == "sigma_boundary") real(cfg.sigma_boundary);
  else if (key == "sigma_door") real(cfg.sigma_door);
  else return false;
  return true;
}

DatasetMeta read_dataset_meta(const std::filesystem::path& path) {
  DatasetMeta meta;
  for (const auto& [k, v] : read_key_values(path)) {
    if (k.rfind("env.", 0) == 0) {
      if (!apply_env_key(meta.env, k.substr(4), v)) throw ContractError("dataset meta: unknown key " + k);
    } else if (k == "seed") {
      meta.seed = parse_u64(v, k);
    } else if (k == "episodes") {
      meta.episodes = parse_u64(v, k);
    } else if (k == "length") {
      meta.length = parse_u64(v, k);
    } else if (k == "env_hash") {
      // Recomputed from the env block; checked below.
    } else {
      throw ContractError("dataset meta: unknown key " + k);
    }
  }
  meta.env.validate();
  const auto kv = read_key_values(path);
  if (auto it = kv.find("env_hash"); it != kv.end() && it->second != std::to_string(meta.env.hash())) {
    throw ContractError("dataset meta: env_hash does not match the recorded env config");
  }
  return meta;
}

}  // namespace delip::env
