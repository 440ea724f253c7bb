#include "delip/ssm/model_io.hpp"

#include <charconv>

#include "delip/env/dataset_csv.hpp"
#include "delip/numerics/errors.hpp"

namespace delip::ssm {
namespace {

std::size_t parse_size(const std::string& s, const std::string& key) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ContractError("checkpoint meta " + key + ": bad value '" + s + "'");
  return v;
}

}  // namespace

Checkpoint save_model(const DelipModel& model, std::map<std::string, std::string> meta) {
  const ModelShape& s = model.shape();
  meta["model.latent_dim"] = std::to_string(s.latent_dim);
  meta["model.obs_dim"] = std::to_string(s.obs_dim);
  meta["model.num_actions"] = std::to_string(s.num_actions);
  meta["model.net_hidden"] = std::to_string(s.net_hidden);
  meta["model.lstm_hidden"] = std::to_string(s.lstm_hidden);
  meta["model.head_hidden"] = std::to_string(s.head_hidden);
  meta["model.components"] = std::to_string(s.components);
  meta["model.forced_log_std"] = model.forced_log_std() ? env::format_real(*model.forced_log_std()) : "none";
  return capture(model.params(), std::move(meta));
}

const std::string& meta_value(const Checkpoint& ckpt, const std::string& key) {
  auto it = ckpt.meta.find(key);
  if (it == ckpt.meta.end()) throw ContractError("checkpoint is missing metadata key '" + key + "'");
  return it->second;
}

std::unique_ptr<DelipModel> load_model(const Checkpoint& ckpt) {
  ModelShape s;
  s.latent_dim = parse_size(meta_value(ckpt, "model.latent_dim"), "model.latent_dim");
  s.obs_dim = parse_size(meta_value(ckpt, "model.obs_dim"), "model.obs_dim");
  s.num_actions = parse_size(meta_value(ckpt, "model.num_actions"), "model.num_actions");
  s.net_hidden = parse_size(meta_value(ckpt, "model.net_hidden"), "model.net_hidden");
  s.lstm_hidden = parse_size(meta_value(ckpt, "model.lstm_hidden"), "model.lstm_hidden");
  s.head_hidden = parse_size(meta_value(ckpt, "model.head_hidden"), "model.head_hidden");
  s.components = parse_size(meta_value(ckpt, "model.components"), "model.components");
  if (s.obs_dim != 3 || s.num_actions != static_cast<std::size_t>(env::kNumActions)) {
    throw ContractError("checkpoint was built for a different observation/action layout");
  }
  Rng rng(0);
  auto model = init_model(s, rng);
  restore(model->params(), ckpt);
  const std::string& forced = meta_value(ckpt, "model.forced_log_std");
  if (forced != "none") {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(forced.data(), forced.data() + forced.size(), v);
    if (ec != std::errc() || ptr != forced.data() + forced.size()) throw ContractError("checkpoint meta model.forced_log_std: bad value");
    model->force_log_std(v);
  }
  return model;
}

}  // namespace delip::ssm
