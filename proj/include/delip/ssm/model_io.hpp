#pragma once

#include <map>
#include <memory>
#include <string>

#include "delip/numerics/checkpoint.hpp"
#include "delip/ssm/model.hpp"

namespace delip::ssm {

// Checkpoint of the model's parameters; the model shape and the active
// log-std override are added to `meta` so load_model can rebuild it.
Checkpoint save_model(const DelipModel& model, std::map<std::string, std::string> meta);

// Rebuilds the model described by the checkpoint metadata and restores its
// parameters. A checkpoint written while the variance clamp was active
// comes back with the same override in force.
std::unique_ptr<DelipModel> load_model(const Checkpoint& ckpt);

// Metadata lookup that raises ContractError naming the missing key.
const std::string& meta_value(const Checkpoint& ckpt, const std::string& key);

}  // namespace delip::ssm
