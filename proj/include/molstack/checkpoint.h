// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

// JSON checkpoints shared by both models:
//   {"format": "molstack-checkpoint", "version": 1, "model": "mt" | "pddgn",
//    "config": {...}, "params": [{"name", "shape", "data"}, ...]}
// Doubles are written in shortest round-trip form, so save -> load -> save
// is byte-identical.

#ifndef MOLSTACK_CHECKPOINT_H_
#define MOLSTACK_CHECKPOINT_H_

#include <string>
#include <string_view>
#include <variant>

#include <json.hpp>

#include "molstack/mol_transformer.h"
#include "molstack/nn.h"
#include "molstack/pd_dgn.h"

namespace molstack {

enum class ModelKind { kMolecularTransformer, kPdDgn };

std::string_view model_kind_name(ModelKind kind);  // "mt" or "pddgn"
ModelKind model_kind_from_name(std::string_view name);  // throws kInvalidArgument

nlohmann::json params_to_json(const ParamStore& params);
// Overwrites `params` in place; names, order and shapes must match.
// Throws kFormat.
void params_from_json(const nlohmann::json& j, ParamStore& params);

using AnyModel = std::variant<MTModel, PDModel>;

std::string serialize_checkpoint(const MTModel& model);
std::string serialize_checkpoint(const PDModel& model);
AnyModel deserialize_checkpoint(std::string_view text);

void save_checkpoint(const std::string& path, const AnyModel& model);
AnyModel load_checkpoint(const std::string& path);

}  // namespace molstack

#endif  // MOLSTACK_CHECKPOINT_H_
