// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molstack/checkpoint.h"

#include "molstack/error.h"
#include "molstack/io.h"

namespace molstack {
namespace {

constexpr const char* kFormatTag = "molstack-checkpoint";
constexpr int kVersion = 1;

std::string serialize(ModelKind kind, const nlohmann::json& config, const ParamStore& params) {
  const nlohmann::json j = {{"format", kFormatTag},
                            {"version", kVersion},
                            {"model", model_kind_name(kind)},
                            {"config", config},
                            {"params", params_to_json(params)}};
  return j.dump(1) + "\n";
}

}  // namespace

std::string_view model_kind_name(ModelKind kind) {
  return kind == ModelKind::kMolecularTransformer ? "mt" : "pddgn";
}

ModelKind model_kind_from_name(std::string_view name) {
  if (name == "mt") return ModelKind::kMolecularTransformer;
  if (name == "pddgn") return ModelKind::kPdDgn;
  fail(ErrorCode::kInvalidArgument, "unknown model kind '" + std::string(name) + "'");
}

nlohmann::json params_to_json(const ParamStore& params) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back({{"name", params.name(i)},
                   {"shape", params.value(i).shape},
                   {"data", params.value(i).data}});
  }
  return out;
}

void params_from_json(const nlohmann::json& j, ParamStore& params) {
  if (!j.is_array() || j.size() != params.size()) {
    fail(ErrorCode::kFormat, "checkpoint: expected " + std::to_string(params.size()) + " parameters");
  }
  try {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const nlohmann::json& p = j[i];
      const std::string name = p.at("name").get<std::string>();
      if (name != params.name(i)) {
        fail(ErrorCode::kFormat, "checkpoint: parameter " + std::to_string(i) + " is '" + name +
                                     "', expected '" + params.name(i) + "'");
      }
      Tensor t(p.at("shape").get<Shape>(), p.at("data").get<std::vector<double>>());
      if (t.shape != params.value(i).shape) {
        fail(ErrorCode::kFormat, "checkpoint: shape mismatch for '" + name + "'");
      }
      params.value(i) = std::move(t);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("checkpoint: ") + e.what());
  }
}

std::string serialize_checkpoint(const MTModel& model) {
  return serialize(ModelKind::kMolecularTransformer, model.config().to_json(), model.params());
}

std::string serialize_checkpoint(const PDModel& model) {
  return serialize(ModelKind::kPdDgn, model.config().to_json(), model.params());
}

AnyModel deserialize_checkpoint(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("checkpoint: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != kFormatTag || j.value("version", 0) != kVersion) {
    fail(ErrorCode::kFormat, "checkpoint: not a version 1 molstack checkpoint");
  }
  const ModelKind kind = model_kind_from_name(j.value("model", ""));
  if (kind == ModelKind::kMolecularTransformer) {
    MTModel model(MTConfig::from_json(j.at("config")));
    params_from_json(j.at("params"), model.params());
    return model;
  }
  PDModel model(PDConfig::from_json(j.at("config")));
  params_from_json(j.at("params"), model.params());
  return model;
}

void save_checkpoint(const std::string& path, const AnyModel& model) {
  atomic_write(path, std::visit([](const auto& m) { return serialize_checkpoint(m); }, model));
}

AnyModel load_checkpoint(const std::string& path) { return deserialize_checkpoint(read_text(path)); }

}  // namespace molstack
