// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molstack/stacker.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>
#include <sstream>

#include "molstack/error.h"
#include "molstack/rng.h"

namespace molstack {
namespace {

std::string id_string(ExampleId id) { return std::to_string(id); }

double lookup(const PredictionMap& map, ExampleId id, const std::string& what) {
  const auto it = map.find(id);
  if (it == map.end()) fail(ErrorCode::kMissingPrediction, what + " has no value for id " + id_string(id));
  return it->second;
}

PredictionTable apply_groups(PredictionTable table, const std::vector<ColumnGroup>& groups) {
  for (const ColumnGroup& g : groups) table = average_columns(table, g.columns, g.name);
  return table;
}

void require_unique_columns(const std::vector<std::string>& columns) {
  std::set<std::string> seen;
  for (const std::string& c : columns) {
    if (!seen.insert(c).second) fail(ErrorCode::kDuplicateCell, "duplicate column '" + c + "'");
  }
}

}  // namespace

void FoldSpec::validate() const {
  if (n_folds < 2) fail(ErrorCode::kInvalidArgument, "FoldSpec: n_folds must be >= 2");
  std::set<int> seen;
  for (int f : validation_folds) {
    if (f < 0 || f >= n_folds) {
      fail(ErrorCode::kInvalidArgument, "FoldSpec: validation fold " + std::to_string(f) +
                                            " outside [0, " + std::to_string(n_folds) + ")");
    }
    if (!seen.insert(f).second) {
      fail(ErrorCode::kInvalidArgument, "FoldSpec: validation fold " + std::to_string(f) + " repeated");
    }
  }
}

std::vector<int> assign_folds(std::size_t n_examples, const FoldSpec& spec,
                              const std::vector<int>* sizes) {
  spec.validate();
  const std::size_t k = static_cast<std::size_t>(spec.n_folds);
  if (n_examples < k) {
    fail(ErrorCode::kTooFewExamples, std::to_string(n_examples) + " examples for " +
                                         std::to_string(k) + " folds");
  }
  std::vector<std::size_t> order(n_examples);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(spec.seed);
  for (std::size_t i = n_examples; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  std::vector<int> fold(n_examples);
  if (spec.stratify_by_size) {
    if (sizes == nullptr || sizes->size() != n_examples) {
      fail(ErrorCode::kLengthMismatch, "assign_folds: stratification needs one size per example");
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return (*sizes)[a] < (*sizes)[b]; });
    for (std::size_t p = 0; p < n_examples; ++p) fold[order[p]] = static_cast<int>(p % k);
    return fold;
  }
  const std::size_t base = n_examples / k;
  const std::size_t extra = n_examples % k;
  std::size_t p = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t count = base + (f < extra ? 1 : 0);
    for (std::size_t c = 0; c < count; ++c) fold[order[p++]] = static_cast<int>(f);
  }
  return fold;
}

BaseModelPredictions impute_missing_fold(const BaseModelPredictions& model,
                                         const std::map<ExampleId, int>& fold_of,
                                         const std::vector<int>& validation_folds) {
  std::vector<int> available;
  for (int f : validation_folds)
    if (model.valid.count(f)) available.push_back(f);
  if (available.empty()) {
    fail(ErrorCode::kNoFoldsAvailable, "model '" + model.name + "' has no validation-fold checkpoints");
  }
  BaseModelPredictions out = model;
  for (int f : validation_folds) {
    if (model.valid.count(f)) continue;
    PredictionMap filled;
    for (const auto& [id, fold] : fold_of) {
      if (fold != f) continue;
      double total = 0.0;
      for (int g : available) {
        total += lookup(model.valid.at(g), id,
                        "model '" + model.name + "' checkpoint " + std::to_string(g));
      }
      filled[id] = total / static_cast<double>(available.size());
    }
    out.valid[f] = std::move(filled);
  }

  std::vector<int> test_available;
  for (int f : validation_folds)
    if (model.test.count(f)) test_available.push_back(f);
  if (test_available.empty()) return out;
  for (int f : validation_folds) {
    if (model.test.count(f)) continue;
    PredictionMap filled;
    for (const auto& [id, unused] : model.test.at(test_available.front())) {
      double total = 0.0;
      for (int g : test_available) {
        total += lookup(model.test.at(g), id,
                        "model '" + model.name + "' test checkpoint " + std::to_string(g));
      }
      filled[id] = total / static_cast<double>(test_available.size());
    }
    out.test[f] = std::move(filled);
  }
  return out;
}

std::size_t PredictionTable::column_index(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) fail(ErrorCode::kUnknownColumn, "unknown column '" + name + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

PredictionTable average_columns(const PredictionTable& table,
                                const std::vector<std::string>& group, const std::string& name) {
  if (group.empty()) fail(ErrorCode::kInvalidArgument, "average_columns: empty group '" + name + "'");
  std::vector<std::size_t> members;
  for (const std::string& c : group) members.push_back(table.column_index(c));

  PredictionTable out;
  out.ids = table.ids;
  out.provenance = table.provenance;
  std::vector<std::size_t> kept;
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    if (std::find(members.begin(), members.end(), c) == members.end()) {
      kept.push_back(c);
      out.columns.push_back(table.columns[c]);
    }
  }
  out.columns.push_back(name);
  require_unique_columns(out.columns);
  const Eigen::Index rows = table.values.rows();
  out.values.resize(rows, static_cast<Eigen::Index>(out.columns.size()));
  for (std::size_t k = 0; k < kept.size(); ++k) out.values.col(k) = table.values.col(kept[k]);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(rows);
  for (std::size_t c : members) mean += table.values.col(c);
  out.values.col(static_cast<Eigen::Index>(kept.size())) = mean / static_cast<double>(members.size());
  out.provenance[name] = group;
  return out;
}

OofData assemble_oof(const std::vector<BaseModelPredictions>& models,
                     const std::map<ExampleId, int>& fold_of, const PredictionMap& targets,
                     const std::vector<int>& validation_folds,
                     const std::vector<ColumnGroup>& groups) {
  if (models.empty()) fail(ErrorCode::kInvalidArgument, "assemble_oof: no base models");
  std::vector<BaseModelPredictions> imputed;
  for (const auto& m : models) imputed.push_back(impute_missing_fold(m, fold_of, validation_folds));

  OofData oof;
  std::vector<double> y;
  for (const auto& [id, fold] : fold_of) {
    if (std::find(validation_folds.begin(), validation_folds.end(), fold) == validation_folds.end())
      continue;
    oof.table.ids.push_back(id);
    oof.fold.push_back(fold);
    y.push_back(lookup(targets, id, "targets"));
  }
  for (const auto& m : imputed) oof.table.columns.push_back(m.name);
  require_unique_columns(oof.table.columns);
  const Eigen::Index rows = static_cast<Eigen::Index>(oof.table.ids.size());
  oof.table.values.resize(rows, static_cast<Eigen::Index>(imputed.size()));
  for (std::size_t m = 0; m < imputed.size(); ++m) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      const int f = oof.fold[r];
      const auto it = imputed[m].valid.find(f);
      oof.table.values(r, m) = lookup(it->second, oof.table.ids[r],
                                      "model '" + imputed[m].name + "' fold " + std::to_string(f));
    }
  }
  oof.y = Eigen::Map<Eigen::VectorXd>(y.data(), rows);
  oof.table = apply_groups(std::move(oof.table), groups);
  return oof;
}

PredictionTable test_table(const std::vector<BaseModelPredictions>& models, int fold,
                           const std::vector<ColumnGroup>& groups) {
  if (models.empty()) fail(ErrorCode::kInvalidArgument, "test_table: no base models");
  PredictionTable table;
  for (const auto& m : models) {
    if (!m.test.count(fold)) {
      fail(ErrorCode::kMissingPrediction,
           "model '" + m.name + "' has no test predictions for fold " + std::to_string(fold));
    }
    table.columns.push_back(m.name);
  }
  require_unique_columns(table.columns);
  for (const auto& [id, unused] : models.front().test.at(fold)) table.ids.push_back(id);
  const Eigen::Index rows = static_cast<Eigen::Index>(table.ids.size());
  table.values.resize(rows, static_cast<Eigen::Index>(models.size()));
  for (std::size_t m = 0; m < models.size(); ++m) {
    const PredictionMap& preds = models[m].test.at(fold);
    if (preds.size() != table.ids.size()) {
      fail(ErrorCode::kMissingPrediction, "model '" + models[m].name + "' test fold " +
                                              std::to_string(fold) + " covers different ids");
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
      table.values(r, m) = lookup(preds, table.ids[r], "model '" + models[m].name + "' test");
    }
  }
  return apply_groups(std::move(table), groups);
}

Eigen::VectorXd MetaModel::predict(const Eigen::MatrixXd& x) const {
  if (x.cols() != weights.size()) {
    fail(ErrorCode::kShapeMismatch, "MetaModel: " + std::to_string(x.cols()) + " columns for " +
                                        std::to_string(weights.size()) + " weights");
  }
  return (x * weights).array() + intercept;
}

MetaModel fit_huber(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double epsilon,
                    double ridge) {
  HuberOptions options;
  options.epsilon = epsilon;
  options.alpha = ridge;
  const HuberFit fit = fit_huber_regressor(x, y, options);
  MetaModel m;
  m.weights = fit.weights;
  m.intercept = fit.intercept;
  m.scale = fit.scale;
  m.epsilon = epsilon;
  return m;
}

CrossValidation cross_validate_meta(const OofData& oof, const std::vector<int>& validation_folds,
                                    const HuberOptions& options) {
  CrossValidation cv;
  const Eigen::Index rows = oof.table.values.rows();
  for (int f : validation_folds) {
    std::vector<Eigen::Index> train, held;
    for (Eigen::Index r = 0; r < rows; ++r) (oof.fold[r] == f ? held : train).push_back(r);
    if (held.empty()) {
      fail(ErrorCode::kMissingPrediction, "validation fold " + std::to_string(f) + " has no rows");
    }
    const HuberFit fit = fit_huber_regressor(oof.table.values(train, Eigen::all), oof.y(train), options);
    MetaModel m;
    m.columns = oof.table.columns;
    m.weights = fit.weights;
    m.intercept = fit.intercept;
    m.scale = fit.scale;
    m.epsilon = options.epsilon;
    m.fold = f;
    const Eigen::VectorXd pred = m.predict(oof.table.values(held, Eigen::all));
    cv.fold_mae.push_back((pred - oof.y(held)).cwiseAbs().mean());
    cv.models.push_back(std::move(m));
  }
  cv.mean_mae = std::accumulate(cv.fold_mae.begin(), cv.fold_mae.end(), 0.0) /
                static_cast<double>(cv.fold_mae.size());
  return cv;
}

PredictionMap predict_test(const std::vector<PredictionTable>& tables,
                           const std::vector<MetaModel>& models) {
  if (tables.empty() || tables.size() != models.size()) {
    fail(ErrorCode::kLengthMismatch, "predict_test: need one test table per meta-model");
  }
  const std::vector<ExampleId>& ids = tables.front().ids;
  Eigen::VectorXd total = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ids.size()));
  for (std::size_t k = 0; k < tables.size(); ++k) {
    const PredictionTable& t = tables[k];
    if (t.ids != ids) {
      fail(ErrorCode::kMissingPrediction, "predict_test: fold tables cover different ids");
    }
    // Reorder the table's columns to the meta-model's column order.
    std::vector<Eigen::Index> cols;
    for (const std::string& c : models[k].columns)
      cols.push_back(static_cast<Eigen::Index>(t.column_index(c)));
    total += models[k].predict(t.values(Eigen::all, cols));
  }
  total /= static_cast<double>(tables.size());
  PredictionMap out;
  for (std::size_t i = 0; i < ids.size(); ++i) out[ids[i]] = total[static_cast<Eigen::Index>(i)];
  return out;
}

BlendSpec BlendSpec::published_weights() {
  return BlendSpec{{{"dirichlet", 0.2552}, {"extra_1", 0.1747}, {"extra_2", 0.1747}}};
}

double BlendSpec::denominator() const {
  double d = 1.0;
  for (const auto& [name, w] : extras) {
    if (!std::isfinite(w)) fail(ErrorCode::kInvalidArgument, "blend weight for '" + name + "' is not finite");
    d += w;
  }
  if (!(d > 0.0)) fail(ErrorCode::kInvalidArgument, "blend denominator must be positive");
  return d;
}

double average_weight(const std::vector<double>& row) {
  if (row.empty()) fail(ErrorCode::kInvalidArgument, "average_weight: empty row");
  return std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(row.size());
}

std::vector<double> blend_full_train(const std::vector<double>& ensemble,
                                     const std::vector<std::vector<double>>& extras,
                                     const BlendSpec& spec) {
  if (extras.size() != spec.extras.size()) {
    fail(ErrorCode::kLengthMismatch, "blend: " + std::to_string(extras.size()) +
                                         " extra vectors for " +
                                         std::to_string(spec.extras.size()) + " weights");
  }
  const double denom = spec.denominator();
  for (const auto& e : extras) {
    if (e.size() != ensemble.size()) fail(ErrorCode::kLengthMismatch, "blend: vector lengths differ");
  }
  std::vector<double> out(ensemble.size());
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    double num = ensemble[i];
    for (std::size_t k = 0; k < extras.size(); ++k) num += spec.extras[k].second * extras[k][i];
    out[i] = num / denom;
  }
  return out;
}

PredictionMap blend_full_train(const PredictionMap& ensemble,
                               const std::vector<PredictionMap>& extras, const BlendSpec& spec) {
  std::vector<double> base;
  std::vector<std::vector<double>> cols(extras.size());
  for (const auto& [id, v] : ensemble) {
    base.push_back(v);
    for (std::size_t k = 0; k < extras.size(); ++k) {
      if (extras[k].size() != ensemble.size()) {
        fail(ErrorCode::kLengthMismatch, "blend: extra " + std::to_string(k) + " covers different ids");
      }
      cols[k].push_back(lookup(extras[k], id, "blend extra " + std::to_string(k)));
    }
  }
  const std::vector<double> blended = blend_full_train(base, cols, spec);
  PredictionMap out;
  std::size_t i = 0;
  for (const auto& [id, unused] : ensemble) out[id] = blended[i++];
  return out;
}

StackResult run_stack(const StackInputs& inputs) {
  std::vector<BaseModelPredictions> imputed;
  for (const auto& m : inputs.models)
    imputed.push_back(impute_missing_fold(m, inputs.fold_of, inputs.validation_folds));
  StackResult result;
  result.oof = assemble_oof(imputed, inputs.fold_of, inputs.targets, inputs.validation_folds,
                            inputs.groups);
  result.cv = cross_validate_meta(result.oof, inputs.validation_folds, inputs.huber);
  for (int f : inputs.validation_folds) result.test_tables.push_back(test_table(imputed, f, inputs.groups));
  result.test_predictions = predict_test(result.test_tables, result.cv.models);
  return result;
}

namespace {

namespace fs = std::filesystem;

nlohmann::json load_manifest_json(const std::string& path) {
  try {
    nlohmann::json j = nlohmann::json::parse(read_text(path));
    if (!j.is_object() || j.value("schema_version", 0) != 1) {
      fail(ErrorCode::kFormat, path + ": expected schema_version 1");
    }
    return j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, path + ": " + e.what());
  }
}

std::string resolve(const std::string& manifest, const std::string& file) {
  const fs::path p(file);
  if (p.is_absolute()) return file;
  return (fs::path(manifest).parent_path() / p).string();
}

std::map<int, PredictionMap> load_fold_files(const std::string& manifest, const nlohmann::json& j) {
  std::map<int, PredictionMap> out;
  if (j.is_null()) return out;
  for (const auto& [key, file] : j.items()) {
    out[std::stoi(key)] = read_prediction_csv(resolve(manifest, file.get<std::string>()));
  }
  return out;
}

}  // namespace

StackInputs load_stack_manifest(const std::string& path) {
  const nlohmann::json j = load_manifest_json(path);
  StackInputs in;
  try {
    in.targets = read_prediction_csv(resolve(path, j.at("targets").get<std::string>()));
    in.fold_of = read_label_csv(resolve(path, j.at("folds").get<std::string>()));
    in.validation_folds = j.value("validation_folds", std::vector<int>{0, 1, 2, 3});
    for (const auto& m : j.at("models")) {
      BaseModelPredictions b;
      b.name = m.at("name").get<std::string>();
      b.valid = load_fold_files(path, m.value("valid", nlohmann::json()));
      b.test = load_fold_files(path, m.value("test", nlohmann::json()));
      in.models.push_back(std::move(b));
    }
    for (const auto& g : j.value("groups", nlohmann::json::array())) {
      in.groups.push_back(ColumnGroup{g.at("name").get<std::string>(),
                                      g.at("columns").get<std::vector<std::string>>()});
    }
    const nlohmann::json huber = j.value("huber", nlohmann::json::object());
    in.huber.epsilon = huber.value("epsilon", in.huber.epsilon);
    in.huber.alpha = huber.value("ridge", in.huber.alpha);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, path + ": " + e.what());
  } catch (const std::invalid_argument&) {
    fail(ErrorCode::kFormat, path + ": fold keys must be integers");
  }
  return in;
}

BlendInputs load_blend_manifest(const std::string& path) {
  const nlohmann::json j = load_manifest_json(path);
  BlendInputs in;
  try {
    const nlohmann::json& blend = j.at("blend");
    in.ensemble = read_prediction_csv(resolve(path, blend.at("ensemble").get<std::string>()));
    for (const auto& e : blend.value("extras", nlohmann::json::array())) {
      const std::string file = e.at("file").get<std::string>();
      in.extras.push_back(read_prediction_csv(resolve(path, file)));
      double weight = 0.0;
      if (e.contains("weight")) {
        weight = e.at("weight").get<double>();
      } else {
        // Recompute from a row of meta weights instead of a fixed constant.
        weight = average_weight(e.at("weights_row").get<std::vector<double>>());
      }
      in.spec.extras.emplace_back(file, weight);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, path + ": " + e.what());
  }
  return in;
}

std::string format_weights_report(const CrossValidation& cv) {
  std::ostringstream out;
  out << "column";
  for (const MetaModel& m : cv.models) out << ",fold_" << m.fold;
  out << ",mean\n";
  if (cv.models.empty()) return out.str();
  const std::vector<std::string>& columns = cv.models.front().columns;
  auto row = [&](const std::string& label, auto value_of) {
    out << label;
    double total = 0.0;
    for (const MetaModel& m : cv.models) {
      const double v = value_of(m);
      total += v;
      out << ',' << format_double(v);
    }
    out << ',' << format_double(total / static_cast<double>(cv.models.size())) << '\n';
  };
  for (std::size_t c = 0; c < columns.size(); ++c)
    row(columns[c], [c](const MetaModel& m) { return m.weights[static_cast<Eigen::Index>(c)]; });
  row("intercept", [](const MetaModel& m) { return m.intercept; });
  row("scale", [](const MetaModel& m) { return m.scale; });
  return out.str();
}

nlohmann::json stack_result_to_json(const StackResult& result) {
  nlohmann::json folds = nlohmann::json::array();
  for (std::size_t k = 0; k < result.cv.models.size(); ++k) {
    const MetaModel& m = result.cv.models[k];
    nlohmann::json weights = nlohmann::json::object();
    for (std::size_t c = 0; c < m.columns.size(); ++c)
      weights[m.columns[c]] = m.weights[static_cast<Eigen::Index>(c)];
    folds.push_back({{"fold", m.fold},
                     {"weights", weights},
                     {"intercept", m.intercept},
                     {"scale", m.scale},
                     {"epsilon", m.epsilon},
                     {"mae", result.cv.fold_mae[k]}});
  }
  return {{"oof_rows", result.oof.table.ids.size()},
          {"columns", result.oof.table.columns},
          {"provenance", result.oof.table.provenance},
          {"folds", folds},
          {"mean_mae", result.cv.mean_mae}};
}

}  // namespace molstack
