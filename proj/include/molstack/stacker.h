// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

// Out-of-fold stacking: fold assignment, OOF assembly with missing-fold
// imputation and column groups, per-fold Huber meta-models, grouped test
// prediction and the final weighted blend.
//
// Terminology: a base model has one checkpoint per validation fold f,
// trained with f held out. valid[f] holds that checkpoint's predictions;
// its rows in fold f are the out-of-fold (OOF) predictions, and rows in
// other folds are only used to impute folds whose checkpoint is missing.
// test[f] holds the same checkpoint's predictions on the test set.

#ifndef MOLSTACK_STACKER_H_
#define MOLSTACK_STACKER_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "molstack/huber.h"
#include "molstack/io.h"

namespace molstack {

struct FoldSpec {
  int n_folds = 24;
  std::vector<int> validation_folds{0, 1, 2, 3};
  std::uint64_t seed = 0;
  // Deal examples round-robin in order of a size key instead of chunking a
  // uniform shuffle, so every fold sees the same size distribution.
  bool stratify_by_size = false;

  // Throws kInvalidArgument.
  void validate() const;
};

// Seeded Fisher-Yates shuffle then contiguous chunks; the first
// n % n_folds folds get one extra example. With stratification, `sizes`
// (one key per example) orders the shuffled examples stably before they
// are dealt round-robin. Throws kTooFewExamples when n < n_folds.
std::vector<int> assign_folds(std::size_t n_examples, const FoldSpec& spec,
                              const std::vector<int>* sizes = nullptr);

struct BaseModelPredictions {
  std::string name;
  std::map<int, PredictionMap> valid;  // checkpoint fold -> predictions
  std::map<int, PredictionMap> test;   // checkpoint fold -> test predictions
};

// Fills every validation fold without a checkpoint: its rows get the
// per-row mean over the available checkpoints, and its test predictions
// the per-row mean of the available test predictions. Present cells are
// never changed. Throws kNoFoldsAvailable or kMissingPrediction.
BaseModelPredictions impute_missing_fold(const BaseModelPredictions& model,
                                         const std::map<ExampleId, int>& fold_of,
                                         const std::vector<int>& validation_folds);

struct PredictionTable {
  std::vector<ExampleId> ids;
  std::vector<std::string> columns;
  Eigen::MatrixXd values;  // ids.size() x columns.size()
  // Source columns of each averaged column.
  std::map<std::string, std::vector<std::string>> provenance;

  std::size_t column_index(const std::string& name) const;  // throws kUnknownColumn
};

// Replaces the group's columns with their row mean, appended as `name`.
PredictionTable average_columns(const PredictionTable& table,
                                const std::vector<std::string>& group, const std::string& name);

struct ColumnGroup {
  std::string name;
  std::vector<std::string> columns;
};

struct OofData {
  PredictionTable table;  // rows in ascending id order
  Eigen::VectorXd y;
  std::vector<int> fold;  // per row
};

// One row per example of the validation folds, one column per (imputed)
// model, then groups applied. Throws kMissingPrediction for uncovered
// cells.
OofData assemble_oof(const std::vector<BaseModelPredictions>& models,
                     const std::map<ExampleId, int>& fold_of, const PredictionMap& targets,
                     const std::vector<int>& validation_folds,
                     const std::vector<ColumnGroup>& groups);

// Test matrix of checkpoint fold f for every model, grouped like the OOF
// table. Rows in ascending id order of model 0's test predictions.
PredictionTable test_table(const std::vector<BaseModelPredictions>& models, int fold,
                           const std::vector<ColumnGroup>& groups);

struct MetaModel {
  std::vector<std::string> columns;
  Eigen::VectorXd weights;
  double intercept = 0.0;
  double scale = 1.0;
  double epsilon = 1.35;
  int fold = -1;  // validation fold held out while fitting

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
};

MetaModel fit_huber(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                    double epsilon = 1.35, double ridge = 1e-4);

struct CrossValidation {
  std::vector<MetaModel> models;  // one per validation fold, in fold order
  std::vector<double> fold_mae;
  double mean_mae = 0.0;
};

// For each validation fold: fit on the other folds' rows, score MAE on it.
CrossValidation cross_validate_meta(const OofData& oof, const std::vector<int>& validation_folds,
                                    const HuberOptions& options = {});

// Mean over folds of each fold's meta-model applied to its test table.
PredictionMap predict_test(const std::vector<PredictionTable>& tables,
                           const std::vector<MetaModel>& models);

struct BlendSpec {
  std::vector<std::pair<std::string, double>> extras;

  // Extras weighted 0.2552, 0.1747, 0.1747 (denominator 1.6046).
  static BlendSpec published_weights();
  // Denominator 1 + sum of weights; throws kInvalidArgument unless > 0
  // and every weight is finite.
  double denominator() const;
};

// Mean of a row of meta weights, for recomputing a blend weight.
double average_weight(const std::vector<double>& row);

// (ensemble + sum_i w_i extra_i) / (1 + sum_i w_i). Throws kLengthMismatch.
std::vector<double> blend_full_train(const std::vector<double>& ensemble,
                                     const std::vector<std::vector<double>>& extras,
                                     const BlendSpec& spec);
PredictionMap blend_full_train(const PredictionMap& ensemble,
                               const std::vector<PredictionMap>& extras, const BlendSpec& spec);

// Everything a stacking run needs, usually loaded from a manifest.
struct StackInputs {
  std::map<ExampleId, int> fold_of;
  PredictionMap targets;
  std::vector<int> validation_folds;
  std::vector<BaseModelPredictions> models;
  std::vector<ColumnGroup> groups;
  HuberOptions huber;
};

struct StackResult {
  OofData oof;
  CrossValidation cv;
  std::vector<PredictionTable> test_tables;  // per validation fold
  PredictionMap test_predictions;
};

StackResult run_stack(const StackInputs& inputs);

// Manifest, schema_version 1:
// {
//   "schema_version": 1,
//   "targets": "targets.csv",            id,target
//   "folds": "folds.csv",                id,fold
//   "validation_folds": [0, 1, 2, 3],
//   "models": [{"name": "A", "valid": {"0": "a_v0.csv", ...},
//                            "test": {"0": "a_t0.csv", ...}}, ...],
//   "groups": [{"name": "CD", "columns": ["C", "D"]}],
//   "huber": {"epsilon": 1.35, "ridge": 1e-4},
//   "blend": {"ensemble": "stack.csv",
//             "extras": [{"file": "x.csv", "weight": 0.2552}, ...]}
// }
// Relative paths resolve against the manifest's directory.
struct BlendInputs {
  PredictionMap ensemble;
  std::vector<PredictionMap> extras;
  BlendSpec spec;
};

StackInputs load_stack_manifest(const std::string& path);
BlendInputs load_blend_manifest(const std::string& path);

// Weights report: one row per column, one column per validation fold plus
// the mean, intercepts and scales last.
std::string format_weights_report(const CrossValidation& cv);
nlohmann::json stack_result_to_json(const StackResult& result);

}  // namespace molstack

#endif  // MOLSTACK_STACKER_H_
