// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

// Subcommands of the molstack tool. Each returns the process exit code:
// 0 on success, 1 for input errors and 2 for numerical failures. Errors
// are reported on `err` as "error[Category]: message".

#ifndef MOLSTACK_TOOLS_COMMANDS_H_
#define MOLSTACK_TOOLS_COMMANDS_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace molstack::cli {

struct RunOptions {
  std::string input;
  std::string output;
  std::string config;      // optional JSON file
  std::string checkpoint;  // predict
  std::string model = "mt";
  std::optional<std::uint64_t> seed;
  std::optional<int> folds;
  std::optional<std::vector<int>> validation_folds;
  std::optional<double> epsilon;
  std::optional<bool> strict_eq5;
  std::optional<long> count;  // folds: number of examples without --input
};

// Input: SMILES file. Output: "atoms,bonds,rings" per record.
int cmd_parse(const RunOptions& opt, std::ostream& err);
// Input: SMILES<TAB>target file. Output: checkpoint, plus
// <output>.metrics.json.
int cmd_train(const RunOptions& opt, std::ostream& err);
// Input: SMILES file and --checkpoint. Output: "id,prediction" CSV with
// the record ordinal as id.
int cmd_predict(const RunOptions& opt, std::ostream& err);
// Output: "id,fold" CSV for --count examples or the records of --input.
int cmd_folds(const RunOptions& opt, std::ostream& err);
// Input: stacking manifest. Output: weights report CSV, plus
// <output>.test.csv and <output>.json.
int cmd_stack(const RunOptions& opt, std::ostream& err);
// Input: manifest with a "blend" section. Output: prediction CSV.
int cmd_blend(const RunOptions& opt, std::ostream& err);

// FNV-1a hash of the compact JSON dump, as 16 hex digits.
std::string config_hash(const std::string& canonical_json);

}  // namespace molstack::cli

#endif  // MOLSTACK_TOOLS_COMMANDS_H_
