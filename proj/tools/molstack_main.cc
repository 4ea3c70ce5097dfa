// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

// molstack: parse, train, predict, folds, stack and blend subcommands.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "commands.h"

namespace {

using molstack::cli::RunOptions;

void add_common(CLI::App* cmd, RunOptions& opt) {
  cmd->add_option("--input", opt.input, "Input file");
  cmd->add_option("--output", opt.output, "Output file");
  cmd->add_option("--seed", opt.seed, "Root random seed");
  cmd->add_option("--config", opt.config, "JSON config file; flags take precedence");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"molstack: molecular property models and out-of-fold stacking"};
  app.require_subcommand(1);
  RunOptions opt;
  std::string strict;

  CLI::App* parse = app.add_subcommand("parse", "Summarize SMILES as atoms,bonds,rings");
  add_common(parse, opt);

  CLI::App* train = app.add_subcommand("train", "Train a model on SMILES<TAB>target records");
  add_common(train, opt);
  train->add_option("--model", opt.model, "mt or pddgn")->check(CLI::IsMember({"mt", "pddgn"}));
  train->add_option("--strict-eq5", strict, "Keep the 1/N pooling factor (pddgn)")
      ->check(CLI::IsMember({"true", "false"}));

  CLI::App* predict = app.add_subcommand("predict", "Predict with a checkpoint");
  add_common(predict, opt);
  predict->add_option("--checkpoint", opt.checkpoint, "Checkpoint from train")->required();

  CLI::App* folds = app.add_subcommand("folds", "Assign examples to folds");
  add_common(folds, opt);
  folds->add_option("--folds", opt.folds, "Number of folds");
  folds->add_option("--validation-folds", opt.validation_folds, "Validation fold ids")
      ->delimiter(',');
  folds->add_option("--count", opt.count, "Number of examples (instead of --input)");

  CLI::App* stack = app.add_subcommand("stack", "Fit per-fold Huber meta-models from a manifest");
  add_common(stack, opt);
  stack->add_option("--epsilon", opt.epsilon, "Huber epsilon");
  stack->add_option("--validation-folds", opt.validation_folds, "Validation fold ids")
      ->delimiter(',');

  CLI::App* blend = app.add_subcommand("blend", "Blend final predictions from a manifest");
  add_common(blend, opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (!strict.empty()) opt.strict_eq5 = strict == "true";

  using namespace molstack::cli;
  if (*parse) return cmd_parse(opt, std::cerr);
  if (*train) return cmd_train(opt, std::cerr);
  if (*predict) return cmd_predict(opt, std::cerr);
  if (*folds) return cmd_folds(opt, std::cerr);
  if (*stack) return cmd_stack(opt, std::cerr);
  return cmd_blend(opt, std::cerr);
}
