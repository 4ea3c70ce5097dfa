// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

#include "commands.h"

#include <cstdio>
#include <functional>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "molstack/channels.h"
#include "molstack/checkpoint.h"
#include "molstack/error.h"
#include "molstack/io.h"
#include "molstack/mol_transformer.h"
#include "molstack/pd_dgn.h"
#include "molstack/smiles.h"
#include "molstack/stacker.h"

#ifndef MOLSTACK_VERSION
#define MOLSTACK_VERSION "unknown"
#endif

namespace molstack::cli {
namespace {

using nlohmann::json;

void require_path(const std::string& value, const char* flag) {
  if (value.empty()) fail(ErrorCode::kInvalidArgument, std::string(flag) + " is required");
}

json read_config(const RunOptions& opt) {
  if (opt.config.empty()) return json::object();
  try {
    return json::parse(read_text(opt.config));
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, opt.config + ": " + e.what());
  }
}

// Metadata next to every output: command, seed, config hash, version.
void write_meta(const std::string& output, const std::string& command, std::uint64_t seed,
                const json& config) {
  const json meta = {{"command", command},
                     {"seed", seed},
                     {"config", config},
                     {"config_hash", config_hash(config.dump())},
                     {"version", MOLSTACK_VERSION}};
  atomic_write(output + ".meta.json", meta.dump(1) + "\n");
}

MolGraph parse_record(const SmilesRecord& r) {
  try {
    return parse_smiles(r.smiles);
  } catch (const Error& e) {
    fail(e.code(), "line " + std::to_string(r.line) + ": " + e.what());
  }
}

int run(const char* command, std::ostream& err, const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const Error& e) {
    err << "error[" << error_name(e.code()) << "]: " << command << ": " << e.what() << '\n';
    return is_numerical(e.code()) ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error[Io]: " << command << ": " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

std::string config_hash(const std::string& canonical_json) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical_json)));
  return buf;
}

int cmd_parse(const RunOptions& opt, std::ostream& err) {
  return run("parse", err, [&] {
    require_path(opt.input, "--input");
    require_path(opt.output, "--output");
    std::ostringstream out;
    for (const SmilesRecord& r : read_smiles_file(opt.input)) {
      const MolGraph mol = parse_record(r);
      out << mol.atom_count() << ',' << mol.bond_count() << ',' << perceive_rings(mol).size()
          << '\n';
    }
    atomic_write(opt.output, out.str());
    write_meta(opt.output, "parse", opt.seed.value_or(0), json::object());
  });
}

int cmd_train(const RunOptions& opt, std::ostream& err) {
  return run("train", err, [&] {
    require_path(opt.input, "--input");
    require_path(opt.output, "--output");
    const ModelKind kind = model_kind_from_name(opt.model);
    json config = read_config(opt);
    if (opt.seed) config["seed"] = *opt.seed;
    if (opt.strict_eq5 && kind == ModelKind::kPdDgn) config["strict_eq5"] = *opt.strict_eq5;

    std::vector<MolGraph> mols;
    std::vector<double> targets;
    for (const SmilesRecord& r : read_smiles_file(opt.input)) {
      if (!r.target) {
        fail(ErrorCode::kFormat, "line " + std::to_string(r.line) + ": missing target");
      }
      mols.push_back(parse_record(r));
      targets.push_back(*r.target);
    }
    if (mols.empty()) fail(ErrorCode::kEmptyInput, opt.input + " has no records");

    AnyModel model = MTModel(MTConfig{});
    TrainHistory history;
    if (kind == ModelKind::kMolecularTransformer) {
      const MTConfig cfg = MTConfig::from_json(config);
      config = cfg.to_json();
      std::vector<MTExample> data;
      for (std::size_t i = 0; i < mols.size(); ++i)
        data.push_back(make_mt_example(mols[i], targets[i], cfg.structural, cfg.seed + i));
      MTTrainResult result = mt_train(data, cfg);
      history = result.history;
      model = std::move(result.model);
    } else {
      const PDConfig cfg = PDConfig::from_json(config);
      config = cfg.to_json();
      std::vector<PDExample> data;
      for (std::size_t i = 0; i < mols.size(); ++i) data.push_back({featurize(mols[i]), targets[i]});
      PDTrainResult result = pd_train(data, cfg);
      history = result.history;
      model = std::move(result.model);
    }
    save_checkpoint(opt.output, model);
    const json metrics = {{"model", model_kind_name(kind)},
                          {"examples", mols.size()},
                          {"total_steps", history.total_steps},
                          {"initial_mae", history.initial_mae},
                          {"epoch_mae", history.epoch_mae},
                          {"final_mae", history.epoch_mae.back()}};
    atomic_write(opt.output + ".metrics.json", metrics.dump(1) + "\n");
    write_meta(opt.output, "train", config.value("seed", std::uint64_t{0}), config);
  });
}

int cmd_predict(const RunOptions& opt, std::ostream& err) {
  return run("predict", err, [&] {
    require_path(opt.input, "--input");
    require_path(opt.output, "--output");
    require_path(opt.checkpoint, "--checkpoint");
    const AnyModel model = load_checkpoint(opt.checkpoint);
    std::vector<MolGraph> mols;
    for (const SmilesRecord& r : read_smiles_file(opt.input)) mols.push_back(parse_record(r));

    std::vector<double> values;
    json config;
    if (const auto* mt = std::get_if<MTModel>(&model)) {
      config = mt->config().to_json();
      std::vector<MTExample> data;
      for (std::size_t i = 0; i < mols.size(); ++i)
        data.push_back(make_mt_example(mols[i], 0.0, mt->config().structural, i));
      values = mt_predict(*mt, data);
    } else {
      const PDModel& pd = std::get<PDModel>(model);
      config = pd.config().to_json();
      std::vector<MolFeatures> features;
      for (const MolGraph& m : mols) features.push_back(featurize(m));
      values = pd_predict(pd, features);
    }
    PredictionMap out;
    for (std::size_t i = 0; i < values.size(); ++i) out[static_cast<ExampleId>(i)] = values[i];
    write_prediction_csv(opt.output, out);
    write_meta(opt.output, "predict", config.value("seed", std::uint64_t{0}), config);
  });
}

int cmd_folds(const RunOptions& opt, std::ostream& err) {
  return run("folds", err, [&] {
    require_path(opt.output, "--output");
    const json file = read_config(opt);
    FoldSpec spec;
    spec.n_folds = file.value("n_folds", spec.n_folds);
    spec.validation_folds = file.value("validation_folds", spec.validation_folds);
    spec.seed = file.value("seed", spec.seed);
    spec.stratify_by_size = file.value("stratify_by_size", spec.stratify_by_size);
    if (opt.folds) spec.n_folds = *opt.folds;
    if (opt.validation_folds) spec.validation_folds = *opt.validation_folds;
    if (opt.seed) spec.seed = *opt.seed;

    std::size_t n = 0;
    std::vector<int> sizes;
    if (opt.count) {
      if (*opt.count < 0) fail(ErrorCode::kInvalidArgument, "--count must be >= 0");
      n = static_cast<std::size_t>(*opt.count);
    } else {
      require_path(opt.input, "--input or --count");
      for (const SmilesRecord& r : read_smiles_file(opt.input)) {
        sizes.push_back(spec.stratify_by_size ? parse_record(r).atom_count() : 0);
      }
      n = sizes.size();
    }
    if (spec.stratify_by_size && sizes.size() != n) {
      fail(ErrorCode::kInvalidArgument, "size stratification needs --input");
    }
    const std::vector<int> folds = assign_folds(n, spec, spec.stratify_by_size ? &sizes : nullptr);
    std::ostringstream out;
    out << "id,fold\n";
    for (std::size_t i = 0; i < n; ++i) out << i << ',' << folds[i] << '\n';
    atomic_write(opt.output, out.str());
    const json config = {{"n_folds", spec.n_folds},
                         {"validation_folds", spec.validation_folds},
                         {"seed", spec.seed},
                         {"stratify_by_size", spec.stratify_by_size},
                         {"n_examples", n}};
    write_meta(opt.output, "folds", spec.seed, config);
  });
}

int cmd_stack(const RunOptions& opt, std::ostream& err) {
  return run("stack", err, [&] {
    require_path(opt.input, "--input");
    require_path(opt.output, "--output");
    StackInputs in = load_stack_manifest(opt.input);
    if (opt.epsilon) in.huber.epsilon = *opt.epsilon;
    if (opt.validation_folds) in.validation_folds = *opt.validation_folds;
    const StackResult result = run_stack(in);
    atomic_write(opt.output, format_weights_report(result.cv));
    write_prediction_csv(opt.output + ".test.csv", result.test_predictions);
    atomic_write(opt.output + ".json", stack_result_to_json(result).dump(1) + "\n");
    const json config = {{"manifest", opt.input},
                         {"epsilon", in.huber.epsilon},
                         {"ridge", in.huber.alpha},
                         {"validation_folds", in.validation_folds}};
    write_meta(opt.output, "stack", opt.seed.value_or(0), config);
  });
}

int cmd_blend(const RunOptions& opt, std::ostream& err) {
  return run("blend", err, [&] {
    require_path(opt.input, "--input");
    require_path(opt.output, "--output");
    const BlendInputs in = load_blend_manifest(opt.input);
    write_prediction_csv(opt.output, blend_full_train(in.ensemble, in.extras, in.spec));
    json weights = json::array();
    for (const auto& [name, w] : in.spec.extras) weights.push_back({{"file", name}, {"weight", w}});
    write_meta(opt.output, "blend", opt.seed.value_or(0),
               {{"manifest", opt.input}, {"extras", weights}});
  });
}

}  // namespace molstack::cli
