// perfmodel: train, apply and evaluate layer-wise runtime/power models.

#include <charconv>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "CLI11.hpp"
#include "perfmodel/commands.hpp"

namespace {

std::vector<int> parse_degrees(const std::string& text) {
  std::vector<int> out;
  for (std::string_view entry : perfmodel::csv_detail::split(text, ',')) {
    entry = perfmodel::csv_detail::trim(entry);
    int v = 0;
    auto [end, ec] = std::from_chars(entry.data(), entry.data() + entry.size(), v);
    if (entry.empty() || ec != std::errc{} || end != entry.data() + entry.size() || v < 1) {
      throw perfmodel::DataError("degrees must be positive integers, got '" + std::string(entry) + "'");
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layer-wise runtime, power and energy models for CNNs"};
  app.require_subcommand(1);

  perfmodel::TrainArgs train;
  std::string degrees = "1,2,3";
  std::optional<std::uint64_t> train_seed;
  std::optional<double> train_lambda;
  auto* train_cmd = app.add_subcommand("train", "Fit the six layer models from a measurement CSV");
  train_cmd->add_option("--data", train.data, "Measurement CSV")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train.out, "Model file to write")->required();
  train_cmd->add_option("--degrees", degrees, "Candidate polynomial degrees")->capture_default_str();
  train_cmd->add_option("--folds", train.folds, "Cross-validation folds")->capture_default_str()->check(CLI::Range(2, 1000));
  train_cmd->add_option("--seed", train_seed, "Fold shuffle seed (default: $PERFMODEL_SEED, then 0)");
  train_cmd->add_option("--lambda", train_lambda, "Skip cross-validation and fit this penalty (needs one degree)")
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--platform", train.platform_tag, "Platform tag stored in the model file")->capture_default_str();
  train_cmd->add_option("--created-at", train.created_at, "Timestamp stored in the model file")->capture_default_str();
  train_cmd->add_option("--threads", train.threads, "Worker threads for cross-validation")->capture_default_str()
      ->check(CLI::Range(1u, 256u));

  perfmodel::PredictArgs predict;
  std::string format = "text";
  auto* predict_cmd = app.add_subcommand("predict", "Predict runtime, power and energy of a network");
  predict_cmd->add_option("--model", predict.model, "Model file")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--network", predict.network, "Network JSON")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--format", format, "Output format")->capture_default_str()->check(
      CLI::IsMember({"text", "json", "csv"}));

  perfmodel::EvaluateArgs evaluate;
  std::string eval_model;
  std::string per_network;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Compare predictions with measured values");
  evaluate_cmd->add_option("--model", eval_model, "Model file")->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--data", evaluate.data, "Measurement CSV of one network's layers (repeatable)")
      ->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--report", evaluate.reports, "Prediction report CSV from predict (repeatable)")
      ->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--per-network", per_network, "Measured whole-network totals CSV")
      ->check(CLI::ExistingFile);

  perfmodel::EprArgs epr;
  std::string candidates;
  std::string inline_list;
  auto* epr_cmd = app.add_subcommand("epr", "Rank architectures by energy-precision ratio");
  auto* cand_opt = epr_cmd->add_option("--candidates", candidates, "CSV with name,error,epi_mj")
                       ->check(CLI::ExistingFile);
  auto* inline_opt = epr_cmd->add_option("--inline", inline_list, "name:error:epi_mj,...");
  cand_opt->excludes(inline_opt);
  epr_cmd->add_option("--alpha", epr.alphas, "Comma-separated positive integers")->capture_default_str();

  perfmodel::SynthArgs synth;
  std::string synth_config;
  std::string network_out;
  std::optional<std::uint64_t> synth_seed;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a measurement CSV from hidden polynomial models");
  synth_cmd->add_option("--config", synth_config, "Synthesis config JSON (defaults apply when omitted)")
      ->check(CLI::ExistingFile);
  synth_cmd->add_option("--out", synth.out, "Measurement CSV to write")->required();
  synth_cmd->add_option("--truth", synth.truth, "Hidden-model file to write")->required();
  synth_cmd->add_option("--seed", synth_seed, "Overrides the config seed");
  synth_cmd->add_option("--network-out", network_out, "Also write a synthetic network's noiseless layer CSV");
  synth_cmd->add_option("--network-layers", synth.network_layers, "Layers in that network")->capture_default_str()
      ->check(CLI::Range(1, 10000));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help and version requests exit 0; every usage error is an input error.
    return app.exit(e) == 0 ? perfmodel::kExitOk : perfmodel::kExitInputError;
  }

  try {
    if (*train_cmd) {
      train.degrees = parse_degrees(degrees);
      train.seed = train_seed;
      train.lambda = train_lambda;
      return perfmodel::cmd_train(train, std::cout, std::cerr);
    }
    if (*predict_cmd) {
      predict.format = perfmodel::parse_report_format(format);
      return perfmodel::cmd_predict(predict, std::cout, std::cerr);
    }
    if (*evaluate_cmd) {
      if (!eval_model.empty()) evaluate.model = eval_model;
      if (!per_network.empty()) evaluate.per_network = per_network;
      return perfmodel::cmd_evaluate(evaluate, std::cout, std::cerr);
    }
    if (*epr_cmd) {
      if (*cand_opt) epr.candidates = candidates;
      if (*inline_opt) epr.inline_list = inline_list;
      return perfmodel::cmd_epr(epr, std::cout, std::cerr);
    }
    if (*synth_cmd) {
      if (!synth_config.empty()) synth.config = synth_config;
      if (!network_out.empty()) synth.network_out = network_out;
      synth.seed = synth_seed;
      return perfmodel::cmd_synth(synth, std::cout, std::cerr);
    }
  } catch (const perfmodel::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return perfmodel::kExitInputError;
  }
  return perfmodel::kExitInputError;
}
