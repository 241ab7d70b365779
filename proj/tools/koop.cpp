#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Koopman operator modelling: fit, predict, spectrum, reduce"};
  app.require_subcommand(1);

  koop::RunOptions opts;
  std::string config, out, model, x0, column;
  double tol = 0.0, threshold = 0.0;
  long long horizon = 0;

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--tol", tol, "relative SVD cutoff for the pseudoinverse");
    cmd->add_option("--threshold", threshold, "zero threshold for the operator pattern");
    cmd->add_option("--out", out, "output path");
  };
  auto* fit = app.add_subcommand("fit", "lift data, fit the operator, write a model file");
  auto* predict = app.add_subcommand("predict", "evaluate the spectral expansion");
  auto* spectrum = app.add_subcommand("spectrum", "FFT and harmonic-average eigenfrequencies");
  auto* reduce = app.add_subcommand("reduce", "report closed linear/nonlinear representations");
  for (auto* cmd : {fit, predict, spectrum, reduce}) common(cmd);
  predict->add_option("--model", model, "model file");
  predict->add_option("--x0", x0, "initial condition id or index");
  predict->add_option("--horizon", horizon, "last step to predict");
  spectrum->add_option("--column", column, "feature column to analyse");
  reduce->add_option("--model", model, "model file whose dictionary must match");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : koop::kExitInput;
  }

  auto* cmd = app.get_subcommands().front();
  if (cmd->count("--config")) opts.config = config;
  if (cmd->count("--tol")) opts.tol = tol;
  if (cmd->count("--threshold")) opts.threshold = threshold;
  if (cmd->count("--out")) opts.out = out;
  if (cmd->get_option_no_throw("--model") && cmd->count("--model")) opts.model = model;
  if (cmd->get_option_no_throw("--x0") && cmd->count("--x0")) opts.x0 = x0;
  if (cmd->get_option_no_throw("--horizon") && cmd->count("--horizon")) opts.horizon = horizon;
  if (cmd->get_option_no_throw("--column") && cmd->count("--column")) opts.column = column;

  if (cmd == fit) return koop::cmd_fit(opts, std::cout, std::cerr);
  if (cmd == predict) return koop::cmd_predict(opts, std::cout, std::cerr);
  if (cmd == spectrum) return koop::cmd_spectrum(opts, std::cout, std::cerr);
  return koop::cmd_reduce(opts, std::cout, std::cerr);
}
