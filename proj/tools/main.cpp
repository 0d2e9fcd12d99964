#include "commands.hpp"

#include "hrtfp/errors.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"HRTF prediction pipeline: synthesize, prepare, train, cross-validate and evaluate"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand
  std::string config_path, out = "hrtfp_out";
  int jobs = 1;
  long long seed = -1;
  app.add_option("--config", config_path, "INI config file")->check(CLI::ExistingFile);
  app.add_option("--jobs", jobs, "parallel subjects or folds")->check(CLI::Range(1, 256));
  app.add_option("--seed", seed, "overrides synth.seed and train.seed")->check(CLI::NonNegativeNumber);
  app.add_option("--out", out, "working directory");

  auto* synth = app.add_subcommand("synth", "generate a synthetic rigid-sphere population");
  int subjects = -1;
  synth->add_option("--subjects", subjects, "overrides synth.subjects")->check(CLI::Range(1, 1000));
  auto* prepare = app.add_subcommand("prepare", "features, SH targets and smoothing sidecars per subject");
  auto* train = app.add_subcommand("train", "train one network pair on all subjects");
  std::string validation;
  train->add_option("--validation", validation, "validation subject id (default: last subject)");
  auto* loocv = app.add_subcommand("loocv", "leave-one-out cross-validation with baseline and reports");
  auto* eval = app.add_subcommand("eval", "score stored predictions against the references");
  std::string predictions;
  bool oracle = false;
  eval->add_option("--predictions", predictions, "directory of <id>.bin predictions (default: <out>/loocv/predictions)");
  eval->add_flag("--oracle", oracle, "score the prepared targets themselves");

  CLI11_PARSE(app, argc, argv);

  try {
    hrtfp::cli::RunOptions run;
    run.config = hrtfp::PipelineConfig::load(config_path);
    if (seed >= 0) {
      run.config.synth_seed = static_cast<std::uint64_t>(seed);
      run.config.train_seed = static_cast<std::uint64_t>(seed);
    }
    if (subjects > 0) run.config.synth_subjects = subjects;
    run.config.validate();
    run.out = out;
    run.jobs = jobs;
    if (synth->parsed()) return hrtfp::cli::cmd_synth(run, std::cerr);
    if (prepare->parsed()) return hrtfp::cli::cmd_prepare(run, std::cerr);
    if (train->parsed()) return hrtfp::cli::cmd_train(run, validation, std::cerr);
    if (loocv->parsed()) return hrtfp::cli::cmd_loocv(run, std::cerr);
    if (eval->parsed()) return hrtfp::cli::cmd_eval(run, predictions, oracle, std::cerr);
  } catch (const std::exception& ex) {
    std::cerr << "hrtfp: " << ex.what() << '\n';
    return 2;
  }
  return 2;
}
