#include "chaoscast/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

namespace cli = chaoscast::cli;

int main(int argc, char** argv) {
  CLI::App app{"chaoscast: forecasting benchmark for chaotic Lorenz63 variants"};
  app.require_subcommand(1);

  std::string root_flag;
  unsigned jobs = 1;
  app.add_option("--data", root_flag, "Data root (default: $CHAOSCAST_DATA, else ./data)");
  app.add_option("--jobs,-j", jobs, "Worker threads")->check(CLI::PositiveNumber);

  cli::GenerateOptions gen;
  auto* g = app.add_subcommand("generate", "Generate validation and test instances");
  g->add_option("--seed", gen.seed, "Master seed");
  g->add_option("--system", gen.systems, "System (repeatable; default all)");
  g->add_option("--scheme", gen.schemes, "Observation scheme (repeatable; default all)");
  g->add_option("--validation-reps", gen.validation_reps, "Validation repetitions")->capture_default_str();
  g->add_option("--test-reps", gen.test_reps, "Test repetitions")->capture_default_str();
  g->add_flag("--force", gen.force, "Overwrite existing instances");

  cli::TuneOptions tune;
  auto* t = app.add_subcommand("tune", "Local grid search on the validation split");
  t->add_option("--method", tune.methods, "Method (repeatable; default all)");
  t->add_option("--system", tune.systems, "System (repeatable)");
  t->add_option("--scheme", tune.schemes, "Scheme (repeatable)");
  t->add_option("--max-evals", tune.max_evals, "Evaluation budget per method")->capture_default_str();

  cli::RunOptions run;
  auto* r = app.add_subcommand("run", "Evaluate tuned methods on the test split");
  r->add_option("--method", run.methods, "Method (repeatable; default all)");
  r->add_option("--system", run.systems, "System (repeatable)");
  r->add_option("--scheme", run.schemes, "Scheme (repeatable)");
  r->add_flag("--untuned", run.untuned, "Use default parameters where no tuned config exists");

  app.add_subcommand("report", "Aggregate results into rank, CI and t-test tables");

  cli::PerturbOptions pert;
  std::string pert_out;
  auto* p = app.add_subcommand("perturb", "CME of exact-solver forecasts under perturbed starts and parameters");
  p->add_option("--radius", pert.radii, "Perturbation radius (repeatable)");
  p->add_option("--reps", pert.reps, "Repetitions per radius")->capture_default_str();
  p->add_option("--seed", pert.seed, "Seed");
  p->add_option("--out,-o", pert_out, "Output CSV (default stdout)");

  cli::MetricsOptions met;
  double start = 0.0;
  auto* m = app.add_subcommand("metrics", "Score a prediction CSV against a truth CSV");
  m->add_option("--truth", met.truth, "Truth CSV")->required();
  m->add_option("--prediction", met.prediction, "Prediction CSV")->required();
  auto* start_opt = m->add_option("--start", start, "Forecast start time T");
  m->add_option("--kappa", met.kappa, "Valid-time threshold")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kOk : cli::kUsage;
  }

  cli::Context ctx;
  ctx.root = chaoscast::io::data_root(root_flag);
  ctx.jobs = jobs;
  try {
    if (g->parsed()) return cli::cmd_generate(ctx, gen);
    if (t->parsed()) return cli::cmd_tune(ctx, tune);
    if (r->parsed()) return cli::cmd_run(ctx, run);
    if (app.got_subcommand("report")) return cli::cmd_report(ctx);
    if (p->parsed()) {
      if (pert_out.empty()) return cli::cmd_perturb(ctx, pert, std::cout);
      std::ofstream os(pert_out, std::ios::binary);
      if (!os) throw chaoscast::Error("cannot write " + pert_out);
      return cli::cmd_perturb(ctx, pert, os);
    }
    if (m->parsed()) {
      if (*start_opt) met.start = start;
      return cli::cmd_metrics(ctx, met, std::cout);
    }
  } catch (const cli::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kFailed;
  }
  return cli::kUsage;
}
