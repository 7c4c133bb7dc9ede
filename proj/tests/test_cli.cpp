#include "chaoscast/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <regex>
#include <set>
#include <sys/wait.h>
#include <unistd.h>

using namespace chaoscast;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::vector<std::string> out;
  std::ifstream is(p);
  for (std::string line; std::getline(is, line);) out.push_back(line);
  return out;
}

std::map<std::string, std::string> tree_contents(const fs::path& root, const std::string& ext) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().extension() == ext) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("chaoscast_cli_" + std::to_string(::getpid()) + "_" + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    ctx_.root = dir_ / "data";
    ctx_.log = &log_;
  }
  void TearDown() override { fs::remove_all(dir_); }

  cli::GenerateOptions small(std::uint64_t seed = 5) const {
    cli::GenerateOptions g;
    g.seed = seed;
    g.systems = {"lorenz63std"};
    g.schemes = {"const-noisefree"};
    g.validation_reps = 2;
    g.test_reps = 3;
    return g;
  }

  fs::path dir_;
  std::ostringstream log_;
  cli::Context ctx_;
};

}  // namespace

// ---------------------------------------------------------------------------
// generate

TEST_F(CliTest, GenerateSingleSubtree) {
  ASSERT_EQ(cli::cmd_generate(ctx_, small()), cli::kOk);
  std::set<std::string> top;
  for (const auto& e : fs::directory_iterator(ctx_.root)) top.insert(e.path().filename().string());
  EXPECT_EQ(top, (std::set<std::string>{"lorenz63std", "manifest.json"}));
  std::set<std::string> schemes;
  for (const auto& e : fs::directory_iterator(ctx_.root / "lorenz63std")) schemes.insert(e.path().filename().string());
  EXPECT_EQ(schemes, std::set<std::string>{"const-noisefree"});
  const auto base = ctx_.root / "lorenz63std" / "const-noisefree";
  EXPECT_EQ(io::list_reps(base / "validation").size(), 2u);
  ASSERT_EQ(io::list_reps(base / "test").size(), 3u);
  EXPECT_EQ(io::list_reps(base / "test").back().filename(), "rep0002");
  for (const char* f : {"train.csv", "truth.csv", "meta.json"}) EXPECT_TRUE(fs::exists(base / "test" / "rep0000" / f));

  const auto meta = io::read_json(base / "test" / "rep0001" / "meta.json");
  EXPECT_EQ(meta.at("system"), "lorenz63std");
  EXPECT_EQ(meta.at("scheme"), "const-noisefree");
  EXPECT_EQ(meta.at("split"), "test");
  EXPECT_EQ(meta.at("rep"), 1);
  const auto manifest = cli::load_manifest(ctx_.root);
  ASSERT_TRUE(manifest);
  EXPECT_EQ(manifest->seed, 5u);
  EXPECT_EQ(manifest->validation_reps, 2u);
  EXPECT_EQ(manifest->test_reps, 3u);
}

TEST_F(CliTest, GenerateDefaultsCoverAllSettings) {
  cli::GenerateOptions g;
  g.seed = 1;
  g.validation_reps = 10;
  g.test_reps = 1;
  ASSERT_EQ(cli::cmd_generate(ctx_, g), cli::kOk);
  std::size_t validation = 0, test = 0, subtrees = 0;
  for (const auto& sys : systems::system_names())
    for (const auto& sch : systems::scheme_names()) {
      ++subtrees;
      validation += io::list_reps(ctx_.root / sys / sch / "validation").size();
      test += io::list_reps(ctx_.root / sys / sch / "test").size();
    }
  EXPECT_EQ(subtrees, 12u);
  EXPECT_EQ(validation, 120u);
  EXPECT_EQ(test, 12u);
}

TEST_F(CliTest, CsvFieldsHaveEightFractionalDigits) {
  ASSERT_EQ(cli::cmd_generate(ctx_, small()), cli::kOk);
  const std::regex field(R"(-?[0-9]+\.[0-9]{8})");
  std::size_t checked = 0;
  for (const auto& [name, text] : tree_contents(ctx_.root, ".csv")) {
    std::istringstream is(text);
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "time,u1,u2,u3") << name;
    while (std::getline(is, line))
      for (const auto& cell : io::split_csv_line(line)) {
        ASSERT_TRUE(std::regex_match(cell, field)) << name << ": " << cell;
        ++checked;
      }
    EXPECT_EQ(text.find('\r'), std::string::npos);
  }
  EXPECT_GT(checked, 1000u);
}

TEST_F(CliTest, RegenerationIsByteIdentical) {
  ASSERT_EQ(cli::cmd_generate(ctx_, small()), cli::kOk);
  const auto first = tree_contents(ctx_.root, ".csv");
  auto g = small();
  g.force = true;
  ASSERT_EQ(cli::cmd_generate(ctx_, g), cli::kOk);
  EXPECT_EQ(tree_contents(ctx_.root, ".csv"), first);

  cli::Context other = ctx_;
  other.root = dir_ / "other";
  ASSERT_EQ(cli::cmd_generate(other, small()), cli::kOk);
  EXPECT_EQ(tree_contents(other.root, ".csv"), first);

  cli::Context third = ctx_;
  third.root = dir_ / "third";
  ASSERT_EQ(cli::cmd_generate(third, small(6)), cli::kOk);
  const auto changed = tree_contents(third.root, ".csv");
  ASSERT_EQ(changed.size(), first.size());
  for (const auto& [name, text] : first) EXPECT_NE(changed.at(name), text) << name;
}

TEST_F(CliTest, ExistingTargetNeedsForce) {
  ASSERT_EQ(cli::cmd_generate(ctx_, small()), cli::kOk);
  EXPECT_THROW(cli::cmd_generate(ctx_, small()), Error);
  try {
    cli::cmd_generate(ctx_, small());
  } catch (const cli::UsageError&) {
    ADD_FAILURE() << "refusing to overwrite is not a usage error";
  } catch (const Error&) {
  }
  // A different subtree of the same root is a fresh target.
  auto g = small();
  g.schemes = {"const-noisy"};
  EXPECT_EQ(cli::cmd_generate(ctx_, g), cli::kOk);
  const auto manifest = cli::load_manifest(ctx_.root);
  ASSERT_TRUE(manifest);
  EXPECT_EQ(manifest->schemes, (std::vector<std::string>{"const-noisefree", "const-noisy"}));
  // An empty directory is not an existing target.
  fs::create_directories(ctx_.root / "lorenz63nonpar" / "random-noisy");
  g.systems = {"lorenz63nonpar"};
  g.schemes = {"random-noisy"};
  EXPECT_EQ(cli::cmd_generate(ctx_, g), cli::kOk);
}

TEST_F(CliTest, GenerateRejectsUnknownNames) {
  auto g = small();
  g.systems = {"Lorenz63"};
  EXPECT_THROW(cli::cmd_generate(ctx_, g), cli::UsageError);
  g = small();
  g.schemes = {"constant"};
  EXPECT_THROW(cli::cmd_generate(ctx_, g), cli::UsageError);
  EXPECT_FALSE(fs::exists(ctx_.root / "lorenz63std"));
}

// ---------------------------------------------------------------------------
// tune

TEST_F(CliTest, TuneTuningFreeMethodIsPassthrough) {
  ASSERT_EQ(cli::cmd_generate(ctx_, small()), cli::kOk);
  cli::TuneOptions t;
  t.methods = {"LinPo6"};
  ASSERT_EQ(cli::cmd_tune(ctx_, t), cli::kOk);
  const auto path = cli::tuned_path(ctx_.root, "lorenz63std", "const-noisefree", "LinPo6");
  const auto j = io::read_json(path);
  EXPECT_EQ(j.at("evaluations"), 0);
  EXPECT_TRUE(j.at("mean_cme").is_null());
  EXPECT_EQ(forecasters::MethodConfig::from_json(j.at("config")), (forecasters::MethodConfig{"LinPo6", {}}));
  EXPECT_EQ(slurp(fs::path(path).replace_extension(".trace.jsonl")), "");
}

TEST_F(CliTest, TuneSpPoStepZeroIsNineEvaluations) {
  ASSERT_EQ(cli::cmd_generate(ctx_, small()), cli::kOk);
  cli::TuneOptions t;
  t.methods = {"SpPo"};
  t.max_evals = 9;
  ASSERT_EQ(cli::cmd_tune(ctx_, t), cli::kOk);
  const auto path = cli::tuned_path(ctx_.root, "lorenz63std", "const-noisefree", "SpPo");
  EXPECT_EQ(io::read_json(path).at("evaluations"), 9);
  const auto trace = lines_of(fs::path(path).replace_extension(".trace.jsonl"));
  ASSERT_EQ(trace.size(), 9u);
  std::set<std::string> keys;
  std::set<int> orders;
  for (const auto& line : trace) {
    const auto e = nlohmann::json::parse(line);
    EXPECT_EQ(e.at("step"), 0);
    const auto mc = forecasters::MethodConfig::from_json(e.at("config"));
    keys.insert(mc.canonical_key());
    orders.insert(static_cast<int>(mc.number("l")));
  }
  EXPECT_EQ(keys.size(), 9u);
  EXPECT_EQ(orders, (std::set<int>{2, 3, 4}));
}

TEST_F(CliTest, TuneRerunGivesSameWinner) {
  ASSERT_EQ(cli::cmd_generate(ctx_, small()), cli::kOk);
  cli::TuneOptions t;
  t.methods = {"SpPo", "Analog"};
  t.max_evals = 30;
  ASSERT_EQ(cli::cmd_tune(ctx_, t), cli::kOk);
  const auto dir = ctx_.root / "tuned";
  const auto first = tree_contents(dir, ".json");
  const auto first_trace = tree_contents(dir, ".jsonl");
  ASSERT_EQ(first.size(), 2u);
  cli::Context par = ctx_;
  par.jobs = 3;
  ASSERT_EQ(cli::cmd_tune(par, t), cli::kOk);
  EXPECT_EQ(tree_contents(dir, ".json"), first);
  EXPECT_EQ(tree_contents(dir, ".jsonl"), first_trace);
}

TEST_F(CliTest, TuneWithoutDataFails) {
  cli::TuneOptions t;
  t.methods = {"ConstM"};
  t.systems = {"lorenz63std"};
  t.schemes = {"const-noisy"};
  EXPECT_EQ(cli::cmd_tune(ctx_, t), cli::kFailed);
  t.methods = {"NoSuchMethod"};
  EXPECT_THROW(cli::cmd_tune(ctx_, t), cli::UsageError);
}

// ---------------------------------------------------------------------------
// run and report

TEST_F(CliTest, RunNeedsTunedConfig) {
  ASSERT_EQ(cli::cmd_generate(ctx_, small()), cli::kOk);
  cli::RunOptions r;
  r.methods = {"ConstM", "LinD"};
  EXPECT_EQ(cli::cmd_run(ctx_, r), cli::kFailed);
  EXPECT_TRUE(fs::exists(cli::results_path(ctx_.root, "lorenz63std", "const-noisefree", "ConstM")));
  EXPECT_FALSE(fs::exists(cli::results_path(ctx_.root, "lorenz63std", "const-noisefree", "LinD")));
  r.untuned = true;
  EXPECT_EQ(cli::cmd_run(ctx_, r), cli::kOk);
  const auto lines = lines_of(cli::results_path(ctx_.root, "lorenz63std", "const-noisefree", "LinD"));
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], bench::kResultsHeader);
  EXPECT_EQ(lines[1].rfind("LinD,lorenz63std,const-noisefree,test,0,", 0), 0u);
}

TEST_F(CliTest, RunUsesTunedConfig) {
  ASSERT_EQ(cli::cmd_generate(ctx_, small()), cli::kOk);
  const forecasters::MethodConfig tuned{"Analog", {{"omega", 100.0}}};
  io::write_json(cli::tuned_path(ctx_.root, "lorenz63std", "const-noisefree", "Analog"), {{"config", tuned.to_json()}});
  EXPECT_EQ(cli::resolve_config(ctx_.root, "lorenz63std", "const-noisefree", "Analog", false), tuned);
  EXPECT_EQ(cli::resolve_config(ctx_.root, "lorenz63std", "const-noisefree", "ConstL", false),
            (forecasters::MethodConfig{"ConstL", {}}));
  cli::RunOptions r;
  r.methods = {"Analog"};
  ASSERT_EQ(cli::cmd_run(ctx_, r), cli::kOk);
  // Same numbers as evaluating the tuned config directly.
  std::vector<io::StoredInstance> test;
  for (const auto& d : io::list_reps(ctx_.root / "lorenz63std" / "const-noisefree" / "test"))
    test.push_back(io::read_instance(d));
  bench::EvaluateOptions eo;
  eo.fit_seed = cli::load_manifest(ctx_.root)->fit_seed();
  const auto direct = bench::evaluate(tuned, test, {"lorenz63std", "const-noisefree", "test"}, eo);
  std::ifstream is(cli::results_path(ctx_.root, "lorenz63std", "const-noisefree", "Analog"));
  const auto stored = bench::read_results_csv(is, "results");
  ASSERT_EQ(stored.size(), direct.size());
  for (std::size_t i = 0; i < stored.size(); ++i) EXPECT_EQ(io::fixed(stored[i].cme), io::fixed(direct[i].cme));
}

TEST_F(CliTest, PipelineReport) {
  auto g = small();
  g.schemes = {"const-noisefree", "random-noisefree"};
  ASSERT_EQ(cli::cmd_generate(ctx_, g), cli::kOk);
  const std::vector<std::string> methods{"ConstM", "ConstL", "Analog", "LinPo6", "SpPo", "SINDy"};
  cli::TuneOptions t;
  t.methods = methods;
  t.max_evals = 12;
  ASSERT_EQ(cli::cmd_tune(ctx_, t), cli::kOk);
  cli::RunOptions r;
  r.methods = methods;
  ASSERT_EQ(cli::cmd_run(ctx_, r), cli::kOk);
  ASSERT_EQ(cli::cmd_report(ctx_), cli::kOk);

  const auto agg = lines_of(ctx_.root / "report" / "aggregate.csv");
  ASSERT_EQ(agg.size(), 1 + 2 * methods.size());
  EXPECT_EQ(agg[0], "method,system,scheme,split,n,mean_cme,ci95,rank,mean_smape,mean_tvalid,failed");
  std::map<std::string, std::vector<int>> ranks;
  std::map<std::string, std::set<std::string>> seen;
  std::map<std::string, std::map<std::string, int>> rank_of;
  const std::regex fixed8(R"(-?[0-9]+\.[0-9]{8})");
  for (std::size_t i = 1; i < agg.size(); ++i) {
    const auto c = io::split_csv_line(agg[i]);
    ASSERT_EQ(c.size(), 11u);
    const std::string setting = c[1] + "/" + c[2];
    EXPECT_TRUE(seen[setting].insert(c[0]).second) << "duplicate row " << agg[i];
    EXPECT_EQ(c[4], "3");
    for (std::size_t k : {5u, 6u, 8u, 9u}) EXPECT_TRUE(std::regex_match(c[k], fixed8)) << c[k];
    ranks[setting].push_back(std::stoi(c[7]));
    rank_of[setting][c[0]] = std::stoi(c[7]);
  }
  ASSERT_EQ(ranks.size(), 2u);
  for (auto& [setting, r] : ranks) {
    std::sort(r.begin(), r.end());
    std::vector<int> perm(methods.size());
    std::iota(perm.begin(), perm.end(), 1);
    EXPECT_EQ(r, perm) << setting;
    EXPECT_EQ(seen[setting], std::set<std::string>(methods.begin(), methods.end()));
  }
  EXPECT_GE(rank_of["lorenz63std/const-noisefree"]["ConstM"], static_cast<int>(methods.size()) - 1);

  const auto tt = lines_of(ctx_.root / "report" / "ttests.csv");
  EXPECT_EQ(tt.size(), 1 + 2 * methods.size() * (methods.size() - 1));
  EXPECT_EQ(lines_of(ctx_.root / "report" / "ranks.csv").size(), agg.size());
  const auto meta = io::read_json(ctx_.root / "report" / "report_meta.json");
  EXPECT_NE(meta.at("confidence_interval").get<std::string>().find("Student-t"), std::string::npos);
  EXPECT_EQ(meta.at("records"), 2 * 3 * methods.size());
}

TEST_F(CliTest, ReportWithoutResultsFails) {
  EXPECT_THROW(cli::cmd_report(ctx_), Error);
}

// ---------------------------------------------------------------------------
// perturb and metrics

TEST_F(CliTest, PerturbTable) {
  cli::PerturbOptions p;
  p.radii = {0.0, 1e-6, 1.0};
  p.reps = 5;
  std::ostringstream os;
  ASSERT_EQ(cli::cmd_perturb(ctx_, p, os), cli::kOk);
  std::istringstream is(os.str());
  std::vector<std::string> lines;
  for (std::string l; std::getline(is, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 7u);
  EXPECT_EQ(lines[0], "kind,radius,median_cme,reps");
  EXPECT_EQ(lines[1].rfind("initial,", 0), 0u);
  EXPECT_EQ(lines[4].rfind("parameters,", 0), 0u);
  p.reps = 0;
  EXPECT_THROW(cli::cmd_perturb(ctx_, p, os), cli::UsageError);
}

TEST_F(CliTest, MetricsScoresExternalPrediction) {
  // Truth on t = 1..4 (start 0); prediction matches the first two rows, then
  // is off by far more than the threshold.
  Mat truth_states(4, 1), pred_states(4, 1);
  truth_states << 1, -1, 1, -1;
  pred_states << 1, -1, 9, 9;
  const TimeSeries truth({1, 2, 3, 4}, truth_states);
  const TimeSeries pred({1, 2, 3, 4}, pred_states);
  io::write_series_csv(dir_ / "truth.csv", truth);
  io::write_series_csv(dir_ / "pred.csv", pred);

  cli::MetricsOptions m;
  m.truth = dir_ / "truth.csv";
  m.prediction = dir_ / "pred.csv";
  std::ostringstream os;
  ASSERT_EQ(cli::cmd_metrics(ctx_, m, os), cli::kOk);
  const auto j = nlohmann::json::parse(os.str());
  EXPECT_EQ(j.at("rows"), 4);
  // The same numbers via the library with the default start T = 0.
  io::StoredInstance inst;
  inst.truth = truth;
  inst.T = 0.0;
  const auto s = bench::score_forecast(inst, pred, {0.4});
  EXPECT_DOUBLE_EQ(j.at("cme").get<double>(), s.cme);
  EXPECT_DOUBLE_EQ(j.at("tvalid").get<double>(), s.valid_time);
  EXPECT_GT(s.cme, 0.0);

  std::ostringstream same;
  m.prediction = m.truth;
  ASSERT_EQ(cli::cmd_metrics(ctx_, m, same), cli::kOk);
  const auto k = nlohmann::json::parse(same.str());
  EXPECT_EQ(k.at("cme").get<double>(), 0.0);
  EXPECT_EQ(k.at("smape").get<double>(), 0.0);

  const TimeSeries shorter({1, 2, 3}, truth_states.topRows(3));
  io::write_series_csv(dir_ / "short.csv", shorter);
  m.prediction = dir_ / "short.csv";
  EXPECT_THROW(cli::cmd_metrics(ctx_, m, os), cli::UsageError);
}

// ---------------------------------------------------------------------------
// Executable: exit codes and the data-root variable

#ifdef CHAOSCAST_CLI_PATH

namespace {

int run_tool(const std::string& args, const std::string& env = {}) {
  const std::string cmd = env + " '" CHAOSCAST_CLI_PATH "' " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_F(CliTest, ExecutableExitCodes) {
  const std::string data = "--data '" + ctx_.root.string() + "'";
  const std::string sel = " --system lorenz63std --scheme const-noisefree --validation-reps 1 --test-reps 1";
  EXPECT_EQ(run_tool(""), 2);
  EXPECT_EQ(run_tool("frobnicate"), 2);
  EXPECT_EQ(run_tool(data + " generate --seed notanumber"), 2);
  EXPECT_EQ(run_tool(data + " generate --system nope"), 2);
  EXPECT_EQ(run_tool(data + " generate --seed 3" + sel), 0);
  EXPECT_EQ(run_tool(data + " generate --seed 3" + sel), 1);
  EXPECT_EQ(run_tool(data + " generate --seed 3 --force" + sel), 0);
  EXPECT_EQ(run_tool(data + " run --method LinD"), 1);
  EXPECT_EQ(run_tool(data + " run --method ConstM"), 0);
  EXPECT_EQ(run_tool(data + " --jobs 2 report"), 0);
  EXPECT_EQ(run_tool("metrics --truth x.csv"), 2);
  EXPECT_EQ(run_tool("--help"), 0);
}

TEST_F(CliTest, ExecutableHonoursDataRootVariable) {
  const fs::path env_root = dir_ / "from_env";
  const std::string env = "CHAOSCAST_DATA='" + env_root.string() + "'";
  const std::string sel = " --system lorenz63random --scheme random-noisy --validation-reps 1 --test-reps 1";
  ASSERT_EQ(run_tool("generate --seed 4" + sel, env), 0);
  EXPECT_TRUE(fs::exists(env_root / "lorenz63random" / "random-noisy" / "test" / "rep0000" / "truth.csv"));
  // An explicit --data wins over the variable.
  const fs::path flag_root = dir_ / "from_flag";
  ASSERT_EQ(run_tool("--data '" + flag_root.string() + "' generate --seed 4" + sel, env), 0);
  EXPECT_TRUE(fs::exists(flag_root / "manifest.json"));
  EXPECT_EQ(tree_contents(flag_root, ".csv"), tree_contents(env_root, ".csv"));
}

#endif
