#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "leap/ensemble.hpp"
#include "leap/io.hpp"
#include "leap/preprocess.hpp"

namespace fs = std::filesystem;
using namespace leap;

namespace {

int run_cli(const std::string& args, const fs::path& log = "/dev/null") {
  const std::string cmd = std::string(LEAP_CLI_PATH) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path workdir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("leap_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string small_config(const fs::path& dir, std::uint64_t seed = 3) {
  const auto path = dir / "config.json";
  std::ofstream(path) << R"({
  "master_seed": )" << seed << R"(,
  "paths": {"expression": "data/expression.csv", "metadata": "data/metadata.csv",
            "responses": "data/responses.csv", "output_dir": "out"},
  "synthetic": {"n_samples": 90, "n_genes": 30, "n_latent": 4, "n_perturbations": 3, "signal_r2": 0.6},
  "preprocess": {"k_per_dataset": 25},
  "representation": {"count": 2, "hidden_dim": 12, "latent_dim": 4, "max_epochs": 12, "batch_size": 16},
  "task": {"repeats": 2}
})";
  return path.string();
}

void synthesize(const fs::path& dir, const std::string& cfg) {
  ASSERT_EQ(run_cli("synth --config " + cfg + " --output-dir " + (dir / "data").string()), 0);
}

TEST(Cli, SynthFilesAreDeterministicAndReload) {
  const auto dir = workdir("synth");
  const auto cfg = small_config(dir);
  ASSERT_EQ(run_cli("synth --config " + cfg + " --output-dir " + (dir / "a").string()), 0);
  ASSERT_EQ(run_cli("synth --config " + cfg + " --output-dir " + (dir / "b").string()), 0);
  for (const char* f : {"expression.csv", "metadata.csv", "responses.csv"})
    EXPECT_EQ(io::read_file(dir / "a" / f), io::read_file(dir / "b" / f)) << f;

  SyntheticSpec spec;
  spec.n_samples = 90;
  spec.n_genes = 30;
  spec.n_latent = 4;
  spec.n_perturbations = 3;
  spec.signal_r2 = 0.6;
  spec.seed = 3;
  const auto mem = generate_synthetic(spec);
  const auto expr = io::load_expression(dir / "a" / "expression.csv", dir / "a" / "metadata.csv");
  EXPECT_EQ(expr.values(), mem.expression.values());
  EXPECT_EQ(expr.tissue(), mem.expression.tissue());
  EXPECT_EQ(io::load_responses(dir / "a" / "responses.csv"), mem.responses);
}

TEST(Cli, RunIsRepeatableAndAddsBaseline) {
  const auto dir = workdir("run");
  const auto cfg = small_config(dir);
  synthesize(dir, cfg);
  ASSERT_EQ(run_cli("run --config " + cfg), 0);
  const auto first = io::read_file(dir / "out" / "report.csv");
  const auto first_summary = io::read_file(dir / "out" / "summary.json");
  ASSERT_EQ(run_cli("run --config " + cfg + " --workers 3", dir / "log.txt"), 0);
  EXPECT_EQ(io::read_file(dir / "out" / "report.csv"), first);
  EXPECT_EQ(io::read_file(dir / "out" / "summary.json"), first_summary);
  EXPECT_NE(io::read_file(dir / "log.txt").find("cache hit"), std::string::npos);

  const auto manifest = nlohmann::json::parse(io::read_file(dir / "out" / "manifest.json"));
  EXPECT_EQ(manifest["status"], "ok");
  EXPECT_EQ(manifest["master_seed"], 3);
  EXPECT_EQ(manifest["seeds"]["representations"].size(), 2u);
  EXPECT_EQ(manifest["workers"], 3);

  ASSERT_EQ(run_cli("run --config " + cfg + " --baseline knn"), 0);
  const auto with_knn = io::read_file(dir / "out" / "report.csv");
  EXPECT_NE(with_knn.find("\nknn_baseline,"), std::string::npos);
  EXPECT_EQ(first.find("\nknn_baseline,"), std::string::npos);
}

TEST(Cli, WorkersFromEnvironment) {
  const auto dir = workdir("env");
  const auto cfg = small_config(dir);
  synthesize(dir, cfg);
  ::setenv("LEAP_WORKERS", "2", 1);
  ASSERT_EQ(run_cli("preprocess --config " + cfg), 0);
  ::unsetenv("LEAP_WORKERS");
  EXPECT_EQ(nlohmann::json::parse(io::read_file(dir / "out" / "manifest.json"))["workers"], 2);
}

TEST(Cli, PredictMatchesLibraryAndFitTime) {
  const auto dir = workdir("predict");
  const auto cfg = small_config(dir);
  synthesize(dir, cfg);
  ASSERT_EQ(run_cli("fit --config " + cfg), 0);
  const auto bundle = dir / "out" / "model.leap";
  ASSERT_TRUE(fs::exists(bundle));
  ASSERT_EQ(run_cli("predict --config " + cfg + " --bundle " + bundle.string() + " --expression " +
                    (dir / "data" / "expression.csv").string() + " --out " + (dir / "p.csv").string()),
            0);
  const auto cli = io::load_predictions(dir / "p.csv");

  const auto ens = from_bundle(Bundle::load(bundle));
  const auto expr = io::load_expression(dir / "data" / "expression.csv");
  const auto x = apply_preprocess(ens.preprocess, log_transform(expr));
  const auto lib = predict(ens, x, ens.perturbations());
  EXPECT_EQ(cli, lib);

  // Fit-time standardized rows give the same predictions as the CLI path.
  const auto fit_x = apply_preprocess(ens.preprocess, log_transform(io::load_expression(
                                                          dir / "data" / "expression.csv", dir / "data" / "metadata.csv")));
  EXPECT_EQ(predict(ens, fit_x, ens.perturbations()), cli);

  ASSERT_EQ(run_cli("predict --config " + cfg + " --bundle " + bundle.string() + " --expression " +
                    (dir / "data" / "expression.csv").string() + " --out " + (dir / "p0.csv").string() +
                    " --representations-subset 0 --perturbations P1"),
            0);
  EXPECT_EQ(io::load_predictions(dir / "p0.csv"), predict_partial(ens, x, {"P1"}, {0}));
}

TEST(Cli, ExitCodes) {
  const auto dir = workdir("exit");
  const auto cfg = small_config(dir);
  synthesize(dir, cfg);
  ASSERT_EQ(run_cli("fit --config " + cfg), 0);
  auto bytes = io::read_file(dir / "out" / "model.leap");
  bytes[bytes.size() / 3] = static_cast<char>(bytes[bytes.size() / 3] ^ 1);
  io::write_file(dir / "tampered.leap", bytes);
  EXPECT_EQ(run_cli("predict --config " + cfg + " --bundle " + (dir / "tampered.leap").string() + " --expression " +
                    (dir / "data" / "expression.csv").string()),
            2);
  EXPECT_TRUE(fs::exists(dir / "out" / "FAILED"));

  std::ofstream(dir / "bad.json") << R"({"tune": {"n_folds": 1}})";
  EXPECT_EQ(run_cli("run --config " + (dir / "bad.json").string()), 2);
  std::ofstream(dir / "broken.json") << "{";
  EXPECT_EQ(run_cli("run --config " + (dir / "broken.json").string()), 2);
  EXPECT_EQ(run_cli("run --config " + (dir / "nope.json").string()), 4);
  std::ofstream(dir / "missing_data.json") << R"({"paths": {"expression": "x.csv", "responses": "y.csv", "output_dir": "o"}})";
  EXPECT_EQ(run_cli("run --config " + (dir / "missing_data.json").string()), 4);
  EXPECT_EQ(run_cli("ablate --config " + cfg + " --steps bogus"), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
}

TEST(Cli, AblateSharesSplits) {
  const auto dir = workdir("ablate");
  const auto cfg = small_config(dir);
  synthesize(dir, cfg);
  ASSERT_EQ(run_cli("ablate --config " + cfg + " --steps fold_ensemble full_leap"), 0);
  std::ifstream in(dir / "out" / "report.csv");
  std::string line;
  std::getline(in, line);
  std::map<std::string, std::set<std::string>> keys;
  while (std::getline(in, line)) {
    const auto c1 = line.find(','), c2 = line.find(',', c1 + 1), c3 = line.find(',', c2 + 1), c4 = line.find(',', c3 + 1);
    keys[line.substr(0, c1)].insert(line.substr(c1 + 1, c4 - c1 - 1));
  }
  ASSERT_EQ(keys.size(), 2u);
  EXPECT_EQ(keys["fold_ensemble"], keys["full_leap"]);
}

TEST(Cli, PrintsDefaultConfig) {
  const auto dir = workdir("defaults");
  ASSERT_EQ(run_cli("config --defaults", dir / "d.json"), 0);
  const auto j = nlohmann::json::parse(io::read_file(dir / "d.json"));
  EXPECT_EQ(j["representation"]["hidden_dim"], 512);
  EXPECT_EQ(j["representation"]["max_epochs"], 3000);
  EXPECT_EQ(j["tune"]["n_folds"], 5);
}

}  // namespace
