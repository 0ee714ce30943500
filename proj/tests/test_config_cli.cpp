#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ltc/config.hpp"

using namespace ltc;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(LTC_CLI_PATH) + " " + args + " 2>/dev/null";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kTinyConfig = R"(
[dataset]
classes = 3
head_count = 30
imbalance_factor = 10
input_dim = 6
center_separation = 3.0
within_stddev = 0.6
test_per_class = 4
seed = 5

[views]
uniform_views = 2

[train]
epochs = 1
batch_base = 4
learning_rate = 0.05
loss_kind = bs+acl
seed = 9
hidden_dims = 8
embedding_dim = 4

[run]
output_dir = OUTDIR
)";

fs::path write_tiny_config(const fs::path& dir) {
  fs::create_directories(dir);
  std::string text = kTinyConfig;
  const auto pos = text.find("OUTDIR");
  text.replace(pos, 6, (dir / "out").string());
  const auto path = dir / "exp.cfg";
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST_CASE("config parsing, defaults and overrides") {
  const auto cfg = parse_experiment_text(
      "[dataset]\nclasses = 4\n[train]\nalpha = 0.25\n");
  CHECK(cfg.dataset.classes == 4);
  CHECK(cfg.train.alpha == 0.25);
  CHECK(cfg.train.loss_kind == TrainLossKind::bs_acl);  // default
  CHECK(cfg.train.encoder.input_dim == cfg.dataset.input_dim);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{cfg.train.seed});

  const std::vector<std::string> overrides{"train.alpha=0.75", "dataset.classes=5"};
  const auto ov = parse_experiment_text("[train]\nalpha = 0.1\n", overrides);
  CHECK(ov.train.alpha == 0.75);
  CHECK(ov.dataset.classes == 5);
}

TEST_CASE("config errors are line-precise and name the key") {
  try {
    parse_experiment_text("[dataset]\nclasses = 3\nnonsense_key = 1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("nonsense_key") != std::string::npos);
  }

  CHECK_THROWS_AS(parse_experiment_text("[train]\nepochs = twelve\n"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_text("orphan = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_text("[train\nepochs = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_text("[train]\nloss_kind = bogus\n"), ConfigError);
}

TEST_CASE("config hash tracks effective values, not file layout") {
  const auto a = parse_experiment_text("[dataset]\nclasses = 4\n[train]\ntau = 0.2\n");
  const auto b = parse_experiment_text("[train]\ntau = 0.2\n[dataset]\nclasses = 4\n");
  const auto c = parse_experiment_text("[dataset]\nclasses = 4\n[train]\ntau = 0.3\n");
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a) != config_hash(c));

  // The [run] section is operational and does not change identity.
  const auto d = parse_experiment_text(
      "[dataset]\nclasses = 4\n[train]\ntau = 0.2\n[run]\noutput_dir = elsewhere\n");
  CHECK(config_hash(a) == config_hash(d));
}

TEST_CASE("cli: train writes reproducible artifacts") {
  const auto dir = fs::temp_directory_path() / "ltc_cli_train";
  fs::remove_all(dir);
  const auto cfg_path = write_tiny_config(dir);

  REQUIRE(run_cli("train -c " + cfg_path.string()) == 0);
  const auto metrics = dir / "out" / "metrics.csv";
  REQUIRE(fs::exists(metrics));
  REQUIRE(fs::exists(dir / "out" / "conflicts.csv"));
  REQUIRE(fs::exists(dir / "out" / "checkpoint.bin"));
  REQUIRE(fs::exists(dir / "out" / "embeddings.csv"));

  const std::string first = read_file(metrics);
  // Header + column names + one data row for one epoch.
  CHECK(std::count(first.begin(), first.end(), '\n') == 3);
  CHECK(first.rfind("# config_hash=0x", 0) == 0);

  REQUIRE(run_cli("train -c " + cfg_path.string()) == 0);
  CHECK(read_file(metrics) == first);

  fs::remove_all(dir);
}

TEST_CASE("cli: malformed config key exits with status 2") {
  const auto dir = fs::temp_directory_path() / "ltc_cli_badkey";
  fs::create_directories(dir);
  const auto path = dir / "bad.cfg";
  std::ofstream(path) << "[dataset]\nclasses = 3\nbogus_key = 7\n";
  CHECK(run_cli("train -c " + path.string()) == 2);
  CHECK(run_cli("train -c " + (dir / "missing.cfg").string()) == 2);
  fs::remove_all(dir);
}

TEST_CASE("cli: diagnose checks hashes and batch counts") {
  const auto dir = fs::temp_directory_path() / "ltc_cli_diag";
  fs::remove_all(dir);
  const auto cfg_path = write_tiny_config(dir);
  REQUIRE(run_cli("train -c " + cfg_path.string()) == 0);
  const auto ckpt = dir / "out" / "checkpoint.bin";

  CHECK(run_cli("diagnose -c " + cfg_path.string() + " --checkpoint " +
                ckpt.string() + " --batches 3") == 0);
  CHECK(fs::exists(dir / "out" / "conflicts.csv"));

  // Zero batches: config error.
  CHECK(run_cli("diagnose -c " + cfg_path.string() + " --checkpoint " +
                ckpt.string() + " --batches 0") == 2);

  // A different training config must be refused.
  CHECK(run_cli("diagnose -c " + cfg_path.string() +
                " --set train.tau=0.33 --checkpoint " + ckpt.string() +
                " --batches 3") == 1);
  fs::remove_all(dir);
}

TEST_CASE("cli: sweep commands validate their lists") {
  const auto dir = fs::temp_directory_path() / "ltc_cli_sweep";
  fs::remove_all(dir);
  const auto cfg_path = write_tiny_config(dir);
  CHECK(run_cli("sweep-alpha -c " + cfg_path.string() + " --alphas -0.5") == 2);
  CHECK(run_cli("compare-losses -c " + cfg_path.string() + " --kinds nope") == 2);
  fs::remove_all(dir);
}

TEST_CASE("cli: export-embeddings writes the requested split") {
  const auto dir = fs::temp_directory_path() / "ltc_cli_export";
  fs::remove_all(dir);
  const auto cfg_path = write_tiny_config(dir);
  REQUIRE(run_cli("train -c " + cfg_path.string()) == 0);
  const auto ckpt = dir / "out" / "checkpoint.bin";
  CHECK(run_cli("export-embeddings -c " + cfg_path.string() + " --checkpoint " +
                ckpt.string() + " --split train --name train_embed.csv") == 0);
  CHECK(fs::exists(dir / "out" / "train_embed.csv"));
  fs::remove_all(dir);
}
