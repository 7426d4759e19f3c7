// End-to-end checks of the command-line binary: each test shells out to the
// built executable (path injected via CREAM_CLI_PATH) and inspects exit
// codes, console output, and artifact files.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

const fs::path& scratch_root() {
  static const fs::path root = [] {
    fs::path p = fs::temp_directory_path() /
                 ("cream-cli-test-" + std::to_string(static_cast<long>(::getpid())));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = scratch_root() / name;
  fs::create_directories(dir);
  return dir;
}

// Runs `<prefix> <cli> <args>` under /bin/sh, captures stdout+stderr, returns
// the exit code.
int run_cli(const std::string& args, std::string* output = nullptr,
            const std::string& env_prefix = "") {
  static int counter = 0;
  const fs::path log = scratch_root() / ("out-" + std::to_string(counter++) + ".log");
  std::string cmd = env_prefix.empty() ? "" : env_prefix + " ";
  cmd += std::string("\"") + CREAM_CLI_PATH + "\" " + args + " > \"" + log.string() +
         "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  if (output) {
    std::ifstream in(log);
    std::stringstream buf;
    buf << in.rdbuf();
    *output = buf.str();
  }
  REQUIRE(WIFEXITED(rc));
  return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string small_config_json(const std::string& method) {
  return std::string(R"({
  "task": {
    "num_prompts": 8,
    "responses_per_prompt": 4,
    "seed": 5,
    "margin": 0.6,
    "sft_fraction": 0.5
  },
  "train": {
    "method": ")") +
         method + R"(",
    "iterations": 2,
    "n_candidates": 4,
    "temperature": 1.0,
    "beta": 0.1,
    "learning_rate": 0.05,
    "sft_learning_rate": 0.05,
    "sft_epochs": 3,
    "seed": 11,
    "init_coupling": 0.3,
    "init_noise": 0.5
  }
}
)";
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) lines.push_back(line);
  return lines;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  // A trailing comma means a final empty field that getline drops.
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

}  // namespace

TEST_CASE("run writes a complete, reproducible artifact directory") {
  const fs::path dir = scratch_dir("run");
  const fs::path cfg = dir / "demo.json";
  write_file(cfg, small_config_json("CREAM"));

  const fs::path out1 = dir / "out1";
  std::string console;
  const int rc = run_cli("run \"" + cfg.string() + "\" --out \"" + out1.string() + "\"",
                         &console);
  CHECK(rc == 0);
  CHECK(console.find("4 snapshots") != std::string::npos);

  for (const char* name : {"config.json", "metrics.csv", "consistency.csv", "pairs.jsonl"})
    CHECK(fs::exists(out1 / name));
  for (const char* label : {"M0", "M1", "M2", "M3"})
    CHECK(fs::exists(out1 / "snapshots" / (std::string(label) + ".json")));

  const std::vector<std::string> lines = split_lines(slurp(out1 / "metrics.csv"));
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == "iteration,method,proxy_accuracy,mean_loss,consistency_rate");
  CHECK(lines[1].rfind("M0,CREAM,", 0) == 0);
  CHECK(lines[4].rfind("M3,CREAM,", 0) == 0);

  const fs::path out2 = dir / "out2";
  CHECK(run_cli("run \"" + cfg.string() + "\" --out \"" + out2.string() + "\"") == 0);
  CHECK(slurp(out2 / "metrics.csv") == slurp(out1 / "metrics.csv"));
  CHECK(slurp(out2 / "pairs.jsonl") == slurp(out1 / "pairs.jsonl"));
}

TEST_CASE("run honors the run-root environment variable") {
  const fs::path dir = scratch_dir("envroot");
  const fs::path cfg = dir / "rooted.json";
  write_file(cfg, small_config_json("SRLM"));
  const fs::path root = dir / "custom-root";
  const int rc = run_cli("run \"" + cfg.string() + "\"", nullptr,
                         "CREAM_RUN_ROOT=\"" + root.string() + "\"");
  CHECK(rc == 0);
  CHECK(fs::exists(root / "rooted" / "metrics.csv"));
}

TEST_CASE("config errors exit with the validation code and name the problem") {
  const fs::path dir = scratch_dir("badcfg");

  const fs::path no_method = dir / "no_method.json";
  write_file(no_method, R"({"train": {"iterations": 2}})");
  std::string console;
  CHECK(run_cli("run \"" + no_method.string() + "\"", &console) == 2);
  CHECK(console.find("method") != std::string::npos);

  const fs::path not_json = dir / "broken.json";
  write_file(not_json, "{ this is not json");
  CHECK(run_cli("run \"" + not_json.string() + "\"", &console) == 2);
  CHECK(console.find("config error") != std::string::npos);

  const fs::path typo = dir / "typo.json";
  write_file(typo, R"({"train": {"method": "CREAM"}, "tsak": {}})");
  CHECK(run_cli("run \"" + typo.string() + "\"", &console) == 2);
  CHECK(console.find("tsak") != std::string::npos);

  CHECK(run_cli("run \"" + (dir / "missing.json").string() + "\"", &console) == 2);
}

TEST_CASE("verify suite passes and reports per-check lines") {
  std::string console;
  const int rc = run_cli("verify --suite rank-stats", &console);
  CHECK(rc == 0);
  CHECK(console.find("PASS") != std::string::npos);
  CHECK(console.find("FAIL") == std::string::npos);
  CHECK(console.find("checks passed") != std::string::npos);
}

TEST_CASE("corrupted-bridge control makes verification fail loudly") {
  std::string console;
  const int rc = run_cli("verify --suite theorems --corrupt-soft-label-bridge", &console);
  CHECK(rc == 3);
  CHECK(console.find("FAIL") != std::string::npos);
  CHECK(console.find("soft-label-equivalence") != std::string::npos);
}

TEST_CASE("unknown subcommands and bad suite names are argument errors") {
  std::string console;
  CHECK(run_cli("frobnicate", &console) == 2);
  CHECK(run_cli("verify --suite bogus", &console) == 2);
  CHECK(run_cli("", &console) == 2);  // a subcommand is required
}

TEST_CASE("compare of a config with itself shows zero deltas") {
  const fs::path dir = scratch_dir("compare");
  const fs::path cfg = dir / "twin.json";
  write_file(cfg, small_config_json("CREAM"));

  std::string console;
  const int rc =
      run_cli("compare \"" + cfg.string() + "\" \"" + cfg.string() + "\"", &console);
  CHECK(rc == 0);

  const std::vector<std::string> lines = split_lines(console);
  REQUIRE(lines.size() >= 2);
  const std::vector<std::string> header = split_fields(lines[0]);
  REQUIRE(header.size() == 8);
  CHECK(header[2] == "twin");
  CHECK(header[5] == "twin-2");
  CHECK(header[7] == "twin-2_delta_vs_first");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::vector<std::string> fields = split_fields(lines[i]);
    REQUIRE(fields.size() == 8);
    // Identical runs: the second run's delta against the first is zero (or
    // blank where the metric is undefined for that stage).
    CHECK((fields[7].empty() || fields[7] == "0"));
    CHECK(fields[5] == fields[2]);
  }

  const fs::path table = dir / "table.csv";
  CHECK(run_cli("compare \"" + cfg.string() + "\" --out \"" + table.string() + "\"") == 0);
  CHECK(fs::exists(table));
}
