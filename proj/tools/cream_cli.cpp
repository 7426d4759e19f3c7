// Command-line front end: run experiments from JSON configs, execute the
// property-check suites, and build comparison tables across configs.
//
// Exit codes:
//   0  success
//   1  unexpected internal error
//   2  invalid config / arguments / input data
//   3  a property check failed
//   4  training diverged

#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cream/artifacts.hpp"
#include "cream/errors.hpp"
#include "cream/verify.hpp"

namespace {

namespace fs = std::filesystem;

fs::path run_root() {
  if (const char* env = std::getenv("CREAM_RUN_ROOT"); env && *env) return fs::path(env);
  return fs::path("runs");
}

int do_run(const std::string& config_path, const std::string& out_dir) {
  const cream::ExperimentConfig config = cream::ExperimentConfig::load(config_path);
  fs::path dir = out_dir.empty() ? run_root() / fs::path(config_path).stem() : fs::path(out_dir);
  const cream::RunResult result = cream::run_and_write(config, dir);
  std::cout << "wrote " << result.dir.string() << " (" << result.snapshots.size()
            << " snapshots)\n";
  const cream::IterationSnapshot& last = result.snapshots.back();
  std::cout << "final " << last.label << ": proxy_accuracy "
            << cream::format_double(last.proxy_accuracy);
  if (last.consistency)
    std::cout << ", consistency_rate " << cream::format_double(last.consistency->rate);
  std::cout << "\n";
  return 0;
}

int do_verify(const std::string& suite, std::uint64_t seed, bool corrupt) {
  cream::VerifyOptions options;
  options.seed = seed;
  options.corrupt_soft_label_bridge = corrupt;
  const std::vector<cream::CheckResult> results = cream::verify_suite(suite, options);
  int failures = 0;
  for (const cream::CheckResult& r : results) {
    std::cout << (r.passed ? "PASS" : "FAIL") << "  " << r.name << "  max_err "
              << cream::format_double(r.max_err) << "  tol " << cream::format_double(r.tolerance);
    if (!r.detail.empty()) std::cout << "  (" << r.detail << ")";
    std::cout << "\n";
    if (!r.passed) ++failures;
  }
  std::cout << results.size() - failures << "/" << results.size() << " checks passed\n";
  return failures == 0 ? 0 : 3;
}

int do_compare(const std::vector<std::string>& config_paths, const std::string& out_file) {
  std::vector<cream::NamedRun> runs;
  for (const std::string& path : config_paths) {
    cream::NamedRun run;
    run.config = cream::ExperimentConfig::load(path);
    std::string stem = fs::path(path).stem().string();
    int suffix = 1;
    std::string name = stem;
    for (const cream::NamedRun& existing : runs)
      if (existing.name == name) name = stem + "-" + std::to_string(++suffix);
    run.name = name;
    const cream::SyntheticTask task = run.config.task.build();
    run.snapshots = cream::run_experiment(task, run.config.train);
    runs.push_back(std::move(run));
  }
  const std::string table = cream::comparison_csv(runs);
  if (out_file.empty()) {
    std::cout << table;
  } else {
    std::ofstream os(out_file, std::ios::binary);
    if (!os) throw cream::DataError("cannot open output file '" + out_file + "'");
    os << table;
    std::cout << "wrote " << out_file << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tabular self-rewarding preference-optimization laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  CLI::App* run_cmd = app.add_subcommand("run", "execute one experiment from a JSON config");
  run_cmd->add_option("config", config_path, "experiment config (JSON)")->required();
  run_cmd->add_option("--out", out_dir, "artifact directory (default <run-root>/<config-stem>)");

  std::string suite = "all";
  std::uint64_t seed = 12345;
  bool corrupt = false;
  CLI::App* verify_cmd = app.add_subcommand("verify", "run the property-check suites");
  verify_cmd->add_option("--suite", suite, "losses|lemmas|theorems|rank-stats|all")
      ->check(CLI::IsMember(cream::verify_suite_names()));
  verify_cmd->add_option("--seed", seed, "seed for randomized checks");
  verify_cmd->add_flag("--corrupt-soft-label-bridge", corrupt,
                       "negative control: bias the soft-label bridge so its check must fail");

  std::vector<std::string> compare_paths;
  std::string compare_out;
  CLI::App* compare_cmd =
      app.add_subcommand("compare", "run several configs and tabulate their metrics");
  compare_cmd->add_option("configs", compare_paths, "experiment configs (JSON)")
      ->required()
      ->expected(-1);
  compare_cmd->add_option("--out", compare_out, "write the CSV here instead of stdout");

  try {
    app.parse(argc, argv);
    if (run_cmd->parsed()) return do_run(config_path, out_dir);
    if (verify_cmd->parsed()) return do_verify(suite, seed, corrupt);
    if (compare_cmd->parsed()) return do_compare(compare_paths, compare_out);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const cream::ValidationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const cream::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const cream::TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
