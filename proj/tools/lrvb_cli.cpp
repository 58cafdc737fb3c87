#include "lrvb/lrvb.h"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;
  bool quiet = false;
};

int report(lrvb_status status, const char* context) {
  std::cerr << "lrvb-cli: " << context << ": " << lrvb_status_name(status) << ": " << lrvb_last_error() << "\n";
  return lrvb_exit_code(status);
}

int run(const std::string& command, const Options& opts) {
  lrvb_config* config = nullptr;
  lrvb_status s = lrvb_config_from_file(opts.config.c_str(), &config);
  if (s != LRVB_OK) return report(s, "loading config");

  if (opts.seed) s = lrvb_config_set_seed(config, *opts.seed);
  if (s == LRVB_OK && opts.out) s = lrvb_config_set_output_dir(config, opts.out->c_str());
  if (s == LRVB_OK && opts.threads) s = lrvb_config_set_threads(config, *opts.threads);
  if (s != LRVB_OK) {
    const int code = report(s, "applying overrides");
    lrvb_config_destroy(config);
    return code;
  }

  s = lrvb_run_command(config, command.c_str());
  int code = 0;
  if (s != LRVB_OK) code = report(s, command.c_str());
  const char* summary = nullptr;
  if (!opts.quiet && lrvb_config_summary(config, &summary) == LRVB_OK && summary && std::string(summary) != "null") {
    std::cout << summary << "\n";
  }
  lrvb_config_destroy(config);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field variational Bayes with linear response covariances"};
  app.set_version_flag("--version", std::string(lrvb_version()));
  app.require_subcommand(1);

  Options opts;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"simulate", "Simulate a dataset from the configured model"},
      {"fit", "Run MFVB and the LRVB correction on the dataset"},
      {"mcmc", "Run the reference sampler on the dataset"},
      {"compare", "Compare LRVB and MFVB standard deviations against the sampler"},
      {"scaling", "Time MFVB, LRVB and Gibbs sampling over the configured grid"},
      {"certify-mvn", "Check LRVB exactness on random multivariate normal targets"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", opts.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", opts.seed, "Override the configured seed");
    sub->add_option("-o,--out", opts.out, "Override the output directory");
    sub->add_option("-j,--threads", opts.threads, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("-q,--quiet", opts.quiet, "Do not print the JSON summary");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : lrvb_exit_code(LRVB_ERR_CONFIG);
  }

  for (const auto& [name, help] : commands) {
    if (app.got_subcommand(name)) return run(name, opts);
  }
  return lrvb_exit_code(LRVB_ERR_INTERNAL);
}
