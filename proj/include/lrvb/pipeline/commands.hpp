#pragma once

// One function per command-line subcommand. Each writes its artifacts into
// config.output_dir and returns a status; hard failures throw lrvb::Error.
//
// Files (all embed the config hash and seed):
//   simulate     dataset.csv, truth.json
//   fit          fit.json (m*, ELBO trace, layout, V, H and Sigma_hat over alpha, parameter table, timings)
//   mcmc         chain.json (names, mean, sd, ESS, MC standard errors, covariance)
//   compare      compare.csv, compare_cov.csv, compare.json
//   scaling      timing.csv (N,K,P,rep,phase,seconds), scaling.json
//   certify-mvn  mvn_certify.json

#include "lrvb/error.hpp"
#include "lrvb/pipeline/config.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace lrvb::pipeline {

struct CommandResult {
  /// Ok, or a soft failure reported after the artifacts were written:
  /// NoConvergence (fit), GateFailed / EssTooLow / LabelSwitchDetected (compare, certify-mvn).
  ErrorCode status = ErrorCode::Ok;
  std::string message;
  std::vector<std::string> files;
  nlohmann::json summary;
};

CommandResult cmd_simulate(const RunConfig& config);
CommandResult cmd_fit(const RunConfig& config);
CommandResult cmd_mcmc(const RunConfig& config);
CommandResult cmd_compare(const RunConfig& config);
CommandResult cmd_scaling(const RunConfig& config);
CommandResult cmd_certify_mvn(const RunConfig& config);

/// Dispatch by subcommand name.
CommandResult run_command(const std::string& name, const RunConfig& config);

/// Process exit code: 0 ok, 2 config or IO, 3 convergence, 4 gate, 1 anything else.
int exit_code(ErrorCode code);

}  // namespace lrvb::pipeline
