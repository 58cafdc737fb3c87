#include "lrvb/pipeline/commands.hpp"

#include "lrvb/engine.hpp"
#include "lrvb/models/gmm.hpp"
#include "lrvb/models/mvn.hpp"
#include "lrvb/models/normal_poisson.hpp"
#include "lrvb/models/random_effects.hpp"
#include "lrvb/oracles/samplers.hpp"
#include "lrvb/pipeline/io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <thread>

namespace lrvb::pipeline {

using nlohmann::json;
using namespace lrvb::models;

namespace {

using clock = std::chrono::steady_clock;

double seconds_between(clock::time_point a, clock::time_point b) { return std::chrono::duration<double>(b - a).count(); }

std::string out_file(const RunConfig& config, const char* name) { return join_path(config.output_dir, name); }

void require_model(const RunConfig& config, const char* command, bool allow_mvn) {
  if (!allow_mvn && config.model == ModelId::Mvn) {
    throw ConfigError(std::string(command) + " does not apply to the mvn model; use certify-mvn");
  }
}

// The chain uses its own stream so that it never replays the simulation's draws.
std::uint64_t chain_seed(const RunConfig& config) { return config.seed + 1; }

NpDataset load_np(const RunConfig& c) { return c.dataset ? read_np_csv(*c.dataset) : np_simulate(c.np_sim, c.seed); }
ReDataset load_re(const RunConfig& c) { return c.dataset ? read_re_csv(*c.dataset) : re_simulate(c.re_sim, c.seed); }
GmmDataset load_gmm(const RunConfig& c) {
  return c.dataset ? read_gmm_csv(*c.dataset) : gmm_simulate(c.gmm_sim, c.seed).data;
}

const char* partition_name(Partition p) { return p == Partition::Alpha ? "alpha" : "z"; }

const char* zz_name(ZzStructure s) {
  switch (s) {
    case ZzStructure::Zero: return "zero";
    case ZzStructure::Blocks: return "blocks";
    case ZzStructure::Dense: return "dense";
  }
  return "unknown";
}

json layout_json(const BlockLayout& layout) {
  json blocks = json::array();
  for (const auto& b : layout.blocks()) {
    blocks.push_back({{"name", b.name},
                      {"family", b.family.name()},
                      {"partition", partition_name(b.partition)},
                      {"offset", b.offset},
                      {"size", b.size}});
  }
  return json{{"size", layout.size()}, {"alpha_size", layout.alpha_size()}, {"blocks", blocks}};
}

struct Tracked {
  std::string name;
  Index coord;
};

std::vector<Tracked> np_tracked() {
  return {{"beta", NpProblem::kBeta}, {"tau", NpProblem::kTau}, {"log_tau", NpProblem::kLogTau}};
}

std::vector<Tracked> re_tracked() {
  return {{"beta_1", ReProblem::kBeta},     {"beta_2", ReProblem::kBeta + 1}, {"tau", ReProblem::kTau},
          {"log_tau", ReProblem::kLogTau}, {"nu", ReProblem::kNu},           {"log_nu", ReProblem::kLogNu}};
}

std::vector<Tracked> gmm_tracked_params(const GmmIndex& index) {
  std::vector<Tracked> out;
  for (const auto& [name, coord] : gmm_tracked(index)) out.push_back({name, coord});
  return out;
}

CommandResult fit_and_report(const RunConfig& config, const ModelProblem& problem,
                             std::vector<expfam::FactorState> init, const std::vector<Tracked>& tracked) {
  const auto t0 = clock::now();
  const FitResult fit = coordinate_ascent(problem, std::move(init), config.fit);
  const auto t1 = clock::now();

  json out = provenance(config);
  out["command"] = "fit";
  out["converged"] = fit.trace.converged;
  out["sweeps"] = fit.trace.sweeps;
  out["elbo_trace"] = fit.trace.elbo;
  out["max_change_trace"] = fit.trace.max_change;
  out["monotonicity_violations"] = fit.trace.monotonicity_violations;
  out["max_elbo_decrease"] = fit.trace.max_elbo_decrease;
  out["layout"] = layout_json(problem.layout());
  out["m"] = to_json(fit.m);
  json timings = {{"fit", seconds_between(t0, t1)}};

  CommandResult result;
  if (fit.trace.converged) {
    const BlockDiagonal v = assemble_V(fit.factors, problem.layout());
    const HessianMatrix h = problem.hessian(fit.m);
    const LrvbResult lrvb = lrvb_schur(v, h, problem.layout());
    const auto t2 = clock::now();
    timings["lrvb"] = seconds_between(t1, t2);
    out["alpha_indices"] = lrvb.indices;
    out["V_alpha"] = to_json(lrvb.mfvb_cov);
    out["H_alpha"] = to_json(h.alpha);
    out["H_zz"] = h.zz_structure == ZzStructure::Zero ? "zero (inner solve skipped)" : zz_name(h.zz_structure);
    out["sigma_hat"] = to_json(lrvb.sigma_hat);
    out["solve_diagnostics"] = {{"residual", lrvb.diagnostics.residual},
                                {"asymmetry", lrvb.diagnostics.asymmetry},
                                {"rcond", lrvb.diagnostics.rcond},
                                {"not_positive_definite", lrvb.diagnostics.not_positive_definite},
                                {"z_solver", lrvb.diagnostics.z_solver}};
    json params = json::array();
    for (const auto& t : tracked) {
      const Index pos = result_position(lrvb, t.coord);
      const ParamSummary s = summarize(t.name, fit.m, lrvb, t.coord, pos);
      params.push_back({{"name", s.name},
                        {"coord", t.coord},
                        {"position", pos},
                        {"mean", s.mean},
                        {"mfvb_sd", s.mfvb_sd},
                        {"lrvb_sd", s.lrvb_sd}});
    }
    out["params"] = params;
    result.summary = {{"converged", true}, {"sweeps", fit.trace.sweeps}, {"params", params}};
  } else {
    result.status = ErrorCode::NoConvergence;
    result.message = "MFVB fit did not converge in " + std::to_string(fit.trace.sweeps) +
                     " sweeps; no covariance was emitted";
    result.summary = {{"converged", false}, {"sweeps", fit.trace.sweeps}};
  }
  out["timings"] = timings;
  const std::string path = out_file(config, "fit.json");
  write_json(path, out);
  result.files.push_back(path);
  return result;
}

json gmm_truth_json(const GmmTruth& t) {
  json means = json::array(), covs = json::array();
  for (const auto& m : t.means) means.push_back(to_json(m));
  for (const auto& c : t.covariances) covs.push_back(to_json(c));
  return json{{"pi", to_json(t.pi)}, {"means", means}, {"covariances", covs}};
}

// Total squared distance between fitted and sampled component means under a relabelling.
double relabel_distance(const std::vector<VectorXd>& a, const std::vector<VectorXd>& b, const std::vector<int>& perm) {
  double d = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) d += (a[c] - b[perm[c]]).squaredNorm();
  return d;
}

std::vector<VectorXd> component_means(const std::vector<std::string>& names, const VectorXd& values, int k, int p) {
  std::vector<VectorXd> out(k, VectorXd::Zero(p));
  for (int c = 0; c < k; ++c) {
    for (int a = 0; a < p; ++a) {
      const std::string key = "mu[" + std::to_string(c) + "][" + std::to_string(a) + "]";
      const auto it = std::find(names.begin(), names.end(), key);
      if (it == names.end()) throw LayoutMismatch("compare: missing " + key);
      out[c](a) = values(it - names.begin());
    }
  }
  return out;
}

}  // namespace

CommandResult cmd_simulate(const RunConfig& config) {
  require_model(config, "simulate", false);
  ensure_directory(config.output_dir);
  const std::string data_path = out_file(config, "dataset.csv"), truth_path = out_file(config, "truth.json");
  json truth = provenance(config);
  truth["command"] = "simulate";
  Index rows = 0;
  switch (config.model) {
    case ModelId::Np: {
      const NpDataset d = np_simulate(config.np_sim, config.seed);
      write_np_csv(data_path, config, d);
      truth["truth"] = {{"beta", config.np_sim.beta}, {"tau", config.np_sim.tau}};
      rows = d.size();
      break;
    }
    case ModelId::Re: {
      const ReDataset d = re_simulate(config.re_sim, config.seed);
      write_re_csv(data_path, config, d);
      truth["truth"] = {{"beta", to_json(VectorXd(config.re_sim.beta))},
                        {"tau", config.re_sim.tau},
                        {"nu", config.re_sim.nu},
                        {"groups", config.re_sim.k}};
      rows = d.size();
      break;
    }
    case ModelId::Gmm: {
      const GmmSimulation s = gmm_simulate(config.gmm_sim, config.seed);
      write_gmm_csv(data_path, config, s.data);
      truth["truth"] = gmm_truth_json(s.truth);
      rows = s.data.size();
      break;
    }
    case ModelId::Mvn:
      break;
  }
  write_json(truth_path, truth);
  CommandResult r;
  r.files = {data_path, truth_path};
  r.summary = {{"rows", rows}};
  return r;
}

CommandResult cmd_fit(const RunConfig& config) {
  require_model(config, "fit", false);
  ensure_directory(config.output_dir);
  switch (config.model) {
    case ModelId::Np: {
      const NpProblem problem(load_np(config), config.np_priors);
      return fit_and_report(config, problem, problem.initial_factors(), np_tracked());
    }
    case ModelId::Re: {
      const ReProblem problem(load_re(config), config.re_priors);
      return fit_and_report(config, problem, problem.initial_factors(), re_tracked());
    }
    case ModelId::Gmm: {
      const GmmProblem problem(load_gmm(config), config.gmm_priors, config.gmm_k);
      return fit_and_report(config, problem, problem.moment_init(), gmm_tracked_params(problem.index()));
    }
    case ModelId::Mvn:
      break;
  }
  throw ConfigError("fit: unsupported model");
}

CommandResult cmd_mcmc(const RunConfig& config) {
  require_model(config, "mcmc", false);
  ensure_directory(config.output_dir);
  oracles::SamplerOptions so;
  so.draws = config.oracle.draws;
  so.burnin = config.oracle.burnin;
  so.thin = config.oracle.thin;
  so.seed = chain_seed(config);
  const auto t0 = clock::now();
  oracles::ChainSummary chain;
  switch (config.model) {
    case ModelId::Np:
      chain = oracles::mh_gibbs_np(load_np(config), config.np_priors, so);
      break;
    case ModelId::Re:
      chain = oracles::gibbs_re(load_re(config), config.re_priors, so);
      break;
    case ModelId::Gmm: {
      // Start from the same labelled split as the fit so that compare sees matching components.
      const GmmDataset data = load_gmm(config);
      const GmmProblem problem(data, config.gmm_priors, config.gmm_k);
      const VectorXd m = stack_means(problem.moment_init(), problem.layout());
      const GmmIndex& ix = problem.index();
      oracles::GmmGibbsStart start;
      start.pi.resize(ix.k);
      for (int c = 0; c < ix.k; ++c) {
        start.means.push_back(m.segment(ix.mu(c), ix.p));
        start.precisions.push_back(expfam::unvech(m.segment(ix.lambda(c), expfam::vech_size(ix.p)), ix.p));
        start.pi(c) = std::exp(m(ix.log_pi(c)));
      }
      start.pi /= start.pi.sum();
      oracles::GmmSamplerOptions go;
      go.k = config.gmm_k;
      go.start = start;
      chain = oracles::gibbs_gmm(data, config.gmm_priors, so, go);
      break;
    }
    case ModelId::Mvn:
      break;
  }
  const double secs = seconds_between(t0, clock::now());
  json out = provenance(config);
  out["command"] = "mcmc";
  out["chain"] = chain_to_json(chain);
  out["timings"] = {{"mcmc", secs}};
  const std::string path = out_file(config, "chain.json");
  write_json(path, out);
  CommandResult r;
  r.files = {path};
  r.summary = {{"min_ess", chain.min_ess()}, {"label_switch", chain.label_switch}, {"warnings", chain.warnings}};
  return r;
}

CommandResult cmd_compare(const RunConfig& config) {
  require_model(config, "compare", false);
  ensure_directory(config.output_dir);
  const json fit = read_json(config.fit_path.value_or(out_file(config, "fit.json")));
  const json chain_doc = read_json(config.chain_path.value_or(out_file(config, "chain.json")));
  if (fit.value("model", "") != model_name(config.model) || chain_doc.value("model", "") != model_name(config.model)) {
    throw LayoutMismatch("compare: fit and chain artifacts are not both for model " + std::string(model_name(config.model)));
  }
  if (!fit.value("converged", false) || !fit.contains("params")) {
    throw NoConvergence("compare: the fit artifact has no covariance (fit did not converge)");
  }
  const oracles::ChainSummary chain = chain_from_json(chain_doc.at("chain"));
  const MatrixXd sigma = matrix_from_json(fit.at("sigma_hat"));

  struct Row {
    std::string name;
    Index pos;
    Index chain_index;
    double mean, mfvb_sd, lrvb_sd;
  };
  std::vector<Row> rows;
  for (const auto& p : fit.at("params")) {
    const std::string name = p.at("name").get<std::string>();
    const auto it = std::find(chain.names.begin(), chain.names.end(), name);
    if (it == chain.names.end()) throw LayoutMismatch("compare: chain does not track '" + name + "'");
    rows.push_back({name, p.at("position").get<Index>(), static_cast<Index>(it - chain.names.begin()),
                    p.at("mean").get<double>(), p.at("mfvb_sd").get<double>(), p.at("lrvb_sd").get<double>()});
  }

  bool label_switch = chain.label_switch;
  if (config.model == ModelId::Gmm) {
    const int k = config.gmm_k;
    int dim = 0;
    while (std::find_if(rows.begin(), rows.end(), [&](const Row& r) {
             return r.name == "mu[0][" + std::to_string(dim) + "]";
           }) != rows.end())
      ++dim;
    std::vector<std::string> fit_names;
    VectorXd fit_means(static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      fit_names.push_back(rows[i].name);
      fit_means(i) = rows[i].mean;
    }
    const auto a = component_means(fit_names, fit_means, k, dim);
    const auto b = component_means(chain.names, chain.mean, k, dim);
    std::vector<int> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    const double identity = relabel_distance(a, b, perm);
    while (std::next_permutation(perm.begin(), perm.end())) {
      if (relabel_distance(a, b, perm) < identity) label_switch = true;
    }
  }

  std::vector<std::vector<std::string>> table;
  double max_rel_lrvb = 0.0, max_rel_mfvb = 0.0, max_abs_z = 0.0, min_ess = INFINITY;
  int gate_failures = 0;
  for (const auto& r : rows) {
    const double mc = chain.sd(r.chain_index), se = chain.sd_se(r.chain_index), e = chain.ess(r.chain_index);
    const double z = se > 0.0 ? (r.lrvb_sd - mc) / se : 0.0;
    max_rel_lrvb = std::max(max_rel_lrvb, std::abs(r.lrvb_sd - mc) / mc);
    max_rel_mfvb = std::max(max_rel_mfvb, std::abs(r.mfvb_sd - mc) / mc);
    max_abs_z = std::max(max_abs_z, std::abs(z));
    min_ess = std::min(min_ess, e);
    gate_failures += std::abs(z) > config.oracle.gate_sigmas;
    table.push_back({r.name, format_double(r.mfvb_sd), format_double(r.lrvb_sd), format_double(mc), format_double(se),
                     format_double(e), format_double(z)});
  }
  std::vector<std::vector<std::string>> cov_table;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      cov_table.push_back({rows[i].name, rows[j].name, format_double(sigma(rows[i].pos, rows[j].pos)),
                           format_double(chain.cov(rows[i].chain_index, rows[j].chain_index))});
    }
  }
  const std::string csv = out_file(config, "compare.csv"), cov_csv = out_file(config, "compare_cov.csv"),
                    summary_path = out_file(config, "compare.json");
  write_table(csv, config, {"parameter", "mfvb_sd", "lrvb_sd", "mcmc_sd", "mcmc_sd_se", "mcmc_ess", "lrvb_z"}, table);
  write_table(cov_csv, config, {"parameter_a", "parameter_b", "lrvb_cov", "mcmc_cov"}, cov_table);

  CommandResult result;
  if (label_switch) {
    result.status = ErrorCode::LabelSwitchDetected;
    result.message = "label switching detected between the fit and the chain";
  } else if (min_ess < config.oracle.min_ess) {
    result.status = ErrorCode::EssTooLow;
    result.message = "minimum ESS " + format_double(min_ess) + " is below " + format_double(config.oracle.min_ess);
  } else if (gate_failures > 0) {
    result.status = ErrorCode::GateFailed;
    result.message = std::to_string(gate_failures) + " parameter(s) outside " + format_double(config.oracle.gate_sigmas) +
                     " MC standard errors";
  }
  json summary = provenance(config);
  summary["command"] = "compare";
  summary["parameters"] = rows.size();
  summary["max_rel_error_lrvb"] = max_rel_lrvb;
  summary["max_rel_error_mfvb"] = max_rel_mfvb;
  summary["max_abs_z"] = max_abs_z;
  summary["min_ess"] = min_ess;
  summary["label_switch"] = label_switch;
  summary["gate_failures"] = gate_failures;
  summary["status"] = error_code_name(result.status);
  write_json(summary_path, summary);
  result.files = {csv, cov_csv, summary_path};
  result.summary = summary;
  return result;
}

CommandResult cmd_scaling(const RunConfig& config) {
  ensure_directory(config.output_dir);
  std::vector<ScalingRow> rows = gmm_scaling_run(config.scaling, config.seed, config.gmm_priors);

  // Gibbs timing per grid cell on the same simulated data.
  std::uint64_t case_seed = config.seed;
  for (int k : config.scaling.k_values) {
    for (int p : config.scaling.p_values) {
      for (int n : config.scaling.n_values) {
        GmmSimConfig sim;
        sim.n = n;
        sim.k = k;
        sim.p = p;
        sim.separation = 4.0;
        const GmmSimulation s = gmm_simulate(sim, ++case_seed);
        oracles::SamplerOptions so;
        so.draws = config.scaling_gibbs_draws;
        so.burnin = config.scaling_gibbs_draws / 10;
        so.seed = case_seed;
        oracles::GmmSamplerOptions go;
        go.k = k;
        go.start = oracles::GmmGibbsStart{s.truth.means, s.truth.precisions, s.truth.pi};
        const auto t0 = clock::now();
        oracles::gibbs_gmm(s.data, config.gmm_priors, so, go);
        rows.push_back({n, k, p, 0, "gibbs", seconds_between(t0, clock::now())});
      }
    }
  }

  std::vector<std::vector<std::string>> table;
  for (const auto& r : rows) {
    table.push_back({std::to_string(r.n), std::to_string(r.k), std::to_string(r.p), std::to_string(r.rep), r.phase,
                     format_double(r.seconds)});
  }
  const std::string csv = out_file(config, "timing.csv"), summary_path = out_file(config, "scaling.json");
  write_table(csv, config, {"N", "K", "P", "rep", "phase", "seconds"}, table);
  json summary = provenance(config);
  summary["command"] = "scaling";
  if (config.scaling.n_values.size() > 1 && config.scaling.p_values.size() == 1) {
    summary["slope_n"] = scaling_slope(rows, "n");
  }
  if (config.scaling.p_values.size() > 1 && config.scaling.n_values.size() == 1) {
    summary["slope_p"] = scaling_slope(rows, "p");
  }
  write_json(summary_path, summary);
  CommandResult r;
  r.files = {csv, summary_path};
  r.summary = summary;
  return r;
}

CommandResult cmd_certify_mvn(const RunConfig& config) {
  if (config.model != ModelId::Mvn) throw ConfigError("certify-mvn requires model \"mvn\"");
  ensure_directory(config.output_dir);
  const MvnCertifyOptions& o = config.mvn;
  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<int> dim(o.min_dim, o.max_dim);
  std::vector<MvnTarget> targets;
  for (int r = 0; r < o.replicates; ++r) {
    const int d = dim(rng);
    targets.push_back(random_mvn_target(d, o.max_condition, rng));
  }

  struct Outcome {
    int dim = 0;
    bool converged = false;
    double mean_error = INFINITY;
    double cov_rel_error = INFINITY;
    std::string error;
  };
  std::vector<Outcome> outcomes(targets.size());
  auto work = [&](std::size_t i) {
    Outcome& out = outcomes[i];
    out.dim = static_cast<int>(targets[i].dim());
    try {
      FitOptions fit = config.fit;
      fit.tol = std::min(fit.tol, o.fit_tol);
      const MvnLrvb res = mvn_lrvb(targets[i], fit);
      out.converged = res.fit.trace.converged;
      out.mean_error = (res.first_moment_means - targets[i].mean).cwiseAbs().maxCoeff();
      out.cov_rel_error =
          (res.first_moment_sigma - targets[i].cov).cwiseAbs().maxCoeff() / targets[i].cov.cwiseAbs().maxCoeff();
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  };
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(config.threads), targets.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < targets.size(); i += workers) work(i);
    });
  }
  for (auto& t : pool) t.join();

  json reps = json::array();
  int failures = 0;
  double worst_mean = 0.0, worst_cov = 0.0;
  for (const auto& out : outcomes) {
    const bool ok = out.error.empty() && out.converged && out.mean_error <= o.mean_tol && out.cov_rel_error <= o.cov_rel_tol;
    failures += !ok;
    worst_mean = std::max(worst_mean, out.mean_error);
    worst_cov = std::max(worst_cov, out.cov_rel_error);
    json r = {{"dim", out.dim},
              {"converged", out.converged},
              {"mean_error", out.mean_error},
              {"cov_rel_error", out.cov_rel_error},
              {"pass", ok}};
    if (!out.error.empty()) r["error"] = out.error;
    reps.push_back(r);
  }
  json report = provenance(config);
  report["command"] = "certify-mvn";
  report["replicates"] = reps;
  report["max_mean_error"] = worst_mean;
  report["max_cov_rel_error"] = worst_cov;
  report["mean_tol"] = o.mean_tol;
  report["cov_rel_tol"] = o.cov_rel_tol;
  report["failures"] = failures;
  const std::string path = out_file(config, "mvn_certify.json");
  write_json(path, report);
  CommandResult result;
  result.files = {path};
  result.summary = {{"failures", failures}, {"max_mean_error", worst_mean}, {"max_cov_rel_error", worst_cov}};
  if (failures > 0) {
    result.status = ErrorCode::GateFailed;
    result.message = std::to_string(failures) + " of " + std::to_string(o.replicates) + " MVN replicates failed";
  }
  return result;
}

CommandResult run_command(const std::string& name, const RunConfig& config) {
  if (name == "simulate") return cmd_simulate(config);
  if (name == "fit") return cmd_fit(config);
  if (name == "mcmc") return cmd_mcmc(config);
  if (name == "compare") return cmd_compare(config);
  if (name == "scaling") return cmd_scaling(config);
  if (name == "certify-mvn") return cmd_certify_mvn(config);
  throw ConfigError("unknown command '" + name + "'");
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::Ok:
      return 0;
    case ErrorCode::Config:
    case ErrorCode::Io:
    case ErrorCode::InvalidArgument:
      return 2;
    case ErrorCode::NoConvergence:
    case ErrorCode::MaxSweepsExceeded:
      return 3;
    case ErrorCode::GateFailed:
    case ErrorCode::EssTooLow:
    case ErrorCode::LabelSwitchDetected:
      return 4;
    default:
      return 1;
  }
}

}  // namespace lrvb::pipeline
