#pragma once

// CSV datasets and JSON artifacts. Every file starts with the config hash and seed:
// JSON files carry them as top-level fields, CSV files as a leading "# config_hash=.. seed=.." line.

#include "lrvb/models/gmm.hpp"
#include "lrvb/models/normal_poisson.hpp"
#include "lrvb/models/random_effects.hpp"
#include "lrvb/oracles/diagnostics.hpp"
#include "lrvb/pipeline/config.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace lrvb::pipeline {

struct CsvTable {
  std::vector<std::string> header;
  MatrixXd rows;
};

/// Reads a numeric CSV with one header line; lines starting with '#' are skipped.
CsvTable read_csv(const std::string& path);
/// Writes the provenance comment, the header and the rows with round-trip precision.
void write_csv(const std::string& path, const RunConfig& config, const std::vector<std::string>& header,
               const MatrixXd& rows);

/// Same, for tables with text cells.
void write_table(const std::string& path, const RunConfig& config, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows);
std::string format_double(double v);

nlohmann::json provenance(const RunConfig& config);
nlohmann::json read_json(const std::string& path);
void write_json(const std::string& path, const nlohmann::json& j);
void write_text(const std::string& path, const std::string& text);
void ensure_directory(const std::string& dir);
std::string join_path(const std::string& dir, const std::string& file);

// Column orders: np "y,x"; re "y,x1,x2,r,k" with k in 1..K; gmm "x1,..,xP".
void write_np_csv(const std::string& path, const RunConfig& config, const models::NpDataset& d);
void write_re_csv(const std::string& path, const RunConfig& config, const models::ReDataset& d);
void write_gmm_csv(const std::string& path, const RunConfig& config, const models::GmmDataset& d);
models::NpDataset read_np_csv(const std::string& path);
models::ReDataset read_re_csv(const std::string& path);
models::GmmDataset read_gmm_csv(const std::string& path);

nlohmann::json to_json(const VectorXd& v);
nlohmann::json to_json(const MatrixXd& m);
VectorXd vector_from_json(const nlohmann::json& j);
MatrixXd matrix_from_json(const nlohmann::json& j);

nlohmann::json chain_to_json(const oracles::ChainSummary& chain);
oracles::ChainSummary chain_from_json(const nlohmann::json& j);

}  // namespace lrvb::pipeline
