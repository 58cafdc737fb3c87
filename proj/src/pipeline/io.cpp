#include "lrvb/pipeline/io.hpp"

#include "lrvb/error.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace lrvb::pipeline {

using nlohmann::json;

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

void require_header(const CsvTable& t, const std::vector<std::string>& want, const std::string& path) {
  if (t.header != want) {
    std::string w;
    for (const auto& h : want) w += (w.empty() ? "" : ",") + h;
    throw IoError("'" + path + "': expected columns " + w);
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  CsvTable t;
  std::vector<std::vector<double>> rows;
  std::string line;
  Index line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || line == "\r") continue;
    const auto cells = split(line);
    if (t.header.empty()) {
      t.header = cells;
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw IoError("'" + path + "' line " + std::to_string(line_no) + ": expected " +
                    std::to_string(t.header.size()) + " fields");
    }
    std::vector<double> row;
    for (const auto& c : cells) {
      double v = 0.0;
      const auto res = std::from_chars(c.data(), c.data() + c.size(), v);
      if (res.ec != std::errc() || res.ptr != c.data() + c.size()) {
        throw IoError("'" + path + "' line " + std::to_string(line_no) + ": '" + c + "' is not a number");
      }
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw IoError("'" + path + "' has no header");
  t.rows.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) t.rows(i, j) = rows[i][j];
  return t;
}

void write_csv(const std::string& path, const RunConfig& config, const std::vector<std::string>& header,
               const MatrixXd& rows) {
  std::ostringstream out;
  out << "# config_hash=" << config.hash() << " seed=" << config.seed << "\n";
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << "\n";
  for (Index i = 0; i < rows.rows(); ++i) {
    for (Index j = 0; j < rows.cols(); ++j) out << (j ? "," : "") << format_double(rows(i, j));
    out << "\n";
  }
  write_text(path, out.str());
}

void write_table(const std::string& path, const RunConfig& config, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream out;
  out << "# config_hash=" << config.hash() << " seed=" << config.seed << "\n";
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << "\n";
  for (const auto& row : rows) {
    if (row.size() != header.size()) throw DimensionMismatch("write_table: row width does not match the header");
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << row[j];
    out << "\n";
  }
  write_text(path, out.str());
}

json provenance(const RunConfig& config) {
  return json{{"config_hash", config.hash()}, {"seed", config.seed}, {"model", model_name(config.model)}};
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw IoError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write to '" + path + "' failed");
}

void ensure_directory(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create directory '" + dir + "'");
}

std::string join_path(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

void write_np_csv(const std::string& path, const RunConfig& config, const models::NpDataset& d) {
  MatrixXd rows(d.size(), 2);
  rows << d.y, d.x;
  write_csv(path, config, {"y", "x"}, rows);
}

void write_re_csv(const std::string& path, const RunConfig& config, const models::ReDataset& d) {
  MatrixXd rows(d.size(), 5);
  for (Index n = 0; n < d.size(); ++n) {
    rows.row(n) << d.y(n), d.x(n, 0), d.x(n, 1), d.r(n), d.k[n] + 1.0;
  }
  write_csv(path, config, {"y", "x1", "x2", "r", "k"}, rows);
}

void write_gmm_csv(const std::string& path, const RunConfig& config, const models::GmmDataset& d) {
  std::vector<std::string> header;
  for (int a = 0; a < d.dim(); ++a) header.push_back("x" + std::to_string(a + 1));
  write_csv(path, config, header, d.x);
}

models::NpDataset read_np_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  require_header(t, {"y", "x"}, path);
  models::NpDataset d;
  d.y = t.rows.col(0);
  d.x = t.rows.col(1);
  try {
    d.validate();
  } catch (const Error& e) {
    throw IoError("'" + path + "': " + e.what());
  }
  return d;
}

models::ReDataset read_re_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  require_header(t, {"y", "x1", "x2", "r", "k"}, path);
  models::ReDataset d;
  d.y = t.rows.col(0);
  d.x = t.rows.middleCols(1, 2);
  d.r = t.rows.col(3);
  int max_k = 0;
  for (Index n = 0; n < t.rows.rows(); ++n) {
    const double k = t.rows(n, 4);
    if (k != std::floor(k) || k < 1.0) throw IoError("'" + path + "': k must be a positive integer");
    d.k.push_back(static_cast<int>(k) - 1);
    max_k = std::max(max_k, static_cast<int>(k));
  }
  d.num_groups = max_k;
  try {
    d.validate();
  } catch (const Error& e) {
    throw IoError("'" + path + "': " + e.what());
  }
  return d;
}

models::GmmDataset read_gmm_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  std::vector<std::string> want;
  for (std::size_t a = 0; a < t.header.size(); ++a) want.push_back("x" + std::to_string(a + 1));
  require_header(t, want, path);
  models::GmmDataset d;
  d.x = t.rows;
  try {
    d.validate();
  } catch (const Error& e) {
    throw IoError("'" + path + "': " + e.what());
  }
  return d;
}

json to_json(const VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

json to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) rows.push_back(to_json(VectorXd(m.row(i).transpose())));
  return rows;
}

VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size()));
}

MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array()) throw IoError("expected a JSON matrix");
  MatrixXd m(static_cast<Index>(j.size()), j.empty() ? 0 : static_cast<Index>(j[0].size()));
  for (Index i = 0; i < m.rows(); ++i) {
    const VectorXd r = vector_from_json(j[i]);
    if (r.size() != m.cols()) throw IoError("ragged JSON matrix");
    m.row(i) = r.transpose();
  }
  return m;
}

json chain_to_json(const oracles::ChainSummary& chain) {
  return json{{"names", chain.names},
              {"mean", to_json(chain.mean)},
              {"sd", to_json(chain.sd)},
              {"ess", to_json(chain.ess)},
              {"mean_se", to_json(chain.mean_se)},
              {"sd_se", to_json(chain.sd_se)},
              {"cov", to_json(chain.cov)},
              {"kept_draws", chain.draws.rows()},
              {"num_draws", chain.num_draws},
              {"burnin", chain.burnin},
              {"chain_seed", chain.seed},
              {"label_switch", chain.label_switch},
              {"warnings", chain.warnings}};
}

oracles::ChainSummary chain_from_json(const json& j) {
  oracles::ChainSummary c;
  try {
    c.names = j.at("names").get<std::vector<std::string>>();
    c.mean = vector_from_json(j.at("mean"));
    c.sd = vector_from_json(j.at("sd"));
    c.ess = vector_from_json(j.at("ess"));
    c.mean_se = vector_from_json(j.at("mean_se"));
    c.sd_se = vector_from_json(j.at("sd_se"));
    c.cov = matrix_from_json(j.at("cov"));
    c.num_draws = j.at("num_draws").get<Index>();
    c.burnin = j.at("burnin").get<Index>();
    c.seed = j.at("chain_seed").get<std::uint64_t>();
    c.label_switch = j.at("label_switch").get<bool>();
    c.warnings = j.at("warnings").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed chain summary: ") + e.what());
  }
  const Index k = static_cast<Index>(c.names.size());
  if (c.mean.size() != k || c.sd.size() != k || c.ess.size() != k || c.cov.rows() != k) {
    throw IoError("malformed chain summary: inconsistent sizes");
  }
  return c;
}

}  // namespace lrvb::pipeline
