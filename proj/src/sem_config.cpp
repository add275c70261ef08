#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pulse/errors.hpp"
#include "pulse/sem.hpp"

namespace pulse {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& what) {
  throw Error(ErrorCode::InvalidArgument, "SEM config: " + what);
}

Matrix read_matrix(const json& j, const char* key) {
  if (!j.is_array()) bad(std::string(key) + " must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  Eigen::Index cols = rows == 0 ? 0 : static_cast<Eigen::Index>(j.at(0).size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j.at(static_cast<std::size_t>(r));
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      bad(std::string(key) + " has ragged rows");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& cell = row.at(static_cast<std::size_t>(c));
      if (!cell.is_number()) bad(std::string(key) + " contains a non-number");
      m(r, c) = cell.get<double>();
    }
  }
  return m;
}

Vector read_vector(const json& j, const char* key) {
  if (!j.is_array()) bad(std::string(key) + " must be an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) bad(std::string(key) + " contains a non-number");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

VariableRole read_role(const std::string& s) {
  if (s == "target") return VariableRole::Target;
  if (s == "endogenous") return VariableRole::Endogenous;
  if (s == "hidden") return VariableRole::Hidden;
  bad("unknown role '" + s + "' (expected target, endogenous or hidden)");
}

InterventionSpec read_intervention(const json& j) {
  if (!j.is_object()) bad("intervention must be an object");
  const std::string kind = j.value("kind", std::string("none"));
  if (kind == "none") return InterventionSpec::none();
  if (kind == "hard") {
    if (!j.contains("value")) bad("hard intervention needs 'value'");
    return InterventionSpec::hard(read_vector(j.at("value"), "value"));
  }
  if (kind == "stochastic") {
    if (!j.contains("mean") || !j.contains("cov")) bad("stochastic intervention needs 'mean' and 'cov'");
    return InterventionSpec::stochastic(read_vector(j.at("mean"), "mean"), read_matrix(j.at("cov"), "cov"));
  }
  bad("unknown intervention kind '" + kind + "'");
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    bad(std::string("invalid JSON: ") + e.what());
  }
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

SemModel parse_sem_json(const std::string& text, InterventionSpec* embedded) {
  const json j = parse(text);
  if (!j.is_object()) bad("top level must be an object");
  SemModel m;
  try {
    if (!j.contains("variables")) bad("missing 'variables'");
    for (const auto& v : j.at("variables")) {
      m.names.push_back(v.at("name").get<std::string>());
      m.roles.push_back(read_role(v.at("role").get<std::string>()));
    }
    const auto s = static_cast<Eigen::Index>(m.names.size());
    if (!j.contains("anchors")) bad("missing 'anchors'");
    for (const auto& a : j.at("anchors")) m.anchor_names.push_back(a.get<std::string>());
    const auto q = static_cast<Eigen::Index>(m.anchor_names.size());

    m.b = j.contains("B") ? read_matrix(j.at("B"), "B") : Matrix::Zero(s, s);
    m.m = j.contains("M") ? read_matrix(j.at("M"), "M") : Matrix::Zero(q, s);
    if (j.contains("noise_cov") && j.contains("noise_var")) bad("give either 'noise_cov' or 'noise_var'");
    if (j.contains("noise_cov")) {
      m.noise_cov = read_matrix(j.at("noise_cov"), "noise_cov");
    } else if (j.contains("noise_var")) {
      m.noise_cov = read_vector(j.at("noise_var"), "noise_var").asDiagonal();
    } else {
      m.noise_cov = Matrix::Identity(s, s);
    }
    m.anchor_cov = j.contains("anchor_cov") ? read_matrix(j.at("anchor_cov"), "anchor_cov") : Matrix::Identity(q, q);
    if (embedded) {
      *embedded = j.contains("intervention") ? read_intervention(j.at("intervention")) : InterventionSpec::none();
    }
  } catch (const nlohmann::json::exception& e) {
    bad(e.what());
  }
  m.validate();
  return m;
}

SemModel load_sem_config(const std::filesystem::path& path, InterventionSpec* embedded) {
  return parse_sem_json(slurp(path), embedded);
}

InterventionSpec parse_intervention_json(const std::string& text) {
  const json j = parse(text);
  try {
    if (j.is_object() && j.contains("intervention")) return read_intervention(j.at("intervention"));
    return read_intervention(j);
  } catch (const nlohmann::json::exception& e) {
    bad(e.what());
  }
}

InterventionSpec load_intervention(const std::filesystem::path& path) {
  return parse_intervention_json(slurp(path));
}

}  // namespace pulse
