#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pulse/errors.hpp"
#include "pulse/experiments.hpp"

namespace pulse {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& what) {
  throw Error(ErrorCode::InvalidArgument, "experiment config: " + what);
}

const std::set<std::string> kKeys = {"design", "repetitions", "seed", "threads", "estimators", "p_min",
                                     "scaling", "precision", "q", "rho", "r2", "n", "gamma", "x_max",
                                     "x_step", "models", "noise", "e3"};

template <class T>
std::vector<T> list_of(const json& j, const char* key) {
  if (!j.is_array()) bad(std::string(key) + " must be an array");
  std::vector<T> out;
  for (const auto& v : j) {
    if (!v.is_number()) bad(std::string(key) + " must contain numbers");
    if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) bad(std::string(key) + " must contain integers");
    }
    out.push_back(v.get<T>());
  }
  return out;
}

}  // namespace

ExperimentConfig parse_experiment_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    bad(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) bad("top level must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!kKeys.count(key)) bad("unknown key '" + key + "'");
  }
  if (!j.contains("design")) bad("missing 'design'");
  const auto design = parse_design(j.at("design").get<std::string>());
  if (!design) bad("unknown design; valid designs: " + design_names());
  ExperimentConfig c = ExperimentConfig::defaults(*design);
  try {
    if (j.contains("repetitions")) c.repetitions = j.at("repetitions").get<int>();
    if (j.contains("seed")) c.master_seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("threads")) c.threads = j.at("threads").get<int>();
    if (j.contains("estimators")) {
      c.methods.clear();
      for (const auto& e : j.at("estimators")) c.methods.push_back(MethodSpec::parse(e.get<std::string>()));
    }
    if (j.contains("p_min")) c.p_min = j.at("p_min").get<double>();
    if (j.contains("scaling")) {
      const auto s = j.at("scaling").get<std::string>();
      if (s == "ar") c.scaling = Scaling::AndersonRubin;
      else if (s == "plain") c.scaling = Scaling::Plain;
      else bad("scaling must be 'ar' or 'plain'");
    }
    if (j.contains("precision")) c.precision_n = j.at("precision").get<std::uint64_t>();
    if (j.contains("q")) c.q_list = list_of<int>(j.at("q"), "q");
    if (j.contains("rho")) c.rho_list = list_of<double>(j.at("rho"), "rho");
    if (j.contains("r2")) c.r2_list = list_of<double>(j.at("r2"), "r2");
    if (j.contains("n")) c.n_list = list_of<int>(j.at("n"), "n");
    if (j.contains("gamma")) c.gamma = j.at("gamma").get<double>();
    if (j.contains("x_max")) c.x_max = j.at("x_max").get<double>();
    if (j.contains("x_step")) c.x_step = j.at("x_step").get<double>();
    if (j.contains("models")) c.models = j.at("models").get<int>();
    if (j.contains("noise")) {
      c.noise.clear();
      for (const auto& nz : j.at("noise")) {
        FixedNoiseSetting s;
        s.eta = nz.at("eta").get<double>();
        if (nz.contains("rho")) {
          if (nz.contains("phi1") || nz.contains("phi2")) bad("noise entry: give rho or phi1/phi2, not both");
          s.phi1 = s.phi2 = phi_for_rho(nz.at("rho").get<double>(), s.eta);
        } else {
          s.phi1 = nz.at("phi1").get<double>();
          s.phi2 = nz.at("phi2").get<double>();
        }
        c.noise.push_back(s);
      }
    }
    if (j.contains("e3")) {
      const auto& e = j.at("e3");
      for (const auto& [key, _] : e.items()) {
        if (key != "eta" && key != "delta1" && key != "delta2" && key != "beta" && key != "gamma") {
          bad("unknown e3 key '" + key + "'");
        }
      }
      c.e3.eta = e.value("eta", c.e3.eta);
      c.e3.delta1 = e.value("delta1", c.e3.delta1);
      c.e3.delta2 = e.value("delta2", c.e3.delta2);
      c.e3.beta = e.value("beta", c.e3.beta);
      c.e3.gamma = e.value("gamma", c.e3.gamma);
    }
  } catch (const json::exception& e) {
    bad(e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment_json(buf.str());
}

std::string experiment_config_json(const ExperimentConfig& c) {
  json j;
  j["design"] = std::string(to_string(c.design));
  j["repetitions"] = c.repetitions;
  j["seed"] = c.master_seed;
  j["threads"] = c.threads;
  json est = json::array();
  for (const auto& m : c.methods) est.push_back(m.label);
  j["estimators"] = est;
  j["p_min"] = c.p_min;
  j["scaling"] = c.scaling == Scaling::AndersonRubin ? "ar" : "plain";
  j["precision"] = c.precision_n;
  j["n"] = c.n_list;
  switch (c.design) {
    case Design::Univariate:
      j["q"] = c.q_list;
      j["rho"] = c.rho_list;
      j["r2"] = c.r2_list;
      j["gamma"] = c.gamma;
      break;
    case Design::RobustnessE1:
      j["gamma"] = c.gamma;
      j["x_max"] = c.x_max;
      j["x_step"] = c.x_step;
      break;
    case Design::MultivariateRandom:
      j["models"] = c.models;
      break;
    case Design::MultivariateFixedNoise: {
      j["models"] = c.models;
      json nz = json::array();
      for (const auto& s : c.noise) nz.push_back({{"eta", s.eta}, {"phi1", s.phi1}, {"phi2", s.phi2}});
      j["noise"] = nz;
      break;
    }
    case Design::UnderIdE3:
      j["e3"] = {{"eta", c.e3.eta}, {"delta1", c.e3.delta1}, {"delta2", c.e3.delta2},
                 {"beta", c.e3.beta}, {"gamma", c.e3.gamma}};
      break;
  }
  return j.dump(2);
}

}  // namespace pulse
