#include "uplift/spec_io.hpp"

#include <fstream>
#include <sstream>

namespace uplift {

using nlohmann::json;

namespace {

const json& field(const json& doc, const std::string& key, const std::string& where) {
  if (!doc.is_object()) throw ConfigError(where, "expected an object");
  auto it = doc.find(key);
  if (it == doc.end()) throw ConfigError(where + "/" + key, "missing field");
  return *it;
}

std::size_t positive_int(const json& j, const std::string& where) {
  if (!j.is_number_integer() || j.get<long long>() <= 0) throw ConfigError(where, "expected a positive integer");
  return j.get<std::size_t>();
}

std::vector<double> real_vector(const json& j, std::size_t n, const std::string& where) {
  if (!j.is_array() || j.size() != n) throw ConfigError(where, "expected an array of " + std::to_string(n) + " numbers");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!j[i].is_number()) throw ConfigError(where + "/" + std::to_string(i), "expected a number");
    out[i] = j[i].get<double>();
  }
  return out;
}

}  // namespace

json spec_to_json(const BanditSpec& spec) {
  json doc;
  doc["num_actions"] = spec.num_actions;
  doc["num_variables"] = spec.num_variables;
  doc["baseline_means"] = spec.baseline_means;
  doc["action_means"] = spec.action_means;
  json sets = json::array();
  for (const auto& s : spec.affected_sets) {
    json row = json::array();
    for (std::size_t v : s) row.push_back(v + 1);
    sets.push_back(std::move(row));
  }
  doc["affected_sets"] = std::move(sets);
  if (spec.is_gaussian()) {
    const auto& cov = std::get<GaussianCorrelated>(spec.noise).covariance;
    json rows = json::array();
    for (Eigen::Index i = 0; i < cov.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index j = 0; j < cov.cols(); ++j) row.push_back(cov(i, j));
      rows.push_back(std::move(row));
    }
    doc["noise"] = {{"type", "gaussian_correlated"}, {"covariance", std::move(rows)}};
  } else {
    doc["noise"] = {{"type", "bernoulli_independent"}};
  }
  return doc;
}

BanditSpec spec_from_json(const json& doc, const std::string& where) {
  BanditSpec spec;
  spec.num_actions = positive_int(field(doc, "num_actions", where), where + "/num_actions");
  spec.num_variables = positive_int(field(doc, "num_variables", where), where + "/num_variables");
  const std::size_t k = spec.num_actions;
  const std::size_t m = spec.num_variables;
  spec.baseline_means = real_vector(field(doc, "baseline_means", where), m, where + "/baseline_means");

  const json& sets = field(doc, "affected_sets", where);
  if (!sets.is_array() || sets.size() != k) throw ConfigError(where + "/affected_sets", "expected K arrays");
  for (std::size_t a = 0; a < k; ++a) {
    const std::string p = where + "/affected_sets/" + std::to_string(a);
    if (!sets[a].is_array()) throw ConfigError(p, "expected an array");
    std::vector<std::size_t> s;
    for (const auto& v : sets[a]) {
      if (!v.is_number_integer() || v.get<long long>() < 1 || v.get<std::size_t>() > m) {
        throw ConfigError(p, "variable indices must lie in [1, m]");
      }
      s.push_back(v.get<std::size_t>() - 1);
    }
    spec.affected_sets.push_back(std::move(s));
  }

  if (doc.contains("action_means")) {
    const json& rows = doc["action_means"];
    if (!rows.is_array() || rows.size() != k) throw ConfigError(where + "/action_means", "expected K rows");
    for (std::size_t a = 0; a < k; ++a) {
      spec.action_means.push_back(real_vector(rows[a], m, where + "/action_means/" + std::to_string(a)));
    }
  } else if (doc.contains("individual_uplifts")) {
    const json& rows = doc["individual_uplifts"];
    if (!rows.is_array() || rows.size() != k) throw ConfigError(where + "/individual_uplifts", "expected K rows");
    for (std::size_t a = 0; a < k; ++a) {
      const std::string p = where + "/individual_uplifts/" + std::to_string(a);
      auto lifts = real_vector(rows[a], spec.affected_sets[a].size(), p);
      std::vector<double> mu = spec.baseline_means;
      for (std::size_t i = 0; i < lifts.size(); ++i) mu[spec.affected_sets[a][i]] += lifts[i];
      spec.action_means.push_back(std::move(mu));
    }
  } else {
    throw ConfigError(where + "/action_means", "missing field (or individual_uplifts)");
  }

  const json& noise = field(doc, "noise", where);
  const std::string type = field(noise, "type", where + "/noise").get<std::string>();
  if (type == "bernoulli_independent") {
    spec.noise = BernoulliIndependent{};
  } else if (type == "gaussian_correlated") {
    const auto mi = static_cast<Eigen::Index>(m);
    Eigen::MatrixXd cov(mi, mi);
    if (noise.contains("covariance")) {
      const json& rows = noise["covariance"];
      if (!rows.is_array() || rows.size() != m) throw ConfigError(where + "/noise/covariance", "expected m rows");
      for (std::size_t i = 0; i < m; ++i) {
        auto row = real_vector(rows[i], m, where + "/noise/covariance/" + std::to_string(i));
        for (std::size_t j = 0; j < m; ++j) cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
      }
    } else {
      const json& eq = field(noise, "equicorrelated", where + "/noise");
      const double var = field(eq, "variance", where + "/noise/equicorrelated").get<double>();
      const double r = field(eq, "correlation", where + "/noise/equicorrelated").get<double>();
      cov.setConstant(var * r);
      cov.diagonal().setConstant(var);
    }
    spec.noise = GaussianCorrelated{std::move(cov)};
  } else {
    throw ConfigError(where + "/noise/type", "unknown noise type '" + type + "'");
  }
  return spec;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string(), e.what());
  }
}

BanditSpec load_spec(const std::filesystem::path& path) {
  return spec_from_json(read_json_file(path), "");
}

ClusterTable load_cluster_table(const std::filesystem::path& path) {
  const json doc = read_json_file(path);
  ClusterTable t;
  t.sizes = field(doc, "cluster_sizes", "").get<std::vector<std::size_t>>();
  const std::size_t n = t.sizes.size();
  t.treated = real_vector(field(doc, "treated_rate", ""), n, "/treated_rate");
  t.untreated = real_vector(field(doc, "untreated_rate", ""), n, "/untreated_rate");
  if (doc.contains("published_uplift")) t.published_uplift = real_vector(doc["published_uplift"], n, "/published_uplift");
  return t;
}

}  // namespace uplift
