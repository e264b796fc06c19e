#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "uplift/core.hpp"

namespace uplift {

/// Raised for malformed documents; `path` is a JSON-pointer-like location.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// Instance documents use 1-based variable indices in affected_sets.
//
// {
//   "num_actions": K, "num_variables": m,
//   "baseline_means": [...],
//   "action_means": [[...], ...]            dense K x m, or
//   "individual_uplifts": [[...], ...]      one value per affected variable,
//   "affected_sets": [[1, 2], ...],
//   "noise": {"type": "bernoulli_independent"} |
//            {"type": "gaussian_correlated", "covariance": [[...]]} |
//            {"type": "gaussian_correlated", "equicorrelated": {"variance": 1, "correlation": r}}
// }
nlohmann::json spec_to_json(const BanditSpec& spec);
BanditSpec spec_from_json(const nlohmann::json& doc, const std::string& where = "");
BanditSpec load_spec(const std::filesystem::path& path);

struct ClusterTable {
  std::vector<std::size_t> sizes;
  std::vector<double> treated;
  std::vector<double> untreated;
  std::vector<double> published_uplift;
};
ClusterTable load_cluster_table(const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace uplift
