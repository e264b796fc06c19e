#include "uplift/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "uplift/contextual.hpp"

namespace uplift {

using nlohmann::json;

namespace {

std::string join(const std::string& a, const std::string& b) { return a + "/" + b; }

std::vector<double> number_list(const json& j, const std::string& where) {
  std::vector<double> out;
  if (j.is_number()) {
    out.push_back(j.get<double>());
  } else if (j.is_array() && !j.empty()) {
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (!j[i].is_number()) throw ConfigError(join(where, std::to_string(i)), "expected a number");
      out.push_back(j[i].get<double>());
    }
  } else {
    throw ConfigError(where, "expected a number or a nonempty array of numbers");
  }
  return out;
}

std::vector<std::size_t> count_list(const json& j, const std::string& where) {
  std::vector<std::size_t> out;
  auto one = [&](const json& x, const std::string& w) {
    if (!x.is_number_integer() || x.get<long long>() < 0) throw ConfigError(w, "expected a nonnegative integer");
    out.push_back(x.get<std::size_t>());
  };
  if (j.is_array()) {
    if (j.empty()) throw ConfigError(where, "expected a nonempty array");
    for (std::size_t i = 0; i < j.size(); ++i) one(j[i], join(where, std::to_string(i)));
  } else {
    one(j, where);
  }
  return out;
}

std::uint64_t positive_u64(const json& j, const std::string& where) {
  if (!j.is_number_integer() || j.get<long long>() <= 0) throw ConfigError(where, "expected a positive integer");
  return j.get<std::uint64_t>();
}

// Ids stay short; the exact values go to config.resolved.json.
std::string short_number(double x) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general, 6);
  return std::string(buf, r.ptr);
}

std::string params_id_of(const ParamPoint& q, PolicyTag tag, Mode mode) {
  std::string id;
  auto add = [&](const std::string& part) { id += (id.empty() ? "" : ";") + part; };
  if (tag == PolicyTag::kThompsonGaussian) {
    add("sigma2=" + short_number(q.sigma2));
  } else if (mode == Mode::kTheory) {
    add("theory");
  } else {
    add("lambda=" + short_number(q.lambda));
  }
  const auto req = requirements(tag);
  if (req.L_bound) add("L=" + std::to_string(q.L));
  if (req.epsilon) add("eps=" + short_number(q.epsilon));
  return id;
}

}  // namespace

// -- Configuration ------------------------------------------------------------

ExperimentConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("", "config must be an object");
  static const std::set<std::string> known = {"instance", "noise_scale", "horizon", "seeds", "mode",
                                              "delta", "policies", "output_dir", "threads", "log_grid",
                                              "write_traces", "contextual", "description"};
  for (const auto& [key, _] : doc.items()) {
    if (!known.count(key)) throw ConfigError("/" + key, "unknown field");
  }
  ExperimentConfig cfg;

  if (!doc.contains("instance")) throw ConfigError("/instance", "missing field");
  const json& inst = doc["instance"];
  std::string type;
  if (inst.is_string()) {
    type = inst.get<std::string>();
  } else if (inst.is_object() && inst.contains("type") && inst["type"].is_string()) {
    type = inst["type"].get<std::string>();
  } else {
    throw ConfigError("/instance", "expected a recipe name or an object with a type");
  }
  if (type == "gaussian_preset") {
    cfg.instance.kind = InstanceKind::kGaussianPreset;
  } else if (type == "bernoulli_cluster") {
    cfg.instance.kind = InstanceKind::kBernoulliCluster;
  } else if (type == "contextual") {
    cfg.instance.kind = InstanceKind::kContextual;
  } else if (type == "spec_file") {
    cfg.instance.kind = InstanceKind::kSpecFile;
    if (!inst.is_object() || !inst.contains("path") || !inst["path"].is_string()) {
      throw ConfigError("/instance/path", "missing field");
    }
    std::filesystem::path p = inst["path"].get<std::string>();
    cfg.instance.path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  } else if (type == "lower_bound") {
    cfg.instance.kind = InstanceKind::kLowerBound;
    auto get = [&](const char* key) -> const json& {
      if (!inst.is_object() || !inst.contains(key)) throw ConfigError(std::string("/instance/") + key, "missing field");
      return inst[key];
    };
    cfg.instance.K = positive_u64(get("K"), "/instance/K");
    cfg.instance.m = positive_u64(get("m"), "/instance/m");
    cfg.instance.gaps = number_list(get("gaps"), "/instance/gaps");
    cfg.instance.affected_counts = count_list(get("affected_counts"), "/instance/affected_counts");
    const std::string variant = inst.value("variant", std::string("block_shared"));
    if (variant == "block_shared") {
      cfg.instance.variant = LowerBoundVariant::kBlockShared;
    } else if (variant == "fully_shared") {
      cfg.instance.variant = LowerBoundVariant::kFullyShared;
    } else {
      throw ConfigError("/instance/variant", "expected block_shared or fully_shared");
    }
  } else {
    throw ConfigError("/instance/type", "unknown instance recipe '" + type + "'");
  }

  if (doc.contains("noise_scale")) {
    if (!doc["noise_scale"].is_number() || doc["noise_scale"].get<double>() < 0.0) {
      throw ConfigError("/noise_scale", "expected a nonnegative number");
    }
    cfg.noise_scale = doc["noise_scale"].get<double>();
  }
  if (!doc.contains("horizon")) throw ConfigError("/horizon", "missing field");
  cfg.horizon = positive_u64(doc["horizon"], "/horizon");

  if (!doc.contains("seeds")) throw ConfigError("/seeds", "missing field");
  const json& seeds = doc["seeds"];
  if (seeds.is_array()) {
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      if (!seeds[i].is_number_integer() || seeds[i].get<long long>() < 0) throw ConfigError("/seeds/" + std::to_string(i), "expected an unsigned integer");
      cfg.seeds.push_back(seeds[i].get<std::uint64_t>());
    }
  } else if (seeds.is_object()) {
    if (!seeds.contains("count")) throw ConfigError("/seeds/count", "missing field");
    if (seeds.contains("base") && (!seeds["base"].is_number_integer() || seeds["base"].get<long long>() < 0)) {
      throw ConfigError("/seeds/base", "expected a nonnegative integer");
    }
    const std::uint64_t base = seeds.contains("base") ? seeds["base"].get<std::uint64_t>() : 1;
    const std::uint64_t count = positive_u64(seeds["count"], "/seeds/count");
    for (std::uint64_t i = 0; i < count; ++i) cfg.seeds.push_back(base + i);
  } else {
    throw ConfigError("/seeds", "expected a list or {base, count}");
  }
  if (cfg.seeds.empty()) throw ConfigError("/seeds", "must not be empty");

  if (doc.contains("mode")) {
    const std::string mode = doc["mode"].is_string() ? doc["mode"].get<std::string>() : "";
    if (mode == "tuned") {
      cfg.mode = Mode::kTuned;
    } else if (mode == "theory") {
      cfg.mode = Mode::kTheory;
    } else {
      throw ConfigError("/mode", "expected tuned or theory");
    }
  }
  if (doc.contains("delta")) {
    if (!doc["delta"].is_number()) throw ConfigError("/delta", "expected a number");
    cfg.delta = doc["delta"].get<double>();
    if (!(cfg.delta > 0.0 && cfg.delta < 1.0)) throw ConfigError("/delta", "must lie in (0,1)");
  }

  if (cfg.instance.kind != InstanceKind::kContextual) {
    if (!doc.contains("policies") || !doc["policies"].is_array() || doc["policies"].empty()) {
      throw ConfigError("/policies", "expected a nonempty array");
    }
    std::set<std::string> labels;
    for (std::size_t i = 0; i < doc["policies"].size(); ++i) {
      const json& pj = doc["policies"][i];
      const std::string where = "/policies/" + std::to_string(i);
      static const std::set<std::string> pknown = {"kind", "label", "lambda", "sigma2", "L", "epsilon",
                                                   "baseline_bound"};
      if (!pj.is_object()) throw ConfigError(where, "expected an object");
      for (const auto& [key, _] : pj.items()) {
        if (!pknown.count(key)) throw ConfigError(join(where, key), "unknown field");
      }
      if (!pj.contains("kind") || !pj["kind"].is_string()) throw ConfigError(where + "/kind", "missing field");
      PolicyDescriptor p;
      const auto tag = parse_tag(pj["kind"].get<std::string>());
      if (!tag) throw ConfigError(where + "/kind", "unknown policy kind '" + pj["kind"].get<std::string>() + "'");
      p.tag = *tag;
      if (pj.contains("baseline_bound")) {
        const std::string b = pj["baseline_bound"].is_string() ? pj["baseline_bound"].get<std::string>() : "";
        if (b == "ucb") {
          p.bound = BaselineBound::kUcb;
        } else if (b == "lcb") {
          p.bound = BaselineBound::kLcb;
        } else {
          throw ConfigError(where + "/baseline_bound", "expected ucb or lcb");
        }
        if (b == "lcb" && p.tag != PolicyTag::kUpUcbWb) {
          throw ConfigError(where + "/baseline_bound", "only UPUCB_WB has a baseline bound choice");
        }
      }
      p.label = pj.value("label", std::string(tag_name(p.tag)) + (p.bound == BaselineBound::kLcb ? "_BLCB" : ""));
      if (p.label.empty() || p.label.find_first_of(",\"\n") != std::string::npos) {
        throw ConfigError(where + "/label", "labels must be nonempty and free of commas and quotes");
      }
      if (!labels.insert(p.label).second) throw ConfigError(where + "/label", "duplicate label '" + p.label + "'");
      const bool is_ts = p.tag == PolicyTag::kThompsonGaussian;
      if (is_ts) {
        if (!pj.contains("sigma2")) throw ConfigError(where + "/sigma2", "missing field");
        p.sigma2s = number_list(pj["sigma2"], where + "/sigma2");
        for (double s : p.sigma2s) {
          if (!(s > 0.0)) throw ConfigError(where + "/sigma2", "values must be positive");
        }
      } else if (cfg.mode == Mode::kTuned) {
        if (!pj.contains("lambda")) throw ConfigError(where + "/lambda", "missing field");
        p.lambdas = number_list(pj["lambda"], where + "/lambda");
        for (double l : p.lambdas) {
          if (!(l > 0.0)) throw ConfigError(where + "/lambda", "values must be positive");
        }
      }
      if (pj.contains("L")) p.L_values = count_list(pj["L"], where + "/L");
      if (pj.contains("epsilon")) {
        const json& e = pj["epsilon"];
        if (e.is_string() && e.get<std::string>() == "auto") {
          p.epsilon.reset();
        } else if (e.is_number() && e.get<double>() > 0.0) {
          p.epsilon = e.get<double>();
        } else {
          throw ConfigError(where + "/epsilon", "expected a positive number or \"auto\"");
        }
      }
      cfg.policies.push_back(std::move(p));
    }
  }

  cfg.output_dir = doc.contains("output_dir") ? std::filesystem::path(doc["output_dir"].get<std::string>())
                                              : default_output_dir();
  if (doc.contains("threads")) cfg.threads = positive_u64(doc["threads"], "/threads");
  if (doc.contains("log_grid")) {
    if (!doc["log_grid"].is_number_integer() || doc["log_grid"].get<long long>() < 0) throw ConfigError("/log_grid", "expected a nonnegative integer");
    cfg.log_points = doc["log_grid"].get<std::size_t>();
  }
  if (doc.contains("write_traces")) cfg.write_traces = doc["write_traces"].get<bool>();

  if (doc.contains("contextual")) {
    const json& c = doc["contextual"];
    if (!c.is_object()) throw ConfigError("/contextual", "expected an object");
    auto& s = cfg.contextual;
    if (c.contains("m")) s.m = positive_u64(c["m"], "/contextual/m");
    if (c.contains("d")) s.d = positive_u64(c["d"], "/contextual/d");
    if (c.contains("Z")) s.Z = positive_u64(c["Z"], "/contextual/Z");
    if (c.contains("L")) s.L = count_list(c["L"], "/contextual/L").front();
    if (c.contains("lambda_reg")) s.lambda_reg = number_list(c["lambda_reg"], "/contextual/lambda_reg").front();
    if (c.contains("S")) s.S = number_list(c["S"], "/contextual/S").front();
    if (c.contains("baseline_known")) s.baseline_known = c["baseline_known"].get<bool>();
    if (!(s.lambda_reg >= static_cast<double>(s.L))) throw ConfigError("/contextual/lambda_reg", "must be at least L");
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_json_file(path), path.parent_path());
}

std::filesystem::path default_output_dir() {
  if (const char* env = std::getenv("UPLIFT_OUT_DIR"); env && *env) return env;
  return "uplift_out";
}

Instance build_instance(const ExperimentConfig& cfg) {
  Instance inst;
  switch (cfg.instance.kind) {
    case InstanceKind::kGaussianPreset:
      inst.spec = std::make_shared<const BanditSpec>(make_gaussian_preset());
      break;
    case InstanceKind::kBernoulliCluster:
      inst.spec = std::make_shared<const BanditSpec>(make_bernoulli_cluster_preset());
      break;
    case InstanceKind::kSpecFile:
      inst.spec = std::make_shared<const BanditSpec>(load_spec(cfg.instance.path));
      break;
    case InstanceKind::kLowerBound: {
      try {
        auto lb = make_lower_bound_instance(cfg.instance.K, cfg.instance.m, cfg.instance.gaps,
                                            cfg.instance.affected_counts, cfg.instance.variant);
        inst.env_options = lb.options();
        inst.spec = std::make_shared<const BanditSpec>(std::move(lb.spec));
      } catch (const std::invalid_argument& e) {
        throw ConfigError("/instance", e.what());
      }
      break;
    }
    case InstanceKind::kContextual:
      return inst;
  }
  inst.env_options.noise_scale = cfg.noise_scale;
  const auto violations = validate_spec(*inst.spec);
  if (!violations.empty()) throw ConfigError("/instance", "invalid instance: " + describe(violations.front()));
  return inst;
}

double min_individual_uplift(const BanditSpec& spec) {
  double best = kInf;
  for (std::size_t a = 0; a < spec.num_actions; ++a) {
    for (std::size_t v : spec.affected_sets[a]) {
      const double u = std::abs(spec.action_means[a][v] - spec.baseline_means[v]);
      if (u > 0.0) best = std::min(best, u);
    }
  }
  return best;
}

double min_effect_gap(const BanditSpec& spec) {
  double best = kInf;
  for (std::size_t a = 0; a < spec.num_actions; ++a) {
    for (std::size_t v : spec.affected_sets[a]) {
      for (std::size_t b = 0; b < spec.num_actions; ++b) {
        if (b == a) continue;
        const double u = std::abs(spec.action_means[a][v] - spec.action_means[b][v]);
        if (u > 0.0) best = std::min(best, u);
      }
    }
  }
  return best;
}

std::vector<ParamPoint> resolve_params(const PolicyDescriptor& p, const ExperimentConfig& cfg, const BanditSpec& spec) {
  const auto req = requirements(p.tag);
  std::vector<std::size_t> Ls = p.L_values;
  if (Ls.empty()) Ls.push_back(spec.max_affected_count());
  double eps = 0.0;
  if (req.epsilon) {
    eps = p.epsilon ? *p.epsilon
                    : (p.tag == PolicyTag::kUpUcbILiftWb ? min_effect_gap(spec) : min_individual_uplift(spec));
    if (!std::isfinite(eps)) throw ConfigError("/policies", "cannot derive epsilon: the instance has no nonzero uplift");
  }
  std::vector<ParamPoint> out;
  const bool is_ts = p.tag == PolicyTag::kThompsonGaussian;
  const std::vector<double> scales =
      is_ts ? p.sigma2s : (cfg.mode == Mode::kTheory ? std::vector<double>{0.0} : p.lambdas);
  for (std::size_t L : (req.L_bound ? Ls : std::vector<std::size_t>{spec.max_affected_count()})) {
    for (double s : scales) {
      ParamPoint q;
      q.L = L;
      q.epsilon = eps;
      if (is_ts) {
        q.sigma2 = s;
      } else if (cfg.mode == Mode::kTheory) {
        q.delta_tilde = delta_tilde(p.tag, spec.num_actions, spec.num_variables, cfg.horizon, L, cfg.delta);
        q.lambda = -std::log(q.delta_tilde);
      } else {
        q.lambda = s;
      }
      q.id = params_id_of(q, p.tag, cfg.mode);
      for (const auto& prev : out) {
        if (prev.id == q.id) throw ConfigError("/policies", p.label + ": grid points collide as '" + q.id + "'");
      }
      out.push_back(q);
    }
  }
  return out;
}

void validate_config(const ExperimentConfig& cfg, const BanditSpec& spec) {
  if (cfg.seeds.empty()) throw ConfigError("/seeds", "must not be empty");
  if (cfg.horizon < spec.num_actions) throw ConfigError("/horizon", "must be at least the number of actions");
  for (std::size_t i = 0; i < cfg.policies.size(); ++i) {
    const auto& p = cfg.policies[i];
    const std::string where = "/policies/" + std::to_string(i);
    const auto req = requirements(p.tag);
    // Every built-in instance exposes means and affected sets; what can fail is
    // a bound that the instance violates or an epsilon it does not admit.
    if (req.L_bound) {
      for (std::size_t L : p.L_values) {
        if (L == 0) throw ConfigError(where + "/L", "must be positive");
      }
    }
    if (req.epsilon && !p.epsilon) {
      const double eps = p.tag == PolicyTag::kUpUcbILiftWb ? min_effect_gap(spec) : min_individual_uplift(spec);
      if (!std::isfinite(eps)) throw ConfigError(where + "/epsilon", "instance has no nonzero individual uplift");
    }
    if (p.tag == PolicyTag::kThompsonGaussian && p.sigma2s.empty()) throw ConfigError(where + "/sigma2", "missing");
    if (p.tag != PolicyTag::kThompsonGaussian && cfg.mode == Mode::kTuned && p.lambdas.empty()) {
      throw ConfigError(where + "/lambda", "missing");
    }
  }
}

std::unique_ptr<Policy> make_policy(const PolicyDescriptor& p, const ParamPoint& q, const BanditSpec& spec,
                                    std::uint64_t horizon, std::uint64_t seed) {
  const std::size_t K = spec.num_actions;
  const std::size_t m = spec.num_variables;
  switch (p.tag) {
    case PolicyTag::kUcbBaseline:
      return std::make_unique<UcbBaselinePolicy>(K, m, q.lambda);
    case PolicyTag::kThompsonGaussian: {
      // Prior matches the spread of the true expected rewards.
      double mean = 0.0;
      std::vector<double> r(K);
      for (std::size_t a = 0; a < K; ++a) {
        r[a] = expected_reward(spec, Arm::action(a));
        mean += r[a];
      }
      mean /= static_cast<double>(K);
      double var = 0.0;
      for (double x : r) var += (x - mean) * (x - mean);
      var /= static_cast<double>(K);
      return std::make_unique<ThompsonPolicy>(K, m, mean, var, q.sigma2, seed);
    }
    case PolicyTag::kUpUcbBl:
      return std::make_unique<UpUcbBlPolicy>(spec.baseline_means, std::make_shared<const AffectedSets>(spec), q.lambda);
    case PolicyTag::kUpUcbWb:
      return std::make_unique<UpUcbWbPolicy>(std::make_shared<const AffectedSets>(spec), q.lambda, p.bound);
    case PolicyTag::kUpUcbLBl:
      return std::make_unique<UpUcbLBlPolicy>(K, spec.baseline_means, q.L, q.lambda);
    case PolicyTag::kUpUcbLWb:
      return std::make_unique<UpUcbLWbPolicy>(K, m, q.L, q.lambda);
    case PolicyTag::kUpUcbILiftBl:
      return std::make_unique<UpUcbILiftBlPolicy>(K, spec.baseline_means, q.epsilon, q.lambda);
    case PolicyTag::kUpUcbILiftWb:
      return std::make_unique<UpUcbILiftWbPolicy>(K, m, q.epsilon, q.lambda, horizon);
  }
  throw std::logic_error("unknown policy tag");
}

// -- Runs ------------------------------------------------------------------------

std::vector<std::uint64_t> log_grid(std::uint64_t T, std::size_t points) {
  std::vector<std::uint64_t> g;
  if (T == 0) return g;
  if (points == 0) {
    g.resize(T);
    for (std::uint64_t t = 0; t < T; ++t) g[t] = t + 1;
    return g;
  }
  std::set<std::uint64_t> s = {T};
  for (std::uint64_t q : {T / 4, T / 2, 3 * T / 4}) {
    if (q > 0) s.insert(q);
  }
  const double top = std::log(static_cast<double>(T));
  for (std::size_t i = 0; i < points; ++i) {
    const double f = points == 1 ? 1.0 : static_cast<double>(i) / static_cast<double>(points - 1);
    const auto t = static_cast<std::uint64_t>(std::llround(std::exp(f * top)));
    s.insert(std::clamp<std::uint64_t>(t, 1, T));
  }
  return {s.begin(), s.end()};
}

RunRecord simulate(const Instance& inst, const PolicyDescriptor& p, const ParamPoint& q, std::uint64_t horizon,
                   std::uint64_t seed, const std::vector<std::uint64_t>& grid) {
  const BanditSpec& spec = *inst.spec;
  Environment env(inst.spec, seed, inst.env_options);
  auto policy = make_policy(p, q, spec, horizon, seed);
  const Gaps gaps = suboptimality_gaps(spec);
  RunRecord rec;
  rec.policy = p.label;
  rec.params_id = q.id;
  rec.seed = seed;
  rec.actions.reserve(grid.size());
  rec.cum_regret.reserve(grid.size());
  std::vector<double> x(spec.num_variables);
  double cum = 0.0;
  std::size_t gi = 0;
  for (std::uint64_t t = 1; t <= horizon; ++t) {
    const std::size_t a = policy->select(t);
    env.sample_payoffs(a, x);
    policy->observe(a, x);
    cum += gaps.gaps[a];
    if (gi < grid.size() && grid[gi] == t) {
      rec.actions.push_back(a);
      rec.cum_regret.push_back(cum);
      ++gi;
    }
  }
  rec.final_regret = cum;
  for (std::size_t a = 0; a < spec.num_actions; ++a) rec.pull_counts.push_back(policy->estimator().pull_count(a));
  return rec;
}

Stats compute_stats(std::vector<double> values) {
  Stats s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / n;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / n);
  s.stderr_ = s.std / std::sqrt(n);
  std::sort(values.begin(), values.end());
  const std::size_t rank = (95 * values.size() + 99) / 100;  // ceil(0.95 n)
  s.p95 = values[std::max<std::size_t>(rank, 1) - 1];
  return s;
}

std::vector<SummaryRow> summarize(const std::vector<RunRecord>& runs, const std::vector<std::uint64_t>& grid) {
  std::vector<SummaryRow> out;
  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::vector<const RunRecord*>> groups;
  for (const auto& r : runs) {
    auto key = std::make_pair(r.policy, r.params_id);
    if (!groups.count(key)) keys.push_back(key);
    groups[key].push_back(&r);
  }
  for (const auto& key : keys) {
    const auto& members = groups[key];
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
      std::vector<double> vals;
      vals.reserve(members.size());
      for (const auto* r : members) vals.push_back(r->cum_regret.at(gi));
      const Stats s = compute_stats(std::move(vals));
      out.push_back({key.first, key.second, grid[gi], s.mean, s.stderr_, s.std, s.p95});
    }
  }
  return out;
}

namespace {

template <typename Job>
void run_parallel(std::size_t n, std::size_t threads, Job job) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

json rng_description() {
  return {{"generator", "philox4x32-10"},
          {"key", "splitmix64(seed)"},
          {"counter", "low 64 bits block index, high 64 bits stream id"},
          {"streams",
           {{"payoffs", static_cast<std::uint64_t>(Stream::kPayoffs)},
            {"policy", static_cast<std::uint64_t>(Stream::kPolicy)},
            {"context_params", static_cast<std::uint64_t>(Stream::kContextParams)},
            {"context_features", static_cast<std::uint64_t>(Stream::kContextFeatures)},
            {"context_noise", static_cast<std::uint64_t>(Stream::kContextNoise)}}}};
}

const char* instance_name(InstanceKind k) {
  switch (k) {
    case InstanceKind::kGaussianPreset: return "gaussian_preset";
    case InstanceKind::kBernoulliCluster: return "bernoulli_cluster";
    case InstanceKind::kLowerBound: return "lower_bound";
    case InstanceKind::kSpecFile: return "spec_file";
    case InstanceKind::kContextual: return "contextual";
  }
  return "unknown";
}

ExperimentResult run_contextual(const ExperimentConfig& cfg) {
  ExperimentResult res;
  res.grid = log_grid(cfg.horizon, cfg.log_points);
  const auto& c = cfg.contextual;
  const std::string label = c.baseline_known ? "C2UPUCB_BL" : "C2UPUCB";
  const std::string id = "lambda_reg=" + format_double(c.lambda_reg) + ";L=" + std::to_string(c.L);
  res.runs.resize(cfg.seeds.size());
  std::vector<double> bounds(cfg.seeds.size());
  run_parallel(cfg.seeds.size(), cfg.threads, [&](std::size_t i) {
    auto env = make_linear_contextual_env(c.m, c.d, c.Z, cfg.seeds[i], cfg.noise_scale);
    ContextualRunOptions opt;
    opt.L = c.L;
    opt.horizon = cfg.horizon;
    opt.baseline_known = c.baseline_known;
    opt.lambda_reg = c.lambda_reg;
    opt.delta = cfg.delta;
    opt.S = c.S;
    const auto out = run_c2upucb(env, opt);
    RunRecord rec;
    rec.policy = label;
    rec.params_id = id;
    rec.seed = cfg.seeds[i];
    for (std::uint64_t t : res.grid) {
      rec.actions.push_back(out.trace.actions[t - 1]);
      rec.cum_regret.push_back(out.trace.cumulative_regret[t - 1]);
    }
    rec.final_regret = out.trace.final_regret();
    bounds[i] = out.regret_bound;
    res.runs[i] = std::move(rec);
  });
  res.summary = summarize(res.runs, res.grid);
  res.resolved = {{"instance", {{"type", "contextual"}, {"m", c.m}, {"d", c.d}, {"Z", c.Z}, {"S", c.S}}},
                  {"policy", {{"label", label}, {"params_id", id}, {"L", c.L}, {"lambda_reg", c.lambda_reg},
                              {"baseline_known", c.baseline_known}, {"regret_bound", bounds.front()},
                              {"noise_truncation", ContextualEnvironment::kNoiseTruncation}}},
                  {"horizon", cfg.horizon},
                  {"seeds", cfg.seeds},
                  {"delta", cfg.delta},
                  {"noise_scale", cfg.noise_scale},
                  {"log_grid", cfg.log_points},
                  {"rng", rng_description()}};
  return res;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  if (cfg.instance.kind == InstanceKind::kContextual) return run_contextual(cfg);
  const Instance inst = build_instance(cfg);
  const BanditSpec& spec = *inst.spec;
  validate_config(cfg, spec);

  struct Job {
    std::size_t policy;
    ParamPoint params;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  json policies = json::array();
  for (std::size_t i = 0; i < cfg.policies.size(); ++i) {
    const auto& p = cfg.policies[i];
    json pj = {{"label", p.label},
               {"kind", tag_name(p.tag)},
               {"baseline_bound", p.bound == BaselineBound::kUcb ? "ucb" : "lcb"},
               {"params", json::array()}};
    for (const auto& q : resolve_params(p, cfg, spec)) {
      json qj = {{"id", q.id}};
      if (p.tag == PolicyTag::kThompsonGaussian) {
        qj["sigma2"] = q.sigma2;
        qj["noise_var"] = static_cast<double>(spec.num_variables * spec.num_variables) * q.sigma2;
      } else {
        qj["lambda"] = q.lambda;
        if (cfg.mode == Mode::kTheory) qj["delta_tilde"] = q.delta_tilde;
      }
      const auto req = requirements(p.tag);
      if (req.L_bound) qj["L"] = q.L;
      if (req.epsilon) qj["epsilon"] = q.epsilon;
      pj["params"].push_back(std::move(qj));
      for (std::uint64_t s : cfg.seeds) jobs.push_back({i, q, s});
    }
    policies.push_back(std::move(pj));
  }

  ExperimentResult res;
  res.grid = log_grid(cfg.horizon, cfg.log_points);
  res.runs.resize(jobs.size());
  run_parallel(jobs.size(), cfg.threads, [&](std::size_t j) {
    res.runs[j] = simulate(inst, cfg.policies[jobs[j].policy], jobs[j].params, cfg.horizon, jobs[j].seed, res.grid);
  });
  res.summary = summarize(res.runs, res.grid);

  const Gaps gaps = suboptimality_gaps(spec);
  json instance = {{"type", instance_name(cfg.instance.kind)},
                   {"num_actions", spec.num_actions},
                   {"num_variables", spec.num_variables},
                   {"max_affected", spec.max_affected_count()},
                   {"gaps", gaps.gaps}};
  if (gaps.min_nonzero) instance["min_nonzero_gap"] = *gaps.min_nonzero;
  if (cfg.instance.kind == InstanceKind::kSpecFile) instance["path"] = cfg.instance.path.string();
  if (cfg.instance.kind == InstanceKind::kLowerBound) {
    instance["gaps_requested"] = cfg.instance.gaps;
    instance["affected_counts"] = cfg.instance.affected_counts;
    instance["variant"] = cfg.instance.variant == LowerBoundVariant::kBlockShared ? "block_shared" : "fully_shared";
  }
  res.resolved = {{"instance", instance},
                  {"horizon", cfg.horizon},
                  {"seeds", cfg.seeds},
                  {"mode", cfg.mode == Mode::kTuned ? "tuned" : "theory"},
                  {"delta", cfg.delta},
                  {"noise_scale", cfg.noise_scale},
                  {"log_grid", cfg.log_points},
                  {"policies", policies},
                  {"rng", rng_description()}};
  return res;
}

// -- CSV ------------------------------------------------------------------------

std::string format_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, r.ptr);
}

void export_csv(const ExperimentResult& result, const std::filesystem::path& dir, bool write_traces) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    return out;
  };
  if (write_traces) {
    auto out = open("traces.csv");
    out << "policy,params_id,seed,t,action,cum_regret\n";
    for (const auto& r : result.runs) {
      for (std::size_t gi = 0; gi < result.grid.size(); ++gi) {
        out << r.policy << ',' << r.params_id << ',' << r.seed << ',' << result.grid[gi] << ','
            << r.actions[gi] + 1 << ',' << format_double(r.cum_regret[gi]) << '\n';
      }
    }
    if (!out) throw std::runtime_error("write failed for traces.csv");
  }
  {
    auto out = open("summary.csv");
    out << "policy,params_id,t,mean,stderr,std,p95\n";
    for (const auto& s : result.summary) {
      out << s.policy << ',' << s.params_id << ',' << s.t << ',' << format_double(s.mean) << ','
          << format_double(s.stderr_) << ',' << format_double(s.std) << ',' << format_double(s.p95) << '\n';
    }
    if (!out) throw std::runtime_error("write failed for summary.csv");
  }
  {
    auto out = open("config.resolved.json");
    out << result.resolved.dump(2) << '\n';
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  double x = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw std::runtime_error("bad number '" + s + "'");
  return x;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t x = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw std::runtime_error("bad integer '" + s + "'");
  return x;
}

}  // namespace

std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "policy,params_id,t,mean,stderr,std,p95") throw std::runtime_error("unexpected summary header");
  std::vector<SummaryRow> out;
  while (std::getline(in, line)) {
    const auto f = split_csv_line(line);
    if (f.size() != 7) throw std::runtime_error("bad summary row: " + line);
    out.push_back({f[0], f[1], parse_u64(f[2]), parse_double(f[3]), parse_double(f[4]), parse_double(f[5]),
                   parse_double(f[6])});
  }
  return out;
}

std::vector<RunRecord> read_traces_csv(const std::filesystem::path& path, std::vector<std::uint64_t>* grid) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "policy,params_id,seed,t,action,cum_regret") throw std::runtime_error("unexpected traces header");
  std::vector<RunRecord> out;
  std::vector<std::uint64_t> g;
  bool first_done = false;
  while (std::getline(in, line)) {
    const auto f = split_csv_line(line);
    if (f.size() != 6) throw std::runtime_error("bad trace row: " + line);
    const std::uint64_t seed = parse_u64(f[2]);
    if (out.empty() || out.back().policy != f[0] || out.back().params_id != f[1] || out.back().seed != seed) {
      if (!out.empty()) first_done = true;
      RunRecord r;
      r.policy = f[0];
      r.params_id = f[1];
      r.seed = seed;
      out.push_back(std::move(r));
    }
    const std::uint64_t t = parse_u64(f[3]);
    if (!first_done) g.push_back(t);
    out.back().actions.push_back(parse_u64(f[4]) - 1);
    out.back().cum_regret.push_back(parse_double(f[5]));
  }
  for (auto& r : out) r.final_regret = r.cum_regret.empty() ? 0.0 : r.cum_regret.back();
  if (grid) *grid = g;
  return out;
}

// -- Sweep and ablation ------------------------------------------------------------

std::size_t select_by_score(const std::vector<std::pair<double, double>>& mean_std) {
  if (mean_std.empty()) throw std::invalid_argument("empty parameter grid");
  std::size_t best = 0;
  for (std::size_t i = 1; i < mean_std.size(); ++i) {
    if (mean_std[i].first + mean_std[i].second < mean_std[best].first + mean_std[best].second) best = i;
  }
  return best;
}

std::vector<Selected> sweep_and_select(const ExperimentConfig& cfg, const ExperimentResult& result) {
  std::vector<Selected> out;
  if (cfg.instance.kind == InstanceKind::kContextual) return out;
  const Instance inst = build_instance(cfg);
  for (const auto& p : cfg.policies) {
    const auto params = resolve_params(p, cfg, *inst.spec);
    if (params.empty()) throw std::invalid_argument("empty grid for " + p.label);
    std::vector<std::pair<double, double>> ms;
    std::vector<Stats> stats;
    for (const auto& q : params) {
      std::vector<double> finals;
      for (const auto& r : result.runs) {
        if (r.policy == p.label && r.params_id == q.id) finals.push_back(r.final_regret);
      }
      stats.push_back(compute_stats(finals));
      ms.emplace_back(stats.back().mean, stats.back().std);
    }
    const std::size_t b = select_by_score(ms);
    out.push_back({p.label, params[b].id, params[b], stats[b].mean, stats[b].std, stats[b].p95,
                   stats[b].mean + stats[b].std});
  }
  return out;
}

ExperimentConfig ablation_config(const ExperimentConfig& base, const std::vector<std::size_t>& L_values) {
  ExperimentConfig cfg = base;
  std::vector<double> grid_l;
  std::vector<double> grid_wb;
  for (const auto& p : base.policies) {
    if (p.tag == PolicyTag::kUpUcbLBl && grid_l.empty()) grid_l = p.lambdas;
    if (p.tag == PolicyTag::kUpUcbWb && grid_wb.empty()) grid_wb = p.lambdas;
  }
  const std::vector<double> fallback = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  if (grid_l.empty()) grid_l = fallback;
  if (grid_wb.empty()) grid_wb = fallback;
  cfg.mode = Mode::kTuned;
  cfg.policies.clear();
  for (std::size_t L : L_values) {
    PolicyDescriptor p;
    p.tag = PolicyTag::kUpUcbLBl;
    p.label = "UPUCB_L_BL[L=" + std::to_string(L) + "]";
    p.lambdas = grid_l;
    p.L_values = {L};
    cfg.policies.push_back(p);
  }
  for (BaselineBound b : {BaselineBound::kUcb, BaselineBound::kLcb}) {
    PolicyDescriptor p;
    p.tag = PolicyTag::kUpUcbWb;
    p.bound = b;
    p.label = b == BaselineBound::kUcb ? "UPUCB_WB_BUCB" : "UPUCB_WB_BLCB";
    p.lambdas = grid_wb;
    cfg.policies.push_back(p);
  }
  return cfg;
}

AblationResult ablation_suite(const ExperimentConfig& base) {
  if (base.instance.kind == InstanceKind::kContextual || base.instance.kind == InstanceKind::kBernoulliCluster) {
    throw ConfigError("/instance", "the ablation runs on a Gaussian instance");
  }
  const ExperimentConfig cfg = ablation_config(base);
  AblationResult out;
  out.experiment = run_experiment(cfg);
  out.best = sweep_and_select(cfg, out.experiment);
  return out;
}

}  // namespace uplift
