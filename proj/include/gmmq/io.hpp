#pragma once

// Persistence: model files, experiment configs and the results CSV.
//
// Model files are JSON with explicit shapes and row-major arrays. Doubles are
// written with max_digits10 significant digits, so a save/load round trip is
// exact.

#include "gmmq/envs.hpp"
#include "gmmq/manifold.hpp"
#include "gmmq/model.hpp"
#include "gmmq/policy_iteration.hpp"

#include "json.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

namespace gmmq::io {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------- models

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw std::invalid_argument("matrix: data length does not match rows x cols");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = data.at(static_cast<std::size_t>(r * cols + c)).get<double>();
    }
  }
  return m;
}

inline json model_to_json(const GmmQf& model, std::string_view env_name = {}) {
  json j;
  j["format"] = "gmmq-model";
  j["version"] = 1;
  if (!env_name.empty()) j["env"] = std::string(env_name);
  j["layout"] = std::string(to_string(model.layout()));
  j["k"] = model.k();
  j["dim"] = model.dim();
  j["action_codes"] = model.action_codes();
  j["weights"] = matrix_to_json(model.weights());
  json means = json::array();
  for (const auto& m : model.means()) means.push_back(std::vector<double>(m.data(), m.data() + m.size()));
  j["means"] = std::move(means);
  json covs = json::array();
  for (const auto& c : model.covs()) covs.push_back(matrix_to_json(c.matrix()));
  j["covs"] = std::move(covs);
  return j;
}

inline GmmQf model_from_json(const json& j) {
  if (j.value("format", std::string{}) != "gmmq-model") {
    throw std::invalid_argument("not a gmmq model file (missing \"format\": \"gmmq-model\")");
  }
  const auto layout = layout_from_string(j.at("layout").get<std::string>());
  const auto k = j.at("k").get<std::size_t>();
  const auto dim = j.at("dim").get<Eigen::Index>();
  const auto& jm = j.at("means");
  const auto& jc = j.at("covs");
  if (jm.size() != k || jc.size() != k) {
    throw std::invalid_argument("model: means/covs count does not match k");
  }
  std::vector<Eigen::VectorXd> means;
  std::vector<SpdMatrix> covs;
  for (std::size_t i = 0; i < k; ++i) {
    const auto v = jm[i].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(v.size()) != dim) throw std::invalid_argument("model: mean length != dim");
    means.emplace_back(Eigen::Map<const Eigen::VectorXd>(v.data(), dim));
    covs.emplace_back(matrix_from_json(jc[i]));
  }
  return GmmQf(layout, j.at("action_codes").get<std::vector<double>>(),
               matrix_from_json(j.at("weights")), std::move(means), std::move(covs));
}

inline void save_model(const std::filesystem::path& path, const GmmQf& model,
                       std::string_view env_name = {}) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << model_to_json(model, env_name).dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline json read_json_file(const std::filesystem::path& path);

inline GmmQf load_model(const std::filesystem::path& path) {
  return model_from_json(read_json_file(path));
}

// ---------------------------------------------------------------- configs

/// A config problem with a human-readable location ("file:line:col" or
/// "file:line: key.path").
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

/// 1-based line and column of a byte offset.
inline std::pair<std::size_t, std::size_t> line_col(std::string_view text, std::size_t offset) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

/// Maps every object key path ("rollout.episodes", "sweep[1]") of a
/// syntactically valid JSON document to the line it starts on; the root
/// object maps from "".
inline std::map<std::string, std::size_t> key_lines(std::string_view text) {
  struct Frame {
    std::string path;
    bool is_array;
    std::size_t index;
  };
  std::map<std::string, std::size_t> out;
  std::vector<Frame> stack;
  std::string pending_key;
  bool have_key = false;
  std::size_t line = 1;

  auto child_path = [&](std::string_view leaf_or_empty) {
    if (stack.empty()) return std::string{};
    const Frame& top = stack.back();
    if (top.is_array) return top.path + "[" + std::to_string(top.index) + "]";
    const std::string prefix = top.path.empty() ? "" : top.path + ".";
    return prefix + std::string(leaf_or_empty);
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n') {
      ++line;
    } else if (c == '"') {
      std::string s;
      for (++i; i < text.size() && text[i] != '"'; ++i) {
        if (text[i] == '\\' && i + 1 < text.size()) ++i;
        s.push_back(text[i]);
      }
      std::size_t j = i + 1;
      while (j < text.size() && (text[j] == ' ' || text[j] == '\t' || text[j] == '\r' || text[j] == '\n')) ++j;
      const bool is_key = !stack.empty() && !stack.back().is_array && j < text.size() && text[j] == ':';
      if (is_key) {
        pending_key = s;
        have_key = true;
        out.emplace(child_path(s), line);
      } else if (!stack.empty() && stack.back().is_array) {
        out.emplace(child_path(""), line);
      }
    } else if (c == '{' || c == '[') {
      std::string path = child_path(have_key ? pending_key : "");
      if (stack.empty() || stack.back().is_array) out.emplace(path, line);
      stack.push_back({std::move(path), c == '[', 0});
      have_key = false;
    } else if (c == '}' || c == ']') {
      if (!stack.empty()) stack.pop_back();
    } else if (c == ',') {
      if (!stack.empty() && stack.back().is_array) ++stack.back().index;
      have_key = false;
    } else if (!stack.empty() && stack.back().is_array && c != ' ' && c != '\t' && c != '\r' &&
               c != ':') {
      out.emplace(child_path(""), line);
    }
  }
  return out;
}

}  // namespace detail

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open file");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = detail::line_col(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ConfigError(path.string() + ":" + std::to_string(line) + ":" + std::to_string(col) +
                      ": JSON syntax error: " + e.what());
  }
}

struct EmitConfig {
  bool csv = true;
  bool json = true;
};

/// Everything a `run` invocation needs: a policy-iteration config plus the
/// orchestration fields.
struct RunConfig {
  PiConfig pi;
  int n_seeds = 1;
  std::string output_dir = "out";
  EmitConfig emit;
  /// K values to sweep; empty means the single pi.k.
  std::vector<std::size_t> sweep;
  /// Worker threads for (K, seed) jobs; 0 picks the hardware concurrency.
  int workers = 0;

  std::vector<std::size_t> k_values() const {
    return sweep.empty() ? std::vector<std::size_t>{pi.k} : sweep;
  }
};

inline json to_json(const RunConfig& rc) {
  const auto& p = rc.pi;
  const auto& e = p.env;
  json env{{"name", e.name()}, {"train_velocity_uniform", e.train_velocity_uniform}};
  switch (e.kind) {
    case envs::EnvKind::Pendulum:
      env["angle_tol"] = e.pendulum.angle_tol;
      env["velocity_tol"] = e.pendulum.velocity_tol;
      break;
    case envs::EnvKind::MountainCar:
      env["x_goal"] = e.mountain_car.x_goal;
      env["v_goal"] = e.mountain_car.v_goal;
      break;
    case envs::EnvKind::Acrobot:
      env["acrobot_dynamics"] = std::string(to_string(e.acrobot.dynamics));
      break;
  }
  json j;
  j["env"] = std::move(env);
  j["k"] = p.k;
  j["layout"] = std::string(to_string(p.layout));
  j["metric"] = std::string(to_string(p.metric));
  j["discount"] = p.discount;
  j["rollout"] = {{"episodes", p.rollout.episodes}, {"steps_per_episode", p.rollout.steps_per_episode}};
  j["exploration_eps"] = p.exploration_eps;
  j["armijo"] = {{"alpha_bar", p.armijo.alpha_bar},     {"beta", p.armijo.beta},
                 {"sigma", p.armijo.sigma},             {"max_backtracks", p.armijo.max_backtracks},
                 {"j_steps", p.armijo.j_steps},         {"grad_tol", p.armijo.grad_tol}};
  j["trials"] = p.trials;
  j["eval"] = {{"step_cap", p.eval.step_cap}, {"eval_episodes", p.eval.eval_episodes}};
  j["seed"] = p.seed;
  j["n_seeds"] = rc.n_seeds;
  j["output_dir"] = rc.output_dir;
  j["emit"] = {{"csv", rc.emit.csv}, {"json", rc.emit.json}};
  j["sweep"] = rc.sweep;
  j["workers"] = rc.workers;
  return j;
}

namespace detail {

/// Reads typed fields out of one JSON object, rejecting unknown keys and
/// reporting failures as "key.path: message".
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(&obj), path_(std::move(path)) {
    if (!obj.is_object()) throw error(path_, "expected an object");
  }

  static std::runtime_error error(const std::string& path, const std::string& msg) {
    return std::runtime_error(path + "\x1f" + msg);
  }

  std::string key_path(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  const json* find(std::string_view key) {
    seen_.emplace_back(key);
    const auto it = obj_->find(std::string(key));
    return it == obj_->end() ? nullptr : &*it;
  }

  template <class T>
  void get(std::string_view key, T& out) {
    const json* v = find(key);
    if (!v) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v->is_boolean()) throw std::invalid_argument("expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v->is_number_integer()) throw std::invalid_argument("expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v->is_number_integer() && !v->is_number_unsigned()) {
            throw std::invalid_argument("expected a non-negative integer");
          }
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v->is_number()) throw std::invalid_argument("expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v->is_string()) throw std::invalid_argument("expected a string");
      }
      out = v->get<T>();
    } catch (const std::exception& e) {
      throw error(key_path(key), e.what());
    }
  }

  void reject_unknown() const {
    for (auto it = obj_->begin(); it != obj_->end(); ++it) {
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end()) {
        throw error(key_path(it.key()), "unknown key");
      }
    }
  }

 private:
  const json* obj_;
  std::string path_;
  std::vector<std::string> seen_;
};

template <class F>
auto checked(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw ObjectReader::error(path, e.what());
  }
}

inline RunConfig parse_run_config(const json& root) {
  ObjectReader top(root, "");
  const json* env_node = top.find("env");
  if (!env_node) throw ObjectReader::error("env", "required key is missing");

  std::string env_name;
  const json* env_obj = nullptr;
  if (env_node->is_string()) {
    env_name = env_node->get<std::string>();
  } else if (env_node->is_object()) {
    env_obj = env_node;
    const auto it = env_node->find("name");
    if (it == env_node->end() || !it->is_string()) {
      throw ObjectReader::error("env.name", "required string key is missing");
    }
    env_name = it->get<std::string>();
  } else {
    throw ObjectReader::error("env", "expected an environment name or object");
  }
  const auto kind = checked("env.name", [&] { return envs::kind_from_string(env_name); });

  RunConfig rc;
  rc.pi = default_config(kind);
  PiConfig& p = rc.pi;

  if (env_obj) {
    ObjectReader er(*env_obj, "env");
    std::string name;
    er.get("name", name);
    er.get("train_velocity_uniform", p.env.train_velocity_uniform);
    if (kind == envs::EnvKind::Pendulum) {
      er.get("angle_tol", p.env.pendulum.angle_tol);
      er.get("velocity_tol", p.env.pendulum.velocity_tol);
    } else if (kind == envs::EnvKind::MountainCar) {
      er.get("x_goal", p.env.mountain_car.x_goal);
      er.get("v_goal", p.env.mountain_car.v_goal);
    } else {
      std::string dyn(to_string(p.env.acrobot.dynamics));
      er.get("acrobot_dynamics", dyn);
      p.env.acrobot.dynamics =
          checked("env.acrobot_dynamics", [&] { return envs::acrobot_dynamics_from_string(dyn); });
    }
    er.reject_unknown();
  }

  top.get("k", p.k);
  if (p.k < 1) throw ObjectReader::error("k", "must be >= 1");
  std::string layout(to_string(p.layout)), metric(to_string(p.metric));
  top.get("layout", layout);
  p.layout = checked("layout", [&] { return layout_from_string(layout); });
  top.get("metric", metric);
  p.metric = checked("metric", [&] { return metric_from_string(metric); });
  top.get("discount", p.discount);
  if (!(p.discount >= 0.0 && p.discount < 1.0)) throw ObjectReader::error("discount", "must lie in [0, 1)");

  if (const json* r = top.find("rollout")) {
    ObjectReader rr(*r, "rollout");
    rr.get("episodes", p.rollout.episodes);
    rr.get("steps_per_episode", p.rollout.steps_per_episode);
    rr.reject_unknown();
    if (p.rollout.episodes < 1) throw ObjectReader::error("rollout.episodes", "must be >= 1");
    if (p.rollout.steps_per_episode < 1) {
      throw ObjectReader::error("rollout.steps_per_episode", "must be >= 1");
    }
  }
  top.get("exploration_eps", p.exploration_eps);
  if (!(p.exploration_eps >= 0.0 && p.exploration_eps <= 1.0)) {
    throw ObjectReader::error("exploration_eps", "must lie in [0, 1]");
  }
  if (const json* a = top.find("armijo")) {
    ObjectReader ar(*a, "armijo");
    ar.get("alpha_bar", p.armijo.alpha_bar);
    ar.get("beta", p.armijo.beta);
    ar.get("sigma", p.armijo.sigma);
    ar.get("max_backtracks", p.armijo.max_backtracks);
    ar.get("j_steps", p.armijo.j_steps);
    ar.get("grad_tol", p.armijo.grad_tol);
    ar.reject_unknown();
    try {
      p.armijo.validate();
    } catch (const std::invalid_argument& e) {
      const std::string msg = e.what();
      throw ObjectReader::error(msg.substr(0, msg.find(' ')), msg.substr(msg.find(' ') + 1));
    }
  }
  top.get("trials", p.trials);
  if (p.trials < 0) throw ObjectReader::error("trials", "must be >= 0");
  if (const json* e = top.find("eval")) {
    ObjectReader ev(*e, "eval");
    ev.get("step_cap", p.eval.step_cap);
    ev.get("eval_episodes", p.eval.eval_episodes);
    ev.reject_unknown();
    if (p.eval.step_cap < 1) throw ObjectReader::error("eval.step_cap", "must be >= 1");
    if (p.eval.eval_episodes < 1) throw ObjectReader::error("eval.eval_episodes", "must be >= 1");
  }
  top.get("seed", p.seed);
  top.get("n_seeds", rc.n_seeds);
  if (rc.n_seeds < 1) throw ObjectReader::error("n_seeds", "must be >= 1");
  top.get("output_dir", rc.output_dir);
  if (rc.output_dir.empty()) throw ObjectReader::error("output_dir", "must not be empty");
  if (const json* em = top.find("emit")) {
    ObjectReader er(*em, "emit");
    er.get("csv", rc.emit.csv);
    er.get("json", rc.emit.json);
    er.reject_unknown();
  }
  if (const json* sw = top.find("sweep")) {
    if (!sw->is_array()) throw ObjectReader::error("sweep", "expected an array of K values");
    for (std::size_t i = 0; i < sw->size(); ++i) {
      const auto& v = (*sw)[i];
      if (!v.is_number_unsigned() || v.get<std::size_t>() < 1) {
        throw ObjectReader::error("sweep[" + std::to_string(i) + "]", "expected an integer >= 1");
      }
      rc.sweep.push_back(v.get<std::size_t>());
    }
  }
  top.get("workers", rc.workers);
  if (rc.workers < 0) throw ObjectReader::error("workers", "must be >= 0");
  top.reject_unknown();
  p.validate();
  return rc;
}

}  // namespace detail

/// Parses and validates a run config. Errors carry the file, the line and the
/// offending key path.
inline RunConfig parse_run_config(std::string_view text, const std::string& origin = "<config>") {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = detail::line_col(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ConfigError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) +
                      ": JSON syntax error: " + e.what());
  }
  try {
    return detail::parse_run_config(root);
  } catch (const std::runtime_error& e) {
    const std::string raw = e.what();
    const auto sep = raw.find('\x1f');
    if (sep == std::string::npos) throw ConfigError(origin + ": " + raw);
    const std::string path = raw.substr(0, sep);
    const auto lines = detail::key_lines(text);
    std::string where = origin;
    auto it = lines.find(path);
    // Missing keys are reported at their parent object.
    for (std::string p = path; it == lines.end() && !p.empty();) {
      const auto cut = p.find_last_of(".[");
      p = cut == std::string::npos ? std::string{} : p.substr(0, cut);
      it = lines.find(p);
    }
    if (it != lines.end()) where += ":" + std::to_string(it->second);
    throw ConfigError(where + ": " + path + ": " + raw.substr(sep + 1));
  }
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.string());
}

/// Applies the GMMQ_OUT environment override.
inline void apply_env_overrides(RunConfig& rc) {
  if (const char* out = std::getenv("GMMQ_OUT"); out && *out) rc.output_dir = out;
}

// ---------------------------------------------------------------- results

inline constexpr std::string_view kCsvHeader =
    "env,k,metric,seed,trial,steps_to_goal,steps_to_goal_ma10,final_loss,wall_time_ms";

struct ResultRow {
  std::string env;
  std::size_t k = 0;
  std::string metric;
  std::uint64_t seed = 0;
  int trial = 0;
  double steps_to_goal = 0.0;
  double steps_to_goal_ma10 = 0.0;
  double final_loss = 0.0;
  double wall_time_ms = 0.0;
};

/// RFC 4180: quote fields containing a comma, quote or line break; double
/// embedded quotes.
inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_line(const ResultRow& r) {
  char wall[40];
  std::snprintf(wall, sizeof wall, "%.3f", r.wall_time_ms);
  return csv_field(r.env) + ',' + std::to_string(r.k) + ',' + csv_field(r.metric) + ',' +
         std::to_string(r.seed) + ',' + std::to_string(r.trial) + ',' +
         format_double(r.steps_to_goal) + ',' + format_double(r.steps_to_goal_ma10) + ',' +
         format_double(r.final_loss) + ',' + wall;
}

inline json to_json(const ResultRow& r) {
  return json{{"env", r.env},
              {"k", r.k},
              {"metric", r.metric},
              {"seed", r.seed},
              {"trial", r.trial},
              {"steps_to_goal", r.steps_to_goal},
              {"steps_to_goal_ma10", r.steps_to_goal_ma10},
              {"final_loss", r.final_loss},
              {"wall_time_ms", r.wall_time_ms}};
}

/// Appends rows to results.csv, flushing after every line so a crash leaves a
/// valid prefix.
class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    out_ << kCsvHeader << '\n' << std::flush;
  }

  void append(const ResultRow& row) {
    out_ << csv_line(row) << '\n' << std::flush;
    if (!out_) throw std::runtime_error("results.csv: write failed");
  }

 private:
  std::ofstream out_;
};

}  // namespace gmmq::io
