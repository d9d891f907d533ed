#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "gfn/core.hpp"
#include "gfn/mlp.hpp"

namespace gfn {

inline constexpr int kCheckpointSchema = 1;

struct Checkpoint {
  std::map<std::string, std::string> config;
  std::string algo;
  Mlp online;
  std::optional<Mlp> target;
  AdamState adam;
  std::string rng_state;
  long iteration = 0;
};

namespace detail {

using nlohmann::json;

inline json matrix_rows(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd rows_matrix(const json& j, Eigen::Index rows, Eigen::Index cols) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw std::runtime_error("checkpoint: matrix row count mismatch");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[i];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw std::runtime_error("checkpoint: matrix column count mismatch");
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!row[c].is_number()) throw std::runtime_error("checkpoint: non-numeric parameter");
      m(i, c) = row[c].get<double>();
    }
  }
  return m;
}

inline json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Eigen::VectorXd json_vector(const json& j, Eigen::Index n) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n)
    throw std::runtime_error("checkpoint: vector length mismatch");
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!j[i].is_number()) throw std::runtime_error("checkpoint: non-numeric parameter");
    v(i) = j[i].get<double>();
  }
  return v;
}

inline json layers_json(const std::vector<Eigen::MatrixXd>& w, const std::vector<Eigen::VectorXd>& b) {
  json layers = json::array();
  for (std::size_t l = 0; l < w.size(); ++l)
    layers.push_back({{"weights", matrix_rows(w[l])}, {"biases", vector_json(b[l])}});
  return layers;
}

inline void json_layers(const json& j, const std::vector<int>& sizes, std::vector<Eigen::MatrixXd>& w,
                        std::vector<Eigen::VectorXd>& b) {
  if (!j.is_array() || j.size() + 1 != sizes.size())
    throw std::runtime_error("checkpoint: layer count mismatch");
  w.clear();
  b.clear();
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    w.push_back(rows_matrix(j[l].at("weights"), sizes[l + 1], sizes[l]));
    b.push_back(json_vector(j[l].at("biases"), sizes[l + 1]));
  }
}

inline Mlp json_mlp(const json& j, const std::vector<int>& sizes, Activation act, double leak) {
  Mlp m = Mlp::zeros(sizes);
  m.activation = act;
  m.leak = leak;
  json_layers(j, sizes, m.weights, m.biases);
  if (!m.all_finite()) throw std::runtime_error("checkpoint: non-finite parameter");
  return m;
}

}  // namespace detail

inline std::string checkpoint_to_string(const Checkpoint& c) {
  using nlohmann::json;
  json j;
  j["schema_version"] = kCheckpointSchema;
  j["config"] = c.config;
  j["algo"] = c.algo;
  j["layer_sizes"] = c.online.sizes;
  j["activation"] = to_string(c.online.activation);
  j["leak"] = c.online.leak;
  j["online"] = detail::layers_json(c.online.weights, c.online.biases);
  if (c.target) j["target"] = detail::layers_json(c.target->weights, c.target->biases);
  j["adam"] = {{"lr", c.adam.lr},
               {"beta1", c.adam.beta1},
               {"beta2", c.adam.beta2},
               {"eps", c.adam.eps},
               {"step", c.adam.step_count},
               {"m", detail::layers_json(c.adam.m.weights, c.adam.m.biases)},
               {"v", detail::layers_json(c.adam.v.weights, c.adam.v.biases)}};
  j["rng_state"] = c.rng_state;
  j["iteration"] = c.iteration;
  return j.dump(1);
}

inline Checkpoint checkpoint_from_string(const std::string& text) {
  using nlohmann::json;
  Checkpoint c;
  json j;
  try {
    j = json::parse(text);
    if (j.at("schema_version").get<int>() != kCheckpointSchema)
      throw std::runtime_error("checkpoint: unsupported schema_version");
    c.config = j.at("config").get<std::map<std::string, std::string>>();
    c.algo = j.at("algo").get<std::string>();
    const auto sizes = j.at("layer_sizes").get<std::vector<int>>();
    const auto act = activation_from_string(j.at("activation").get<std::string>());
    const double leak = j.at("leak").get<double>();
    c.online = detail::json_mlp(j.at("online"), sizes, act, leak);
    if (j.contains("target")) c.target = detail::json_mlp(j.at("target"), sizes, act, leak);
    const auto& a = j.at("adam");
    c.adam.lr = a.at("lr").get<double>();
    c.adam.beta1 = a.at("beta1").get<double>();
    c.adam.beta2 = a.at("beta2").get<double>();
    c.adam.eps = a.at("eps").get<double>();
    c.adam.step_count = a.at("step").get<long>();
    detail::json_layers(a.at("m"), sizes, c.adam.m.weights, c.adam.m.biases);
    detail::json_layers(a.at("v"), sizes, c.adam.v.weights, c.adam.v.biases);
    c.rng_state = j.at("rng_state").get<std::string>();
    c.iteration = j.at("iteration").get<long>();
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: malformed document: ") + e.what());
  }
  return c;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << checkpoint_to_string(c) << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

inline std::string rng_to_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline Rng rng_from_string(const std::string& s) {
  Rng rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw std::runtime_error("checkpoint: malformed rng state");
  return rng;
}

}  // namespace gfn
