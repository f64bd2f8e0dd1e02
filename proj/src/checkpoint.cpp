#include "tabdiff/checkpoint.hpp"

#include <cmath>
#include <fstream>

#include "tabdiff/error.hpp"

namespace tabdiff {

using nlohmann::json;

namespace {

Vector read_array(const json& j, std::size_t expected, const std::string& what) {
  if (!j.is_array()) throw ParseError(what + " is not an array");
  if (j.size() != expected)
    throw ShapeError(what + " has " + std::to_string(j.size()) + " entries, expected " +
                     std::to_string(expected));
  Vector v;
  v.reserve(j.size());
  for (const auto& e : j) {
    const double d = e.get<double>();
    if (!std::isfinite(d)) throw NumericError(what + " contains a non-finite value");
    v.push_back(d);
  }
  return v;
}

}  // namespace

json to_json(const NetworkSpec& spec) {
  json layers = json::array();
  for (const auto& l : spec.layers)
    layers.push_back({{"in_dim", l.in_dim},
                      {"out_dim", l.out_dim},
                      {"activation", to_string(l.activation)},
                      {"residual", l.residual}});
  return {{"input_dim", spec.input_dim}, {"output_dim", spec.output_dim}, {"layers", layers}};
}

json to_json(const ParameterSet& params) {
  json layers = json::array();
  for (const auto& l : params.layers) {
    json e = {{"weight", l.weight}, {"bias", l.bias}};
    if (!l.weight2.empty()) {
      e["weight2"] = l.weight2;
      e["bias2"] = l.bias2;
    }
    layers.push_back(std::move(e));
  }
  return layers;
}

json to_json(const Normalizer& norm) { return {{"mean", norm.mean}, {"std", norm.std}}; }

json to_json(const Checkpoint& ckpt) {
  json nets = json::object();
  for (const auto& [name, net] : ckpt.networks)
    nets[name] = {{"spec", to_json(net.spec)}, {"params", to_json(net.params)}};
  return {{"format", "tabdiff-checkpoint"},
          {"version", ckpt.version},
          {"kind", ckpt.kind},
          {"networks", nets},
          {"normalization", to_json(ckpt.normalization)},
          {"metadata", ckpt.metadata}};
}

NetworkSpec network_spec_from_json(const json& j) {
  NetworkSpec spec;
  spec.input_dim = j.at("input_dim").get<std::size_t>();
  spec.output_dim = j.at("output_dim").get<std::size_t>();
  for (const auto& l : j.at("layers"))
    spec.layers.push_back({l.at("in_dim").get<std::size_t>(), l.at("out_dim").get<std::size_t>(),
                           activation_from_string(l.at("activation").get<std::string>()),
                           l.value("residual", false)});
  spec.validate();
  return spec;
}

ParameterSet parameters_from_json(const json& j, const NetworkSpec& spec) {
  if (!j.is_array() || j.size() != spec.layers.size())
    throw ShapeError("checkpoint parameter layer count does not match spec");
  ParameterSet p;
  for (std::size_t k = 0; k < spec.layers.size(); ++k) {
    const auto& l = spec.layers[k];
    const auto& e = j[k];
    const std::string tag = "layer " + std::to_string(k);
    LayerParams lp;
    lp.weight = read_array(e.at("weight"), l.out_dim * l.in_dim, tag + " weight");
    lp.bias = read_array(e.at("bias"), l.out_dim, tag + " bias");
    if (l.residual) {
      lp.weight2 = read_array(e.at("weight2"), l.out_dim * l.out_dim, tag + " weight2");
      lp.bias2 = read_array(e.at("bias2"), l.out_dim, tag + " bias2");
    }
    p.layers.push_back(std::move(lp));
  }
  p.check_shape(spec);
  return p;
}

Normalizer normalizer_from_json(const json& j) {
  Normalizer n;
  n.mean = j.at("mean").get<std::vector<double>>();
  n.std = j.at("std").get<std::vector<double>>();
  if (n.mean.size() != n.std.size()) throw ShapeError("normalization mean/std length mismatch");
  return n;
}

Checkpoint checkpoint_from_json(const json& j) {
  if (j.value("format", "") != "tabdiff-checkpoint") throw ParseError("not a tabdiff checkpoint");
  Checkpoint c;
  c.version = j.at("version").get<int>();
  if (c.version != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(c.version));
  c.kind = j.value("kind", "");
  for (const auto& [name, net] : j.at("networks").items()) {
    Network n;
    n.spec = network_spec_from_json(net.at("spec"));
    n.params = parameters_from_json(net.at("params"), n.spec);
    c.networks.emplace(name, std::move(n));
  }
  if (j.contains("normalization")) c.normalization = normalizer_from_json(j.at("normalization"));
  c.metadata = j.value("metadata", json::object());
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << to_json(ckpt).dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("checkpoint not found: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace tabdiff
