#include "tabdiff/netcore.hpp"

#include <cmath>

#include "tabdiff/error.hpp"

namespace tabdiff {

namespace {

using ConstMap = Eigen::Map<const Matrix>;
using RowVecMap = Eigen::Map<const Eigen::RowVectorXd>;

ConstMap as_matrix(const Vector& v, std::size_t rows, std::size_t cols) {
  return ConstMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

RowVecMap as_row(const Vector& v) { return RowVecMap(v.data(), static_cast<Eigen::Index>(v.size())); }

Matrix apply(Activation a, const Matrix& z) {
  switch (a) {
    case Activation::SiLU:
      return z.unaryExpr([](double v) { return silu(v); });
    case Activation::Sigmoid:
      return z.unaryExpr([](double v) { return sigmoid(v); });
    case Activation::Identity:
      break;
  }
  return z;
}

double derivative(Activation a, double z) {
  switch (a) {
    case Activation::SiLU: {
      const double s = sigmoid(z);
      return s * (1.0 + z * (1.0 - s));
    }
    case Activation::Sigmoid: {
      const double s = sigmoid(z);
      return s * (1.0 - s);
    }
    case Activation::Identity:
      break;
  }
  return 1.0;
}

Matrix derivative(Activation a, const Matrix& z) {
  return z.unaryExpr([a](double v) { return derivative(a, v); });
}

Vector to_vector(const Matrix& m) { return Vector(m.data(), m.data() + m.size()); }

template <typename Expr>
void store(Vector& out, const Expr& e) {
  Matrix m = e;
  out.assign(m.data(), m.data() + m.size());
}

}  // namespace

double silu(double z) { return z * sigmoid(z); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::SiLU:
      return "silu";
    case Activation::Sigmoid:
      return "sigmoid";
    case Activation::Identity:
      break;
  }
  return "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "silu") return Activation::SiLU;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "identity") return Activation::Identity;
  throw ConfigError("unknown activation '" + name + "'");
}

void NetworkSpec::validate() const {
  if (layers.empty()) throw ShapeError("network has no layers");
  if (layers.front().in_dim != input_dim)
    throw ShapeError("first layer in_dim does not match network input_dim");
  if (layers.back().out_dim != output_dim)
    throw ShapeError("last layer out_dim does not match network output_dim");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& l = layers[k];
    if (l.in_dim == 0 || l.out_dim == 0)
      throw ShapeError("layer " + std::to_string(k) + " has a zero dimension");
    if (l.residual && l.in_dim != l.out_dim)
      throw ShapeError("residual layer " + std::to_string(k) + " must be square");
    if (k + 1 < layers.size() && l.out_dim != layers[k + 1].in_dim)
      throw ShapeError("layer " + std::to_string(k) + " out_dim does not chain into layer " +
                       std::to_string(k + 1));
  }
}

ParameterSet ParameterSet::zeros(const NetworkSpec& spec) {
  spec.validate();
  ParameterSet p;
  p.layers.reserve(spec.layers.size());
  for (const auto& l : spec.layers) {
    LayerParams lp;
    lp.weight.assign(l.out_dim * l.in_dim, 0.0);
    lp.bias.assign(l.out_dim, 0.0);
    if (l.residual) {
      lp.weight2.assign(l.out_dim * l.out_dim, 0.0);
      lp.bias2.assign(l.out_dim, 0.0);
    }
    p.layers.push_back(std::move(lp));
  }
  return p;
}

ParameterSet ParameterSet::glorot(const NetworkSpec& spec, Rng& rng) {
  ParameterSet p = zeros(spec);
  for (std::size_t k = 0; k < spec.layers.size(); ++k) {
    const auto& l = spec.layers[k];
    const double limit = std::sqrt(6.0 / static_cast<double>(l.in_dim + l.out_dim));
    for (double& w : p.layers[k].weight) w = rng.uniform(-limit, limit);
    for (double& w : p.layers[k].weight2) w = rng.uniform(-limit, limit);
  }
  return p;
}

std::size_t ParameterSet::size() const {
  std::size_t n = 0;
  for (const auto& l : layers)
    for (const Vector* t : l.tensors()) n += t->size();
  return n;
}

bool ParameterSet::all_finite() const {
  for (const auto& l : layers)
    for (const Vector* t : l.tensors())
      for (double v : *t)
        if (!std::isfinite(v)) return false;
  return true;
}

void ParameterSet::check_shape(const NetworkSpec& spec) const {
  if (layers.size() != spec.layers.size())
    throw ShapeError("parameter set has " + std::to_string(layers.size()) +
                     " layers, network spec has " + std::to_string(spec.layers.size()));
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& l = spec.layers[k];
    const auto& p = layers[k];
    const std::size_t w2 = l.residual ? l.out_dim * l.out_dim : 0;
    const std::size_t b2 = l.residual ? l.out_dim : 0;
    if (p.weight.size() != l.out_dim * l.in_dim || p.bias.size() != l.out_dim ||
        p.weight2.size() != w2 || p.bias2.size() != b2)
      throw ShapeError("parameter shapes of layer " + std::to_string(k) + " do not match spec");
  }
}

Vector ParameterSet::flatten() const {
  Vector out;
  out.reserve(size());
  for (const auto& l : layers)
    for (const Vector* t : l.tensors()) out.insert(out.end(), t->begin(), t->end());
  return out;
}

void ParameterSet::assign_flat(std::span<const double> flat) {
  if (flat.size() != size()) throw ShapeError("flat parameter vector has the wrong length");
  std::size_t pos = 0;
  for (auto& l : layers)
    for (Vector* t : l.tensors()) {
      std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                flat.begin() + static_cast<std::ptrdiff_t>(pos + t->size()), t->begin());
      pos += t->size();
    }
  ++revision;
}

Matrix forward(const NetworkSpec& spec, const ParameterSet& params, const Matrix& input,
               ForwardTrace* trace) {
  spec.validate();
  params.check_shape(spec);
  if (static_cast<std::size_t>(input.cols()) != spec.input_dim)
    throw ShapeError("input has " + std::to_string(input.cols()) + " columns, network expects " +
                     std::to_string(spec.input_dim));
  if (trace) {
    trace->layers.clear();
    trace->layers.reserve(spec.layers.size());
    trace->revision = params.revision;
  }
  Matrix x = input;
  for (std::size_t k = 0; k < spec.layers.size(); ++k) {
    const auto& l = spec.layers[k];
    const auto& p = params.layers[k];
    const auto w = as_matrix(p.weight, l.out_dim, l.in_dim);
    Matrix pre;
    Matrix hidden;
    if (l.residual) {
      hidden = (x * w.transpose()).rowwise() + as_row(p.bias);
      const Matrix s = apply(Activation::SiLU, hidden);
      const auto w2 = as_matrix(p.weight2, l.out_dim, l.out_dim);
      pre = (x + s * w2.transpose()).rowwise() + as_row(p.bias2);
    } else {
      pre = (x * w.transpose()).rowwise() + as_row(p.bias);
    }
    Matrix y = apply(l.activation, pre);
    if (trace) trace->layers.push_back(LayerTrace{std::move(x), std::move(hidden), std::move(pre)});
    x = std::move(y);
  }
  if (trace) trace->output = x;
  return x;
}

Gradients backward(const NetworkSpec& spec, const ParameterSet& params, const ForwardTrace& trace,
                   const Matrix& grad_output) {
  params.check_shape(spec);
  if (trace.layers.size() != spec.layers.size())
    throw TraceError("trace has " + std::to_string(trace.layers.size()) +
                     " layers, network has " + std::to_string(spec.layers.size()));
  if (trace.revision != params.revision)
    throw TraceError("trace is stale: parameters changed since the forward pass");
  if (grad_output.rows() != trace.output.rows() ||
      static_cast<std::size_t>(grad_output.cols()) != spec.output_dim)
    throw ShapeError("grad_output shape does not match the traced output");
  for (std::size_t k = 0; k < spec.layers.size(); ++k)
    if (static_cast<std::size_t>(trace.layers[k].input.cols()) != spec.layers[k].in_dim)
      throw TraceError("trace layer " + std::to_string(k) + " does not match the spec");

  Gradients g{ParameterSet::zeros(spec), Matrix()};
  Matrix upstream = grad_output;
  for (std::size_t k = spec.layers.size(); k-- > 0;) {
    const auto& l = spec.layers[k];
    const auto& p = params.layers[k];
    const auto& t = trace.layers[k];
    auto& gp = g.params.layers[k];
    const Matrix dpre = upstream.cwiseProduct(derivative(l.activation, t.pre));
    const auto w = as_matrix(p.weight, l.out_dim, l.in_dim);
    if (l.residual) {
      const Matrix s = apply(Activation::SiLU, t.hidden);
      const auto w2 = as_matrix(p.weight2, l.out_dim, l.out_dim);
      store(gp.weight2, dpre.transpose() * s);
      store(gp.bias2, dpre.colwise().sum());
      const Matrix dh = (dpre * w2).cwiseProduct(derivative(Activation::SiLU, t.hidden));
      store(gp.weight, dh.transpose() * t.input);
      store(gp.bias, dh.colwise().sum());
      upstream = dpre + dh * w;
    } else {
      store(gp.weight, dpre.transpose() * t.input);
      store(gp.bias, dpre.colwise().sum());
      upstream = dpre * w;
    }
  }
  g.input = std::move(upstream);
  return g;
}

VectorForward forward(const NetworkSpec& spec, const ParameterSet& params,
                      std::span<const double> input) {
  if (input.size() != spec.input_dim)
    throw ShapeError("input length " + std::to_string(input.size()) + " != network input_dim " +
                     std::to_string(spec.input_dim));
  Matrix x(1, static_cast<Eigen::Index>(input.size()));
  std::copy(input.begin(), input.end(), x.data());
  VectorForward out;
  const Matrix y = forward(spec, params, x, &out.trace);
  out.output = to_vector(y);
  return out;
}

Vector predict(const NetworkSpec& spec, const ParameterSet& params, std::span<const double> input) {
  if (input.size() != spec.input_dim)
    throw ShapeError("input length " + std::to_string(input.size()) + " != network input_dim " +
                     std::to_string(spec.input_dim));
  Matrix x(1, static_cast<Eigen::Index>(input.size()));
  std::copy(input.begin(), input.end(), x.data());
  return to_vector(forward(spec, params, x, nullptr));
}

VectorGradients backward(const NetworkSpec& spec, const ParameterSet& params,
                         const ForwardTrace& trace, std::span<const double> grad_output) {
  if (grad_output.size() != spec.output_dim) throw ShapeError("grad_output length mismatch");
  Matrix g(1, static_cast<Eigen::Index>(grad_output.size()));
  std::copy(grad_output.begin(), grad_output.end(), g.data());
  Gradients grads = backward(spec, params, trace, g);
  return VectorGradients{std::move(grads.params), to_vector(grads.input)};
}

OptimizerState OptimizerState::make(const NetworkSpec& spec, OptimizerKind kind,
                                    double learning_rate) {
  OptimizerState s;
  s.kind = kind;
  s.learning_rate = learning_rate;
  if (kind == OptimizerKind::Adam) {
    s.first_moment = ParameterSet::zeros(spec);
    s.second_moment = ParameterSet::zeros(spec);
  }
  return s;
}

void optimizer_step(ParameterSet& params, const ParameterSet& grads, OptimizerState& state) {
  if (grads.layers.size() != params.layers.size())
    throw ShapeError("gradient layer count does not match parameters");
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    auto pt = params.layers[k].tensors();
    auto gt = grads.layers[k].tensors();
    for (std::size_t i = 0; i < pt.size(); ++i) {
      if (pt[i]->size() != gt[i]->size())
        throw ShapeError("gradient shape mismatch in layer " + std::to_string(k));
      for (double v : *gt[i])
        if (!std::isfinite(v))
          throw NumericError("non-finite gradient in layer " + std::to_string(k), k);
    }
  }
  ++state.step;
  ++params.revision;
  if (state.kind == OptimizerKind::SGD) {
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
      auto pt = params.layers[k].tensors();
      auto gt = grads.layers[k].tensors();
      for (std::size_t i = 0; i < pt.size(); ++i)
        for (std::size_t j = 0; j < pt[i]->size(); ++j)
          (*pt[i])[j] -= state.learning_rate * (*gt[i])[j];
    }
    return;
  }
  if (state.first_moment.layers.size() != params.layers.size())
    throw ShapeError("optimizer accumulators do not match parameters");
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    auto pt = params.layers[k].tensors();
    auto gt = grads.layers[k].tensors();
    auto mt = state.first_moment.layers[k].tensors();
    auto vt = state.second_moment.layers[k].tensors();
    for (std::size_t i = 0; i < pt.size(); ++i) {
      auto& p = *pt[i];
      const auto& g = *gt[i];
      auto& m = *mt[i];
      auto& v = *vt[i];
      if (m.size() != p.size()) throw ShapeError("optimizer accumulator shape mismatch");
      for (std::size_t j = 0; j < p.size(); ++j) {
        m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
        v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
        const double mhat = m[j] / c1;
        const double vhat = v[j] / c2;
        p[j] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
      }
    }
  }
}

Vector time_embed(double t, std::size_t dim) {
  if (dim % 2 != 0) throw ConfigError("time embedding dimension must be even");
  if (t < 0.0) throw ConfigError("time embedding needs t >= 0");
  Vector out(dim);
  const std::size_t half = dim / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
    out[2 * i] = std::sin(t * freq);
    out[2 * i + 1] = std::cos(t * freq);
  }
  return out;
}

NetworkSpec mlp_spec(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                     std::size_t output_dim, Activation hidden_act, Activation output_act) {
  NetworkSpec spec;
  spec.input_dim = input_dim;
  spec.output_dim = output_dim;
  std::size_t prev = input_dim;
  for (std::size_t h : hidden) {
    spec.layers.push_back({prev, h, hidden_act, false});
    prev = h;
  }
  spec.layers.push_back({prev, output_dim, output_act, false});
  spec.validate();
  return spec;
}

NetworkSpec resnet_spec(std::size_t input_dim, std::size_t width, std::size_t layers,
                        std::size_t output_dim, Activation output_act) {
  if (layers < 2) throw ConfigError("a residual network needs at least 2 layers");
  NetworkSpec spec;
  spec.input_dim = input_dim;
  spec.output_dim = output_dim;
  spec.layers.push_back({input_dim, width, Activation::SiLU, false});
  for (std::size_t i = 0; i + 2 < layers; ++i)
    spec.layers.push_back({width, width, Activation::Identity, true});
  spec.layers.push_back({width, output_dim, output_act, false});
  spec.validate();
  return spec;
}

}  // namespace tabdiff
