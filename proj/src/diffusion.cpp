#include "tabdiff/diffusion.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "tabdiff/error.hpp"
#include "tabdiff/parallel.hpp"

namespace tabdiff {

namespace {

Matrix row_matrix(std::span<const double> v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  std::copy(v.begin(), v.end(), m.data());
  return m;
}

bool all_finite(const Vector& v) {
  return std::all_of(v.begin(), v.end(), [](double d) { return std::isfinite(d); });
}

}  // namespace

NoisePredictor NoisePredictor::create(std::size_t design_dim, std::size_t condition_dim,
                                      const NoisePredictorShape& shape, Rng& rng) {
  if (design_dim == 0) throw ConfigError("design dimension must be positive");
  if (shape.embed_dim % 2 != 0) throw ConfigError("embedding dimension must be even");
  NoisePredictor p;
  p.design_dim = design_dim;
  p.condition_dim = condition_dim;
  p.embed_dim = shape.embed_dim;
  p.backbone.spec = resnet_spec(design_dim + shape.embed_dim, shape.width, shape.layers, design_dim);
  p.backbone.params = ParameterSet::glorot(p.backbone.spec, rng);
  if (condition_dim > 0 && shape.embed_dim > 0) {
    Network c;
    c.spec = mlp_spec(condition_dim, {}, shape.embed_dim, Activation::Identity, Activation::Identity);
    c.params = ParameterSet::glorot(c.spec, rng);
    p.condition_layer = std::move(c);
  }
  return p;
}

Matrix NoisePredictor::embedding(std::span<const std::size_t> t, const Matrix& cond,
                                 ForwardTrace* trace) const {
  const auto rows = static_cast<Eigen::Index>(t.size());
  Matrix e(rows, static_cast<Eigen::Index>(embed_dim));
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Vector te = time_embed(static_cast<double>(t[static_cast<std::size_t>(r)]), embed_dim);
    std::copy(te.begin(), te.end(), e.row(r).data());
  }
  if (condition_layer) {
    if (static_cast<std::size_t>(cond.cols()) != condition_dim || cond.rows() != rows)
      throw ShapeError("condition batch does not match the noise predictor");
    e += forward(condition_layer->spec, condition_layer->params, cond, trace);
  }
  return e;
}

Matrix NoisePredictor::forward_batch(const Matrix& x, std::span<const std::size_t> t,
                                     const Matrix& cond, BatchTrace* trace) const {
  if (static_cast<std::size_t>(x.cols()) != design_dim)
    throw ShapeError("noise predictor input has the wrong design dimension");
  if (static_cast<std::size_t>(x.rows()) != t.size()) throw ShapeError("one timestep per row required");
  Matrix input(x.rows(), static_cast<Eigen::Index>(design_dim + embed_dim));
  input.leftCols(static_cast<Eigen::Index>(design_dim)) = x;
  if (embed_dim > 0)
    input.rightCols(static_cast<Eigen::Index>(embed_dim)) =
        embedding(t, cond, trace ? &trace->condition : nullptr);
  return forward(backbone.spec, backbone.params, input, trace ? &trace->backbone : nullptr);
}

NoisePredictor::BatchGradients NoisePredictor::backward_batch(const BatchTrace& trace,
                                                              const Matrix& grad_output) const {
  Gradients gb = backward(backbone.spec, backbone.params, trace.backbone, grad_output);
  BatchGradients out;
  out.backbone = std::move(gb.params);
  out.input = gb.input.leftCols(static_cast<Eigen::Index>(design_dim));
  if (condition_layer) {
    const Matrix de = gb.input.rightCols(static_cast<Eigen::Index>(embed_dim));
    out.condition = backward(condition_layer->spec, condition_layer->params, trace.condition, de).params;
  }
  return out;
}

Vector NoisePredictor::predict(std::span<const double> x, std::size_t t,
                               std::span<const double> cond) const {
  if (x.size() != design_dim) throw ShapeError("noise predictor input has the wrong design dimension");
  if (cond.size() != condition_dim) throw ShapeError("condition length does not match the model");
  const std::size_t ts[1] = {t};
  const Matrix out = forward_batch(row_matrix(x), ts, row_matrix(cond), nullptr);
  return Vector(out.data(), out.data() + out.size());
}

Vector DiffusionModel::encode_condition(const ConditionVector& c) const {
  const Vector raw = c.to_vector(environment);
  if (raw.size() != eps.condition_dim) throw ShapeError("condition length does not match the model");
  return condition_stats.normalize(raw);
}

DiffusionModel make_model(const TabularDataset& data, const NoiseSchedule& schedule,
                          const NoisePredictorShape& shape, std::uint64_t seed) {
  if (data.size() == 0) throw DataError("cannot build a model from an empty dataset");
  DiffusionModel m;
  m.schedule = schedule;
  m.environment = data.schema.environment;
  m.design_stats = Normalizer::fit(data.designs);
  m.condition_stats = Normalizer::fit(data.conditions());
  Rng rng(seed);
  m.eps = NoisePredictor::create(data.schema.dim(), 1 + data.schema.environment.size(), shape, rng);
  return m;
}

std::vector<TrainRecord> train(DiffusionModel& model, const std::vector<Vector>& x0,
                               const std::vector<Vector>& cond, const TrainConfig& cfg) {
  if (x0.empty()) throw DataError("training dataset is empty");
  if (x0.size() != cond.size()) throw DataError("one condition per design required");
  const std::size_t d = model.design_dim();
  const std::size_t c = model.eps.condition_dim;
  for (std::size_t i = 0; i < x0.size(); ++i)
    if (x0[i].size() != d || cond[i].size() != c) throw ShapeError("training row has the wrong length");

  auto& eps = model.eps;
  auto opt_backbone = OptimizerState::make(eps.backbone.spec, OptimizerKind::Adam, cfg.learning_rate);
  std::optional<OptimizerState> opt_cond;
  if (eps.condition_layer)
    opt_cond = OptimizerState::make(eps.condition_layer->spec, OptimizerKind::Adam, cfg.learning_rate);

  Rng rng(cfg.seed, 0, StreamTag::kTraining);
  std::vector<std::size_t> order(x0.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = std::max<std::size_t>(1, cfg.batch_size);
  const auto steps = static_cast<std::int64_t>(model.schedule.steps);

  std::vector<TrainRecord> records;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start_time = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng.engine());
    double total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += bs, ++batch_index) {
      const std::size_t stop = std::min(order.size(), start + bs);
      const auto rows = static_cast<Eigen::Index>(stop - start);
      Matrix xt(rows, static_cast<Eigen::Index>(d));
      Matrix noise(rows, static_cast<Eigen::Index>(d));
      Matrix cb(rows, static_cast<Eigen::Index>(c));
      std::vector<std::size_t> ts(static_cast<std::size_t>(rows));
      for (Eigen::Index r = 0; r < rows; ++r) {
        const std::size_t i = order[start + static_cast<std::size_t>(r)];
        const auto t = static_cast<std::size_t>(rng.integer(1, steps));
        ts[static_cast<std::size_t>(r)] = t;
        const double a = std::sqrt(model.schedule.alpha_bar_at(t));
        const double b = std::sqrt(1.0 - model.schedule.alpha_bar_at(t));
        for (std::size_t k = 0; k < d; ++k) {
          const double e = rng.gaussian();
          noise(r, static_cast<Eigen::Index>(k)) = e;
          xt(r, static_cast<Eigen::Index>(k)) = a * x0[i][k] + b * e;
        }
        for (std::size_t k = 0; k < c; ++k) cb(r, static_cast<Eigen::Index>(k)) = cond[i][k];
      }
      NoisePredictor::BatchTrace trace;
      const Matrix pred = eps.forward_batch(xt, ts, cb, &trace);
      const Matrix diff = pred - noise;
      const double norm = static_cast<double>(rows) * static_cast<double>(d);
      const double loss = diff.squaredNorm() / norm;
      if (!std::isfinite(loss))
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      const Matrix grad = diff * (2.0 / norm);
      const auto g = eps.backward_batch(trace, grad);
      optimizer_step(eps.backbone.params, g.backbone, opt_backbone);
      if (eps.condition_layer) optimizer_step(eps.condition_layer->params, *g.condition, *opt_cond);
      total += loss * static_cast<double>(rows);
    }
    TrainRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = total / static_cast<double>(x0.size());
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
    records.push_back(rec);
    if (cfg.on_epoch) cfg.on_epoch(epoch, rec.mean_loss);
  }
  return records;
}

void check_guidance(const GuidanceNets& nets, const GuidanceConfig& cfg) {
  cfg.validate();
  if (cfg.effective_gamma() != 0.0 && nets.classifier == nullptr)
    throw ConfigError("classifier guidance requested (gamma != 0) but no classifier is loaded");
  if (cfg.effective_lambda() != 0.0 && nets.predictor == nullptr)
    throw ConfigError("performance guidance requested (lambda != 0) but no predictor is loaded");
}

Vector guided_step(const DiffusionModel& model, const GuidanceNets& nets,
                   std::span<const double> x_t, std::size_t t, std::span<const double> cond,
                   const GuidanceConfig& guidance, std::span<const double> z) {
  check_guidance(nets, guidance);
  const std::size_t d = model.design_dim();
  if (x_t.size() != d) throw ShapeError("x_t length does not match the model");
  if (t > 1 && z.size() != d) throw ShapeError("noise length does not match the model");
  const auto& s = model.schedule;
  const double alpha = s.alpha_at(t);
  const double coef = (1.0 - alpha) / std::sqrt(1.0 - s.alpha_bar_at(t));
  const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
  const double gamma = guidance.effective_gamma();
  const double lambda = guidance.effective_lambda();

  const Vector eps = model.eps.predict(x_t, t, cond);
  Vector out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = inv_sqrt_alpha * (x_t[i] - coef * eps[i]);
  if (t > 1) {
    const double sigma = s.sigma_at(t);
    const double keep = guidance.literal_noise_coupling ? 1.0 - gamma : 1.0;
    for (std::size_t i = 0; i < d; ++i) out[i] += sigma * (z[i] * keep);
  }
  if (gamma != 0.0) {
    const Vector g = nets.classifier->gradient(x_t, t);
    for (std::size_t i = 0; i < d; ++i) out[i] += gamma * g[i];
  }
  if (lambda != 0.0) {
    const Vector g = performance_grad(*nets.predictor, x_t, guidance.target, t);
    for (std::size_t i = 0; i < d; ++i) out[i] -= lambda * g[i];
  }
  return out;
}

Vector guided_step(const DiffusionModel& model, const GuidanceNets& nets,
                   std::span<const double> x_t, std::size_t t, std::span<const double> cond,
                   const GuidanceConfig& guidance, Rng& rng) {
  Vector z;
  if (t > 1) z = rng.gaussian_vector(model.design_dim());
  return guided_step(model, nets, x_t, t, cond, guidance, z);
}

Vector sample_chain(const DiffusionModel& model, const GuidanceNets& nets,
                    std::span<const double> cond, const GuidanceConfig& guidance,
                    std::uint64_t seed, std::size_t chain) {
  Rng gen(seed, chain, StreamTag::kGeneration);
  Vector x = gen.gaussian_vector(model.design_dim());
  for (std::size_t t = model.schedule.steps; t >= 1; --t) {
    x = guided_step(model, nets, x, t, cond, guidance, gen);
    if (!all_finite(x)) throw SamplingError("non-finite state at step " + std::to_string(t), t);
  }
  return x;
}

std::vector<Vector> sample(const DiffusionModel& model, const GuidanceNets& nets,
                           const ConditionVector& condition, std::size_t n,
                           const GuidanceConfig& guidance, std::uint64_t seed,
                           const ChainCallback& on_chain) {
  check_guidance(nets, guidance);
  const Vector cond = model.encode_condition(condition);
  std::vector<Vector> out(n);
  parallel_for(n, [&](std::size_t i) {
    out[i] = model.design_stats.denormalize(sample_chain(model, nets, cond, guidance, seed, i));
    if (on_chain) on_chain();
  });
  return out;
}

}  // namespace tabdiff
