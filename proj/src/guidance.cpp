#include "tabdiff/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tabdiff/error.hpp"

namespace tabdiff {

namespace {

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

Split split_indices(std::size_t n, double test_fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed, 0, StreamTag::kShuffle);
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  std::size_t n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * test_fraction));
  if (n >= 2 && test_fraction > 0.0) n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
  Split s;
  s.test.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  if (s.test.empty()) s.test = s.train;
  return s;
}

void check_designs(const std::vector<Vector>& designs, std::size_t dim) {
  for (const auto& d : designs)
    if (d.size() != dim) throw ShapeError("design length does not match the network");
}

/// Builds a batch of guidance-net inputs, noising a share of the rows.
Matrix make_batch(const std::vector<Vector>& designs, std::span<const std::size_t> rows,
                  std::size_t embed_dim, const GuidanceTrainConfig& cfg, Rng& rng) {
  const std::size_t dim = designs.front().size();
  Matrix batch(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim + embed_dim));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Vector& x0 = designs[rows[r]];
    std::size_t t = 0;
    Vector x = x0;
    if (cfg.schedule && rng.uniform() >= cfg.clean_fraction) {
      t = static_cast<std::size_t>(rng.integer(1, static_cast<std::int64_t>(cfg.schedule->steps)));
      const Vector eps = rng.gaussian_vector(dim);
      x = q_sample(x0, t, eps, *cfg.schedule);
    }
    const Vector in = guidance_input(x, t, embed_dim);
    std::copy(in.begin(), in.end(), batch.row(static_cast<Eigen::Index>(r)).data());
  }
  return batch;
}

template <typename LossGrad>
double fit(Network& net, const NetworkSpec& train_spec, const std::vector<Vector>& designs,
           const std::vector<std::size_t>& train_rows, std::size_t embed_dim,
           const GuidanceTrainConfig& cfg, LossGrad&& loss_grad) {
  auto opt = OptimizerState::make(train_spec, OptimizerKind::Adam, cfg.learning_rate);
  Rng rng(cfg.seed, 0, StreamTag::kTraining);
  std::vector<std::size_t> order = train_rows;
  const std::size_t bs = std::max<std::size_t>(1, cfg.batch_size);
  double epoch_loss = 0.0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t stop = std::min(order.size(), start + bs);
      std::span<const std::size_t> rows(order.data() + start, stop - start);
      const Matrix input = make_batch(designs, rows, embed_dim, cfg, rng);
      ForwardTrace trace;
      const Matrix out = forward(train_spec, net.params, input, &trace);
      Matrix grad(out.rows(), 1);
      double batch_loss = 0.0;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto [l, g] = loss_grad(rows[r], out(static_cast<Eigen::Index>(r), 0));
        batch_loss += l;
        grad(static_cast<Eigen::Index>(r), 0) = g / static_cast<double>(rows.size());
      }
      if (!std::isfinite(batch_loss))
        throw NumericError("non-finite loss in guidance training at epoch " +
                           std::to_string(epoch));
      const Gradients g = backward(train_spec, net.params, trace, grad);
      optimizer_step(net.params, g.params, opt);
      total += batch_loss;
      count += rows.size();
    }
    epoch_loss = count ? total / static_cast<double>(count) : 0.0;
  }
  return epoch_loss;
}

}  // namespace

void GuidanceConfig::validate() const {
  if (!(gamma >= 0.0) || !(lambda >= 0.0))
    throw ConfigError("guidance weights gamma and lambda must be >= 0");
  if (!std::isfinite(target)) throw ConfigError("guidance target must be finite");
}

Vector guidance_input(std::span<const double> x, std::size_t t, std::size_t embed_dim) {
  Vector in(x.begin(), x.end());
  if (embed_dim > 0) {
    const Vector e = time_embed(static_cast<double>(t), embed_dim);
    in.insert(in.end(), e.begin(), e.end());
  }
  return in;
}

FeasibilityClassifier FeasibilityClassifier::create(std::size_t design_dim, std::size_t embed_dim,
                                                    const std::vector<std::size_t>& widths,
                                                    Rng& rng) {
  FeasibilityClassifier c;
  c.design_dim = design_dim;
  c.embed_dim = embed_dim;
  c.net.spec = mlp_spec(design_dim + embed_dim, widths, 1, Activation::SiLU, Activation::Sigmoid);
  c.net.params = ParameterSet::glorot(c.net.spec, rng);
  return c;
}

double FeasibilityClassifier::probability(std::span<const double> x, std::size_t t) const {
  if (x.size() != design_dim) throw ShapeError("classifier input length mismatch");
  return predict(net.spec, net.params, guidance_input(x, t, embed_dim))[0];
}

Vector FeasibilityClassifier::gradient(std::span<const double> x, std::size_t t) const {
  if (x.size() != design_dim) throw ShapeError("classifier input length mismatch");
  const auto fwd = forward(net.spec, net.params, guidance_input(x, t, embed_dim));
  const double one = 1.0;
  const auto g = backward(net.spec, net.params, fwd.trace, std::span<const double>(&one, 1));
  return Vector(g.input.begin(), g.input.begin() + static_cast<std::ptrdiff_t>(design_dim));
}

PerformancePredictor PerformancePredictor::create(std::size_t design_dim, std::size_t embed_dim,
                                                  std::size_t width, std::size_t layers,
                                                  Rng& rng) {
  PerformancePredictor p;
  p.design_dim = design_dim;
  p.embed_dim = embed_dim;
  p.net.spec = resnet_spec(design_dim + embed_dim, width, layers, 1);
  p.net.params = ParameterSet::glorot(p.net.spec, rng);
  return p;
}

double PerformancePredictor::predict_normalized(std::span<const double> x, std::size_t t) const {
  if (x.size() != design_dim) throw ShapeError("predictor input length mismatch");
  return tabdiff::predict(net.spec, net.params, guidance_input(x, t, embed_dim))[0];
}

double PerformancePredictor::predict(std::span<const double> x, std::size_t t) const {
  return target_mean + target_std * predict_normalized(x, t);
}

Vector classifier_grad(const FeasibilityClassifier& clf, std::span<const double> x,
                       std::size_t t) {
  return clf.gradient(x, t);
}

Vector performance_grad(const PerformancePredictor& pred, std::span<const double> x,
                        double target, std::size_t t) {
  if (x.size() != pred.design_dim) throw ShapeError("predictor input length mismatch");
  const auto fwd = forward(pred.net.spec, pred.net.params, guidance_input(x, t, pred.embed_dim));
  const double residual = pred.normalize_target(target) - fwd.output[0];
  const double seed = -2.0 * residual;
  const auto g = backward(pred.net.spec, pred.net.params, fwd.trace, std::span<const double>(&seed, 1));
  return Vector(g.input.begin(), g.input.begin() + static_cast<std::ptrdiff_t>(pred.design_dim));
}

ClassifierReport train_classifier(FeasibilityClassifier& clf, const std::vector<Vector>& designs,
                                  const std::vector<int>& labels, const GuidanceTrainConfig& cfg) {
  if (designs.empty() || designs.size() != labels.size())
    throw DataError("classifier training needs one label per design");
  check_designs(designs, clf.design_dim);
  bool has0 = false, has1 = false;
  for (int l : labels) {
    if (l != 0 && l != 1) throw DataError("feasibility labels must be 0 or 1");
    (l ? has1 : has0) = true;
  }
  if (!(has0 && has1)) throw DataError("classifier training needs both feasible and infeasible rows");

  const Split split = split_indices(designs.size(), cfg.test_fraction, cfg.seed);
  // Train on logits: same parameters, identity output, BCE gradient p - y.
  NetworkSpec logits = clf.net.spec;
  logits.layers.back().activation = Activation::Identity;
  ClassifierReport rep;
  rep.n_train = split.train.size();
  rep.n_test = split.test.size();
  rep.final_loss = fit(clf.net, logits, designs, split.train, clf.embed_dim, cfg,
                       [&](std::size_t row, double z) {
                         const double y = labels[row];
                         const double p = sigmoid(z);
                         // log(1 + e^z) - y z, stable form
                         const double loss = std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::abs(z)));
                         return std::pair<double, double>(loss, p - y);
                       });
  std::size_t correct = 0;
  for (std::size_t i : split.test) {
    const int guess = clf.probability(designs[i], 0) >= 0.5 ? 1 : 0;
    correct += guess == labels[i];
  }
  rep.test_accuracy = static_cast<double>(correct) / static_cast<double>(split.test.size());
  return rep;
}

PredictorReport train_predictor(PerformancePredictor& pred, const std::vector<Vector>& designs,
                                const std::vector<double>& targets,
                                const GuidanceTrainConfig& cfg) {
  if (designs.empty() || designs.size() != targets.size())
    throw DataError("predictor training needs one target per design");
  check_designs(designs, pred.design_dim);
  const Split split = split_indices(designs.size(), cfg.test_fraction, cfg.seed);

  double mean = 0.0;
  for (std::size_t i : split.train) mean += targets[i];
  mean /= static_cast<double>(split.train.size());
  double var = 0.0;
  for (std::size_t i : split.train) var += (targets[i] - mean) * (targets[i] - mean);
  var /= static_cast<double>(split.train.size());
  pred.target_mean = mean;
  pred.target_std = var > 0.0 ? std::sqrt(var) : 1.0;

  PredictorReport rep;
  rep.n_train = split.train.size();
  rep.n_test = split.test.size();
  rep.final_loss = fit(pred.net, pred.net.spec, designs, split.train, pred.embed_dim, cfg,
                       [&](std::size_t row, double out) {
                         const double y = pred.normalize_target(targets[row]);
                         const double d = out - y;
                         return std::pair<double, double>(d * d, 2.0 * d);
                       });

  double ape = 0.0;
  std::size_t ape_n = 0;
  double ss_res = 0.0, ss_tot = 0.0, test_mean = 0.0;
  for (std::size_t i : split.test) test_mean += targets[i];
  test_mean /= static_cast<double>(split.test.size());
  for (std::size_t i : split.test) {
    const double y = targets[i];
    const double p = pred.predict(designs[i], 0);
    if (y != 0.0) {
      ape += std::abs(p - y) / std::abs(y);
      ++ape_n;
    }
    ss_res += (p - y) * (p - y);
    ss_tot += (y - test_mean) * (y - test_mean);
  }
  rep.test_mape = ape_n ? 100.0 * ape / static_cast<double>(ape_n) : 0.0;
  rep.r2_defined = ss_tot > 0.0 && var > 0.0;
  rep.test_r2 = rep.r2_defined ? 1.0 - ss_res / ss_tot : 0.0;
  return rep;
}

}  // namespace tabdiff
