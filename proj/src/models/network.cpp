#include "network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace gpufail::models::detail {

void he_uniform(std::span<double> w, std::size_t fan_in, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> u(-a, a);
  for (double& v : w) v = u(rng);
}

std::unique_ptr<Network> make_network(const ModelSpec& spec, int l, int m) {
  switch (spec.kind) {
    case ModelKind::MLP: return make_mlp(spec, l, m);
    case ModelKind::CNN1D: return make_cnn1d(spec, l, m);
    case ModelKind::LSTM: return make_lstm(spec, l, m);
    case ModelKind::GBDT: break;
  }
  throw std::invalid_argument("GBDT is not a neural network");
}

double NetworkScorer::score(std::span<const float> x) const {
  Workspace ws;
  return net_->forward(x, ws);
}

void NetworkScorer::save_parameters(std::ostream& out) const {
  const auto p = net_->parameters();
  out << nlohmann::json(std::vector<double>(p.begin(), p.end())).dump();
}

std::shared_ptr<Scorer> train_network(const ModelSpec& spec, int l, int m,
                                      std::span<const features::Instance> data,
                                      std::span<const double> weights,
                                      std::vector<double>& loss_curve) {
  auto net = make_network(spec, l, m);
  std::mt19937_64 rng(spec.seed);
  net->initialize(rng);

  const auto epochs = static_cast<int>(spec.get("epochs"));
  const auto batch = std::max<std::size_t>(1, static_cast<std::size_t>(spec.get("batch_size")));
  const double lr = spec.get("learning_rate");
  const double mu = spec.get("momentum");
  const auto patience = static_cast<int>(spec.get("patience"));
  const double min_delta = spec.get("min_delta");
  const double clip = spec.get("clip_norm");

  const std::size_t n = data.size();
  const std::size_t np = net->parameter_count();
  std::vector<double> grad(np), velocity(np, 0.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Workspace ws;

  // Steps use weights rescaled to unit mean square; the minimiser is unchanged
  // but large class weights no longer blow up the effective step size.
  double mean_w2 = 0.0;
  for (double w : weights) mean_w2 += w * w;
  mean_w2 /= static_cast<double>(n);

  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t lo = 0; lo < n; lo += batch) {
      const std::size_t hi = std::min(n, lo + batch);
      const double scale = 1.0 / static_cast<double>(hi - lo);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = lo; k < hi; ++k) {
        const auto& inst = data[order[k]];
        const double w2 = weights[order[k]] * weights[order[k]];
        const double r = net->forward(inst.x, ws) - (inst.y ? 1.0 : 0.0);
        total += w2 * r * r;
        net->backward(inst.x, 2.0 * w2 / mean_w2 * r * scale, ws, grad);
      }
      double norm2 = 0.0;
      for (double g : grad) norm2 += g * g;
      const double shrink = clip > 0 && norm2 > clip * clip ? clip / std::sqrt(norm2) : 1.0;
      auto theta = net->parameters();
      for (std::size_t j = 0; j < np; ++j) {
        velocity[j] = mu * velocity[j] - lr * shrink * grad[j];
        theta[j] += velocity[j];
      }
    }
    const double loss = total / static_cast<double>(n);
    loss_curve.push_back(loss);
    if (loss < best * (1.0 - min_delta)) {
      best = loss;
      stale = 0;
    } else if (++stale >= patience) {
      break;
    }
  }
  return std::make_shared<NetworkScorer>(std::move(net));
}

}  // namespace gpufail::models::detail

namespace gpufail::models {

double gradient_check(const ModelSpec& spec, std::span<const features::Instance> batch,
                      std::size_t max_parameters, double step) {
  if (spec.kind == ModelKind::GBDT) {
    throw std::invalid_argument("gradient check needs a neural model kind");
  }
  if (batch.empty()) throw std::invalid_argument("gradient check needs a non-empty batch");
  spec.validate();
  const int l = batch.front().l;
  const int m = batch.front().m;
  for (const auto& inst : batch) {
    if (inst.l != l || inst.m != m) throw std::invalid_argument("instance shape mismatch in batch");
  }

  auto net = detail::make_network(spec, l, m);
  std::mt19937_64 rng(spec.seed);
  net->initialize(rng);
  // Move away from the zero output layer so every path carries gradient.
  std::normal_distribution<double> jitter(0.0, 0.1);
  for (double& v : net->parameters()) v += jitter(rng);
  std::uniform_real_distribution<double> wdist(0.5, 2.0);
  std::vector<double> w(batch.size());
  for (double& v : w) v = wdist(rng);

  detail::Workspace ws;
  const double scale = 1.0 / static_cast<double>(batch.size());
  auto loss = [&] {
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const double r = net->forward(batch[i].x, ws) - (batch[i].y ? 1.0 : 0.0);
      total += w[i] * w[i] * r * r;
    }
    return total * scale;
  };

  std::vector<double> grad(net->parameter_count(), 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double r = net->forward(batch[i].x, ws) - (batch[i].y ? 1.0 : 0.0);
    net->backward(batch[i].x, 2.0 * w[i] * w[i] * r * scale, ws, grad);
  }

  std::vector<std::size_t> idx(net->parameter_count());
  std::iota(idx.begin(), idx.end(), 0);
  if (idx.size() > max_parameters) {
    std::vector<std::size_t> chosen;
    std::sample(idx.begin(), idx.end(), std::back_inserter(chosen), max_parameters, rng);
    idx = std::move(chosen);
  }

  auto theta = net->parameters();
  double worst = 0.0;
  for (std::size_t j : idx) {
    const double saved = theta[j];
    theta[j] = saved + step;
    const double up = loss();
    theta[j] = saved - step;
    const double down = loss();
    theta[j] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(grad[j]), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(grad[j] - numeric) / denom);
  }
  return worst;
}

}  // namespace gpufail::models
