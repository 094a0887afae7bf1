#pragma once

// Neural networks with hand-written backpropagation over a flat parameter
// vector. Every network ends in a single sigmoid unit.

#include <cmath>
#include <cstddef>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "gpufail/models.hpp"

namespace gpufail::models::detail {

/// Per-call activation cache. Networks size it on first use.
struct Workspace {
  std::vector<double> buf;
};

class Network {
 public:
  virtual ~Network() = default;

  std::size_t parameter_count() const { return params_.size(); }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  /// Seeded initialisation; the output layer starts at zero.
  virtual void initialize(std::mt19937_64& rng) = 0;

  /// Output probability; caches activations in `ws` for backward().
  virtual double forward(std::span<const float> x, Workspace& ws) const = 0;

  /// Adds d(loss)/d(theta) to `grad`, given d(loss)/d(output) and the
  /// workspace filled by the matching forward() call.
  virtual void backward(std::span<const float> x, double d_output, Workspace& ws,
                        std::span<double> grad) const = 0;

 protected:
  std::vector<double> params_;
};

std::unique_ptr<Network> make_network(const ModelSpec& spec, int l, int m);

/// Scorer that owns a trained network.
class NetworkScorer final : public Scorer {
 public:
  explicit NetworkScorer(std::unique_ptr<Network> net) : net_(std::move(net)) {}
  double score(std::span<const float> x) const override;
  void save_parameters(std::ostream& out) const override;
  Network& network() { return *net_; }

 private:
  std::unique_ptr<Network> net_;
};

std::shared_ptr<Scorer> train_network(const ModelSpec& spec, int l, int m,
                                      std::span<const features::Instance> data,
                                      std::span<const double> weights,
                                      std::vector<double>& loss_curve);

std::shared_ptr<Scorer> train_gbdt(const ModelSpec& spec, std::span<const features::Instance> data,
                                   std::span<const double> weights, std::vector<double>& loss_curve);

std::shared_ptr<Scorer> load_gbdt(std::istream& in);

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Fills `w` with U(-a, a), a = sqrt(6 / fan_in) (He-uniform).
void he_uniform(std::span<double> w, std::size_t fan_in, std::mt19937_64& rng);

std::unique_ptr<Network> make_mlp(const ModelSpec& spec, int l, int m);
std::unique_ptr<Network> make_cnn1d(const ModelSpec& spec, int l, int m);
std::unique_ptr<Network> make_lstm(const ModelSpec& spec, int l, int m);

}  // namespace gpufail::models::detail
