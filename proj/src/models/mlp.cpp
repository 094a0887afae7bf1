#include <algorithm>

#include "network.hpp"

namespace gpufail::models::detail {
namespace {

// Input flattened to l*m, two ReLU hidden layers, sigmoid output.
class Mlp final : public Network {
 public:
  Mlp(std::size_t d, std::size_t h1, std::size_t h2) : d_(d), h1_(h1), h2_(h2) {
    w1_ = 0;
    b1_ = w1_ + h1 * d;
    w2_ = b1_ + h1;
    b2_ = w2_ + h2 * h1;
    w3_ = b2_ + h2;
    b3_ = w3_ + h2;
    params_.assign(b3_ + 1, 0.0);
  }

  void initialize(std::mt19937_64& rng) override {
    std::fill(params_.begin(), params_.end(), 0.0);
    he_uniform(std::span(params_).subspan(w1_, h1_ * d_), d_, rng);
    he_uniform(std::span(params_).subspan(w2_, h2_ * h1_), h1_, rng);
  }

  // ws: a1[h1] a2[h2] out d1[h1] d2[h2]
  double forward(std::span<const float> x, Workspace& ws) const override {
    ws.buf.resize(2 * (h1_ + h2_) + 1);
    double* a1 = ws.buf.data();
    double* a2 = a1 + h1_;
    const double* p = params_.data();
    for (std::size_t j = 0; j < h1_; ++j) {
      const double* w = p + w1_ + j * d_;
      double z = p[b1_ + j];
      for (std::size_t i = 0; i < d_; ++i) z += w[i] * x[i];
      a1[j] = z > 0 ? z : 0;
    }
    for (std::size_t j = 0; j < h2_; ++j) {
      const double* w = p + w2_ + j * h1_;
      double z = p[b2_ + j];
      for (std::size_t i = 0; i < h1_; ++i) z += w[i] * a1[i];
      a2[j] = z > 0 ? z : 0;
    }
    double z = p[b3_];
    for (std::size_t i = 0; i < h2_; ++i) z += p[w3_ + i] * a2[i];
    const double out = sigmoid(z);
    a2[h2_] = out;
    return out;
  }

  void backward(std::span<const float> x, double d_output, Workspace& ws,
                std::span<double> grad) const override {
    const double* a1 = ws.buf.data();
    const double* a2 = a1 + h1_;
    const double out = a2[h2_];
    double* d1 = ws.buf.data() + h1_ + h2_ + 1;
    double* d2 = d1 + h1_;
    const double* p = params_.data();
    double* g = grad.data();

    const double dz3 = d_output * out * (1.0 - out);
    g[b3_] += dz3;
    for (std::size_t i = 0; i < h2_; ++i) {
      g[w3_ + i] += dz3 * a2[i];
      d2[i] = a2[i] > 0 ? dz3 * p[w3_ + i] : 0.0;
    }
    std::fill(d1, d1 + h1_, 0.0);
    for (std::size_t j = 0; j < h2_; ++j) {
      if (d2[j] == 0.0) continue;
      g[b2_ + j] += d2[j];
      const double* w = p + w2_ + j * h1_;
      double* gw = g + w2_ + j * h1_;
      for (std::size_t i = 0; i < h1_; ++i) {
        gw[i] += d2[j] * a1[i];
        d1[i] += d2[j] * w[i];
      }
    }
    for (std::size_t j = 0; j < h1_; ++j) {
      if (a1[j] <= 0 || d1[j] == 0.0) continue;
      g[b1_ + j] += d1[j];
      double* gw = g + w1_ + j * d_;
      for (std::size_t i = 0; i < d_; ++i) gw[i] += d1[j] * x[i];
    }
  }

 private:
  std::size_t d_, h1_, h2_;
  std::size_t w1_, b1_, w2_, b2_, w3_, b3_;
};

}  // namespace

std::unique_ptr<Network> make_mlp(const ModelSpec& spec, int l, int m) {
  return std::make_unique<Mlp>(static_cast<std::size_t>(l) * m,
                               static_cast<std::size_t>(spec.get("hidden1")),
                               static_cast<std::size_t>(spec.get("hidden2")));
}

}  // namespace gpufail::models::detail
