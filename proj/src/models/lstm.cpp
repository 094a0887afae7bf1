#include <algorithm>
#include <cmath>

#include "network.hpp"

namespace gpufail::models::detail {
namespace {

// Single-layer LSTM over the l rows; the last hidden state feeds a sigmoid
// unit. Gate order in the stacked weights is i, f, g, o.
class Lstm final : public Network {
 public:
  Lstm(std::size_t l, std::size_t m, std::size_t h) : l_(l), m_(m), h_(h) {
    wx_ = 0;
    wh_ = wx_ + 4 * h * m;
    b_ = wh_ + 4 * h * h;
    wo_ = b_ + 4 * h;
    bo_ = wo_ + h;
    params_.assign(bo_ + 1, 0.0);
    // per step: gates[4h] c[h] h[h]; plus h_0 = c_0 = 0 at step index 0
    step_ = 6 * h;
  }

  void initialize(std::mt19937_64& rng) override {
    std::fill(params_.begin(), params_.end(), 0.0);
    const double a = 1.0 / std::sqrt(static_cast<double>(h_));
    std::uniform_real_distribution<double> u(-a, a);
    for (std::size_t i = wx_; i < b_; ++i) params_[i] = u(rng);
    for (std::size_t j = 0; j < h_; ++j) params_[b_ + h_ + j] = 1.0;  // forget bias
  }

  double forward(std::span<const float> x, Workspace& ws) const override {
    ws.buf.assign((l_ + 1) * step_ + 1 + 4 * h_ + 2 * h_, 0.0);
    const double* p = params_.data();
    for (std::size_t t = 1; t <= l_; ++t) {
      const double* prev = ws.buf.data() + (t - 1) * step_;
      double* cur = ws.buf.data() + t * step_;
      const double* c_prev = prev + 4 * h_;
      const double* h_prev = prev + 5 * h_;
      const float* xt = x.data() + (t - 1) * m_;
      double* gates = cur;
      for (std::size_t r = 0; r < 4 * h_; ++r) {
        double z = p[b_ + r];
        const double* wx = p + wx_ + r * m_;
        for (std::size_t i = 0; i < m_; ++i) z += wx[i] * xt[i];
        const double* wh = p + wh_ + r * h_;
        for (std::size_t i = 0; i < h_; ++i) z += wh[i] * h_prev[i];
        gates[r] = (r >= 2 * h_ && r < 3 * h_) ? std::tanh(z) : sigmoid(z);
      }
      for (std::size_t j = 0; j < h_; ++j) {
        const double c = gates[h_ + j] * c_prev[j] + gates[j] * gates[2 * h_ + j];
        cur[4 * h_ + j] = c;
        cur[5 * h_ + j] = gates[3 * h_ + j] * std::tanh(c);
      }
    }
    const double* h_last = ws.buf.data() + l_ * step_ + 5 * h_;
    double z = p[bo_];
    for (std::size_t j = 0; j < h_; ++j) z += p[wo_ + j] * h_last[j];
    const double out = sigmoid(z);
    ws.buf[(l_ + 1) * step_] = out;
    return out;
  }

  void backward(std::span<const float> x, double d_output, Workspace& ws,
                std::span<double> grad) const override {
    const double* p = params_.data();
    double* g = grad.data();
    double* scratch = ws.buf.data() + (l_ + 1) * step_ + 1;
    double* dpre = scratch;         // 4h
    double* dh = dpre + 4 * h_;     // h
    double* dc = dh + h_;           // h
    const double out = ws.buf[(l_ + 1) * step_];
    const double dz = d_output * out * (1.0 - out);
    const double* h_last = ws.buf.data() + l_ * step_ + 5 * h_;
    g[bo_] += dz;
    for (std::size_t j = 0; j < h_; ++j) {
      g[wo_ + j] += dz * h_last[j];
      dh[j] = dz * p[wo_ + j];
      dc[j] = 0.0;
    }
    for (std::size_t t = l_; t >= 1; --t) {
      const double* prev = ws.buf.data() + (t - 1) * step_;
      const double* cur = ws.buf.data() + t * step_;
      const double* gates = cur;
      const double* c_prev = prev + 4 * h_;
      const double* h_prev = prev + 5 * h_;
      const float* xt = x.data() + (t - 1) * m_;
      for (std::size_t j = 0; j < h_; ++j) {
        const double i = gates[j], f = gates[h_ + j], gg = gates[2 * h_ + j], o = gates[3 * h_ + j];
        const double tc = std::tanh(cur[4 * h_ + j]);
        const double d_o = dh[j] * tc;
        const double dcj = dc[j] + dh[j] * o * (1.0 - tc * tc);
        dpre[j] = dcj * gg * i * (1.0 - i);
        dpre[h_ + j] = dcj * c_prev[j] * f * (1.0 - f);
        dpre[2 * h_ + j] = dcj * i * (1.0 - gg * gg);
        dpre[3 * h_ + j] = d_o * o * (1.0 - o);
        dc[j] = dcj * f;
      }
      std::fill(dh, dh + h_, 0.0);
      for (std::size_t r = 0; r < 4 * h_; ++r) {
        const double d = dpre[r];
        g[b_ + r] += d;
        double* gx = g + wx_ + r * m_;
        for (std::size_t i = 0; i < m_; ++i) gx[i] += d * xt[i];
        double* gh = g + wh_ + r * h_;
        const double* wh = p + wh_ + r * h_;
        for (std::size_t i = 0; i < h_; ++i) {
          gh[i] += d * h_prev[i];
          dh[i] += d * wh[i];
        }
      }
    }
  }

 private:
  std::size_t l_, m_, h_;
  std::size_t wx_, wh_, b_, wo_, bo_, step_;
};

}  // namespace

std::unique_ptr<Network> make_lstm(const ModelSpec& spec, int l, int m) {
  return std::make_unique<Lstm>(static_cast<std::size_t>(l), static_cast<std::size_t>(m),
                                static_cast<std::size_t>(spec.get("hidden")));
}

}  // namespace gpufail::models::detail
