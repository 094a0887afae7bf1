#include <algorithm>

#include "network.hpp"

namespace gpufail::models::detail {
namespace {

// Temporal convolution over a [time][channel] matrix with "same" padding
// followed by ReLU. Weights are laid out [out][tap][in].
struct Conv {
  std::size_t cin, cout, k, w, b;

  std::size_t size() const { return cout * k * cin + cout; }

  void forward(const double* p, const double* in, std::size_t len, double* out) const {
    const auto half = static_cast<std::ptrdiff_t>(k / 2);
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t o = 0; o < cout; ++o) {
        double z = p[b + o];
        for (std::size_t kk = 0; kk < k; ++kk) {
          const std::ptrdiff_t tt = static_cast<std::ptrdiff_t>(t + kk) - half;
          if (tt < 0 || tt >= static_cast<std::ptrdiff_t>(len)) continue;
          const double* wk = p + w + (o * k + kk) * cin;
          const double* x = in + static_cast<std::size_t>(tt) * cin;
          for (std::size_t i = 0; i < cin; ++i) z += wk[i] * x[i];
        }
        out[t * cout + o] = z > 0 ? z : 0;
      }
    }
  }

  // dout holds d(loss)/d(activation); din (optional) accumulates d/d(input).
  void backward(const double* p, const double* in, std::size_t len, const double* out,
                const double* dout, double* g, double* din) const {
    const auto half = static_cast<std::ptrdiff_t>(k / 2);
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t o = 0; o < cout; ++o) {
        if (out[t * cout + o] <= 0) continue;
        const double d = dout[t * cout + o];
        if (d == 0.0) continue;
        g[b + o] += d;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const std::ptrdiff_t tt = static_cast<std::ptrdiff_t>(t + kk) - half;
          if (tt < 0 || tt >= static_cast<std::ptrdiff_t>(len)) continue;
          const std::size_t off = (o * k + kk) * cin;
          const double* x = in + static_cast<std::size_t>(tt) * cin;
          double* gw = g + w + off;
          for (std::size_t i = 0; i < cin; ++i) gw[i] += d * x[i];
          if (din) {
            const double* wk = p + w + off;
            double* dx = din + static_cast<std::size_t>(tt) * cin;
            for (std::size_t i = 0; i < cin; ++i) dx[i] += d * wk[i];
          }
        }
      }
    }
  }
};

// conv, conv, max-pool(2), conv, conv, global average pool, dense ReLU,
// dense sigmoid.
class Cnn1d final : public Network {
 public:
  Cnn1d(std::size_t l, std::size_t m, std::size_t c1, std::size_t c2, std::size_t c3,
        std::size_t c4, std::size_t k, std::size_t fh)
      : l_(l), l2_((l + 1) / 2), m_(m), fh_(fh) {
    std::size_t off = 0;
    auto add = [&](std::size_t cin, std::size_t cout) {
      Conv c{cin, cout, k, off, off + cout * k * cin};
      off += c.size();
      return c;
    };
    conv_[0] = add(m, c1);
    conv_[1] = add(c1, c2);
    conv_[2] = add(c2, c3);
    conv_[3] = add(c3, c4);
    fw1_ = off;
    fb1_ = fw1_ + fh * c4;
    fw2_ = fb1_ + fh;
    fb2_ = fw2_ + fh;
    params_.assign(fb2_ + 1, 0.0);

    // workspace layout: activations then their deltas, same sizes
    std::size_t o = 0;
    auto take = [&](std::size_t n) {
      const std::size_t at = o;
      o += n;
      return at;
    };
    x_ = take(l * m);
    a_[0] = take(l * c1);
    a_[1] = take(l * c2);
    pool_ = take(l2_ * c2);
    arg_ = take(l2_ * c2);
    a_[2] = take(l2_ * c3);
    a_[3] = take(l2_ * c4);
    gap_ = take(c4);
    h_ = take(fh);
    out_ = take(1);
    half_ = o;
    ws_size_ = 2 * o;
  }

  void initialize(std::mt19937_64& rng) override {
    std::fill(params_.begin(), params_.end(), 0.0);
    for (const Conv& c : conv_) {
      he_uniform(std::span(params_).subspan(c.w, c.cout * c.k * c.cin), c.k * c.cin, rng);
    }
    const std::size_t c4 = conv_[3].cout;
    he_uniform(std::span(params_).subspan(fw1_, fh_ * c4), c4, rng);
  }

  double forward(std::span<const float> x, Workspace& ws) const override {
    ws.buf.assign(ws_size_, 0.0);
    double* buf = ws.buf.data();
    const double* p = params_.data();
    std::copy(x.begin(), x.end(), buf + x_);
    conv_[0].forward(p, buf + x_, l_, buf + a_[0]);
    conv_[1].forward(p, buf + a_[0], l_, buf + a_[1]);
    const std::size_t c2 = conv_[1].cout;
    for (std::size_t t = 0; t < l2_; ++t) {
      for (std::size_t c = 0; c < c2; ++c) {
        std::size_t best = 2 * t;
        if (2 * t + 1 < l_ && buf[a_[1] + (2 * t + 1) * c2 + c] > buf[a_[1] + best * c2 + c]) {
          best = 2 * t + 1;
        }
        buf[pool_ + t * c2 + c] = buf[a_[1] + best * c2 + c];
        buf[arg_ + t * c2 + c] = static_cast<double>(best);
      }
    }
    conv_[2].forward(p, buf + pool_, l2_, buf + a_[2]);
    conv_[3].forward(p, buf + a_[2], l2_, buf + a_[3]);
    const std::size_t c4 = conv_[3].cout;
    for (std::size_t c = 0; c < c4; ++c) {
      double s = 0;
      for (std::size_t t = 0; t < l2_; ++t) s += buf[a_[3] + t * c4 + c];
      buf[gap_ + c] = s / static_cast<double>(l2_);
    }
    double z = p[fb2_];
    for (std::size_t j = 0; j < fh_; ++j) {
      double u = p[fb1_ + j];
      for (std::size_t c = 0; c < c4; ++c) u += p[fw1_ + j * c4 + c] * buf[gap_ + c];
      buf[h_ + j] = u > 0 ? u : 0;
      z += p[fw2_ + j] * buf[h_ + j];
    }
    buf[out_] = sigmoid(z);
    return buf[out_];
  }

  void backward(std::span<const float>, double d_output, Workspace& ws,
                std::span<double> grad) const override {
    double* buf = ws.buf.data();
    double* d = buf + half_;  // deltas mirror the activation layout
    std::fill(d, d + half_, 0.0);
    const double* p = params_.data();
    double* g = grad.data();
    const std::size_t c4 = conv_[3].cout;
    const std::size_t c2 = conv_[1].cout;

    const double out = buf[out_];
    const double dz = d_output * out * (1.0 - out);
    g[fb2_] += dz;
    for (std::size_t j = 0; j < fh_; ++j) {
      g[fw2_ + j] += dz * buf[h_ + j];
      if (buf[h_ + j] <= 0) continue;
      const double dh = dz * p[fw2_ + j];
      g[fb1_ + j] += dh;
      for (std::size_t c = 0; c < c4; ++c) {
        g[fw1_ + j * c4 + c] += dh * buf[gap_ + c];
        d[gap_ + c] += dh * p[fw1_ + j * c4 + c];
      }
    }
    for (std::size_t t = 0; t < l2_; ++t) {
      for (std::size_t c = 0; c < c4; ++c) d[a_[3] + t * c4 + c] = d[gap_ + c] / static_cast<double>(l2_);
    }
    conv_[3].backward(p, buf + a_[2], l2_, buf + a_[3], d + a_[3], g, d + a_[2]);
    conv_[2].backward(p, buf + pool_, l2_, buf + a_[2], d + a_[2], g, d + pool_);
    for (std::size_t t = 0; t < l2_; ++t) {
      for (std::size_t c = 0; c < c2; ++c) {
        const auto src = static_cast<std::size_t>(buf[arg_ + t * c2 + c]);
        d[a_[1] + src * c2 + c] += d[pool_ + t * c2 + c];
      }
    }
    conv_[1].backward(p, buf + a_[0], l_, buf + a_[1], d + a_[1], g, d + a_[0]);
    conv_[0].backward(p, buf + x_, l_, buf + a_[0], d + a_[0], g, nullptr);
  }

 private:
  std::size_t l_, l2_, m_, fh_;
  Conv conv_[4];
  std::size_t fw1_, fb1_, fw2_, fb2_;
  std::size_t x_, a_[4], pool_, arg_, gap_, h_, out_, half_, ws_size_;
};

}  // namespace

std::unique_ptr<Network> make_cnn1d(const ModelSpec& spec, int l, int m) {
  auto n = [&](const char* name) { return static_cast<std::size_t>(spec.get(name)); };
  return std::make_unique<Cnn1d>(static_cast<std::size_t>(l), static_cast<std::size_t>(m),
                                 n("channels1"), n("channels2"), n("channels3"), n("channels4"),
                                 n("kernel"), n("fc_hidden"));
}

}  // namespace gpufail::models::detail
