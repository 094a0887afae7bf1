#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "network.hpp"

namespace gpufail::models::detail {
namespace {

struct Node {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct Tree {
  std::vector<Node> nodes;

  double eval(std::span<const float> x) const {
    const Node* n = &nodes[0];
    while (n->feature >= 0) {
      n = &nodes[static_cast<std::size_t>(x[static_cast<std::size_t>(n->feature)] <= n->threshold
                                               ? n->left
                                               : n->right)];
    }
    return n->value;
  }
};

class GbdtScorer final : public Scorer {
 public:
  GbdtScorer(double base, double shrinkage, std::vector<Tree> trees)
      : base_(base), shrinkage_(shrinkage), trees_(std::move(trees)) {}

  double raw(std::span<const float> x) const {
    double f = base_;
    for (const Tree& t : trees_) f += shrinkage_ * t.eval(x);
    return f;
  }

  double score(std::span<const float> x) const override { return std::clamp(raw(x), 0.0, 1.0); }

  void save_parameters(std::ostream& out) const override {
    nlohmann::json j;
    j["base"] = base_;
    j["shrinkage"] = shrinkage_;
    auto& trees = j["trees"] = nlohmann::json::array();
    for (const Tree& t : trees_) {
      nlohmann::json jt;
      for (const Node& n : t.nodes) {
        jt["feature"].push_back(n.feature);
        jt["threshold"].push_back(n.threshold);
        jt["left"].push_back(n.left);
        jt["right"].push_back(n.right);
        jt["value"].push_back(n.value);
      }
      trees.push_back(std::move(jt));
    }
    out << j.dump();
  }

  static std::shared_ptr<Scorer> load(std::istream& in) {
    const auto j = nlohmann::json::parse(in);
    std::vector<Tree> trees;
    for (const auto& jt : j.at("trees")) {
      Tree t;
      const auto& f = jt.at("feature");
      for (std::size_t i = 0; i < f.size(); ++i) {
        t.nodes.push_back({f[i].get<int>(), jt.at("threshold")[i].get<double>(),
                           jt.at("left")[i].get<int>(), jt.at("right")[i].get<int>(),
                           jt.at("value")[i].get<double>()});
      }
      if (t.nodes.empty()) throw std::invalid_argument("empty tree in model file");
      trees.push_back(std::move(t));
    }
    return std::make_shared<GbdtScorer>(j.at("base").get<double>(), j.at("shrinkage").get<double>(),
                                        std::move(trees));
  }

 private:
  double base_;
  double shrinkage_;
  std::vector<Tree> trees_;
};

struct Bin {
  double g = 0.0;  // sum of w^2 * residual
  double h = 0.0;  // sum of w^2
  std::size_t n = 0;
};

// Histogram-based least-squares tree builder over pre-binned features.
class Builder {
 public:
  Builder(std::span<const features::Instance> data, std::size_t max_bins) : n_(data.size()) {
    d_ = data.front().x.size();
    thresholds_.resize(d_);
    offsets_.resize(d_ + 1, 0);
    bins_.resize(n_ * d_);
    std::vector<float> col(n_);
    for (std::size_t f = 0; f < d_; ++f) {
      for (std::size_t i = 0; i < n_; ++i) col[i] = data[i].x[f];
      std::sort(col.begin(), col.end());
      col.erase(std::unique(col.begin(), col.end()), col.end());
      auto& th = thresholds_[f];
      if (col.size() <= max_bins) {
        th.assign(col.begin(), col.end() - 1);
      } else {
        for (std::size_t j = 1; j < max_bins; ++j) {
          const double q = col[j * (col.size() - 1) / max_bins];
          if (th.empty() || q > th.back()) th.push_back(q);
        }
      }
      offsets_[f + 1] = offsets_[f] + th.size() + 1;
      for (std::size_t i = 0; i < n_; ++i) {
        const double v = data[i].x[f];
        bins_[i * d_ + f] =
            static_cast<std::uint8_t>(std::lower_bound(th.begin(), th.end(), v) - th.begin());
      }
    }
  }

  Tree build(std::span<const double> g, std::span<const double> h, int max_depth,
             std::size_t min_leaf) {
    g_ = g;
    h_ = h;
    max_depth_ = max_depth;
    min_leaf_ = min_leaf;
    Tree tree;
    std::vector<std::size_t> all(n_);
    std::iota(all.begin(), all.end(), 0);
    auto hist = histogram(all);
    grow(tree, all, hist, 0);
    return tree;
  }

 private:
  std::vector<Bin> histogram(const std::vector<std::size_t>& rows) const {
    std::vector<Bin> hist(offsets_[d_]);
    for (std::size_t i : rows) {
      const std::uint8_t* b = bins_.data() + i * d_;
      const double gi = g_[i], hi = h_[i];
      for (std::size_t f = 0; f < d_; ++f) {
        Bin& bin = hist[offsets_[f] + b[f]];
        bin.g += gi;
        bin.h += hi;
        ++bin.n;
      }
    }
    return hist;
  }

  int grow(Tree& tree, std::vector<std::size_t>& rows, const std::vector<Bin>& hist, int depth) {
    double G = 0.0, H = 0.0;
    for (std::size_t b = offsets_[0]; b < offsets_[1]; ++b) {
      G += hist[b].g;
      H += hist[b].h;
    }
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes[static_cast<std::size_t>(id)].value = H > 0 ? G / H : 0.0;
    if (depth >= max_depth_ || rows.size() < 2 * min_leaf_ || H <= 0) return id;

    const double parent = G * G / H;
    double best_gain = 1e-12;
    std::size_t best_f = d_, best_b = 0;
    for (std::size_t f = 0; f < d_; ++f) {
      double gl = 0.0, hl = 0.0;
      std::size_t nl = 0;
      const std::size_t nb = offsets_[f + 1] - offsets_[f];
      for (std::size_t b = 0; b + 1 < nb; ++b) {
        const Bin& bin = hist[offsets_[f] + b];
        gl += bin.g;
        hl += bin.h;
        nl += bin.n;
        if (nl < min_leaf_) continue;
        if (rows.size() - nl < min_leaf_) break;
        const double hr = H - hl;
        if (hl <= 0 || hr <= 0) continue;
        const double gr = G - gl;
        const double gain = gl * gl / hl + gr * gr / hr - parent;
        if (gain > best_gain) {
          best_gain = gain;
          best_f = f;
          best_b = b;
        }
      }
    }
    if (best_f == d_) return id;

    std::vector<std::size_t> left, right;
    for (std::size_t i : rows) (bins_[i * d_ + best_f] <= best_b ? left : right).push_back(i);
    rows.clear();
    rows.shrink_to_fit();

    std::vector<Bin> lh, rh;
    if (depth + 1 < max_depth_) {
      const bool left_small = left.size() <= right.size();
      auto small = histogram(left_small ? left : right);
      std::vector<Bin> large(hist.size());
      for (std::size_t k = 0; k < hist.size(); ++k) {
        large[k] = {hist[k].g - small[k].g, hist[k].h - small[k].h, hist[k].n - small[k].n};
      }
      lh = left_small ? std::move(small) : std::move(large);
      rh = left_small ? std::move(large) : std::move(small);
    } else {
      lh = leaf_totals(left);
      rh = leaf_totals(right);
    }
    const int l = grow(tree, left, lh, depth + 1);
    const int r = grow(tree, right, rh, depth + 1);
    Node& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = static_cast<int>(best_f);
    node.threshold = thresholds_[best_f][best_b];
    node.left = l;
    node.right = r;
    return id;
  }

  // Histogram for a node that will be a leaf: only feature 0 totals are read.
  std::vector<Bin> leaf_totals(const std::vector<std::size_t>& rows) const {
    std::vector<Bin> hist(offsets_[1]);
    for (std::size_t i : rows) {
      hist[0].g += g_[i];
      hist[0].h += h_[i];
      ++hist[0].n;
    }
    return hist;
  }

  std::size_t n_, d_ = 0;
  std::vector<std::vector<double>> thresholds_;
  std::vector<std::size_t> offsets_;
  std::vector<std::uint8_t> bins_;
  std::span<const double> g_, h_;
  int max_depth_ = 4;
  std::size_t min_leaf_ = 1;
};

}  // namespace

std::shared_ptr<Scorer> train_gbdt(const ModelSpec& spec, std::span<const features::Instance> data,
                                   std::span<const double> weights, std::vector<double>& loss_curve) {
  const auto trees = static_cast<int>(spec.get("trees"));
  const auto depth = static_cast<int>(spec.get("depth"));
  const double shrinkage = spec.get("shrinkage");
  const auto min_leaf = static_cast<std::size_t>(spec.get("min_leaf"));
  const auto max_bins = static_cast<std::size_t>(spec.get("max_bins"));
  if (max_bins < 2 || max_bins > 256) throw ConfigError("max_bins must be in [2, 256]");

  const std::size_t n = data.size();
  std::vector<double> h(n), y(n), f(n), g(n);
  double sh = 0.0, shy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    h[i] = weights[i] * weights[i];
    y[i] = data[i].y ? 1.0 : 0.0;
    sh += h[i];
    shy += h[i] * y[i];
  }
  const double base = shy / sh;
  std::fill(f.begin(), f.end(), base);

  Builder builder(data, max_bins);
  std::vector<Tree> forest;
  for (int t = 0; t < trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) g[i] = h[i] * (y[i] - f[i]);
    Tree tree = builder.build(g, h, depth, std::max<std::size_t>(min_leaf, 1));
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      f[i] += shrinkage * tree.eval(data[i].x);
      loss += h[i] * (f[i] - y[i]) * (f[i] - y[i]);
    }
    loss_curve.push_back(loss / static_cast<double>(n));
    forest.push_back(std::move(tree));
  }
  return std::make_shared<GbdtScorer>(base, shrinkage, std::move(forest));
}

std::shared_ptr<Scorer> load_gbdt(std::istream& in) { return GbdtScorer::load(in); }

}  // namespace gpufail::models::detail
