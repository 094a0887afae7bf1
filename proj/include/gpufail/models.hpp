#pragma once

// Trainable failure scorers behind one interface. Neural kinds minimise the
// per-instance weighted squared loss
//
//     loss = 1/N * sum_i (w_i * (g(X_i) - y_i))^2
//
// with mini-batch gradient descent and momentum; GBDT fits least-squares
// regression trees on residuals with shrinkage.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gpufail/features.hpp"

namespace gpufail::models {

enum class ModelKind { GBDT, MLP, LSTM, CNN1D };

std::string_view kind_name(ModelKind kind);
/// Throws ConfigError naming the valid kinds.
ModelKind kind_from_name(std::string_view name);

struct ModelSpec {
  ModelKind kind = ModelKind::MLP;
  std::map<std::string, double> hyperparameters;  // overrides; see defaults()
  std::uint64_t seed = 1;

  /// Spec with every hyperparameter of `kind` set to its default.
  static ModelSpec defaults(ModelKind kind, std::uint64_t seed = 1);
  /// Hyperparameter value (override or default). Throws on unknown names.
  double get(std::string_view name) const;
  /// Throws ConfigError on hyperparameter names `kind` does not know.
  void validate() const;

  bool operator==(const ModelSpec&) const = default;
};

struct ScoredInstance {
  std::uint64_t id = 0;
  double score = 0.0;
};

struct InstanceWeights {
  std::vector<double> w;
};

struct TrainingMetadata {
  std::vector<double> loss_curve;  // per epoch (neural) or per boosting round (GBDT)
  std::uint64_t seed = 0;
  std::string data_fingerprint;
  std::size_t n_train = 0;
};

/// Internal scorer interface; implemented per kind.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual double score(std::span<const float> x) const = 0;
  virtual void save_parameters(std::ostream& out) const = 0;
};

/// Immutable trained model; cheap to copy and safe to share across threads.
class TrainedModel {
 public:
  TrainedModel(ModelSpec spec, int l, int m, std::shared_ptr<const Scorer> scorer,
               TrainingMetadata metadata);

  ModelKind kind() const { return spec_.kind; }
  const ModelSpec& spec() const { return spec_; }
  const TrainingMetadata& metadata() const { return metadata_; }
  int l() const { return l_; }
  int m() const { return m_; }

  /// Score in [0, 1]. Throws std::invalid_argument on a shape mismatch.
  double score(const features::Instance& instance) const;

  void save(std::ostream& out) const;
  static TrainedModel load(std::istream& in);

 private:
  ModelSpec spec_;
  int l_ = 0;
  int m_ = 0;
  std::shared_ptr<const Scorer> scorer_;
  TrainingMetadata metadata_;
};

/// Weighted squared loss over aligned predictions, labels and weights (an
/// empty weight span means all ones).
double weighted_loss(std::span<const double> predictions, std::span<const double> labels,
                     std::span<const double> weights = {});

TrainedModel train(const ModelSpec& spec, std::span<const features::Instance> data,
                   const InstanceWeights* weights = nullptr);

/// Scores in input order.
std::vector<ScoredInstance> predict(const TrainedModel& model,
                                    std::span<const features::Instance> instances);

/// Max relative error between the analytic loss gradient and central finite
/// differences (step `step`) over a random subset of parameters. Neural kinds
/// only. Relative error is |a - n| / max(|a|, |n|, 1e-6).
double gradient_check(const ModelSpec& spec, std::span<const features::Instance> batch,
                      std::size_t max_parameters = 300, double step = 1e-5);

/// Positive-class instance weights (`positive` for y=1, `negative` else).
InstanceWeights class_weights(std::span<const features::Instance> data, double positive,
                              double negative);

void write_loss_csv(std::ostream& out, const TrainedModel& model);

}  // namespace gpufail::models
