#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "network.hpp"

namespace gpufail::models {
namespace {

using Table = std::vector<std::pair<std::string_view, double>>;

const Table& default_table(ModelKind kind) {
  static const Table mlp = {{"epochs", 30},       {"batch_size", 32}, {"learning_rate", 0.1},
                            {"momentum", 0.9},    {"patience", 4},    {"min_delta", 1e-3}, {"clip_norm", 1.0},
                            {"hidden1", 64},      {"hidden2", 32}};
  static const Table cnn = {{"epochs", 30},      {"batch_size", 32}, {"learning_rate", 0.1},
                            {"momentum", 0.9},   {"patience", 4},    {"min_delta", 1e-3}, {"clip_norm", 1.0},
                            {"channels1", 16},   {"channels2", 16},  {"channels3", 32},
                            {"channels4", 32},   {"kernel", 3},      {"fc_hidden", 64}};
  static const Table lstm = {{"epochs", 30},    {"batch_size", 32}, {"learning_rate", 0.2},
                             {"momentum", 0.9}, {"patience", 4},    {"min_delta", 1e-3}, {"clip_norm", 1.0},
                             {"hidden", 10}};
  static const Table gbdt = {
      {"trees", 200}, {"depth", 4}, {"shrinkage", 0.1}, {"min_leaf", 10}, {"max_bins", 64}};
  switch (kind) {
    case ModelKind::MLP: return mlp;
    case ModelKind::CNN1D: return cnn;
    case ModelKind::LSTM: return lstm;
    case ModelKind::GBDT: return gbdt;
  }
  throw std::logic_error("unknown model kind");
}

std::string fingerprint(std::span<const features::Instance> data) {
  std::string bytes;
  for (const auto& inst : data) {
    bytes.append(reinterpret_cast<const char*>(&inst.id), sizeof inst.id);
    bytes.push_back(inst.y ? '1' : '0');
    bytes.append(reinterpret_cast<const char*>(inst.x.data()), inst.x.size() * sizeof(float));
  }
  return sha256_hex(bytes);
}

}  // namespace

std::string_view kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::GBDT: return "GBDT";
    case ModelKind::MLP: return "MLP";
    case ModelKind::LSTM: return "LSTM";
    case ModelKind::CNN1D: return "1D-CNN";
  }
  return "?";
}

ModelKind kind_from_name(std::string_view name) {
  for (auto k : {ModelKind::GBDT, ModelKind::MLP, ModelKind::LSTM, ModelKind::CNN1D}) {
    if (name == kind_name(k)) return k;
  }
  if (name == "CNN1D" || name == "CNN") return ModelKind::CNN1D;
  throw ConfigError("unknown model kind '" + std::string(name) +
                    "' (expected GBDT, MLP, LSTM or 1D-CNN)");
}

ModelSpec ModelSpec::defaults(ModelKind kind, std::uint64_t seed) {
  ModelSpec s;
  s.kind = kind;
  s.seed = seed;
  for (const auto& [k, v] : default_table(kind)) s.hyperparameters.emplace(std::string(k), v);
  return s;
}

double ModelSpec::get(std::string_view name) const {
  const auto it = hyperparameters.find(std::string(name));
  if (it != hyperparameters.end()) return it->second;
  for (const auto& [k, v] : default_table(kind)) {
    if (k == name) return v;
  }
  throw ConfigError("model " + std::string(kind_name(kind)) + " has no hyperparameter '" +
                    std::string(name) + "'");
}

void ModelSpec::validate() const {
  const auto& table = default_table(kind);
  for (const auto& [k, v] : hyperparameters) {
    const bool known = std::any_of(table.begin(), table.end(), [&](const auto& e) { return e.first == k; });
    if (!known) {
      throw ConfigError("model " + std::string(kind_name(kind)) + " has no hyperparameter '" + k + "'");
    }
    if (!(v >= 0)) throw ConfigError("hyperparameter '" + k + "' must be non-negative");
  }
}

TrainedModel::TrainedModel(ModelSpec spec, int l, int m, std::shared_ptr<const Scorer> scorer,
                           TrainingMetadata metadata)
    : spec_(std::move(spec)), l_(l), m_(m), scorer_(std::move(scorer)), metadata_(std::move(metadata)) {}

double TrainedModel::score(const features::Instance& instance) const {
  if (instance.l != l_ || instance.m != m_ ||
      instance.x.size() != static_cast<std::size_t>(l_) * static_cast<std::size_t>(m_)) {
    throw std::invalid_argument("instance shape " + std::to_string(instance.l) + "x" +
                                std::to_string(instance.m) + " does not match model shape " +
                                std::to_string(l_) + "x" + std::to_string(m_));
  }
  return scorer_->score(instance.x);
}

void TrainedModel::save(std::ostream& out) const {
  std::ostringstream params;
  scorer_->save_parameters(params);
  nlohmann::ordered_json j;
  j["format"] = "gpufail-model";
  j["version"] = 1;
  j["kind"] = kind_name(spec_.kind);
  j["seed"] = spec_.seed;
  j["hyperparameters"] = spec_.hyperparameters;
  j["l"] = l_;
  j["m"] = m_;
  j["metadata"] = {{"seed", metadata_.seed},
                   {"data_fingerprint", metadata_.data_fingerprint},
                   {"n_train", metadata_.n_train},
                   {"loss_curve", metadata_.loss_curve}};
  j["parameters"] = nlohmann::ordered_json::parse(params.str());
  out << j.dump() << '\n';
}

TrainedModel TrainedModel::load(std::istream& in) {
  const auto j = nlohmann::json::parse(in);
  if (j.at("format") != "gpufail-model" || j.at("version") != 1) {
    throw std::invalid_argument("unsupported model file format");
  }
  ModelSpec spec;
  spec.kind = kind_from_name(j.at("kind").get<std::string>());
  spec.seed = j.at("seed").get<std::uint64_t>();
  spec.hyperparameters = j.at("hyperparameters").get<std::map<std::string, double>>();
  const int l = j.at("l").get<int>();
  const int m = j.at("m").get<int>();
  TrainingMetadata meta;
  const auto& jm = j.at("metadata");
  meta.seed = jm.at("seed").get<std::uint64_t>();
  meta.data_fingerprint = jm.at("data_fingerprint").get<std::string>();
  meta.n_train = jm.at("n_train").get<std::size_t>();
  meta.loss_curve = jm.at("loss_curve").get<std::vector<double>>();

  std::shared_ptr<const Scorer> scorer;
  if (spec.kind == ModelKind::GBDT) {
    std::istringstream params(j.at("parameters").dump());
    scorer = detail::load_gbdt(params);
  } else {
    auto net = detail::make_network(spec, l, m);
    const auto theta = j.at("parameters").get<std::vector<double>>();
    if (theta.size() != net->parameter_count()) {
      throw std::invalid_argument("model file has " + std::to_string(theta.size()) +
                                  " parameters, architecture needs " +
                                  std::to_string(net->parameter_count()));
    }
    std::copy(theta.begin(), theta.end(), net->parameters().begin());
    scorer = std::make_shared<detail::NetworkScorer>(std::move(net));
  }
  return TrainedModel(std::move(spec), l, m, std::move(scorer), std::move(meta));
}

double weighted_loss(std::span<const double> predictions, std::span<const double> labels,
                     std::span<const double> weights) {
  if (predictions.size() != labels.size() || (!weights.empty() && weights.size() != labels.size())) {
    throw std::invalid_argument("weighted_loss: length mismatch");
  }
  if (predictions.empty()) throw std::invalid_argument("weighted_loss: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    const double r = w * (predictions[i] - labels[i]);
    total += r * r;
  }
  return total / static_cast<double>(predictions.size());
}

TrainedModel train(const ModelSpec& spec, std::span<const features::Instance> data,
                   const InstanceWeights* weights) {
  spec.validate();
  if (data.empty()) throw std::invalid_argument("cannot train on an empty dataset");
  const int l = data.front().l;
  const int m = data.front().m;
  for (const auto& inst : data) {
    if (inst.l != l || inst.m != m) throw std::invalid_argument("instance shape mismatch in training data");
  }
  std::vector<double> w(data.size(), 1.0);
  if (weights) {
    if (weights->w.size() != data.size()) {
      throw std::invalid_argument("instance weights length does not match the training data");
    }
    for (double v : weights->w) {
      if (!(v > 0)) throw std::invalid_argument("instance weights must be positive");
    }
    w = weights->w;
  }

  TrainingMetadata meta;
  meta.seed = spec.seed;
  meta.n_train = data.size();
  meta.data_fingerprint = fingerprint(data);
  auto full = ModelSpec::defaults(spec.kind, spec.seed);
  for (const auto& [k, v] : spec.hyperparameters) full.hyperparameters[k] = v;

  std::shared_ptr<const Scorer> scorer =
      spec.kind == ModelKind::GBDT ? detail::train_gbdt(full, data, w, meta.loss_curve)
                                   : detail::train_network(full, l, m, data, w, meta.loss_curve);
  return TrainedModel(std::move(full), l, m, std::move(scorer), std::move(meta));
}

std::vector<ScoredInstance> predict(const TrainedModel& model,
                                    std::span<const features::Instance> instances) {
  std::vector<ScoredInstance> out(instances.size());
  constexpr std::size_t kChunk = 256;
  const std::size_t chunks = (instances.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t hi = std::min(instances.size(), (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < hi; ++i) {
      out[i] = {instances[i].id, model.score(instances[i])};
    }
  });
  return out;
}

InstanceWeights class_weights(std::span<const features::Instance> data, double positive,
                              double negative) {
  InstanceWeights w;
  w.w.reserve(data.size());
  for (const auto& inst : data) w.w.push_back(inst.y ? positive : negative);
  return w;
}

void write_loss_csv(std::ostream& out, const TrainedModel& model) {
  out << "step,loss\n";
  const auto& curve = model.metadata().loss_curve;
  for (std::size_t i = 0; i < curve.size(); ++i) out << i + 1 << ',' << curve[i] << '\n';
}

}  // namespace gpufail::models
