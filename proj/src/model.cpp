#include "beatroute/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "beatroute/errors.hpp"
#include "beatroute/rng.hpp"

namespace beatroute::model {

std::string to_string(Tier t) { return t == Tier::Minimal ? "minimal" : "rich"; }

Tier tier_from_string(const std::string& s) {
  if (s == "minimal") return Tier::Minimal;
  if (s == "rich") return Tier::Rich;
  throw ParseError("unknown tier '" + s + "'");
}

std::vector<std::size_t> mask_for(Tier t) {
  return t == Tier::Minimal ? features::minimal_mask() : features::rich_mask();
}

Standardization standardize_fit(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw ValidationError("standardize_fit: no rows");
  const std::size_t d = rows.front().size();
  Standardization s;
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 0.0);
  for (const auto& r : rows) {
    if (r.size() != d) throw ValidationError("standardize_fit: ragged rows");
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += r[j];
  }
  const double n = static_cast<double>(rows.size());
  for (auto& m : s.mean) m /= n;
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < d; ++j) {
      const double dev = r[j] - s.mean[j];
      s.scale[j] += dev * dev;
    }
  }
  for (auto& sc : s.scale) sc = std::max(std::sqrt(sc / n), kScaleFloor);
  return s;
}

std::vector<double> standardize_apply(const Standardization& s, std::span<const double> row) {
  if (row.size() != s.mean.size()) throw ValidationError("standardize_apply: dimension mismatch");
  std::vector<double> out(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) out[j] = (row[j] - s.mean[j]) / s.scale[j];
  return out;
}

BeatClass Posterior::argmax() const {
  const auto it = std::max_element(probs.begin(), probs.end());
  return static_cast<BeatClass>(std::distance(probs.begin(), it));
}

double Posterior::confidence() const { return *std::max_element(probs.begin(), probs.end()); }

Posterior softmax(const std::array<double, kNumClasses>& scores) {
  const double top = *std::max_element(scores.begin(), scores.end());
  Posterior p;
  double z = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    p.probs[c] = std::exp(scores[c] - top);
    z += p.probs[c];
  }
  for (auto& v : p.probs) v /= z;
  return p;
}

std::array<double, kNumClasses> balanced_class_weights(std::span<const BeatClass> labels) {
  std::array<double, kNumClasses> counts{};
  for (auto l : labels) counts[index_of(l)] += 1.0;
  const auto present = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0.0; });
  std::array<double, kNumClasses> w{};
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (counts[c] > 0.0) w[c] = static_cast<double>(labels.size()) / (static_cast<double>(present) * counts[c]);
  }
  return w;
}

Objective::Objective(std::vector<std::vector<double>> design, std::vector<BeatClass> labels,
                     std::vector<double> row_weights, double l2)
    : labels_(std::move(labels)), row_weights_(std::move(row_weights)), l2_(l2) {
  if (design.size() != labels_.size() || row_weights_.size() != labels_.size()) {
    throw ValidationError("objective: rows, labels and weights differ in length");
  }
  width_ = design.empty() ? 1 : design.front().size() + 1;
  x_.reserve(design.size() * width_);
  for (const auto& r : design) {
    if (r.size() + 1 != width_) throw ValidationError("objective: ragged design");
    x_.insert(x_.end(), r.begin(), r.end());
    x_.push_back(1.0);
  }
  weight_total_ = std::accumulate(row_weights_.begin(), row_weights_.end(), 0.0);
}

Objective Objective::balanced(const ClassifierParams& params, std::span<const features::FeatureVector> rows,
                              std::span<const BeatClass> labels) {
  std::vector<std::vector<double>> design;
  design.reserve(rows.size());
  for (const auto& r : rows) {
    std::vector<double> masked;
    masked.reserve(params.feature_mask.size());
    for (auto j : params.feature_mask) masked.push_back(r[j]);
    design.push_back(standardize_apply(params.standardization, masked));
  }
  const auto cw = balanced_class_weights(labels);
  std::vector<double> w;
  w.reserve(labels.size());
  for (auto l : labels) w.push_back(cw[index_of(l)]);
  return Objective(std::move(design), {labels.begin(), labels.end()}, std::move(w), params.hyper.l2);
}

double Objective::evaluate(std::span<const double> weights, std::vector<double>* grad) const {
  if (weights.size() != kNumClasses * width_) throw ValidationError("objective: weight size mismatch");
  if (grad) grad->assign(weights.size(), 0.0);
  double loss = 0.0;
  std::array<double, kNumClasses> scores{};
  const std::size_t n = labels_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = &x_[i * width_];
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      const double* wc = &weights[c * width_];
      double s = 0.0;
      for (std::size_t j = 0; j < width_; ++j) s += wc[j] * xi[j];
      scores[c] = s;
    }
    const double top = *std::max_element(scores.begin(), scores.end());
    double z = 0.0;
    for (auto& s : scores) {
      s = std::exp(s - top);
      z += s;
    }
    const auto y = index_of(labels_[i]);
    const double wi = row_weights_[i] / weight_total_;
    loss += wi * -std::log(scores[y] / z);
    if (grad) {
      for (std::size_t c = 0; c < kNumClasses; ++c) {
        const double coef = wi * (scores[c] / z - (c == y ? 1.0 : 0.0));
        double* gc = &(*grad)[c * width_];
        for (std::size_t j = 0; j < width_; ++j) gc[j] += coef * xi[j];
      }
    }
  }
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    for (std::size_t j = 0; j + 1 < width_; ++j) {
      const double w = weights[c * width_ + j];
      loss += 0.5 * l2_ * w * w;
      if (grad) (*grad)[c * width_ + j] += l2_ * w;
    }
  }
  return loss;
}

ClassifierParams train(std::span<const features::FeatureVector> rows, std::span<const BeatClass> labels,
                       Tier tier, const Hyperparameters& hyper) {
  if (rows.empty()) throw ValidationError("train: no rows");
  if (rows.size() != labels.size()) throw ValidationError("train: rows and labels differ in length");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (double v : rows[i]) {
      if (!std::isfinite(v)) throw ValidationError("train: non-finite feature in row " + std::to_string(i));
    }
  }
  ClassifierParams p;
  p.tier = tier;
  p.feature_mask = mask_for(tier);
  p.hyper = hyper;
  for (auto l : labels) p.class_present[index_of(l)] = true;
  if (std::count(p.class_present.begin(), p.class_present.end(), true) < 2) {
    throw ValidationError("train: at least two distinct classes are required");
  }
  const std::size_t expected = tier == Tier::Minimal ? 8 : features::kDim;
  if (p.feature_mask.size() != expected) throw ValidationError("train: tier mask has unexpected size");

  std::vector<std::vector<double>> masked;
  masked.reserve(rows.size());
  for (const auto& r : rows) {
    std::vector<double> m;
    for (auto j : p.feature_mask) m.push_back(r[j]);
    masked.push_back(std::move(m));
  }
  p.standardization = standardize_fit(masked);
  const auto objective = Objective::balanced(p, rows, labels);

  const std::size_t width = p.row_width();
  Rng rng(hyper.seed);
  p.weights.assign(kNumClasses * width, 0.0);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (!p.class_present[c]) continue;
    for (std::size_t j = 0; j + 1 < width; ++j) p.weights[c * width + j] = 0.01 * rng.normal();
  }
  auto freeze = [&](std::vector<double>& g) {
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      if (p.class_present[c]) continue;
      for (std::size_t j = 0; j + 1 < width; ++j) g[c * width + j] = 0.0;
    }
  };

  std::vector<double> grad, trial_grad, trial(p.weights.size());
  double loss = objective.evaluate(p.weights, &grad);
  freeze(grad);
  double lr = hyper.learning_rate;
  p.loss_checkpoints.push_back(loss);
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    bool moved = false;
    for (int attempt = 0; attempt < 40; ++attempt) {
      for (std::size_t k = 0; k < trial.size(); ++k) trial[k] = p.weights[k] - lr * grad[k];
      const double trial_loss = objective.evaluate(trial, &trial_grad);
      if (trial_loss <= loss) {
        p.weights.swap(trial);
        grad.swap(trial_grad);
        freeze(grad);
        loss = trial_loss;
        moved = true;
        break;
      }
      lr *= 0.5;
    }
    if (hyper.checkpoint_every > 0 && epoch % hyper.checkpoint_every == 0) p.loss_checkpoints.push_back(loss);
    if (!moved) break;
  }
  if (p.loss_checkpoints.back() != loss) p.loss_checkpoints.push_back(loss);
  return p;
}

Posterior predict(const ClassifierParams& params, std::span<const double> row) {
  if (row.size() != features::kDim) {
    throw ValidationError("predict: expected " + std::to_string(features::kDim) + " features, got " +
                          std::to_string(row.size()));
  }
  const std::size_t width = params.row_width();
  std::vector<double> x(width, 1.0);
  for (std::size_t j = 0; j < params.feature_mask.size(); ++j) {
    const double v = row[params.feature_mask[j]];
    if (!std::isfinite(v)) throw ValidationError("predict: non-finite feature");
    x[j] = (v - params.standardization.mean[j]) / params.standardization.scale[j];
  }
  std::array<double, kNumClasses> scores{};
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    double s = 0.0;
    for (std::size_t j = 0; j < width; ++j) s += params.weights[c * width + j] * x[j];
    scores[c] = s;
  }
  return softmax(scores);
}

double grad_check(const ClassifierParams& params, std::span<const features::FeatureVector> rows,
                  std::span<const BeatClass> labels, const GradientFn& analytic) {
  if (rows.empty()) return 0.0;
  const auto objective = Objective::balanced(params, rows, labels);
  std::vector<double> g;
  if (analytic) {
    g = analytic(params.weights);
  } else {
    objective.evaluate(params.weights, &g);
  }
  constexpr double h = 1e-5;
  std::vector<double> w = params.weights;
  double worst = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double orig = w[k];
    w[k] = orig + h;
    const double up = objective.evaluate(w, nullptr);
    w[k] = orig - h;
    const double down = objective.evaluate(w, nullptr);
    w[k] = orig;
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(g[k] - fd) / std::max(1e-8, std::abs(fd)));
  }
  return worst;
}

nlohmann::json to_json(const ClassifierParams& p) {
  std::vector<bool> present(p.class_present.begin(), p.class_present.end());
  return {{"tier", to_string(p.tier)},
          {"mask", p.feature_mask},
          {"weights", p.weights},
          {"mean", p.standardization.mean},
          {"scale", p.standardization.scale},
          {"class_present", present},
          {"loss_checkpoints", p.loss_checkpoints},
          {"hyperparameters",
           {{"epochs", p.hyper.epochs},
            {"learning_rate", p.hyper.learning_rate},
            {"l2", p.hyper.l2},
            {"checkpoint_every", p.hyper.checkpoint_every}}},
          {"seed", p.hyper.seed}};
}

ClassifierParams params_from_json(const nlohmann::json& j) {
  ClassifierParams p;
  p.tier = tier_from_string(j.at("tier").get<std::string>());
  p.feature_mask = j.at("mask").get<std::vector<std::size_t>>();
  p.weights = j.at("weights").get<std::vector<double>>();
  p.standardization.mean = j.at("mean").get<std::vector<double>>();
  p.standardization.scale = j.at("scale").get<std::vector<double>>();
  const auto present = j.at("class_present").get<std::vector<bool>>();
  if (present.size() != kNumClasses) throw ParseError("classifier: class_present must have 4 entries");
  std::copy(present.begin(), present.end(), p.class_present.begin());
  p.loss_checkpoints = j.value("loss_checkpoints", std::vector<double>{});
  const auto& h = j.at("hyperparameters");
  p.hyper.epochs = h.at("epochs").get<int>();
  p.hyper.learning_rate = h.at("learning_rate").get<double>();
  p.hyper.l2 = h.at("l2").get<double>();
  p.hyper.checkpoint_every = h.value("checkpoint_every", 100);
  p.hyper.seed = j.at("seed").get<std::uint64_t>();

  if (p.feature_mask != mask_for(p.tier)) throw ParseError("classifier: mask does not match tier");
  if (p.weights.size() != kNumClasses * p.row_width()) throw ParseError("classifier: weight count mismatch");
  if (p.standardization.mean.size() != p.n_inputs() || p.standardization.scale.size() != p.n_inputs()) {
    throw ParseError("classifier: standardisation size mismatch");
  }
  for (double s : p.standardization.scale) {
    if (!(s > 0.0)) throw ParseError("classifier: scale entries must be positive");
  }
  for (double w : p.weights) {
    if (!std::isfinite(w)) throw ParseError("classifier: non-finite weight");
  }
  return p;
}

}  // namespace beatroute::model
