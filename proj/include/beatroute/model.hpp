#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "beatroute/beat_class.hpp"
#include "beatroute/features.hpp"

namespace beatroute::model {

enum class Tier { Minimal, Rich };

std::string to_string(Tier t);
Tier tier_from_string(const std::string& s);
std::vector<std::size_t> mask_for(Tier t);

struct Hyperparameters {
  int epochs = 2000;
  double learning_rate = 0.5;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
  int checkpoint_every = 100;
};

struct Standardization {
  std::vector<double> mean;
  std::vector<double> scale;
};

inline constexpr double kScaleFloor = 1e-8;

/// Per-column mean and population standard deviation (floored at 1e-8).
Standardization standardize_fit(const std::vector<std::vector<double>>& rows);
std::vector<double> standardize_apply(const Standardization& s, std::span<const double> row);

struct Posterior {
  std::array<double, kNumClasses> probs{};

  BeatClass argmax() const;
  double confidence() const;
};

Posterior softmax(const std::array<double, kNumClasses>& scores);

/// Weights are row-major kNumClasses x (|mask| + 1); the last column is the bias.
struct ClassifierParams {
  Tier tier = Tier::Rich;
  std::vector<std::size_t> feature_mask;
  std::vector<double> weights;
  Standardization standardization;
  Hyperparameters hyper;
  std::array<bool, kNumClasses> class_present{};
  std::vector<double> loss_checkpoints;

  std::size_t n_inputs() const { return feature_mask.size(); }
  std::size_t row_width() const { return feature_mask.size() + 1; }
};

/// Mean class-weighted cross-entropy plus (l2 / 2) * |W|^2 over the feature
/// weights of an already standardised design. Row weights default to
/// balanced: n / (classes present * n_c).
class Objective {
 public:
  Objective(std::vector<std::vector<double>> design, std::vector<BeatClass> labels,
            std::vector<double> row_weights, double l2);

  static Objective balanced(const ClassifierParams& params, std::span<const features::FeatureVector> rows,
                            std::span<const BeatClass> labels);

  /// Objective value; fills `grad` (same layout as the weights) when non-null.
  double evaluate(std::span<const double> weights, std::vector<double>* grad) const;

  std::size_t n_rows() const { return labels_.size(); }
  std::size_t width() const { return width_; }

 private:
  std::vector<double> x_;  // n x width, bias column appended
  std::vector<BeatClass> labels_;
  std::vector<double> row_weights_;
  double weight_total_ = 0.0;
  double l2_ = 0.0;
  std::size_t width_ = 0;
};

std::array<double, kNumClasses> balanced_class_weights(std::span<const BeatClass> labels);

/// Full-batch gradient descent from a seeded small random start. The step
/// halves whenever it would raise the objective, so the loss never increases.
/// Throws ValidationError on empty input, a single class, or a non-finite value.
ClassifierParams train(std::span<const features::FeatureVector> rows, std::span<const BeatClass> labels,
                       Tier tier, const Hyperparameters& hyper = {});

Posterior predict(const ClassifierParams& params, std::span<const double> row);

using GradientFn = std::function<std::vector<double>(std::span<const double> weights)>;

/// max |g_analytic - g_fd| / max(1e-8, |g_fd|) over all weights, with central
/// differences at step 1e-5. An empty batch yields 0.
double grad_check(const ClassifierParams& params, std::span<const features::FeatureVector> rows,
                  std::span<const BeatClass> labels, const GradientFn& analytic = {});

nlohmann::json to_json(const ClassifierParams& p);
ClassifierParams params_from_json(const nlohmann::json& j);

}  // namespace beatroute::model
