#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lifelog/image.hpp"

namespace lifelog {

// Linear softmax classifier over downsampled RGB pixels. Stands in for a
// fine-tuned CNN: it only has to emit per-image class probabilities.
struct SoftmaxModel {
  static constexpr int kDecodeSize = 256;

  std::size_t num_classes = 0;
  int input_size = 32;          // images are downsampled to input_size^2
  std::vector<double> weights;  // num_classes x dims, row-major
  std::vector<double> bias;     // num_classes

  std::size_t dims() const { return 3 * static_cast<std::size_t>(input_size) * input_size; }
  std::span<const double> row(std::size_t c) const { return {weights.data() + c * dims(), dims()}; }
  bool operator==(const SoftmaxModel&) const = default;
};

SoftmaxModel make_softmax_model(std::size_t num_classes, int input_size);

struct SgdConfig {
  double learning_rate = 0.0001;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::size_t iterations = 2000;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  // Fallback mode: plain SGD (momentum must be 0); a step that raises the
  // full training objective is undone and the learning rate halved.
  bool monotone = false;

  void validate() const;
};

// Pixels scaled to [0,1], decoded to 256x256 then area-averaged to
// input_size^2; channel planes R, G, B.
std::vector<float> pixel_input(const RgbImage& image, int input_size);

// Dense design matrix of pixel inputs with class labels.
struct PixelSamples {
  std::size_t dims = 0;
  std::vector<float> values;  // size() x dims
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const float> row(std::size_t i) const { return {values.data() + i * dims, dims}; }
  void add(std::span<const float> x, std::size_t label);
};

std::vector<double> softmax(std::span<const double> logits);
std::vector<double> softmax_logits(const SoftmaxModel& model, std::span<const float> x);
std::vector<double> softmax_predict_proba(const SoftmaxModel& model, std::span<const float> x);
std::vector<double> softmax_predict_proba(const SoftmaxModel& model, const RgbImage& image);

// Mean cross-entropy over the given rows plus (weight_decay / 2) * ||W||^2.
double softmax_objective(const SoftmaxModel& model, const PixelSamples& samples,
                         double weight_decay, std::span<const std::size_t> rows = {});

struct SoftmaxGradient {
  std::vector<double> weights;
  std::vector<double> bias;
};

SoftmaxGradient softmax_gradient(const SoftmaxModel& model, const PixelSamples& samples,
                                 double weight_decay, std::span<const std::size_t> rows = {});

struct TrainingLog {
  std::vector<double> batch_losses;  // default mode: mini-batch objective per iteration
  std::vector<double> objective;     // monotone mode: full objective after each iteration
  double initial_objective = 0.0;    // full training objective before the first step
  double final_objective = 0.0;
  double final_learning_rate = 0.0;
};

struct SoftmaxTraining {
  SoftmaxModel model;
  TrainingLog log;
};

// Zero-initialized model trained by mini-batch SGD with momentum.
SoftmaxTraining train_softmax(const PixelSamples& samples, std::size_t num_classes, int input_size,
                              const SgdConfig& config);

// Continues SGD from `start`. Rows of classes with trainable[c] == false are
// left untouched; an empty mask trains every row.
SoftmaxTraining continue_softmax(SoftmaxModel start, const PixelSamples& samples,
                                 const SgdConfig& config, const std::vector<bool>& trainable = {});

// Model with extra zero rows appended for new classes.
SoftmaxModel extend_classes(const SoftmaxModel& model, std::size_t num_classes);

using GradientFn =
    std::function<SoftmaxGradient(const SoftmaxModel&, const PixelSamples&, double weight_decay)>;

// Max relative error between an analytic gradient and central finite
// differences of softmax_objective over a random subset of parameters.
double gradient_check(const SoftmaxModel& model, const PixelSamples& batch, double weight_decay,
                      double epsilon, std::size_t parameters = 200, std::uint64_t seed = 0,
                      const GradientFn& analytic = {});

std::string format_softmax(const SoftmaxModel& model);
SoftmaxModel parse_softmax(std::string_view text);
void save_softmax(const SoftmaxModel& model, const std::filesystem::path& path);
SoftmaxModel load_softmax(const std::filesystem::path& path);

}  // namespace lifelog
