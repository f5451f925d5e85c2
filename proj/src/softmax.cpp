#include "lifelog/softmax.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lifelog/error.hpp"
#include "lifelog/rng.hpp"
#include "lifelog/text_io.hpp"

namespace lifelog {
namespace {

std::vector<std::size_t> all_rows(const PixelSamples& samples, std::span<const std::size_t> rows) {
  if (!rows.empty()) return {rows.begin(), rows.end()};
  std::vector<std::size_t> out(samples.size());
  std::iota(out.begin(), out.end(), 0);
  return out;
}

void check_dims(const SoftmaxModel& model, const PixelSamples& samples) {
  if (samples.dims != model.dims()) {
    throw ValidationError("pixel samples have " + std::to_string(samples.dims) +
                          " dims, model expects " + std::to_string(model.dims()));
  }
}

double log_sum_exp(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double l : logits) s += std::exp(l - m);
  return m + std::log(s);
}

// Adds this row's cross-entropy gradient into (gw, gb); returns its loss.
double accumulate_row(const SoftmaxModel& model, std::span<const float> x, std::size_t label,
                      std::vector<double>& gw, std::vector<double>& gb) {
  auto logits = softmax_logits(model, x);
  const double loss = log_sum_exp(logits) - logits[label];
  auto p = softmax(logits);
  p[label] -= 1.0;
  const std::size_t d = model.dims();
  for (std::size_t c = 0; c < model.num_classes; ++c) {
    const double g = p[c];
    gb[c] += g;
    if (g == 0.0) continue;
    double* row = gw.data() + c * d;
    for (std::size_t j = 0; j < d; ++j) row[j] += g * static_cast<double>(x[j]);
  }
  return loss;
}

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace

SoftmaxModel make_softmax_model(std::size_t num_classes, int input_size) {
  if (num_classes < 1) throw ValidationError("softmax model needs at least one class");
  if (input_size < 1) throw ValidationError("softmax input size must be >= 1");
  SoftmaxModel m;
  m.num_classes = num_classes;
  m.input_size = input_size;
  m.weights.assign(num_classes * m.dims(), 0.0);
  m.bias.assign(num_classes, 0.0);
  return m;
}

void SgdConfig::validate() const {
  if (!(learning_rate > 0)) throw ValidationError("learning_rate must be > 0");
  if (!(momentum >= 0 && momentum < 1)) throw ValidationError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0)) throw ValidationError("weight_decay must be >= 0");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (monotone && momentum != 0) throw ValidationError("monotone mode requires momentum = 0");
}

std::vector<float> pixel_input(const RgbImage& image, int input_size) {
  if (image.pixel_count() == 0) throw ValidationError("cannot take pixel input of an empty image");
  auto planar = to_planar(image);
  if (image.width != SoftmaxModel::kDecodeSize || image.height != SoftmaxModel::kDecodeSize) {
    planar = resample_area(planar, SoftmaxModel::kDecodeSize, SoftmaxModel::kDecodeSize);
  }
  auto small = resample_area(planar, input_size, input_size);
  std::vector<float> out(small.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(small.values[i] / 255.0);
  return out;
}

void PixelSamples::add(std::span<const float> x, std::size_t label) {
  if (dims == 0 && labels.empty()) dims = x.size();
  if (x.size() != dims) throw ValidationError("pixel sample dimension mismatch");
  values.insert(values.end(), x.begin(), x.end());
  labels.push_back(label);
}

std::vector<double> softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) s += (p[c] = std::exp(logits[c] - m));
  for (auto& v : p) v /= s;
  return p;
}

std::vector<double> softmax_logits(const SoftmaxModel& model, std::span<const float> x) {
  if (x.size() != model.dims()) {
    throw ValidationError("pixel input has " + std::to_string(x.size()) + " dims, model expects " +
                          std::to_string(model.dims()));
  }
  std::vector<double> logits(model.bias);
  const std::size_t d = model.dims();
  for (std::size_t c = 0; c < model.num_classes; ++c) {
    const double* w = model.weights.data() + c * d;
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += w[j] * static_cast<double>(x[j]);
    logits[c] += acc;
  }
  return logits;
}

std::vector<double> softmax_predict_proba(const SoftmaxModel& model, std::span<const float> x) {
  return softmax(softmax_logits(model, x));
}

std::vector<double> softmax_predict_proba(const SoftmaxModel& model, const RgbImage& image) {
  return softmax_predict_proba(model, pixel_input(image, model.input_size));
}

double softmax_objective(const SoftmaxModel& model, const PixelSamples& samples,
                         double weight_decay, std::span<const std::size_t> rows) {
  check_dims(model, samples);
  auto idx = all_rows(samples, rows);
  if (idx.empty()) throw ValidationError("objective over zero samples");
  double loss = 0.0;
  for (auto i : idx) {
    auto logits = softmax_logits(model, samples.row(i));
    loss += log_sum_exp(logits) - logits[samples.labels[i]];
  }
  return loss / static_cast<double>(idx.size()) + 0.5 * weight_decay * squared_norm(model.weights);
}

SoftmaxGradient softmax_gradient(const SoftmaxModel& model, const PixelSamples& samples,
                                 double weight_decay, std::span<const std::size_t> rows) {
  check_dims(model, samples);
  auto idx = all_rows(samples, rows);
  SoftmaxGradient g{std::vector<double>(model.weights.size(), 0.0),
                    std::vector<double>(model.num_classes, 0.0)};
  for (auto i : idx) accumulate_row(model, samples.row(i), samples.labels[i], g.weights, g.bias);
  const double inv = 1.0 / static_cast<double>(idx.size());
  for (std::size_t j = 0; j < g.weights.size(); ++j) {
    g.weights[j] = g.weights[j] * inv + weight_decay * model.weights[j];
  }
  for (auto& b : g.bias) b *= inv;
  return g;
}

SoftmaxTraining continue_softmax(SoftmaxModel model, const PixelSamples& samples,
                                 const SgdConfig& config, const std::vector<bool>& trainable) {
  config.validate();
  check_dims(model, samples);
  if (samples.size() == 0) throw ValidationError("softmax training set is empty");
  for (auto l : samples.labels) {
    if (l >= model.num_classes) throw ValidationError("softmax label index out of range");
  }
  if (!trainable.empty() && trainable.size() != model.num_classes) {
    throw ValidationError("trainable mask length must equal the class count");
  }
  auto is_trainable = [&](std::size_t c) { return trainable.empty() || trainable[c]; };

  const std::size_t d = model.dims(), k = model.num_classes, n = samples.size();
  SoftmaxTraining out;
  out.log.initial_objective = softmax_objective(model, samples, config.weight_decay);

  std::vector<double> vel_w(model.weights.size(), 0.0), vel_b(k, 0.0);
  std::vector<double> grad_w(model.weights.size()), grad_b(k);
  auto rng = make_rng({config.seed, 0x5347444dull});
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  double lr = config.learning_rate;
  double current = out.log.initial_objective;
  std::vector<std::size_t> batch;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    batch.clear();
    for (std::size_t b = 0; b < std::min(config.batch_size, n); ++b) {
      if (cursor == n) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }

    std::fill(grad_w.begin(), grad_w.end(), 0.0);
    std::fill(grad_b.begin(), grad_b.end(), 0.0);
    double loss = 0.0;
    for (auto i : batch) loss += accumulate_row(model, samples.row(i), samples.labels[i], grad_w, grad_b);
    const double inv = 1.0 / static_cast<double>(batch.size());
    loss = loss * inv + 0.5 * config.weight_decay * squared_norm(model.weights);
    if (!std::isfinite(loss)) {
      throw RuntimeFailure("non-finite softmax loss at iteration " + std::to_string(it));
    }

    const auto saved_w = config.monotone ? model.weights : std::vector<double>{};
    const auto saved_b = config.monotone ? model.bias : std::vector<double>{};
    for (std::size_t c = 0; c < k; ++c) {
      if (!is_trainable(c)) continue;
      double* w = model.weights.data() + c * d;
      double* v = vel_w.data() + c * d;
      const double* g = grad_w.data() + c * d;
      for (std::size_t j = 0; j < d; ++j) {
        v[j] = config.momentum * v[j] - lr * (g[j] * inv + config.weight_decay * w[j]);
        w[j] += v[j];
      }
      vel_b[c] = config.momentum * vel_b[c] - lr * grad_b[c] * inv;
      model.bias[c] += vel_b[c];
    }

    if (config.monotone) {
      const double next = softmax_objective(model, samples, config.weight_decay);
      if (next > current) {
        model.weights = saved_w;
        model.bias = saved_b;
        lr *= 0.5;
      } else {
        current = next;
      }
      out.log.objective.push_back(current);
    } else {
      out.log.batch_losses.push_back(loss);
    }
  }
  out.log.final_objective = softmax_objective(model, samples, config.weight_decay);
  out.log.final_learning_rate = lr;
  out.model = std::move(model);
  return out;
}

SoftmaxTraining train_softmax(const PixelSamples& samples, std::size_t num_classes, int input_size,
                              const SgdConfig& config) {
  return continue_softmax(make_softmax_model(num_classes, input_size), samples, config);
}

SoftmaxModel extend_classes(const SoftmaxModel& model, std::size_t num_classes) {
  if (num_classes < model.num_classes) throw ValidationError("cannot shrink a softmax model");
  SoftmaxModel out = model;
  out.num_classes = num_classes;
  out.weights.resize(num_classes * model.dims(), 0.0);
  out.bias.resize(num_classes, 0.0);
  return out;
}

double gradient_check(const SoftmaxModel& model, const PixelSamples& batch, double weight_decay,
                      double epsilon, std::size_t parameters, std::uint64_t seed,
                      const GradientFn& analytic) {
  if (batch.size() == 0) throw ValidationError("gradient check needs a non-empty batch");
  if (!(epsilon > 0)) throw ValidationError("gradient check epsilon must be > 0");
  const auto grad = analytic ? analytic(model, batch, weight_decay)
                             : softmax_gradient(model, batch, weight_decay);
  const std::size_t n_w = model.weights.size();
  const std::size_t total = n_w + model.bias.size();

  std::vector<std::size_t> chosen(total);
  std::iota(chosen.begin(), chosen.end(), 0);
  if (parameters < total) {
    auto rng = make_rng({seed, 0x47434b});
    std::shuffle(chosen.begin(), chosen.end(), rng);
    chosen.resize(parameters);
  }

  SoftmaxModel probe = model;
  double worst = 0.0;
  for (auto p : chosen) {
    double& param = p < n_w ? probe.weights[p] : probe.bias[p - n_w];
    const double original = param;
    param = original + epsilon;
    const double up = softmax_objective(probe, batch, weight_decay);
    param = original - epsilon;
    const double down = softmax_objective(probe, batch, weight_decay);
    param = original;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double exact = p < n_w ? grad.weights[p] : grad.bias[p - n_w];
    // Absolute floor: near a stationary point both values are rounding noise.
    const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(exact - numeric) / denom);
  }
  return worst;
}

std::string format_softmax(const SoftmaxModel& model) {
  std::string out = "lifelog-softmax 1\nclasses " + std::to_string(model.num_classes) +
                    "\ninput_size " + std::to_string(model.input_size) + "\nbias";
  for (double b : model.bias) out += '\t' + format_double(b);
  out += '\n';
  for (std::size_t c = 0; c < model.num_classes; ++c) {
    out += "w";
    for (double w : model.row(c)) out += '\t' + format_double(w);
    out += '\n';
  }
  return out;
}

SoftmaxModel parse_softmax(std::string_view text) {
  auto lines = split(text, '\n');
  long long k = 0, s = 0;
  if (lines.size() < 4 || lines[0] != "lifelog-softmax 1" || !lines[1].starts_with("classes ") ||
      !parse_int(lines[1].substr(8), k) || !lines[2].starts_with("input_size ") ||
      !parse_int(lines[2].substr(11), s) || k < 1 || s < 1) {
    throw ValidationError("not a softmax model v1");
  }
  auto model = make_softmax_model(static_cast<std::size_t>(k), static_cast<int>(s));
  auto read_row = [&](std::size_t line, std::string_view tag, std::span<double> out) {
    if (line >= lines.size()) throw ValidationError("truncated softmax model");
    auto f = split(lines[line], '\t');
    if (f.size() != out.size() + 1 || f[0] != tag) throw ValidationError("malformed softmax row");
    for (std::size_t j = 0; j < out.size(); ++j) {
      if (!parse_double(f[j + 1], out[j])) throw ValidationError("bad number in softmax model");
    }
  };
  read_row(3, "bias", model.bias);
  for (std::size_t c = 0; c < model.num_classes; ++c) {
    read_row(4 + c, "w", std::span<double>(model.weights.data() + c * model.dims(), model.dims()));
  }
  return model;
}

void save_softmax(const SoftmaxModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, format_softmax(model));
}

SoftmaxModel load_softmax(const std::filesystem::path& path) {
  return parse_softmax(read_file(path));
}

}  // namespace lifelog
