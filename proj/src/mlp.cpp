#include "pase/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pase/errors.hpp"
#include "pase/rng.hpp"

namespace pase {

namespace {

void check_dims(const std::vector<int>& layer_dims) {
  if (layer_dims.size() < 2)
    throw ConfigError("layer_dims needs at least input and output");
  for (const int d : layer_dims)
    if (d < 1) throw ConfigError("layer dims must be positive");
}

Gradients zero_like(const MlpModel& m) {
  Gradients g;
  g.weights.resize(m.layer_count());
  g.biases.resize(m.layer_count());
  for (std::size_t l = 0; l < m.layer_count(); ++l) {
    g.weights[l].assign(m.weights[l].size(), 0.0);
    g.biases[l].assign(m.biases[l].size(), 0.0);
  }
  return g;
}

void softmax_inplace(std::vector<double>& z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (double& v : z) v /= sum;
}

}  // namespace

int argmax_lowest(std::span<const double> values) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

MlpModel init_mlp(const std::vector<int>& layer_dims, std::uint64_t seed) {
  check_dims(layer_dims);
  MlpModel m;
  m.layer_dims = layer_dims;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const int fan_in = layer_dims[l];
    const int fan_out = layer_dims[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::vector<double> w(std::size_t(fan_out) * fan_in);
    for (double& v : w) v = rng.uniform(-bound, bound);
    m.weights.push_back(std::move(w));
    m.biases.emplace_back(fan_out, 0.0);
  }
  return m;
}

ConfidenceVector forward(const MlpModel& model, std::span<const double> x) {
  if (static_cast<int>(x.size()) != model.input_dim())
    throw InputError("forward: input has dim " + std::to_string(x.size()) +
                     ", model expects " + std::to_string(model.input_dim()));

  std::vector<double> act(x.begin(), x.end());
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    const int in = model.layer_dims[l];
    const int out = model.layer_dims[l + 1];
    std::vector<double> z(out);
    const double* w = model.weights[l].data();
    for (int o = 0; o < out; ++o) {
      const double* wrow = w + std::size_t(o) * in;
      double s = model.biases[l][o];
      for (int i = 0; i < in; ++i) s += wrow[i] * act[i];
      z[o] = s;
    }
    if (l + 1 < model.layer_count()) {
      for (double& v : z) v = v > 0.0 ? v : 0.0;
    } else {
      softmax_inplace(z);
    }
    act = std::move(z);
  }
  return act;
}

double loss_and_grad(const MlpModel& model, const Batch& batch,
                     Gradients& grads) {
  const std::size_t n = batch.size();
  if (n == 0) throw InputError("loss_and_grad: empty batch");
  if (batch.dim != model.input_dim())
    throw InputError("loss_and_grad: feature dim mismatch");
  const int classes = model.class_count();
  for (const int y : batch.labels)
    if (y < 0 || y >= classes)
      throw InputError("loss_and_grad: label " + std::to_string(y) +
                       " out of range [0," + std::to_string(classes) + ")");

  grads = zero_like(model);
  const std::size_t layers = model.layer_count();

  // per-sample activations; acts[0] is the input
  std::vector<std::vector<double>> acts(layers + 1);
  std::vector<std::vector<double>> delta(layers);
  double loss_sum = 0.0;

  for (std::size_t s = 0; s < n; ++s) {
    const double* x = batch.features.data() + s * batch.dim;
    acts[0].assign(x, x + batch.dim);
    for (std::size_t l = 0; l < layers; ++l) {
      const int in = model.layer_dims[l];
      const int out = model.layer_dims[l + 1];
      acts[l + 1].assign(out, 0.0);
      const double* w = model.weights[l].data();
      for (int o = 0; o < out; ++o) {
        const double* wrow = w + std::size_t(o) * in;
        double v = model.biases[l][o];
        for (int i = 0; i < in; ++i) v += wrow[i] * acts[l][i];
        acts[l + 1][o] = v;
      }
      if (l + 1 < layers)
        for (double& v : acts[l + 1]) v = v > 0.0 ? v : 0.0;
    }

    std::vector<double>& logits = acts[layers];
    softmax_inplace(logits);
    const int y = batch.labels[s];
    loss_sum += -std::log(std::max(logits[y], 1e-300));

    // output delta: softmax + cross-entropy
    delta[layers - 1] = logits;
    delta[layers - 1][y] -= 1.0;

    for (std::size_t l = layers; l-- > 0;) {
      const int in = model.layer_dims[l];
      const int out = model.layer_dims[l + 1];
      const std::vector<double>& d = delta[l];
      double* gw = grads.weights[l].data();
      for (int o = 0; o < out; ++o) {
        const double dv = d[o];
        grads.biases[l][o] += dv;
        double* gwrow = gw + std::size_t(o) * in;
        const double* a = acts[l].data();
        for (int i = 0; i < in; ++i) gwrow[i] += dv * a[i];
      }
      if (l == 0) break;
      // push through the layer-l weights and the ReLU of layer l-1
      delta[l - 1].assign(in, 0.0);
      const double* w = model.weights[l].data();
      for (int o = 0; o < out; ++o) {
        const double dv = d[o];
        const double* wrow = w + std::size_t(o) * in;
        for (int i = 0; i < in; ++i) delta[l - 1][i] += dv * wrow[i];
      }
      for (int i = 0; i < in; ++i)
        if (acts[l][i] <= 0.0) delta[l - 1][i] = 0.0;
    }
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t l = 0; l < layers; ++l) {
    for (double& v : grads.weights[l]) v *= inv_n;
    for (double& v : grads.biases[l]) v *= inv_n;
  }
  return loss_sum * inv_n;
}

MlpModel train(MlpModel model, const Dataset& data, const TrainConfig& cfg,
               std::vector<double>* loss_history) {
  if (data.empty()) throw InputError("train: empty dataset");
  if (data.dim != model.input_dim())
    throw InputError("train: dataset dim " + std::to_string(data.dim) +
                     " does not match model input " +
                     std::to_string(model.input_dim()));
  if (data.class_count > model.class_count())
    throw InputError("train: dataset has more classes than model outputs");
  if (cfg.epochs < 0) throw ConfigError("train: negative epochs");
  if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(cfg.learning_rate > 0)) throw ConfigError("train: learning_rate must be > 0");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
    throw ConfigError("train: momentum must be in [0,1)");

  const std::size_t n = data.size();
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  Gradients velocity = zero_like(model);
  Gradients grads;
  std::vector<double> batch_x;
  std::vector<int> batch_y;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) shuffle(order, rng);
    double epoch_loss = 0.0;

    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t bn = std::min<std::size_t>(cfg.batch_size, n - start);
      batch_x.resize(bn * data.dim);
      batch_y.resize(bn);
      for (std::size_t b = 0; b < bn; ++b) {
        const auto row = data.row(order[start + b]);
        std::copy(row.begin(), row.end(), batch_x.begin() + b * data.dim);
        batch_y[b] = data.labels[order[start + b]];
      }
      const Batch batch{batch_x, batch_y, data.dim};
      const double loss = loss_and_grad(model, batch, grads);
      epoch_loss += loss * static_cast<double>(bn);

      for (std::size_t l = 0; l < model.layer_count(); ++l) {
        for (std::size_t i = 0; i < model.weights[l].size(); ++i) {
          velocity.weights[l][i] = cfg.momentum * velocity.weights[l][i] -
                                   cfg.learning_rate * grads.weights[l][i];
          model.weights[l][i] += velocity.weights[l][i];
        }
        for (std::size_t i = 0; i < model.biases[l].size(); ++i) {
          velocity.biases[l][i] = cfg.momentum * velocity.biases[l][i] -
                                  cfg.learning_rate * grads.biases[l][i];
          model.biases[l][i] += velocity.biases[l][i];
        }
      }
    }
    if (loss_history)
      loss_history->push_back(epoch_loss / static_cast<double>(n));
  }
  return model;
}

double evaluate(const MlpModel& model, const Dataset& data) {
  if (data.empty()) throw InputError("evaluate: empty dataset");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto probs = forward(model, data.row(i));
    if (argmax_lowest(probs) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// --- serialization -------------------------------------------------------

std::string model_to_json(const MlpModel& model) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["layer_dims"] = model.layer_dims;
  j["weights"] = model.weights;
  j["biases"] = model.biases;
  return j.dump();
}

MlpModel model_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model JSON: ") + e.what());
  }
  MlpModel m;
  try {
    if (j.at("format_version").get<int>() != 1)
      throw FormatError("model JSON: unsupported format_version");
    m.layer_dims = j.at("layer_dims").get<std::vector<int>>();
    m.weights = j.at("weights").get<std::vector<std::vector<double>>>();
    m.biases = j.at("biases").get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model JSON: ") + e.what());
  }

  check_dims(m.layer_dims);
  if (m.weights.size() != m.layer_dims.size() - 1 ||
      m.biases.size() != m.layer_dims.size() - 1)
    throw FormatError("model JSON: layer count mismatch");
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    const auto expect_w =
        std::size_t(m.layer_dims[l + 1]) * std::size_t(m.layer_dims[l]);
    if (m.weights[l].size() != expect_w ||
        m.biases[l].size() != std::size_t(m.layer_dims[l + 1]))
      throw FormatError("model JSON: shape mismatch in layer " +
                        std::to_string(l));
    for (const double v : m.weights[l])
      if (!std::isfinite(v)) throw FormatError("model JSON: non-finite weight");
    for (const double v : m.biases[l])
      if (!std::isfinite(v)) throw FormatError("model JSON: non-finite bias");
  }
  return m;
}

void save_model(const MlpModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write file: " + path);
  out << model_to_json(model);
  if (!out) throw FormatError("write failed: " + path);
}

MlpModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace pase
