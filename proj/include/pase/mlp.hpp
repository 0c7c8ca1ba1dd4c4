#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pase/dataset.hpp"

namespace pase {

// Softmax output of a classifier; entries in [0,1], summing to 1.
using ConfidenceVector = std::vector<double>;

// Dense feed-forward classifier: ReLU hidden layers, softmax output.
// weights[l] is (layer_dims[l+1] x layer_dims[l]) row-major. 64-bit floats
// throughout. Immutable after training; concurrent reads are safe.
struct MlpModel {
  std::vector<int> layer_dims;
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  int input_dim() const { return layer_dims.front(); }
  int class_count() const { return layer_dims.back(); }
  std::size_t layer_count() const { return weights.size(); }
};

struct TrainConfig {
  int epochs = 100;
  int batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  bool shuffle = true;
};

// Parameter-shaped gradient accumulator.
struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
};

// Non-owning view of a training batch (n rows of dim features).
struct Batch {
  std::span<const double> features;  // n * dim
  std::span<const int> labels;       // n
  int dim = 0;
  std::size_t size() const { return labels.size(); }
};

// Glorot-uniform weights from the seeded generator, zero biases.
MlpModel init_mlp(const std::vector<int>& layer_dims, std::uint64_t seed);

// Max-subtracted softmax of the final pre-activation.
ConfidenceVector forward(const MlpModel& model, std::span<const double> x);

// Mean cross-entropy over the batch plus exact analytic gradients.
double loss_and_grad(const MlpModel& model, const Batch& batch,
                     Gradients& grads);

// Mini-batch SGD with momentum. Deterministic for a fixed seed; epochs = 0
// returns the model unchanged. Appends one mean loss per epoch to
// loss_history when given.
MlpModel train(MlpModel model, const Dataset& data, const TrainConfig& cfg,
               std::vector<double>* loss_history = nullptr);

// Fraction of argmax-correct predictions; argmax ties break to the lowest
// class index.
double evaluate(const MlpModel& model, const Dataset& data);

int argmax_lowest(std::span<const double> values);

// JSON round-trip preserves parameters exactly at 64-bit precision.
std::string model_to_json(const MlpModel& model);
MlpModel model_from_json(const std::string& text);
void save_model(const MlpModel& model, const std::string& path);
MlpModel load_model(const std::string& path);

}  // namespace pase
