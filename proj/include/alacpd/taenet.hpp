#pragma once

// TAEnet: an autoencoder built from adaptive skip-connected LSTM cells, run in
// parallel with a linear autoregressive predictor whose coefficients are
// shared across dimensions. Two learned scalar gates weight the branches.

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include <json.hpp>

#include "alacpd/ndcore.hpp"

namespace alacpd {

using nd::Matrix;
using nd::Parameter;

struct TAEnetConfig {
  std::size_t window = 6;   // w
  std::size_t dims = 1;     // D
  std::size_t hidden = 20;  // U
  std::size_t skip = 3;     // S
  std::size_t horizon = 4;  // h
  bool use_ae = true;
  bool use_ar = true;

  // Throws ConfigError.
  void validate() const;
  // True when the skip connection can fire inside one window (S < w).
  bool skip_fires() const { return skip < window; }
  // Rows needed for the AR branch to reconstruct a whole window:
  // the window itself plus w + h - 1 earlier samples.
  std::size_t context_length() const { return 2 * window + horizon - 1; }

  friend bool operator==(const TAEnetConfig&, const TAEnetConfig&) = default;
};

// LSTM cell whose output blends the usual tanh(c) * o with a learned transform
// of the hidden state S steps back:
//   h_t = a * tanh(c_t) * o_t + (1 - a) * tanh(K h_{t-S}),  a = sigmoid(alpha_raw)
// Steps with t < S have no earlier state to skip from and use the plain form.
struct AscLstmCell {
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
  std::size_t skip = 1;

  Parameter weights;      // 4U x (input_dim + U); gate blocks i, f, o, g
  Parameter bias;         // 4U x 1
  Parameter skip_weight;  // U x U
  Parameter alpha_raw;    // 1 x 1

  struct StepCache {
    std::vector<double> concat;  // [x_t; h_{t-1}]
    std::vector<double> c_prev;
    std::vector<double> i, f, o, g;
    std::vector<double> c, tanh_c;
    std::vector<double> lstm_out;  // tanh(c) * o
    std::vector<double> skip_out;  // tanh(K h_{t-S}); empty when the skip did not fire
  };

  struct Trace {
    Matrix hidden;  // T x U
    std::vector<StepCache> steps;
  };

  AscLstmCell() = default;
  AscLstmCell(std::size_t input_dim, std::size_t hidden, std::size_t skip);

  double alpha() const { return nd::sigmoid(alpha_raw.value(0, 0)); }

  void initialize(std::mt19937_64& rng);

  // inputs: T x input_dim. Initial h and c are zero. Throws TrainingError
  // on non-finite intermediates and DimensionError on shape mismatch.
  Trace forward(const Matrix& inputs) const;

  // Backpropagation through time. d_hidden is T x U (dLoss/dh_t from the
  // layer above). Accumulates into the parameter grads and returns
  // dLoss/dinputs (T x input_dim).
  Matrix backward(const Trace& trace, const Matrix& d_hidden);

  std::vector<Parameter*> parameters();
};

// Shared-coefficient autoregressive predictor:
//   x^_t[d] = sum_{i<w} coef_i * x_{t-h-i}[d] + b
struct ArModel {
  std::size_t horizon = 0;
  Parameter coef;  // 1 x w
  Parameter bias;  // 1 x 1

  ArModel() = default;
  ArModel(std::size_t window, std::size_t horizon);

  std::size_t order() const { return coef.value.cols(); }

  // Prediction for row t of `series` (n x D). Throws std::out_of_range unless
  // t >= h + w - 1.
  std::vector<double> predict(const Matrix& series, std::size_t t) const;

  // Predicts the last `window` rows of `context`. Context must hold at least
  // window + w + h - 1 rows.
  Matrix reconstruct(const Matrix& context, std::size_t window) const;
  void backward(const Matrix& context, std::size_t window, const Matrix& d_out);
};

// Free-function form of ArModel::predict.
std::vector<double> ar_predict(const ArModel& ar, const Matrix& series, std::size_t t);

struct TAEnetOutput {
  Matrix reconstruction;  // w x D, gate_ae * ae + gate_ar * ar
  Matrix ae;              // w x D, zero when the branch is off
  Matrix ar;              // w x D, zero when the branch is off or not warmed up
  bool ar_active = false;
  double loss = 0.0;      // mean squared error over w * D entries
};

class TAEnet {
 public:
  TAEnet() = default;
  TAEnet(const TAEnetConfig& config, std::uint64_t seed);

  const TAEnetConfig& config() const { return config_; }

  // Context is an r x D block whose last w rows are the window being
  // reconstructed. The AR branch participates only when r >= context_length();
  // otherwise it outputs zeros and receives no gradient.
  TAEnetOutput forward(const Matrix& context) const;
  double loss(const Matrix& context) const { return forward(context).loss; }

  // Autoencoder branch only: w x D reconstruction of a window.
  Matrix ae_reconstruct(const Matrix& window) const;

  // Adds dLoss/dparam for this context to the gradients. Returns the loss.
  double accumulate_gradients(const Matrix& context);

  // One SGD step on one context; returns the loss before the update.
  double train_step(const Matrix& context, const nd::SgdConfig& sgd);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  void zero_grad();

  nlohmann::json to_json() const;
  static TAEnet from_json(const nlohmann::json& doc);

  AscLstmCell encoder;
  AscLstmCell decoder;
  Parameter out_proj;  // U x D
  Parameter out_bias;  // 1 x D
  ArModel ar;
  Parameter gate_ae;   // 1 x 1
  Parameter gate_ar;   // 1 x 1

 private:
  struct AeTrace {
    AscLstmCell::Trace enc;
    AscLstmCell::Trace dec;
    Matrix dec_input;
    Matrix out;
  };
  AeTrace ae_forward(const Matrix& window) const;
  Matrix window_of(const Matrix& context) const;
  bool ar_ready(const Matrix& context) const;

  TAEnetConfig config_;
};

}  // namespace alacpd
