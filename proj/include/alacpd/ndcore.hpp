#pragma once

// Small dense kernel used by the networks: row-major double matrices,
// activations, SGD, and a central-difference gradient checker.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace alacpd::nd {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::initializer_list<std::initializer_list<double>> init);

  static Matrix identity(std::size_t n);
  static Matrix column(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  void fill(double v);
  bool all_finite() const;
  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  Matrix transpose() const;
  // Rows [first, first + count).
  Matrix slice_rows(std::size_t first, std::size_t count) const;

  Matrix& operator+=(const Matrix& o);
  Matrix& operator-=(const Matrix& o);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix hadamard(const Matrix& a, const Matrix& b);

// Throws DimensionError when a.cols() != b.rows().
Matrix matmul(const Matrix& a, const Matrix& b);

enum class Activation { kTanh, kSigmoid, kIdentity };

double activate(Activation kind, double x);
double activate_grad(Activation kind, double x);
// Elementwise; throws TrainingError on non-finite input.
Matrix activation(Activation kind, const Matrix& x);
Matrix activation_grad(Activation kind, const Matrix& x);

double sigmoid(double x);

struct Parameter {
  Matrix value;
  Matrix grad;

  Parameter() = default;
  explicit Parameter(Matrix v) : value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad.fill(0.0); }
};

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
void init_uniform(Parameter& p, std::size_t fan_in, std::mt19937_64& rng);

struct SgdConfig {
  double learning_rate = 0.001;
};

// value -= lr * grad, then grad = 0. Throws TrainingError (and leaves all
// parameters untouched) if any gradient is non-finite.
void sgd_step(std::span<Parameter* const> params, const SgdConfig& cfg);

// Max over all scalars of |analytic - numeric| / max(1, |analytic|), using
// central differences of `loss`. Analytic gradients are read from
// Parameter::grad; values are restored before returning.
double finite_diff_check(const std::function<double()>& loss,
                         std::span<Parameter* const> params, double epsilon = 1e-5);

}  // namespace alacpd::nd
