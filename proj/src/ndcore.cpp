#include "alacpd/ndcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "alacpd/errors.hpp"

namespace alacpd::nd {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                         shape_str(b));
  }
}

}  // namespace

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> init) {
  rows_ = init.size();
  cols_ = rows_ ? init.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : init) {
    if (r.size() != cols_) throw DimensionError("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::column(std::span<const double> values) {
  Matrix m(values.size(), 1);
  std::copy(values.begin(), values.end(), m.data_.begin());
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix Matrix::slice_rows(std::size_t first, std::size_t count) const {
  if (first + count > rows_) {
    throw DimensionError("slice_rows: [" + std::to_string(first) + ", " +
                         std::to_string(first + count) + ") exceeds " + std::to_string(rows_) +
                         " rows");
  }
  Matrix s(count, cols_);
  std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(first * cols_), count * cols_,
              s.data_.begin());
  return s;
}

Matrix& Matrix::operator+=(const Matrix& o) {
  require_same_shape(*this, o, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
  require_same_shape(*this, o, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + shape_str(a) + " x " + shape_str(b));
  }
  Matrix out(a.rows(), b.cols());
  // i-k-j order keeps the inner loop contiguous in both b and out.
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double activate(Activation kind, double x) {
  switch (kind) {
    case Activation::kTanh:
      return std::tanh(x);
    case Activation::kSigmoid:
      return sigmoid(x);
    case Activation::kIdentity:
      return x;
  }
  return x;
}

double activate_grad(Activation kind, double x) {
  switch (kind) {
    case Activation::kTanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::kSigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
    case Activation::kIdentity:
      return 1.0;
  }
  return 1.0;
}

namespace {

template <class F>
Matrix map_checked(const Matrix& x, F&& f, const char* what) {
  if (!x.all_finite()) throw TrainingError(std::string(what) + ": non-finite input");
  Matrix out(x.rows(), x.cols());
  std::transform(x.data().begin(), x.data().end(), out.data().begin(), f);
  return out;
}

}  // namespace

Matrix activation(Activation kind, const Matrix& x) {
  return map_checked(x, [kind](double v) { return activate(kind, v); }, "activation");
}

Matrix activation_grad(Activation kind, const Matrix& x) {
  return map_checked(x, [kind](double v) { return activate_grad(kind, v); }, "activation_grad");
}

void init_uniform(Parameter& p, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : p.value.data()) v = dist(rng);
  p.zero_grad();
}

void sgd_step(std::span<Parameter* const> params, const SgdConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("sgd_step: learning_rate must be > 0");
  for (const Parameter* p : params) {
    if (!p->grad.all_finite()) throw TrainingError("sgd_step: non-finite gradient");
  }
  for (Parameter* p : params) {
    auto v = p->value.data();
    auto g = p->grad.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= cfg.learning_rate * g[i];
    p->zero_grad();
  }
}

double finite_diff_check(const std::function<double()>& loss,
                         std::span<Parameter* const> params, double epsilon) {
  double worst = 0.0;
  for (Parameter* p : params) {
    auto v = p->value.data();
    auto g = p->grad.data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double saved = v[i];
      v[i] = saved + epsilon;
      const double up = loss();
      v[i] = saved - epsilon;
      const double down = loss();
      v[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double err = std::abs(g[i] - numeric) / std::max(1.0, std::abs(g[i]));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace alacpd::nd
