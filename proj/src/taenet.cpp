#include "alacpd/taenet.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "alacpd/errors.hpp"

namespace alacpd {

using nd::sigmoid;

void TAEnetConfig::validate() const {
  if (window < 2) throw ConfigError("taenet: window must be >= 2");
  if (dims < 1) throw ConfigError("taenet: dims must be >= 1");
  if (hidden < 1) throw ConfigError("taenet: hidden must be >= 1");
  if (skip < 1) throw ConfigError("taenet: skip must be >= 1");
  if (!use_ae && !use_ar) throw ConfigError("taenet: at least one of use_ae/use_ar required");
}

// ---------------------------------------------------------------------------
// AscLstmCell

AscLstmCell::AscLstmCell(std::size_t input_dim_, std::size_t hidden_, std::size_t skip_)
    : input_dim(input_dim_),
      hidden(hidden_),
      skip(skip_),
      weights(Matrix(4 * hidden_, input_dim_ + hidden_)),
      bias(Matrix(4 * hidden_, 1)),
      skip_weight(Matrix(hidden_, hidden_)),
      alpha_raw(Matrix(1, 1)) {
  if (skip_ < 1) throw ConfigError("AscLstmCell: skip must be >= 1");
}

void AscLstmCell::initialize(std::mt19937_64& rng) {
  nd::init_uniform(weights, input_dim + hidden, rng);
  nd::init_uniform(bias, input_dim + hidden, rng);
  nd::init_uniform(skip_weight, hidden, rng);
  alpha_raw.value(0, 0) = 0.0;
  alpha_raw.zero_grad();
}

AscLstmCell::Trace AscLstmCell::forward(const Matrix& inputs) const {
  if (inputs.cols() != input_dim) {
    throw DimensionError("AscLstmCell::forward: expected " + std::to_string(input_dim) +
                         " input columns, got " + std::to_string(inputs.cols()));
  }
  const std::size_t steps = inputs.rows();
  const std::size_t cat = input_dim + hidden;
  const double a = alpha();

  Trace tr;
  tr.hidden = Matrix(steps, hidden);
  tr.steps.resize(steps);

  std::vector<double> h_prev(hidden, 0.0);
  std::vector<double> c_prev(hidden, 0.0);
  std::vector<double> z(4 * hidden);

  for (std::size_t t = 0; t < steps; ++t) {
    StepCache& sc = tr.steps[t];
    sc.concat.resize(cat);
    auto x = inputs.row(t);
    std::copy(x.begin(), x.end(), sc.concat.begin());
    std::copy(h_prev.begin(), h_prev.end(), sc.concat.begin() + static_cast<std::ptrdiff_t>(input_dim));

    for (std::size_t r = 0; r < 4 * hidden; ++r) {
      double acc = bias.value(r, 0);
      auto wrow = weights.value.row(r);
      for (std::size_t k = 0; k < cat; ++k) acc += wrow[k] * sc.concat[k];
      z[r] = acc;
    }

    sc.c_prev = c_prev;
    sc.i.resize(hidden);
    sc.f.resize(hidden);
    sc.o.resize(hidden);
    sc.g.resize(hidden);
    sc.c.resize(hidden);
    sc.tanh_c.resize(hidden);
    sc.lstm_out.resize(hidden);
    for (std::size_t u = 0; u < hidden; ++u) {
      sc.i[u] = sigmoid(z[u]);
      sc.f[u] = sigmoid(z[hidden + u]);
      sc.o[u] = sigmoid(z[2 * hidden + u]);
      sc.g[u] = std::tanh(z[3 * hidden + u]);
      sc.c[u] = sc.f[u] * c_prev[u] + sc.i[u] * sc.g[u];
      sc.tanh_c[u] = std::tanh(sc.c[u]);
      sc.lstm_out[u] = sc.tanh_c[u] * sc.o[u];
    }

    auto h = tr.hidden.row(t);
    if (t >= skip) {
      auto h_back = tr.hidden.row(t - skip);
      sc.skip_out.resize(hidden);
      for (std::size_t u = 0; u < hidden; ++u) {
        double acc = 0.0;
        auto krow = skip_weight.value.row(u);
        for (std::size_t k = 0; k < hidden; ++k) acc += krow[k] * h_back[k];
        sc.skip_out[u] = std::tanh(acc);
        h[u] = a * sc.lstm_out[u] + (1.0 - a) * sc.skip_out[u];
      }
    } else {
      std::copy(sc.lstm_out.begin(), sc.lstm_out.end(), h.begin());
    }

    for (std::size_t u = 0; u < hidden; ++u) {
      if (!std::isfinite(h[u]) || !std::isfinite(sc.c[u])) {
        throw TrainingError("AscLstmCell::forward: non-finite state at step " + std::to_string(t));
      }
    }
    std::copy(h.begin(), h.end(), h_prev.begin());
    c_prev = sc.c;
  }
  return tr;
}

Matrix AscLstmCell::backward(const Trace& trace, const Matrix& d_hidden) {
  const std::size_t steps = trace.steps.size();
  if (d_hidden.rows() != steps || d_hidden.cols() != hidden) {
    throw DimensionError("AscLstmCell::backward: d_hidden shape mismatch");
  }
  const std::size_t cat = input_dim + hidden;
  const double a = alpha();

  // dh accumulates the external gradient plus what flows back from later
  // steps through the recurrence and through the skip connection.
  Matrix dh = d_hidden;
  Matrix d_inputs(steps, input_dim);
  std::vector<double> dc_next(hidden, 0.0);
  std::vector<double> dz(4 * hidden);
  double d_alpha = 0.0;

  for (std::size_t t = steps; t-- > 0;) {
    const StepCache& sc = trace.steps[t];
    auto dh_t = dh.row(t);
    std::vector<double> dm(hidden);

    if (!sc.skip_out.empty()) {
      auto h_back = trace.hidden.row(t - skip);
      std::vector<double> dpre(hidden);
      for (std::size_t u = 0; u < hidden; ++u) {
        dm[u] = a * dh_t[u];
        d_alpha += dh_t[u] * (sc.lstm_out[u] - sc.skip_out[u]);
        dpre[u] = (1.0 - a) * dh_t[u] * (1.0 - sc.skip_out[u] * sc.skip_out[u]);
      }
      auto dh_back = dh.row(t - skip);
      for (std::size_t u = 0; u < hidden; ++u) {
        if (dpre[u] == 0.0) continue;
        auto krow = skip_weight.value.row(u);
        auto kgrad = skip_weight.grad.row(u);
        for (std::size_t k = 0; k < hidden; ++k) {
          kgrad[k] += dpre[u] * h_back[k];
          dh_back[k] += krow[k] * dpre[u];
        }
      }
    } else {
      std::copy(dh_t.begin(), dh_t.end(), dm.begin());
    }

    for (std::size_t u = 0; u < hidden; ++u) {
      const double d_o = dm[u] * sc.tanh_c[u];
      const double dc = dc_next[u] + dm[u] * sc.o[u] * (1.0 - sc.tanh_c[u] * sc.tanh_c[u]);
      const double d_i = dc * sc.g[u];
      const double d_g = dc * sc.i[u];
      const double d_f = dc * sc.c_prev[u];
      dc_next[u] = dc * sc.f[u];
      dz[u] = d_i * sc.i[u] * (1.0 - sc.i[u]);
      dz[hidden + u] = d_f * sc.f[u] * (1.0 - sc.f[u]);
      dz[2 * hidden + u] = d_o * sc.o[u] * (1.0 - sc.o[u]);
      dz[3 * hidden + u] = d_g * (1.0 - sc.g[u] * sc.g[u]);
    }

    std::vector<double> d_concat(cat, 0.0);
    for (std::size_t r = 0; r < 4 * hidden; ++r) {
      const double dzr = dz[r];
      bias.grad(r, 0) += dzr;
      if (dzr == 0.0) continue;
      auto wrow = weights.value.row(r);
      auto grow = weights.grad.row(r);
      for (std::size_t k = 0; k < cat; ++k) {
        grow[k] += dzr * sc.concat[k];
        d_concat[k] += wrow[k] * dzr;
      }
    }
    auto dx = d_inputs.row(t);
    for (std::size_t k = 0; k < input_dim; ++k) dx[k] = d_concat[k];
    if (t > 0) {
      auto dh_prev = dh.row(t - 1);
      for (std::size_t u = 0; u < hidden; ++u) dh_prev[u] += d_concat[input_dim + u];
    }
  }

  alpha_raw.grad(0, 0) += d_alpha * a * (1.0 - a);
  return d_inputs;
}

std::vector<Parameter*> AscLstmCell::parameters() {
  return {&weights, &bias, &skip_weight, &alpha_raw};
}

// ---------------------------------------------------------------------------
// ArModel

ArModel::ArModel(std::size_t window, std::size_t horizon_)
    : horizon(horizon_), coef(Matrix(1, window)), bias(Matrix(1, 1)) {}

std::vector<double> ArModel::predict(const Matrix& series, std::size_t t) const {
  const std::size_t p = order();
  if (t >= series.rows() || t < horizon + p - 1) {
    throw std::out_of_range("ar_predict: index " + std::to_string(t) + " needs " +
                            std::to_string(horizon + p - 1) + " earlier samples (have " +
                            std::to_string(std::min(t, series.rows())) + ")");
  }
  std::vector<double> out(series.cols(), bias.value(0, 0));
  for (std::size_t i = 0; i < p; ++i) {
    auto row = series.row(t - horizon - i);
    const double w = coef.value(0, i);
    for (std::size_t d = 0; d < out.size(); ++d) out[d] += w * row[d];
  }
  return out;
}

Matrix ArModel::reconstruct(const Matrix& context, std::size_t window) const {
  Matrix out(window, context.cols());
  const std::size_t base = context.rows() - window;
  for (std::size_t k = 0; k < window; ++k) {
    auto pred = predict(context, base + k);
    std::copy(pred.begin(), pred.end(), out.row(k).begin());
  }
  return out;
}

void ArModel::backward(const Matrix& context, std::size_t window, const Matrix& d_out) {
  const std::size_t base = context.rows() - window;
  const std::size_t p = order();
  for (std::size_t k = 0; k < window; ++k) {
    auto g = d_out.row(k);
    for (std::size_t d = 0; d < g.size(); ++d) bias.grad(0, 0) += g[d];
    for (std::size_t i = 0; i < p; ++i) {
      auto row = context.row(base + k - horizon - i);
      double acc = 0.0;
      for (std::size_t d = 0; d < g.size(); ++d) acc += g[d] * row[d];
      coef.grad(0, i) += acc;
    }
  }
}

std::vector<double> ar_predict(const ArModel& ar, const Matrix& series, std::size_t t) {
  return ar.predict(series, t);
}

// ---------------------------------------------------------------------------
// TAEnet

TAEnet::TAEnet(const TAEnetConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const auto& c = config_;
  encoder = AscLstmCell(c.dims, c.hidden, c.skip);
  decoder = AscLstmCell(c.hidden, c.hidden, c.skip);
  out_proj = Parameter(Matrix(c.hidden, c.dims));
  out_bias = Parameter(Matrix(1, c.dims));
  ar = ArModel(c.window, c.horizon);
  gate_ae = Parameter(Matrix(1, 1, 1.0));
  gate_ar = Parameter(Matrix(1, 1, 1.0));

  std::mt19937_64 rng(seed);
  encoder.initialize(rng);
  decoder.initialize(rng);
  nd::init_uniform(out_proj, c.hidden, rng);
  nd::init_uniform(out_bias, c.hidden, rng);
  nd::init_uniform(ar.coef, c.window, rng);
  nd::init_uniform(ar.bias, c.window, rng);
}

Matrix TAEnet::window_of(const Matrix& context) const {
  if (context.cols() != config_.dims) {
    throw DimensionError("TAEnet: expected " + std::to_string(config_.dims) +
                         " dimensions, got " + std::to_string(context.cols()));
  }
  if (context.rows() < config_.window) {
    throw DimensionError("TAEnet: context has " + std::to_string(context.rows()) +
                         " rows, window needs " + std::to_string(config_.window));
  }
  return context.slice_rows(context.rows() - config_.window, config_.window);
}

bool TAEnet::ar_ready(const Matrix& context) const {
  return config_.use_ar && context.rows() >= config_.context_length();
}

TAEnet::AeTrace TAEnet::ae_forward(const Matrix& window) const {
  AeTrace tr;
  tr.enc = encoder.forward(window);
  const std::size_t w = window.rows();
  auto latent = tr.enc.hidden.row(w - 1);
  tr.dec_input = Matrix(w, config_.hidden);
  for (std::size_t t = 0; t < w; ++t) std::copy(latent.begin(), latent.end(), tr.dec_input.row(t).begin());
  tr.dec = decoder.forward(tr.dec_input);
  tr.out = nd::matmul(tr.dec.hidden, out_proj.value);
  for (std::size_t t = 0; t < w; ++t) {
    auto r = tr.out.row(t);
    for (std::size_t d = 0; d < r.size(); ++d) r[d] += out_bias.value(0, d);
  }
  return tr;
}

Matrix TAEnet::ae_reconstruct(const Matrix& window) const {
  return ae_forward(window_of(window)).out;
}

TAEnetOutput TAEnet::forward(const Matrix& context) const {
  const Matrix window = window_of(context);
  const std::size_t w = config_.window;
  const std::size_t dims = config_.dims;

  TAEnetOutput out;
  out.ae = config_.use_ae ? ae_forward(window).out : Matrix(w, dims);
  out.ar_active = ar_ready(context);
  out.ar = out.ar_active ? ar.reconstruct(context, w) : Matrix(w, dims);
  out.reconstruction = out.ae * gate_ae.value(0, 0) + out.ar * gate_ar.value(0, 0);

  double sse = 0.0;
  for (std::size_t i = 0; i < window.size(); ++i) {
    const double r = out.reconstruction.data()[i] - window.data()[i];
    sse += r * r;
  }
  out.loss = sse / static_cast<double>(window.size());
  if (!std::isfinite(out.loss)) throw TrainingError("TAEnet::forward: non-finite loss");
  return out;
}

double TAEnet::accumulate_gradients(const Matrix& context) {
  const Matrix window = window_of(context);
  const std::size_t w = config_.window;
  const std::size_t dims = config_.dims;
  const double g_ae = gate_ae.value(0, 0);
  const double g_ar = gate_ar.value(0, 0);

  AeTrace ae_tr;
  Matrix ae_out(w, dims);
  if (config_.use_ae) {
    ae_tr = ae_forward(window);
    ae_out = ae_tr.out;
  }
  const bool ar_on = ar_ready(context);
  const Matrix ar_out = ar_on ? ar.reconstruct(context, w) : Matrix(w, dims);

  // dLoss/dreconstruction for the mean squared error.
  const double scale = 2.0 / static_cast<double>(window.size());
  Matrix d_rec(w, dims);
  double sse = 0.0;
  for (std::size_t i = 0; i < window.size(); ++i) {
    const double r = g_ae * ae_out.data()[i] + g_ar * ar_out.data()[i] - window.data()[i];
    sse += r * r;
    d_rec.data()[i] = scale * r;
  }
  const double loss = sse / static_cast<double>(window.size());
  if (!std::isfinite(loss)) throw TrainingError("TAEnet: non-finite loss");

  if (config_.use_ae) {
    double dg = 0.0;
    for (std::size_t i = 0; i < d_rec.size(); ++i) dg += d_rec.data()[i] * ae_out.data()[i];
    gate_ae.grad(0, 0) += dg;

    const Matrix d_ae = d_rec * g_ae;
    for (std::size_t t = 0; t < w; ++t) {
      auto g = d_ae.row(t);
      for (std::size_t d = 0; d < dims; ++d) out_bias.grad(0, d) += g[d];
    }
    out_proj.grad += nd::matmul(ae_tr.dec.hidden.transpose(), d_ae);
    const Matrix d_dec_hidden = nd::matmul(d_ae, out_proj.value.transpose());
    const Matrix d_dec_input = decoder.backward(ae_tr.dec, d_dec_hidden);

    // The latent is fed to every decoder step.
    Matrix d_enc_hidden(w, config_.hidden);
    auto d_latent = d_enc_hidden.row(w - 1);
    for (std::size_t t = 0; t < w; ++t) {
      auto r = d_dec_input.row(t);
      for (std::size_t u = 0; u < r.size(); ++u) d_latent[u] += r[u];
    }
    encoder.backward(ae_tr.enc, d_enc_hidden);
  }

  if (ar_on) {
    double dg = 0.0;
    for (std::size_t i = 0; i < d_rec.size(); ++i) dg += d_rec.data()[i] * ar_out.data()[i];
    gate_ar.grad(0, 0) += dg;
    ar.backward(context, w, d_rec * g_ar);
  }
  return loss;
}

double TAEnet::train_step(const Matrix& context, const nd::SgdConfig& sgd) {
  zero_grad();
  const double loss = accumulate_gradients(context);
  auto params = parameters();
  nd::sgd_step(params, sgd);
  return loss;
}

std::vector<Parameter*> TAEnet::parameters() {
  std::vector<Parameter*> ps;
  for (auto* p : encoder.parameters()) ps.push_back(p);
  for (auto* p : decoder.parameters()) ps.push_back(p);
  ps.insert(ps.end(), {&out_proj, &out_bias, &ar.coef, &ar.bias, &gate_ae, &gate_ar});
  return ps;
}

std::vector<const Parameter*> TAEnet::parameters() const {
  auto ps = const_cast<TAEnet*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

void TAEnet::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

nlohmann::json matrix_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()},
          {"data", std::vector<double>(m.data().begin(), m.data().end())}};
}

void load_matrix(const nlohmann::json& doc, const std::string& name, Parameter& p) {
  if (!doc.contains(name)) throw ParseError("checkpoint: missing params." + name);
  const auto& j = doc.at(name);
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  if (rows != p.value.rows() || cols != p.value.cols()) {
    throw ParseError("checkpoint: params." + name + " has shape " + std::to_string(rows) + "x" +
                     std::to_string(cols) + ", config implies " +
                     std::to_string(p.value.rows()) + "x" + std::to_string(p.value.cols()));
  }
  const auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != p.value.size()) throw ParseError("checkpoint: params." + name + ".data length");
  std::copy(data.begin(), data.end(), p.value.data().begin());
  p.zero_grad();
}

const char* const kParamNames[] = {
    "encoder.weights", "encoder.bias", "encoder.skip_weight", "encoder.alpha_raw",
    "decoder.weights", "decoder.bias", "decoder.skip_weight", "decoder.alpha_raw",
    "out_proj",        "out_bias",     "ar.coef",             "ar.bias",
    "gate_ae",         "gate_ar"};

}  // namespace

nlohmann::json TAEnet::to_json() const {
  nlohmann::json params = nlohmann::json::object();
  auto ps = parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) params[kParamNames[i]] = matrix_json(ps[i]->value);
  return {{"config",
           {{"window", config_.window},
            {"dims", config_.dims},
            {"hidden", config_.hidden},
            {"skip", config_.skip},
            {"horizon", config_.horizon},
            {"use_ae", config_.use_ae},
            {"use_ar", config_.use_ar}}},
          {"params", params}};
}

TAEnet TAEnet::from_json(const nlohmann::json& doc) {
  try {
    const auto& c = doc.at("config");
    TAEnetConfig cfg;
    cfg.window = c.at("window").get<std::size_t>();
    cfg.dims = c.at("dims").get<std::size_t>();
    cfg.hidden = c.at("hidden").get<std::size_t>();
    cfg.skip = c.at("skip").get<std::size_t>();
    cfg.horizon = c.at("horizon").get<std::size_t>();
    cfg.use_ae = c.at("use_ae").get<bool>();
    cfg.use_ar = c.at("use_ar").get<bool>();
    TAEnet net(cfg, 0);
    const auto& params = doc.at("params");
    auto ps = net.parameters();
    for (std::size_t i = 0; i < ps.size(); ++i) load_matrix(params, kParamNames[i], *ps[i]);
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace alacpd
