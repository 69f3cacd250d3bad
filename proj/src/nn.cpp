#include "docie/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace docie::nn {

using nlohmann::json;

Param& ParamStore::add(const std::string& name, int rows, int cols) {
  if (by_name_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  params_.push_back(std::make_unique<Param>(name, rows, cols));
  Param* p = params_.back().get();
  order_.push_back(p);
  by_name_[name] = p;
  return *p;
}

Param* ParamStore::find(const std::string& name) {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

json ParamStore::to_json() const {
  json tensors = json::object();
  for (const Param* p : order_) {
    json data = json::array();
    for (int c = 0; c < p->cols(); ++c) {
      for (int r = 0; r < p->rows(); ++r) data.push_back(p->value(r, c));
    }
    tensors[p->name] = {{"rows", p->rows()}, {"cols", p->cols()}, {"data", std::move(data)}};
  }
  return tensors;
}

void ParamStore::from_json(const json& j) {
  for (Param* p : order_) {
    if (!j.contains(p->name)) throw std::runtime_error("checkpoint missing tensor: " + p->name);
    const json& t = j.at(p->name);
    if (t.at("rows").get<int>() != p->rows() || t.at("cols").get<int>() != p->cols()) {
      throw std::runtime_error("checkpoint shape mismatch for tensor: " + p->name);
    }
    const json& data = t.at("data");
    if (static_cast<int>(data.size()) != p->rows() * p->cols()) {
      throw std::runtime_error("checkpoint size mismatch for tensor: " + p->name);
    }
    int k = 0;
    for (int c = 0; c < p->cols(); ++c) {
      for (int r = 0; r < p->rows(); ++r) p->value(r, c) = data[k++].get<double>();
    }
    p->zero_grad();
  }
}

void init_uniform(Param& p, Rng& rng, double lo, double hi) {
  for (int c = 0; c < p.cols(); ++c) {
    for (int r = 0; r < p.rows(); ++r) p.value(r, c) = rng.uniform(lo, hi);
  }
}

void init_xavier(Param& p, Rng& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(p.rows() + p.cols()));
  init_uniform(p, rng, -bound, bound);
}

void init_orthogonal(Param& p, Rng& rng) {
  const int n = p.cols();
  if (p.rows() % n != 0) {
    init_xavier(p, rng);
    return;
  }
  for (int block = 0; block < p.rows() / n; ++block) {
    Mat a(n, n);
    for (int c = 0; c < n; ++c) {
      for (int r = 0; r < n; ++r) a(r, c) = rng.normal();
    }
    Eigen::HouseholderQR<Mat> qr(a);
    Mat q = qr.householderQ() * Mat::Identity(n, n);
    // Fix signs so the decomposition is unique given the input.
    Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int c = 0; c < n; ++c) {
      if (r(c, c) < 0) q.col(c) = -q.col(c);
    }
    p.value.middleRows(block * n, n) = q;
  }
}

Ffn Ffn::make(ParamStore& store, const std::string& name, const std::vector<int>& dims,
              double dropout, Rng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("Ffn: need at least input and output dims");
  Ffn ffn;
  ffn.dropout_rate = dropout;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    Param& w = store.add(name + ".w" + std::to_string(i), dims[i + 1], dims[i]);
    Param& b = store.add(name + ".b" + std::to_string(i), dims[i + 1], 1);
    init_xavier(w, rng);
    ffn.weights.push_back(&w);
    ffn.biases.push_back(&b);
  }
  return ffn;
}

Expr Ffn::apply(Graph& g, Expr x) const {
  Expr h = x;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    h = ad::affine(g, *weights[i], h, *biases[i]);
    if (i + 1 < weights.size()) {
      h = ad::gelu_e(h);
      h = ad::dropout(h, dropout_rate);
    }
  }
  return h;
}

Lstm Lstm::make(ParamStore& store, const std::string& name, int input_dim, int hidden, Rng& rng) {
  Lstm lstm;
  lstm.hidden = hidden;
  lstm.wx = &store.add(name + ".wx", 4 * hidden, input_dim);
  lstm.wh = &store.add(name + ".wh", 4 * hidden, hidden);
  lstm.bias = &store.add(name + ".b", 4 * hidden, 1);
  init_xavier(*lstm.wx, rng);
  init_orthogonal(*lstm.wh, rng);
  return lstm;
}

std::vector<Expr> Lstm::run(Graph& g, const std::vector<Expr>& inputs, bool reverse) const {
  const int n = static_cast<int>(inputs.size());
  std::vector<Expr> out(n);
  Expr h = ad::zeros(g, hidden, 1);
  Expr c = ad::zeros(g, hidden, 1);
  for (int step = 0; step < n; ++step) {
    int t = reverse ? n - 1 - step : step;
    Expr z = ad::affine2(g, *wx, inputs[t], *wh, h, *bias);
    Expr i_gate = ad::sigmoid_e(ad::slice_rows(z, 0, hidden));
    Expr f_gate = ad::sigmoid_e(ad::slice_rows(z, hidden, 2 * hidden));
    Expr g_gate = ad::tanh_e(ad::slice_rows(z, 2 * hidden, 3 * hidden));
    Expr o_gate = ad::sigmoid_e(ad::slice_rows(z, 3 * hidden, 4 * hidden));
    c = ad::add(ad::cmult(f_gate, c), ad::cmult(i_gate, g_gate));
    h = ad::cmult(o_gate, ad::tanh_e(c));
    out[t] = h;
  }
  return out;
}

BiLstm BiLstm::make(ParamStore& store, const std::string& name, int input_dim, int hidden,
                    Rng& rng) {
  BiLstm bi;
  bi.fwd = Lstm::make(store, name + ".fwd", input_dim, hidden, rng);
  bi.bwd = Lstm::make(store, name + ".bwd", input_dim, hidden, rng);
  return bi;
}

std::vector<Expr> BiLstm::run(Graph& g, const std::vector<Expr>& inputs) const {
  std::vector<Expr> f = fwd.run(g, inputs, false);
  std::vector<Expr> b = bwd.run(g, inputs, true);
  std::vector<Expr> out(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) out[i] = ad::concat_rows({f[i], b[i]});
  return out;
}

void Adam::step(const std::vector<Param*>& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Param* p : params) {
    State& s = state_[p];
    if (s.m.size() == 0) {
      s.m = Mat::Zero(p->rows(), p->cols());
      s.v = Mat::Zero(p->rows(), p->cols());
    }
    s.m = cfg_.beta1 * s.m + (1.0 - cfg_.beta1) * p->grad;
    s.v = cfg_.beta2 * s.v.array().matrix() + (1.0 - cfg_.beta2) * p->grad.array().square().matrix();
    Mat m_hat = s.m / bc1;
    Mat v_hat = s.v / bc2;
    p->value.array() -= cfg_.lr * m_hat.array() / (v_hat.array().sqrt() + cfg_.eps);
    p->zero_grad();
  }
}

double gradient_check(const std::function<Expr(Graph&)>& build_loss,
                      const std::vector<Param*>& params, double eps, double tol, Rng& rng,
                      int max_coords_per_param) {
  if (eps <= 0) throw std::invalid_argument("gradient_check: eps must be positive");

  auto eval_loss = [&]() {
    Graph g(false);
    Expr loss = build_loss(g);
    double v = g.scalar(loss);
    if (!std::isfinite(v)) throw std::runtime_error("gradient_check: non-finite loss");
    return v;
  };

  for (Param* p : params) p->zero_grad();
  Graph g(false);
  Expr loss = build_loss(g);
  if (!std::isfinite(g.scalar(loss))) throw std::runtime_error("gradient_check: non-finite loss");
  g.backward(loss);
  std::vector<Mat> analytic;
  analytic.reserve(params.size());
  for (Param* p : params) analytic.push_back(p->grad);

  double max_err = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param* p = params[pi];
    const int total = p->rows() * p->cols();
    std::vector<int> coords;
    if (total <= max_coords_per_param) {
      for (int i = 0; i < total; ++i) coords.push_back(i);
    } else {
      for (int i = 0; i < max_coords_per_param; ++i) coords.push_back(rng.uniform_int(0, total - 1));
    }
    for (int flat : coords) {
      const int r = flat % p->rows();
      const int c = flat / p->rows();
      const double saved = p->value(r, c);
      p->value(r, c) = saved + eps;
      const double hi_theta = p->value(r, c);
      const double hi = eval_loss();
      p->value(r, c) = saved - eps;
      const double lo_theta = p->value(r, c);
      const double lo = eval_loss();
      p->value(r, c) = saved;
      const double fd = (hi - lo) / (hi_theta - lo_theta);
      const double a = analytic[pi](r, c);
      const double err = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8});
      if (err > max_err) max_err = err;
    }
  }
  (void)tol;  // callers compare the returned maximum against it
  for (Param* p : params) p->zero_grad();
  return max_err;
}

}  // namespace docie::nn
