#include "docie/graph.hpp"

#include <cmath>
#include <stdexcept>

namespace docie::ad {

int Graph::add_node(Mat val, BackFn back) {
  nodes_.push_back(Node{std::move(val), Mat(), std::move(back)});
  return static_cast<int>(nodes_.size()) - 1;
}

void Graph::backward(Expr loss) {
  if (!loss.valid() || loss.g != this) throw std::invalid_argument("backward: foreign expression");
  if (nodes_[loss.idx].val.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
  for (int i = 0; i <= loss.idx; ++i) {
    nodes_[i].grad = Mat::Zero(nodes_[i].val.rows(), nodes_[i].val.cols());
  }
  nodes_[loss.idx].grad(0, 0) = 1.0;
  for (int i = loss.idx; i >= 0; --i) {
    if (nodes_[i].back) nodes_[i].back(*this, i);
  }
}

namespace {

Graph& same_graph(Expr a, Expr b) {
  if (a.g != b.g) throw std::invalid_argument("expressions from different graphs");
  return *a.g;
}

}  // namespace

Expr input(Graph& g, Mat m) { return {&g, g.add_node(std::move(m), nullptr)}; }

Expr scalar_input(Graph& g, double v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return input(g, std::move(m));
}

Expr zeros(Graph& g, int rows, int cols) { return input(g, Mat::Zero(rows, cols)); }

Expr param(Graph& g, Param& p) {
  int idx = g.add_node(p.value, [&p](Graph& gr, int i) { p.grad += gr.node_grad(i); });
  return {&g, idx};
}

Expr lookup(Graph& g, Param& table, const std::vector<int>& ids) {
  Mat out(table.rows(), static_cast<int>(ids.size()));
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] < 0 || ids[j] >= table.cols()) throw std::out_of_range("lookup: id out of range");
    out.col(j) = table.value.col(ids[j]);
  }
  int idx = g.add_node(std::move(out), [&table, ids](Graph& gr, int i) {
    const Mat& grad = gr.node_grad(i);
    for (std::size_t j = 0; j < ids.size(); ++j) table.grad.col(ids[j]) += grad.col(j);
  });
  return {&g, idx};
}

Expr affine(Graph& g, Param& w, Expr x, Param& b) {
  const Mat& xv = g.value(x);
  Mat out = (w.value * xv).colwise() + Vec(b.value.col(0));
  int idx = g.add_node(std::move(out), [&w, &b, xi = x.idx](Graph& gr, int i) {
    const Mat& grad = gr.node_grad(i);
    const Mat& xv = gr.node_val(xi);
    w.grad.noalias() += grad * xv.transpose();
    b.grad.col(0) += grad.rowwise().sum();
    gr.node_grad(xi).noalias() += w.value.transpose() * grad;
  });
  return {&g, idx};
}

Expr linear(Graph& g, Param& w, Expr x) {
  Mat out = w.value * g.value(x);
  int idx = g.add_node(std::move(out), [&w, xi = x.idx](Graph& gr, int i) {
    const Mat& grad = gr.node_grad(i);
    w.grad.noalias() += grad * gr.node_val(xi).transpose();
    gr.node_grad(xi).noalias() += w.value.transpose() * grad;
  });
  return {&g, idx};
}

Expr affine2(Graph& g, Param& wa, Expr a, Param& wb, Expr b, Param& bias) {
  Mat out = wa.value * g.value(a) + wb.value * g.value(b);
  out.colwise() += Vec(bias.value.col(0));
  int idx = g.add_node(std::move(out), [&wa, &wb, &bias, ai = a.idx, bi = b.idx](Graph& gr, int i) {
    const Mat& grad = gr.node_grad(i);
    wa.grad.noalias() += grad * gr.node_val(ai).transpose();
    wb.grad.noalias() += grad * gr.node_val(bi).transpose();
    bias.grad.col(0) += grad.rowwise().sum();
    gr.node_grad(ai).noalias() += wa.value.transpose() * grad;
    gr.node_grad(bi).noalias() += wb.value.transpose() * grad;
  });
  return {&g, idx};
}

Expr add(Expr a, Expr b) {
  Graph& g = same_graph(a, b);
  Mat out = g.value(a) + g.value(b);
  int idx = g.add_node(std::move(out), [ai = a.idx, bi = b.idx](Graph& gr, int i) {
    gr.node_grad(ai) += gr.node_grad(i);
    gr.node_grad(bi) += gr.node_grad(i);
  });
  return {&g, idx};
}

Expr sub(Expr a, Expr b) {
  Graph& g = same_graph(a, b);
  Mat out = g.value(a) - g.value(b);
  int idx = g.add_node(std::move(out), [ai = a.idx, bi = b.idx](Graph& gr, int i) {
    gr.node_grad(ai) += gr.node_grad(i);
    gr.node_grad(bi) -= gr.node_grad(i);
  });
  return {&g, idx};
}

Expr cmult(Expr a, Expr b) {
  Graph& g = same_graph(a, b);
  Mat out = g.value(a).cwiseProduct(g.value(b));
  int idx = g.add_node(std::move(out), [ai = a.idx, bi = b.idx](Graph& gr, int i) {
    const Mat& grad = gr.node_grad(i);
    gr.node_grad(ai) += grad.cwiseProduct(gr.node_val(bi));
    gr.node_grad(bi) += grad.cwiseProduct(gr.node_val(ai));
  });
  return {&g, idx};
}

Expr scale(Expr a, double c) {
  Graph& g = *a.g;
  Mat out = g.value(a) * c;
  int idx = g.add_node(std::move(out), [ai = a.idx, c](Graph& gr, int i) {
    gr.node_grad(ai) += gr.node_grad(i) * c;
  });
  return {&g, idx};
}

Expr matmul(Expr a, Expr b) {
  Graph& g = same_graph(a, b);
  Mat out = g.value(a) * g.value(b);
  int idx = g.add_node(std::move(out), [ai = a.idx, bi = b.idx](Graph& gr, int i) {
    const Mat& grad = gr.node_grad(i);
    gr.node_grad(ai).noalias() += grad * gr.node_val(bi).transpose();
    gr.node_grad(bi).noalias() += gr.node_val(ai).transpose() * grad;
  });
  return {&g, idx};
}

Expr dot(Expr a, Expr b) {
  Graph& g = same_graph(a, b);
  Mat out(1, 1);
  out(0, 0) = (g.value(a).array() * g.value(b).array()).sum();
  int idx = g.add_node(std::move(out), [ai = a.idx, bi = b.idx](Graph& gr, int i) {
    double grad = gr.node_grad(i)(0, 0);
    gr.node_grad(ai) += grad * gr.node_val(bi);
    gr.node_grad(bi) += grad * gr.node_val(ai);
  });
  return {&g, idx};
}

Expr concat_rows(const std::vector<Expr>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  Graph& g = *parts.front().g;
  int rows = 0;
  const int cols = static_cast<int>(g.value(parts.front()).cols());
  for (Expr p : parts) rows += static_cast<int>(g.value(p).rows());
  Mat out(rows, cols);
  int r = 0;
  std::vector<int> idxs;
  for (Expr p : parts) {
    const Mat& v = g.value(p);
    out.middleRows(r, v.rows()) = v;
    r += static_cast<int>(v.rows());
    idxs.push_back(p.idx);
  }
  int idx = g.add_node(std::move(out), [idxs](Graph& gr, int i) {
    const Mat& grad = gr.node_grad(i);
    int r = 0;
    for (int pi : idxs) {
      Mat& pg = gr.node_grad(pi);
      pg += grad.middleRows(r, pg.rows());
      r += static_cast<int>(pg.rows());
    }
  });
  return {&g, idx};
}

Expr concat_cols(const std::vector<Expr>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  Graph& g = *parts.front().g;
  int cols = 0;
  const int rows = static_cast<int>(g.value(parts.front()).rows());
  for (Expr p : parts) cols += static_cast<int>(g.value(p).cols());
  Mat out(rows, cols);
  int c = 0;
  std::vector<int> idxs;
  for (Expr p : parts) {
    const Mat& v = g.value(p);
    out.middleCols(c, v.cols()) = v;
    c += static_cast<int>(v.cols());
    idxs.push_back(p.idx);
  }
  int idx = g.add_node(std::move(out), [idxs](Graph& gr, int i) {
    const Mat& grad = gr.node_grad(i);
    int c = 0;
    for (int pi : idxs) {
      Mat& pg = gr.node_grad(pi);
      pg += grad.middleCols(c, pg.cols());
      c += static_cast<int>(pg.cols());
    }
  });
  return {&g, idx};
}

Expr slice_rows(Expr a, int begin, int end) {
  Graph& g = *a.g;
  Mat out = g.value(a).middleRows(begin, end - begin);
  int idx = g.add_node(std::move(out), [ai = a.idx, begin, end](Graph& gr, int i) {
    gr.node_grad(ai).middleRows(begin, end - begin) += gr.node_grad(i);
  });
  return {&g, idx};
}

Expr col(Expr a, int j) {
  Graph& g = *a.g;
  Mat out = g.value(a).col(j);
  int idx = g.add_node(std::move(out), [ai = a.idx, j](Graph& gr, int i) {
    gr.node_grad(ai).col(j) += gr.node_grad(i).col(0);
  });
  return {&g, idx};
}

Expr pick(Expr a, int row, int col) {
  Graph& g = *a.g;
  Mat out(1, 1);
  out(0, 0) = g.value(a)(row, col);
  int idx = g.add_node(std::move(out), [ai = a.idx, row, col](Graph& gr, int i) {
    gr.node_grad(ai)(row, col) += gr.node_grad(i)(0, 0);
  });
  return {&g, idx};
}

namespace {

template <typename Fwd, typename Bwd>
Expr unary_op(Expr a, Fwd fwd, Bwd bwd) {
  Graph& g = *a.g;
  Mat out = fwd(g.value(a));
  int idx = g.add_node(std::move(out), [ai = a.idx, bwd](Graph& gr, int i) {
    gr.node_grad(ai) += bwd(gr.node_val(ai), gr.node_val(i), gr.node_grad(i));
  });
  return {&g, idx};
}

}  // namespace

Expr tanh_e(Expr a) {
  return unary_op(
      a, [](const Mat& x) { return Mat(x.array().tanh()); },
      [](const Mat&, const Mat& y, const Mat& g) { return Mat(g.array() * (1.0 - y.array().square())); });
}

Expr sigmoid_e(Expr a) {
  return unary_op(
      a, [](const Mat& x) { return Mat(1.0 / (1.0 + (-x.array()).exp())); },
      [](const Mat&, const Mat& y, const Mat& g) { return Mat(g.array() * y.array() * (1.0 - y.array())); });
}

Expr relu_e(Expr a) {
  return unary_op(
      a, [](const Mat& x) { return Mat(x.cwiseMax(0.0)); },
      [](const Mat& x, const Mat&, const Mat& g) {
        return Mat(g.array() * (x.array() > 0.0).cast<double>());
      });
}

Expr gelu_e(Expr a) {
  constexpr double kInvSqrt2 = 0.7071067811865475;
  constexpr double kInvSqrt2Pi = 0.3989422804014327;
  auto cdf = [=](double v) { return 0.5 * (1.0 + std::erf(v * kInvSqrt2)); };
  return unary_op(
      a,
      [=](const Mat& x) { return Mat(x.unaryExpr([=](double v) { return v * cdf(v); })); },
      [=](const Mat& x, const Mat&, const Mat& g) {
        Mat d = x.unaryExpr(
            [=](double v) { return cdf(v) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v); });
        return Mat(g.cwiseProduct(d));
      });
}

Expr softmax_col(Expr v) {
  Graph& g = *v.g;
  const Mat& x = g.value(v);
  if (x.cols() != 1) throw std::invalid_argument("softmax_col: expects a column vector");
  Eigen::ArrayXd shifted = x.col(0).array() - x.col(0).maxCoeff();
  Eigen::ArrayXd e = shifted.exp();
  Mat out = (e / e.sum()).matrix();
  int idx = g.add_node(std::move(out), [vi = v.idx](Graph& gr, int i) {
    const Mat& y = gr.node_val(i);
    const Mat& grad = gr.node_grad(i);
    double inner = (grad.array() * y.array()).sum();
    gr.node_grad(vi).array() += y.array() * (grad.array() - inner);
  });
  return {&g, idx};
}

Expr rowwise_max(Expr m) {
  Graph& g = *m.g;
  const Mat& x = g.value(m);
  Mat out(x.rows(), 1);
  std::vector<int> argmax(x.rows());
  for (int r = 0; r < x.rows(); ++r) {
    int best = 0;
    for (int c = 1; c < x.cols(); ++c) {
      if (x(r, c) > x(r, best)) best = c;
    }
    argmax[r] = best;
    out(r, 0) = x(r, best);
  }
  int idx = g.add_node(std::move(out), [mi = m.idx, argmax](Graph& gr, int i) {
    const Mat& grad = gr.node_grad(i);
    Mat& mg = gr.node_grad(mi);
    for (int r = 0; r < grad.rows(); ++r) mg(r, argmax[r]) += grad(r, 0);
  });
  return {&g, idx};
}

Expr rowwise_mean(Expr m) {
  Graph& g = *m.g;
  const Mat& x = g.value(m);
  const double inv = 1.0 / static_cast<double>(x.cols());
  Mat out = x.rowwise().mean();
  int idx = g.add_node(std::move(out), [mi = m.idx, inv](Graph& gr, int i) {
    gr.node_grad(mi).colwise() += Vec(gr.node_grad(i).col(0) * inv);
  });
  return {&g, idx};
}

Expr sum_all(Expr a) {
  Graph& g = *a.g;
  Mat out(1, 1);
  out(0, 0) = g.value(a).sum();
  int idx = g.add_node(std::move(out), [ai = a.idx](Graph& gr, int i) {
    gr.node_grad(ai).array() += gr.node_grad(i)(0, 0);
  });
  return {&g, idx};
}

Expr mean_all(Expr a) {
  Graph& g = *a.g;
  const double inv = 1.0 / static_cast<double>(g.value(a).size());
  Mat out(1, 1);
  out(0, 0) = g.value(a).sum() * inv;
  int idx = g.add_node(std::move(out), [ai = a.idx, inv](Graph& gr, int i) {
    gr.node_grad(ai).array() += gr.node_grad(i)(0, 0) * inv;
  });
  return {&g, idx};
}

Expr dropout(Expr a, double p) {
  Graph& g = *a.g;
  if (!g.training() || p <= 0.0) return a;
  if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
  const Mat& x = g.value(a);
  Mat mask(x.rows(), x.cols());
  const double keep = 1.0 - p;
  for (int c = 0; c < x.cols(); ++c) {
    for (int r = 0; r < x.rows(); ++r) {
      mask(r, c) = g.rng().bernoulli(keep) ? 1.0 / keep : 0.0;
    }
  }
  Mat out = x.cwiseProduct(mask);
  int idx = g.add_node(std::move(out), [ai = a.idx, mask](Graph& gr, int i) {
    gr.node_grad(ai) += gr.node_grad(i).cwiseProduct(mask);
  });
  return {&g, idx};
}

Expr bce_with_logit(Expr logit, double target) {
  Graph& g = *logit.g;
  const double z = g.scalar(logit);
  Mat out(1, 1);
  out(0, 0) = std::max(z, 0.0) - z * target + std::log1p(std::exp(-std::abs(z)));
  int idx = g.add_node(std::move(out), [li = logit.idx, target](Graph& gr, int i) {
    const double z = gr.node_val(li)(0, 0);
    const double sig = 1.0 / (1.0 + std::exp(-z));
    gr.node_grad(li)(0, 0) += gr.node_grad(i)(0, 0) * (sig - target);
  });
  return {&g, idx};
}

Expr custom(Graph& g, const std::vector<Expr>& inputs, Mat value,
            std::function<void(Graph&, const std::vector<int>&, int)> backward) {
  std::vector<int> idxs;
  idxs.reserve(inputs.size());
  for (Expr e : inputs) {
    if (e.g != &g) throw std::invalid_argument("custom: foreign expression");
    idxs.push_back(e.idx);
  }
  int idx = g.add_node(std::move(value), [idxs, backward](Graph& gr, int i) { backward(gr, idxs, i); });
  return {&g, idx};
}

}  // namespace docie::ad
