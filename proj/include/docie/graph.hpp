#pragma once

// Reverse-mode automatic differentiation on a per-document tape. Values are
// double-precision Eigen matrices; column vectors represent embeddings.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "docie/rng.hpp"

namespace docie::ad {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Trainable tensor. Gradients accumulate across backward passes until the
// optimizer consumes them.
struct Param {
  std::string name;
  Mat value;
  Mat grad;

  Param(std::string n, int rows, int cols)
      : name(std::move(n)), value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)) {}
  int rows() const { return static_cast<int>(value.rows()); }
  int cols() const { return static_cast<int>(value.cols()); }
  void zero_grad() { grad.setZero(); }
};

class Graph;

struct Expr {
  Graph* g = nullptr;
  int idx = -1;
  bool valid() const { return g != nullptr && idx >= 0; }
};

class Graph {
 public:
  explicit Graph(bool training = false, std::uint64_t dropout_seed = 0)
      : training_(training), rng_(dropout_seed ? dropout_seed : 1) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool training() const { return training_; }
  Rng& rng() { return rng_; }

  const Mat& value(Expr e) const { return nodes_[e.idx].val; }
  double scalar(Expr e) const { return nodes_[e.idx].val(0, 0); }
  const Mat& gradient(Expr e) const { return nodes_[e.idx].grad; }

  // Runs reverse accumulation from a 1x1 loss node.
  void backward(Expr loss);

  // --- node construction (used by the op library and by custom ops) ---
  using BackFn = std::function<void(Graph&, int)>;
  int add_node(Mat val, BackFn back);
  Mat& node_grad(int idx) { return nodes_[idx].grad; }
  const Mat& node_val(int idx) const { return nodes_[idx].val; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat val;
    Mat grad;
    BackFn back;
  };
  std::vector<Node> nodes_;
  bool training_;
  Rng rng_;
};

// --- constants and parameters ---
Expr input(Graph& g, Mat m);
Expr scalar_input(Graph& g, double v);
Expr zeros(Graph& g, int rows, int cols);
Expr param(Graph& g, Param& p);
// Columns of an embedding table (d x vocab) selected by id.
Expr lookup(Graph& g, Param& table, const std::vector<int>& ids);

// --- affine maps (parameters are consumed directly, not as nodes) ---
Expr affine(Graph& g, Param& w, Expr x, Param& b);           // w x + b (b broadcast over cols)
Expr linear(Graph& g, Param& w, Expr x);                     // w x
Expr affine2(Graph& g, Param& wa, Expr a, Param& wb, Expr b, Param& bias);  // wa a + wb b + bias

// --- arithmetic ---
Expr add(Expr a, Expr b);
Expr sub(Expr a, Expr b);
Expr cmult(Expr a, Expr b);
Expr scale(Expr a, double c);
Expr matmul(Expr a, Expr b);
Expr dot(Expr a, Expr b);

// --- shape ---
Expr concat_rows(const std::vector<Expr>& parts);
Expr concat_cols(const std::vector<Expr>& parts);
Expr slice_rows(Expr a, int begin, int end);
Expr col(Expr a, int j);
Expr pick(Expr a, int row, int col);

// --- nonlinearities and reductions ---
Expr tanh_e(Expr a);
Expr sigmoid_e(Expr a);
Expr relu_e(Expr a);
Expr gelu_e(Expr a);
Expr softmax_col(Expr v);       // v: n x 1
Expr rowwise_max(Expr m);       // d x k -> d x 1; ties resolved to the lowest column
Expr rowwise_mean(Expr m);      // d x k -> d x 1
Expr sum_all(Expr a);
Expr mean_all(Expr a);

// Inverted dropout; identity in eval mode or when p == 0.
Expr dropout(Expr a, double p);

// Numerically stable binary cross entropy on a scalar logit.
Expr bce_with_logit(Expr logit, double target);

// Escape hatch for structured ops (CRF). `backward` receives the gradients of
// the output and writes into the gradients of the inputs.
Expr custom(Graph& g, const std::vector<Expr>& inputs, Mat value,
            std::function<void(Graph&, const std::vector<int>&, int)> backward);

}  // namespace docie::ad
