#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "docie/graph.hpp"

namespace docie::nn {

using ad::Expr;
using ad::Graph;
using ad::Mat;
using ad::Param;

// Owns parameters with stable addresses; serializes to a named-tensor archive.
class ParamStore {
 public:
  Param& add(const std::string& name, int rows, int cols);
  Param* find(const std::string& name);
  const std::vector<Param*>& all() const { return order_; }

  nlohmann::json to_json() const;
  // Restores values for matching names/shapes; throws on mismatch.
  void from_json(const nlohmann::json& j);

 private:
  std::vector<std::unique_ptr<Param>> params_;
  std::vector<Param*> order_;
  std::map<std::string, Param*> by_name_;
};

void init_uniform(Param& p, Rng& rng, double lo, double hi);
void init_xavier(Param& p, Rng& rng);
// Orthogonal rows blocks; for stacked-gate recurrent matrices each
// rows()/cols() block is orthogonalized separately.
void init_orthogonal(Param& p, Rng& rng);

// Feedforward network: hidden layers with gelu and dropout between layers,
// linear output.
struct Ffn {
  std::vector<Param*> weights;
  std::vector<Param*> biases;
  double dropout_rate = 0.0;

  static Ffn make(ParamStore& store, const std::string& name, const std::vector<int>& dims,
                  double dropout, Rng& rng);
  Expr apply(Graph& g, Expr x) const;
};

// Single-direction LSTM; gate order i, f, g, o stacked in the weight rows.
struct Lstm {
  Param* wx = nullptr;
  Param* wh = nullptr;
  Param* bias = nullptr;
  int hidden = 0;

  static Lstm make(ParamStore& store, const std::string& name, int input_dim, int hidden,
                   Rng& rng);
  // Returns one hidden state per input (inputs are d x 1 columns).
  std::vector<Expr> run(Graph& g, const std::vector<Expr>& inputs, bool reverse) const;
};

struct BiLstm {
  Lstm fwd;
  Lstm bwd;

  static BiLstm make(ParamStore& store, const std::string& name, int input_dim, int hidden,
                     Rng& rng);
  // Concatenated forward/backward states, one 2h x 1 column per input.
  std::vector<Expr> run(Graph& g, const std::vector<Expr>& inputs) const;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
  // Applies accumulated gradients and clears them.
  void step(const std::vector<Param*>& params);

 private:
  struct State {
    Mat m;
    Mat v;
  };
  AdamConfig cfg_;
  std::map<Param*, State> state_;
  long t_ = 0;
};

// Central-finite-difference verification of reverse-mode gradients.
// `build_loss` must rebuild the loss expression from current parameter
// values on each call; dropout is disabled (graphs are constructed in eval
// mode). Returns the max over sampled coordinates of
// |analytic - fd| / max(|analytic|, |fd|, 1e-8).
// Throws std::runtime_error on a non-finite loss.
double gradient_check(const std::function<Expr(Graph&)>& build_loss,
                      const std::vector<Param*>& params, double eps, double tol, Rng& rng,
                      int max_coords_per_param = 6);

}  // namespace docie::nn
