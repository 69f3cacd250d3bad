#include <doctest.h>

#include <cmath>

#include "docie/nn.hpp"

using namespace docie;
using ad::Expr;
using ad::Graph;
using ad::Mat;

namespace {

Mat random_mat(Rng& rng, int rows, int cols) {
  Mat m(rows, cols);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) m(r, c) = rng.normal();
  }
  return m;
}

// Finite-difference check of a scalar expression built from a single
// parameter, exercising each op's backward.
double op_fd_error(const std::function<Expr(Graph&, ad::Param&)>& build, int rows, int cols,
                   std::uint64_t seed) {
  nn::ParamStore store;
  ad::Param& p = store.add("p", rows, cols);
  Rng rng(seed);
  nn::init_uniform(p, rng, -1.0, 1.0);
  return nn::gradient_check([&](Graph& g) { return build(g, p); }, {&p}, 1e-5, 1e-6, rng, 12);
}

}  // namespace

TEST_CASE("elementwise and reduction ops have correct gradients") {
  auto check = [](const char* name, const std::function<Expr(Graph&, ad::Param&)>& build) {
    double err = op_fd_error(build, 4, 3, 7);
    INFO(name);
    CHECK(err < 1e-5);
  };
  check("tanh", [](Graph& g, ad::Param& p) { return ad::sum_all(ad::tanh_e(ad::param(g, p))); });
  check("sigmoid",
        [](Graph& g, ad::Param& p) { return ad::sum_all(ad::sigmoid_e(ad::param(g, p))); });
  check("gelu", [](Graph& g, ad::Param& p) { return ad::sum_all(ad::gelu_e(ad::param(g, p))); });
  check("relu_mean",
        [](Graph& g, ad::Param& p) { return ad::mean_all(ad::relu_e(ad::param(g, p))); });
  check("scale_sub", [](Graph& g, ad::Param& p) {
    Expr x = ad::param(g, p);
    return ad::sum_all(ad::sub(ad::scale(x, 2.5), ad::cmult(x, x)));
  });
  check("rowwise_mean",
        [](Graph& g, ad::Param& p) { return ad::sum_all(ad::rowwise_mean(ad::param(g, p))); });
  check("softmax_slice", [](Graph& g, ad::Param& p) {
    Expr col0 = ad::slice_rows(ad::col(ad::param(g, p), 0), 0, 4);
    Expr sm = ad::softmax_col(col0);
    return ad::pick(ad::cmult(sm, sm), 2, 0);
  });
}

TEST_CASE("matmul, dot and concat gradients") {
  Rng rng(11);
  nn::ParamStore store;
  ad::Param& a = store.add("a", 3, 4);
  ad::Param& b = store.add("b", 4, 2);
  nn::init_uniform(a, rng, -1, 1);
  nn::init_uniform(b, rng, -1, 1);
  auto build = [&](Graph& g) {
    Expr pa = ad::param(g, a);
    Expr pb = ad::param(g, b);
    Expr prod = ad::matmul(pa, pb);  // 3x2
    Expr c0 = ad::col(prod, 0);
    Expr c1 = ad::col(prod, 1);
    Expr cat = ad::concat_rows({c0, c1});                 // 6x1
    Expr cat2 = ad::concat_cols({cat, ad::scale(cat, 2)});  // 6x2
    return ad::dot(ad::col(cat2, 0), ad::col(cat2, 1));
  };
  double err = nn::gradient_check(build, {&a, &b}, 1e-5, 1e-6, rng, 16);
  CHECK(err < 1e-5);
}

TEST_CASE("rowwise_max routes gradient to the argmax and breaks ties low") {
  Graph g;
  Mat m(2, 3);
  m << 1.0, 5.0, 5.0,  // tie between columns 1 and 2
      7.0, 2.0, 0.0;
  Expr x = ad::input(g, m);
  Expr mx = ad::rowwise_max(x);
  CHECK(g.value(mx)(0, 0) == 5.0);
  CHECK(g.value(mx)(1, 0) == 7.0);
  Expr loss = ad::sum_all(mx);
  g.backward(loss);
  const Mat& grad = g.gradient(x);
  CHECK(grad(0, 1) == 1.0);  // first maximal column wins the tie
  CHECK(grad(0, 2) == 0.0);
  CHECK(grad(1, 0) == 1.0);
}

TEST_CASE("affine and lookup accumulate parameter gradients") {
  Rng rng(13);
  nn::ParamStore store;
  ad::Param& w = store.add("w", 3, 5);
  ad::Param& bias = store.add("b", 3, 1);
  ad::Param& table = store.add("table", 5, 7);
  nn::init_xavier(w, rng);
  nn::init_uniform(bias, rng, -0.5, 0.5);
  nn::init_uniform(table, rng, -1, 1);
  std::vector<int> ids = {2, 2, 6, 0};
  auto build = [&](Graph& g) {
    Expr x = ad::lookup(g, table, ids);
    return ad::sum_all(ad::tanh_e(ad::affine(g, w, x, bias)));
  };
  double err = nn::gradient_check(build, {&w, &bias, &table}, 1e-5, 1e-6, rng, 20);
  CHECK(err < 1e-5);
}

TEST_CASE("bce_with_logit matches the direct formula and its gradient") {
  Graph g;
  Expr z = ad::scalar_input(g, 0.3);
  Expr loss = ad::bce_with_logit(z, 1.0);
  double p = 1.0 / (1.0 + std::exp(-0.3));
  CHECK(g.scalar(loss) == doctest::Approx(-std::log(p)));
  g.backward(loss);
  CHECK(g.gradient(z)(0, 0) == doctest::Approx(p - 1.0));
}

TEST_CASE("dropout is identity in eval mode and rescales in train mode") {
  Mat m = Mat::Ones(10, 10);
  {
    Graph g(false);
    Expr x = ad::input(g, m);
    Expr d = ad::dropout(x, 0.5);
    CHECK(g.value(d) == m);
  }
  {
    Graph g(true, 42);
    Expr x = ad::input(g, m);
    Expr d = ad::dropout(x, 0.5);
    double mean = g.value(d).mean();
    CHECK(mean > 0.5);
    CHECK(mean < 1.5);
    bool has_zero = (g.value(d).array() == 0.0).any();
    CHECK(has_zero);
  }
}

TEST_CASE("lstm and ffn builders produce gradient-correct stacks") {
  Rng rng(17);
  nn::ParamStore store;
  nn::BiLstm lstm = nn::BiLstm::make(store, "lstm", 3, 4, rng);
  nn::Ffn ffn = nn::Ffn::make(store, "ffn", {8, 6, 1}, 0.0, rng);
  std::vector<Mat> inputs;
  for (int t = 0; t < 5; ++t) inputs.push_back(random_mat(rng, 3, 1));
  auto build = [&](Graph& g) {
    std::vector<Expr> xs;
    for (const Mat& m : inputs) xs.push_back(ad::input(g, m));
    std::vector<Expr> hs = lstm.run(g, xs);
    Expr total = ffn.apply(g, hs[0]);
    for (std::size_t t = 1; t < hs.size(); ++t) total = ad::add(total, ffn.apply(g, hs[t]));
    return total;
  };
  double err = nn::gradient_check(build, store.all(), 1e-5, 1e-6, rng, 4);
  CHECK(err < 1e-5);
}

TEST_CASE("adam reduces a simple quadratic") {
  nn::ParamStore store;
  ad::Param& p = store.add("p", 3, 1);
  p.value << 2.0, -1.5, 0.5;
  nn::Adam adam({0.1});
  for (int step = 0; step < 200; ++step) {
    Graph g;
    Expr x = ad::param(g, p);
    Expr loss = ad::dot(x, x);
    g.backward(loss);
    adam.step(store.all());
  }
  CHECK(p.value.norm() < 1e-2);
}

TEST_CASE("parameter store archives round-trip exactly") {
  Rng rng(23);
  nn::ParamStore store;
  ad::Param& a = store.add("a", 2, 3);
  ad::Param& b = store.add("b", 4, 1);
  nn::init_uniform(a, rng, -2, 2);
  nn::init_uniform(b, rng, -2, 2);
  nlohmann::json archive = store.to_json();

  nn::ParamStore restored;
  restored.add("a", 2, 3);
  restored.add("b", 4, 1);
  restored.from_json(archive);
  CHECK(restored.find("a")->value == a.value);
  CHECK(restored.find("b")->value == b.value);
}
