#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "tweetlm/autodiff.hpp"
#include "tweetlm/rng.hpp"

using namespace tweetlm;

namespace {

Tensor<double> randt(std::vector<int64_t> shape, std::mt19937_64& g, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = (rng::uniform01(g) * 2.0 - 1.0) * scale;
  return t;
}

// Central finite differences of a scalar-valued builder against the analytic
// gradient of every listed input tensor.
void check_grads(std::vector<Tensor<double>>& inputs,
                 const std::function<ad::Var<double>(ad::Graph<double>&,
                                                     std::vector<ad::Var<double>>&)>& build,
                 double tol = 1e-7) {
  ad::Graph<double> g;
  std::vector<ad::Var<double>> vars;
  for (auto& t : inputs) vars.push_back(g.param(t));
  ad::Var<double> loss = build(g, vars);
  REQUIRE(g.val(loss.id).numel() == 1);
  g.backward(loss);

  const double h = 1e-6;
  for (size_t ti = 0; ti < inputs.size(); ++ti) {
    const Tensor<double>& analytic = g.grad_of(vars[ti].id);
    for (int64_t i = 0; i < inputs[ti].numel(); ++i) {
      const double orig = inputs[ti][i];
      inputs[ti][i] = orig + h;
      ad::Graph<double> gp;
      std::vector<ad::Var<double>> vp;
      for (auto& t : inputs) vp.push_back(gp.param(t));
      const double fp = gp.val(build(gp, vp).id)[0];
      inputs[ti][i] = orig - h;
      ad::Graph<double> gm;
      std::vector<ad::Var<double>> vm;
      for (auto& t : inputs) vm.push_back(gm.param(t));
      const double fm = gm.val(build(gm, vm).id)[0];
      inputs[ti][i] = orig;

      const double fd = (fp - fm) / (2.0 * h);
      const double a = analytic[i];
      const double err = std::fabs(a - fd) / std::max({1.0, std::fabs(a), std::fabs(fd)});
      CHECK_MESSAGE(err < tol, "tensor ", ti, " index ", i, " analytic ", a, " fd ", fd);
    }
  }
}

// Reduce any tensor to a scalar with fixed quasi-random weights so the FD
// check exercises the whole output.
ad::Var<double> spread_sum(ad::Graph<double>& g, ad::Var<double> x) {
  Tensor<double> out({1});
  {
    const Tensor<double>& xv = g.val(x.id);
    double acc = 0;
    for (int64_t i = 0; i < xv.numel(); ++i) {
      acc += xv[i] * (0.3 + 0.01 * static_cast<double>(i % 17));
    }
    out[0] = acc;
  }
  const int xid = x.id;
  return g.make_node(std::move(out), g.requires_grad(x.id),
                     [xid](ad::Graph<double>& gr, int self) {
                       const double d = gr.grad_of(self)[0];
                       Tensor<double>& dx = gr.grad_of(xid);
                       for (int64_t i = 0; i < dx.numel(); ++i) {
                         dx[i] += d * (0.3 + 0.01 * static_cast<double>(i % 17));
                       }
                     });
}

}  // namespace

TEST_CASE("matmul gradients match finite differences for all flag pairs") {
  auto g = rng::make_engine(11);
  for (const bool ta : {false, true}) {
    for (const bool tb : {false, true}) {
      std::vector<Tensor<double>> inputs;
      inputs.push_back(randt(ta ? std::vector<int64_t>{4, 3} : std::vector<int64_t>{3, 4}, g));
      inputs.push_back(randt(tb ? std::vector<int64_t>{5, 4} : std::vector<int64_t>{4, 5}, g));
      check_grads(inputs, [ta, tb](ad::Graph<double>& gr, std::vector<ad::Var<double>>& v) {
        return spread_sum(gr, ad::matmul(v[0], v[1], ta, tb));
      });
    }
  }
}

TEST_CASE("bmm gradients match finite differences") {
  auto g = rng::make_engine(13);
  for (const bool tb : {false, true}) {
    std::vector<Tensor<double>> inputs;
    inputs.push_back(randt({2, 3, 4}, g));
    inputs.push_back(randt(tb ? std::vector<int64_t>{2, 5, 4} : std::vector<int64_t>{2, 4, 5}, g));
    check_grads(inputs, [tb](ad::Graph<double>& gr, std::vector<ad::Var<double>>& v) {
      return spread_sum(gr, ad::bmm(v[0], v[1], false, tb));
    });
  }
}

TEST_CASE("elementwise and norm op gradients match finite differences") {
  auto g = rng::make_engine(17);

  SUBCASE("add + add_rowbias + scale") {
    std::vector<Tensor<double>> inputs;
    inputs.push_back(randt({3, 5}, g));
    inputs.push_back(randt({3, 5}, g));
    inputs.push_back(randt({5}, g));
    check_grads(inputs, [](ad::Graph<double>& gr, std::vector<ad::Var<double>>& v) {
      return spread_sum(gr, ad::scale(ad::add_rowbias(ad::add(v[0], v[1]), v[2]), 1.7));
    });
  }

  SUBCASE("gelu") {
    std::vector<Tensor<double>> inputs;
    inputs.push_back(randt({4, 6}, g, 2.0));
    check_grads(inputs, [](ad::Graph<double>& gr, std::vector<ad::Var<double>>& v) {
      return spread_sum(gr, ad::gelu(v[0]));
    });
  }

  SUBCASE("tanh") {
    std::vector<Tensor<double>> inputs;
    inputs.push_back(randt({4, 6}, g, 2.0));
    check_grads(inputs, [](ad::Graph<double>& gr, std::vector<ad::Var<double>>& v) {
      return spread_sum(gr, ad::tanh_act(v[0]));
    });
  }

  SUBCASE("layer_norm") {
    std::vector<Tensor<double>> inputs;
    inputs.push_back(randt({4, 7}, g));
    inputs.push_back(randt({7}, g));
    inputs.push_back(randt({7}, g));
    check_grads(inputs, [](ad::Graph<double>& gr, std::vector<ad::Var<double>>& v) {
      return spread_sum(gr, ad::layer_norm(v[0], v[1], v[2], 1e-8));
    }, 1e-6);
  }
}

TEST_CASE("attention softmax / heads / gather / pool gradients") {
  auto g = rng::make_engine(23);
  const int64_t b = 2, heads = 2, t = 5;

  SUBCASE("attn_softmax with padding") {
    Tensor<uint8_t> mask({b, t});
    mask.fill(1);
    mask[static_cast<int64_t>(t + 3)] = 0;
    mask[static_cast<int64_t>(t + 4)] = 0;
    std::vector<Tensor<double>> inputs;
    inputs.push_back(randt({b * heads, t, t}, g));
    check_grads(inputs, [&](ad::Graph<double>& gr, std::vector<ad::Var<double>>& v) {
      return spread_sum(gr, ad::attn_softmax(v[0], mask, b, heads));
    });
  }

  SUBCASE("split/merge heads round trip") {
    std::vector<Tensor<double>> inputs;
    inputs.push_back(randt({b * t, 6}, g));
    check_grads(inputs, [&](ad::Graph<double>& gr, std::vector<ad::Var<double>>& v) {
      return spread_sum(gr, ad::merge_heads(ad::split_heads(v[0], b, t, heads), b, t, heads));
    });
  }

  SUBCASE("gather_rows") {
    Tensor<int32_t> idx({4});
    idx[0] = 2;
    idx[1] = 0;
    idx[2] = 2;
    idx[3] = 1;
    std::vector<Tensor<double>> inputs;
    inputs.push_back(randt({3, 4}, g));
    check_grads(inputs, [&](ad::Graph<double>& gr, std::vector<ad::Var<double>>& v) {
      return spread_sum(gr, ad::gather_rows(v[0], idx));
    });
  }

  SUBCASE("mean_pool_rows") {
    Tensor<uint8_t> mask({b * t});
    mask.fill(1);
    mask[1] = 0;
    mask[7] = 0;
    std::vector<Tensor<double>> inputs;
    inputs.push_back(randt({b * t, 3}, g));
    check_grads(inputs, [&](ad::Graph<double>& gr, std::vector<ad::Var<double>>& v) {
      return spread_sum(gr, ad::mean_pool_rows(v[0], mask, b, t));
    });
  }

  SUBCASE("embed_sum") {
    Tensor<int32_t> ids({b * t});
    Tensor<int32_t> segs({b * t});
    auto engine = rng::make_engine(5);
    for (int64_t i = 0; i < b * t; ++i) {
      ids[i] = static_cast<int32_t>(rng::uniform_index(engine, 6));
      segs[i] = static_cast<int32_t>(rng::uniform_index(engine, 2));
    }
    std::vector<Tensor<double>> inputs;
    inputs.push_back(randt({6, 4}, g));  // tok
    inputs.push_back(randt({t, 4}, g));  // pos
    inputs.push_back(randt({2, 4}, g));  // seg
    check_grads(inputs, [&](ad::Graph<double>& gr, std::vector<ad::Var<double>>& v) {
      return spread_sum(gr, ad::embed_sum(v[0], v[1], v[2], ids, segs, t));
    });
  }
}

TEST_CASE("cross entropy value and gradient") {
  auto g = rng::make_engine(29);

  SUBCASE("uniform logits give ln(V)") {
    const int64_t n = 4, v = 100;
    Tensor<double> logits({n, v});
    logits.fill(0.25);
    Tensor<int32_t> labels({n});
    for (int64_t i = 0; i < n; ++i) labels[i] = static_cast<int32_t>(i);
    ad::Graph<double> gr;
    auto lv = gr.param(logits);
    auto info = ad::cross_entropy(lv, labels, -100, Tensor<double>(), ad::Reduction::kMean);
    CHECK(gr.val(info.loss.id)[0] == doctest::Approx(std::log(100.0)).epsilon(1e-12));
    CHECK(info.supervised == n);
  }

  SUBCASE("near-certain correct predictions give near-zero loss") {
    const int64_t n = 3, v = 8;
    Tensor<double> logits({n, v});
    Tensor<int32_t> labels({n});
    for (int64_t i = 0; i < n; ++i) {
      labels[i] = static_cast<int32_t>(i + 1);
      logits.at2(i, i + 1) = 50.0;
    }
    ad::Graph<double> gr;
    auto lv = gr.param(logits);
    auto info = ad::cross_entropy(lv, labels, -100, Tensor<double>(), ad::Reduction::kMean);
    CHECK(gr.val(info.loss.id)[0] < 1e-12);
  }

  SUBCASE("all-ignored labels throw") {
    Tensor<double> logits({2, 5});
    Tensor<int32_t> labels({2});
    labels[0] = -100;
    labels[1] = -100;
    ad::Graph<double> gr;
    auto lv = gr.param(logits);
    CHECK_THROWS_AS(
        ad::cross_entropy(lv, labels, -100, Tensor<double>(), ad::Reduction::kMean),
        std::invalid_argument);
  }

  SUBCASE("gradient with ignores and class weights") {
    std::vector<Tensor<double>> inputs;
    inputs.push_back(randt({5, 4}, g));
    Tensor<int32_t> labels({5});
    labels[0] = 2;
    labels[1] = -100;
    labels[2] = 0;
    labels[3] = 3;
    labels[4] = -100;
    Tensor<double> weights({4});
    weights[0] = 0.5;
    weights[1] = 1.0;
    weights[2] = 2.0;
    weights[3] = 0.25;
    for (const auto red : {ad::Reduction::kMean, ad::Reduction::kSum}) {
      check_grads(inputs, [&](ad::Graph<double>& gr, std::vector<ad::Var<double>>& v) {
        return ad::cross_entropy(v[0], labels, -100, weights, red).loss;
      });
    }
  }
}

TEST_CASE("scaling all class weights by a constant changes nothing") {
  auto g = rng::make_engine(41);
  Tensor<double> logits = randt({6, 4}, g);
  Tensor<int32_t> labels({6});
  for (int64_t i = 0; i < 6; ++i) labels[i] = static_cast<int32_t>(i % 4);
  Tensor<double> weights({4});
  weights[0] = 0.5;
  weights[1] = 1.5;
  weights[2] = 2.0;
  weights[3] = 0.25;
  Tensor<double> scaled = weights;
  for (int64_t i = 0; i < 4; ++i) scaled[i] *= 3.0;

  ad::Graph<double> g1, g2;
  auto v1 = g1.param(logits);
  auto v2 = g2.param(logits);
  auto l1 = ad::cross_entropy(v1, labels, -100, weights, ad::Reduction::kMean);
  auto l2 = ad::cross_entropy(v2, labels, -100, scaled, ad::Reduction::kMean);
  CHECK(g1.val(l1.loss.id)[0] == doctest::Approx(g2.val(l2.loss.id)[0]).epsilon(1e-14));
  g1.backward(l1.loss);
  g2.backward(l2.loss);
  const Tensor<double>&d1 = g1.grad_of(v1.id), &d2 = g2.grad_of(v2.id);
  for (int64_t i = 0; i < d1.numel(); ++i) {
    CHECK(d1[i] == doctest::Approx(d2[i]).epsilon(1e-12));
  }
}

TEST_CASE("dropout expectation and backward mask consistency") {
  auto engine = rng::make_engine(31);
  Tensor<double> x({1000});
  for (int64_t i = 0; i < x.numel(); ++i) x[i] = 1.0;

  double mean = 0;
  const int reps = 400;
  for (int r = 0; r < reps; ++r) {
    ad::Graph<double> g;
    auto xv = g.param(x);
    auto y = ad::dropout(xv, 0.1, engine);
    const Tensor<double>& yv = g.val(y.id);
    double s = 0;
    for (int64_t i = 0; i < yv.numel(); ++i) s += yv[i];
    mean += s / static_cast<double>(yv.numel());
  }
  mean /= reps;
  CHECK(mean == doctest::Approx(1.0).epsilon(0.01));

  // gradient equals the applied mask scaling
  ad::Graph<double> g;
  auto xv = g.param(x);
  auto y = ad::dropout(xv, 0.25, engine);
  auto loss = spread_sum(g, y);
  g.backward(loss);
  const Tensor<double>& yv = g.val(y.id);
  const Tensor<double>& dx = g.grad_of(xv.id);
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double w = 0.3 + 0.01 * static_cast<double>(i % 17);
    if (yv[i] == 0.0) {
      CHECK(dx[i] == 0.0);
    } else {
      CHECK(dx[i] == doctest::Approx(w / 0.75).epsilon(1e-12));
    }
  }
}

TEST_CASE("gradients accumulate across reuse of a node") {
  Tensor<double> x({2, 2});
  x[0] = 0.5;
  x[1] = -0.25;
  x[2] = 1.5;
  x[3] = 2.0;
  ad::Graph<double> g;
  auto xv = g.param(x);
  auto y = ad::add(xv, xv);  // y = 2x
  auto loss = spread_sum(g, y);
  g.backward(loss);
  const Tensor<double>& dx = g.grad_of(xv.id);
  for (int64_t i = 0; i < 4; ++i) {
    const double w = 0.3 + 0.01 * static_cast<double>(i % 17);
    CHECK(dx[i] == doctest::Approx(2.0 * w).epsilon(1e-12));
  }
}
