#include <gtest/gtest.h>

#include <cmath>

#include "metarec/autodiff.hpp"
#include "support/gradcheck.hpp"

namespace ad = metarec::ad;
using ad::Tape;
using ad::Tensor;
using metarec::Rng;

namespace {

void expect_values(const Tensor& t, std::vector<double> want, double tol = 0.0) {
  ASSERT_EQ(t.numel(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(t[i], want[i], tol) << "at " << i;
}

}  // namespace

TEST(Forward, MatmulHandExample) {
  auto out = ad::matmul(Tensor::matrix(2, 2, {1, 2, 3, 4}), Tensor::matrix(2, 1, {1, 1}));
  EXPECT_EQ(out.shape(), (ad::Shape{2, 1}));
  expect_values(out, {3, 7});
}

TEST(Forward, SoftmaxOfZerosIsUniform) {
  expect_values(ad::softmax(Tensor::vector({0, 0, 0}), 0), {1.0 / 3, 1.0 / 3, 1.0 / 3}, 1e-15);
}

TEST(Forward, GatherRepeatsRows) {
  auto e = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
  std::vector<std::size_t> idx{2, 2};
  expect_values(ad::gather(e, idx), {5, 6, 5, 6});
}

TEST(Forward, ShapeMismatchNamesShapes) {
  try {
    ad::add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2}));
    FAIL() << "expected a throw";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("[2,3]"), std::string::npos) << e.what();
  }
  EXPECT_THROW(ad::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), std::invalid_argument);
}

TEST(Forward, GatherOutOfRangeThrows) {
  std::vector<std::size_t> idx{3};
  EXPECT_THROW(ad::gather(Tensor::zeros({3, 2}), idx), std::exception);
}

TEST(Forward, CrossEntropyStable) {
  std::vector<std::size_t> t{0};
  EXPECT_NEAR(ad::cross_entropy(Tensor::vector({0, 0}), t).item(), std::log(2.0), 1e-15);
  double big = ad::cross_entropy(Tensor::vector({1000, 0}), t).item();
  EXPECT_TRUE(std::isfinite(big));
  EXPECT_NEAR(big, 0.0, 1e-12);
}

TEST(StopGradient, ForwardIdentityAndZeroGrad) {
  auto x = Tensor::vector({1.5, -2});
  expect_values(ad::stop_gradient(x), {1.5, -2});
  Tape tape;
  auto v = tape.variable(x);
  expect_values(ad::grad(ad::sum(ad::stop_gradient(v)), v), {0, 0});
}

TEST(StopGradient, OnlyNonStoppedFactorDifferentiates) {
  Tape tape;
  auto x = tape.variable(Tensor::vector({3}));
  expect_values(ad::grad(ad::sum(ad::mul(x, ad::stop_gradient(x))), x), {3});
}

TEST(StopGradient, BlocksEveryPath) {
  Rng rng(3);
  for (int c = 0; c < 20; ++c) {
    Tape tape;
    auto x = tape.variable(checks::random_tensor({4}, rng));
    auto s = ad::stop_gradient(x);
    auto e = ad::sum(ad::mul(ad::exp(s), ad::tanh(ad::square(s))));
    auto g = ad::grad(e, x);
    for (double v : g.data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Cosine, Examples) {
  EXPECT_DOUBLE_EQ(ad::cosine_similarity(Tensor::vector({1, 0}), Tensor::vector({1, 0})).item(), 1.0);
  EXPECT_DOUBLE_EQ(ad::cosine_similarity(Tensor::vector({1, 0}), Tensor::vector({0, 1})).item(), 0.0);
  EXPECT_DOUBLE_EQ(ad::cosine_similarity(Tensor::vector({0, 0}), Tensor::vector({1, 1}), 1e-12).item(), 0.0);
  EXPECT_THROW(ad::cosine_similarity(Tensor::vector({1, 0}), Tensor::vector({1, 0, 0})), std::invalid_argument);
}

TEST(Grad, PowerRule) {
  Tape tape;
  auto x = tape.variable(Tensor::vector({1, 2, 3}));
  expect_values(ad::grad(ad::sum(ad::square(x)), x), {2, 4, 6}, 1e-15);
}

TEST(Grad, SecondDerivativeOfCube) {
  Tape tape;
  auto x = tape.variable(Tensor::scalar(2.0));
  auto y = ad::mul(ad::square(x), x);
  auto g = ad::grad(y, x, true);
  EXPECT_NEAR(g.item(), 12.0, 1e-12);
  EXPECT_NEAR(ad::grad(g, x).item(), 12.0, 1e-12);
}

TEST(Grad, NonScalarOutputRejected) {
  Tape tape;
  auto x = tape.variable(Tensor::vector({1, 2}));
  EXPECT_THROW(ad::grad(ad::square(x), x), std::invalid_argument);
}

TEST(Grad, UnreachableGetsZeros) {
  Tape tape;
  auto x = tape.variable(Tensor::vector({1, 2}));
  auto y = tape.variable(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  std::vector<Tensor> wrt{x, y};
  auto g = ad::grad(ad::sum(x), wrt);
  EXPECT_EQ(g[1].shape(), y.shape());
  for (double v : g[1].data()) EXPECT_EQ(v, 0.0);
}

TEST(Grad, DetachedInputContributesNothing) {
  Tape tape;
  auto x = tape.variable(Tensor::vector({1, 2}));
  auto d = x.detach();
  EXPECT_FALSE(d.attached());
  auto g = ad::grad(ad::sum(ad::mul(x, d)), x);
  expect_values(g, {1, 2});
}

TEST(GradCheck, EveryOpMatchesFiniteDifferences) {
  Rng rng(20240601);
  for (const auto& op : checks::op_cases()) {
    for (int c = 0; c < 20; ++c) {
      auto in = op.inputs(rng);
      for (const auto& t : in) ASSERT_LE(t.numel(), 64u) << op.name;
      double err = checks::gradient_error(op.apply, in, rng, op.constants_from);
      EXPECT_LE(err, 1e-6) << op.name << " case " << c;
    }
  }
}

TEST(GradCheck, NestedGradientsMatchFiniteDifferences) {
  Rng rng(77);
  std::vector<checks::Fn> fns = {
      [](const std::vector<Tensor>& in) { return ad::sum(ad::mul(ad::tanh(in[0]), ad::exp(in[0]))); },
      [](const std::vector<Tensor>& in) { return ad::cross_entropy(in[0], std::vector<std::size_t>{1}); },
      [](const std::vector<Tensor>& in) {
        auto m = ad::reshape(in[0], {2, 3});
        return ad::sum(ad::softmax(ad::matmul(m, ad::transpose(m)), 1));
      },
      [](const std::vector<Tensor>& in) {
        auto a = ad::slice(in[0], 0, 0, 3), b = ad::slice(in[0], 0, 3, 6);
        return ad::cosine_similarity(a, b);
      },
      [](const std::vector<Tensor>& in) { return ad::sum(ad::sqrt(ad::add_scalar(ad::square(in[0]), 1.0))); },
      [](const std::vector<Tensor>& in) { return ad::mean(ad::l2_norm(ad::reshape(in[0], {3, 2}), 1)); },
      [](const std::vector<Tensor>& in) { return ad::sum(ad::mul(ad::sigmoid(in[0]), ad::log(ad::add_scalar(ad::square(in[0]), 0.5)))); },
  };
  for (std::size_t f = 0; f < fns.size(); ++f) {
    for (int c = 0; c < 10; ++c) {
      auto x = checks::away_from_zero({6}, rng, 0.2, 1.0);
      EXPECT_LE(checks::hessian_vector_error(fns[f], x, rng), 1e-5) << "fn " << f;
    }
  }
}

TEST(Tape, TopologicalAndReplayable) {
  Rng rng(5);
  Tape tape;
  auto w = tape.variable(checks::random_tensor({3, 3}, rng));
  auto x = tape.variable(checks::random_tensor({2, 3}, rng));
  auto y = ad::sum(ad::softmax(ad::tanh(ad::matmul(x, w)), 1));
  auto g = ad::grad(y, x, true);
  ad::grad(ad::sum(g), w);
  EXPECT_GT(tape.num_records(), 5u);
  EXPECT_TRUE(tape.replay_matches());
}

TEST(Tape, IdenticalSequencesGiveBitIdenticalGradients) {
  auto run = [] {
    Rng rng(9);
    Tape tape;
    auto w = tape.variable(checks::random_tensor({4, 4}, rng));
    auto x = checks::random_tensor({3, 4}, rng);
    auto l = ad::cross_entropy(ad::matmul(ad::relu(ad::matmul(x, w)), w), std::vector<std::size_t>{0, 1, 2});
    return ad::grad(l, w).values();
  };
  EXPECT_EQ(run(), run());
}

TEST(Tape, DifferentTapesCannotMix) {
  Tape a, b;
  auto x = a.variable(Tensor::vector({1}));
  auto y = b.variable(Tensor::vector({2}));
  EXPECT_THROW(ad::add(x, y), std::exception);
}
