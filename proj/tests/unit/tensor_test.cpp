#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fd_check.hpp"
#include "svtr/attention_mask.hpp"
#include "svtr/graph.hpp"
#include "svtr/ops.hpp"
#include "svtr/tensor.hpp"

using namespace svtr;

namespace {

Tensor random_tensor(Shape shape, unsigned seed, float lo = -1.0f, float hi = 1.0f) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.mutable_data()) v = u(gen);
  return t;
}

template <typename Fn>
void expect_error(Fn fn, ErrorKind kind) {
  try {
    fn();
    FAIL() << "expected an error of kind " << to_string(kind);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

void expect_fd(const oracle::FdResult& r) {
  EXPECT_LT(r.rel_f64, 1e-4);
  EXPECT_LT(r.rel_f32, 1e-2);
}

}  // namespace

TEST(Tensor, ShapeInvariants) {
  Tensor t(Shape{2, 3, 4});
  EXPECT_EQ(t.numel(), 24u);
  EXPECT_EQ(t.dim(-1), 4u);
  EXPECT_FALSE(t.has_grad());
  expect_error([] { Tensor bad(Shape{2, 0}); }, ErrorKind::kShape);
  expect_error([] { Tensor bad(Shape{1, 1, 1, 1, 1}); }, ErrorKind::kShape);
  expect_error([] { Tensor bad(Shape{2, 2}, std::vector<float>(3)); }, ErrorKind::kShape);
}

TEST(Tensor, CopiesShareStorageAndCloneDoesNot) {
  Tensor a(Shape{2}, 1.0f);
  Tensor b = a;
  Tensor c = a.clone();
  a.mutable_data()[0] = 5.0f;
  EXPECT_EQ(b.data()[0], 5.0f);
  EXPECT_EQ(c.data()[0], 1.0f);
}

TEST(Matmul, Examples) {
  Tensor i(Shape{2, 2}, {1, 0, 0, 1});
  Tensor m(Shape{2, 2}, {3, 4, 5, 6});
  auto r = matmul(i, m);
  EXPECT_EQ(std::vector<float>(r.data().begin(), r.data().end()), (std::vector<float>{3, 4, 5, 6}));
  auto s = matmul(Tensor(Shape{1, 2}, {1, 2}), Tensor(Shape{2, 1}, {3, 4}));
  EXPECT_EQ(s.item(), 11.0f);
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  try {
    matmul(Tensor(Shape{2, 3}), Tensor(Shape{4, 2}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
    EXPECT_NE(std::string(e.what()).find("[2,3]"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("[4,2]"), std::string::npos) << e.what();
  }
}

TEST(Matmul, SumGradientIsOnesTimesBTransposed) {
  Tensor a = random_tensor({3, 4}, 1).set_requires_grad(true);
  Tensor b = random_tensor({4, 2}, 2);
  Graph g;
  {
    GraphScope scope(g);
    backward(sum(matmul(a, b)), g);
  }
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t k = 0; k < 4; ++k)
      EXPECT_FLOAT_EQ(a.grad()[r * 4 + k], b.data()[k * 2] + b.data()[k * 2 + 1]);
}

TEST(Matmul, FiniteDifferences) {
  expect_fd(oracle::fd_check([](const auto& in) { return matmul(in[0], in[1]); }, {{3, 4}, {4, 2}}));
  expect_fd(oracle::fd_check([](const auto& in) { return matmul(in[0], in[1]); }, {{2, 2, 3, 4}, {2, 2, 4, 3}}));
  expect_fd(oracle::fd_check([](const auto& in) { return matmul(in[0], in[1]); }, {{2, 3, 4}, {4, 5}}));
  expect_fd(oracle::fd_check([](const auto& in) { return linear(in[0], in[1], in[2]); }, {{2, 3, 4}, {4, 5}, {5}}));
}

TEST(Conv2d, AllOnesCountsNeighbours) {
  auto out = conv2d(Tensor(Shape{1, 1, 4, 4}, 1.0f), Tensor(Shape{1, 1, 3, 3}, 1.0f), Tensor(),
                    Conv2dGeometry{1, 1, 1, 1});
  EXPECT_EQ(out.shape(), (Shape{1, 1, 4, 4}));
  EXPECT_EQ(out.data()[1 * 4 + 1], 9.0f);
  EXPECT_EQ(out.data()[0], 4.0f);
}

TEST(Conv2d, StrideTwoHalvesSpatialSize) {
  auto out = conv2d(Tensor(Shape{1, 3, 32, 128}), Tensor(Shape{8, 3, 3, 3}), Tensor(),
                    Conv2dGeometry{2, 2, 1, 1});
  EXPECT_EQ(out.shape(), (Shape{1, 8, 16, 64}));
}

TEST(Conv2d, NonPositiveOutputIsGeometryError) {
  expect_error([] { conv2d(Tensor(Shape{1, 1, 2, 2}), Tensor(Shape{1, 1, 5, 5}), Tensor(), Conv2dGeometry{}); },
               ErrorKind::kGeometry);
}

TEST(Conv2d, FiniteDifferences) {
  auto f = [](Conv2dGeometry geo) {
    return [geo](const auto& in) { return conv2d(in[0], in[1], in[2], geo); };
  };
  expect_fd(oracle::fd_check(f({1, 1, 1, 1}), {{2, 2, 5, 7}, {3, 2, 3, 3}, {3}}));
  expect_fd(oracle::fd_check(f({2, 2, 1, 1}), {{2, 2, 5, 7}, {3, 2, 3, 3}, {3}}));
  expect_fd(oracle::fd_check(f({2, 1, 1, 1}), {{1, 2, 6, 5}, {2, 2, 3, 3}, {2}}));
}

TEST(LayerNorm, Examples) {
  auto c = layer_norm(Tensor(Shape{1, 4}, 3.0f), Tensor(Shape{4}, 1.0f), Tensor(Shape{4}, 0.0f));
  for (float v : c.data()) EXPECT_EQ(v, 0.0f);
  auto s = layer_norm(TensorD(Shape{1, 2}, {1.0, 3.0}), TensorD(Shape{2}, 1.0), TensorD(Shape{2}, 0.0), 1e-12);
  EXPECT_NEAR(s.data()[0], -1.0, 1e-9);
  EXPECT_NEAR(s.data()[1], 1.0, 1e-9);
  expect_error([] { layer_norm(Tensor(Shape{2, 3}), Tensor(Shape{4}), Tensor(Shape{4})); }, ErrorKind::kShape);
}

TEST(LayerNorm, FiniteDifferences) {
  expect_fd(oracle::fd_check([](const auto& in) { return layer_norm(in[0], in[1], in[2]); }, {{3, 8}, {8}, {8}}));
}

TEST(BatchNorm, Examples) {
  BatchNormState<double> state(1);
  auto y = batch_norm2d(TensorD(Shape{2, 1, 1, 1}, {0.0, 2.0}), TensorD(Shape{1}, 1.0), TensorD(Shape{1}, 0.0),
                        state, true);
  EXPECT_NEAR(y.data()[0], -1.0, 1e-5);
  EXPECT_NEAR(y.data()[1], 1.0, 1e-5);
  // momentum 0.9 keeps 90% of the old value; unbiased batch variance is 2
  EXPECT_NEAR(state.running_mean.data()[0], 0.1, 1e-12);
  EXPECT_NEAR(state.running_var.data()[0], 0.9 + 0.1 * 2.0, 1e-12);

  BatchNormState<double> fresh(1);
  TensorD x(Shape{4, 1, 1, 1}, {0.5, -1.0, 2.0, 3.0});
  auto e = batch_norm2d(x, TensorD(Shape{1}, 1.0), TensorD(Shape{1}, 0.0), fresh, false);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(e.data()[i], x.data()[i] / std::sqrt(1.0 + 1e-5), 1e-12);
  EXPECT_EQ(fresh.running_mean.data()[0], 0.0);
  EXPECT_EQ(fresh.running_var.data()[0], 1.0);
}

TEST(BatchNorm, FiniteDifferences) {
  expect_fd(oracle::fd_check(
      [](const auto& in) {
        using T = typename std::decay_t<decltype(in[0])>::value_type;
        BatchNormState<T> state(3);
        return batch_norm2d(in[0], in[1], in[2], state, true);
      },
      {{4, 3, 2, 3}, {3}, {3}}));
}

TEST(Softmax, UniformAndNormalized) {
  auto s = softmax(Tensor(Shape{3}, 0.0f), 0);
  for (float v : s.data()) EXPECT_FLOAT_EQ(v, 1.0f / 3.0f);
  auto r = softmax(random_tensor({5, 7}, 3, -5.0f, 5.0f), -1);
  for (std::size_t i = 0; i < 5; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < 7; ++j) {
      const float v = r.data()[i * 7 + j];
      EXPECT_GT(v, 0.0f);
      EXPECT_LE(v, 1.0f);
      acc += v;
    }
    EXPECT_NEAR(acc, 1.0, 1e-5);
  }
  expect_error([] { softmax(Tensor(Shape{2, 2}), 2); }, ErrorKind::kShape);
}

TEST(Softmax, FiniteDifferences) {
  expect_fd(oracle::fd_check([](const auto& in) { return softmax(in[0], -1); }, {{3, 5}}));
  expect_fd(oracle::fd_check([](const auto& in) { return softmax(in[0], 0); }, {{3, 5}}));
  expect_fd(oracle::fd_check([](const auto& in) { return log_softmax(in[0], 2); }, {{2, 3, 5}}));
  expect_fd(oracle::fd_check(
      [](const auto& in) {
        static const AttentionMask mask = local_attention_mask(3, 4, 3, 3);
        return masked_softmax(in[0], &mask);
      },
      {{2, 12, 12}}));
}

TEST(Gelu, FiniteDifferences) {
  auto y = gelu(TensorD(Shape{3}, {0.0, 1.0, -1.0}));
  EXPECT_NEAR(y.data()[0], 0.0, 1e-15);
  EXPECT_NEAR(y.data()[1], 0.8413447460685429, 1e-12);
  EXPECT_NEAR(y.data()[2], -0.15865525393145707, 1e-12);
  expect_fd(oracle::fd_check([](const auto& in) { return gelu(in[0]); }, {{4, 6}}));
}

TEST(Dropout, RateZeroIsIdentityAndSurvivorsAreScaled) {
  Tensor x = random_tensor({4, 50}, 4);
  auto same = dropout(x, 0.0, true, 1, 2);
  EXPECT_EQ(same.id(), x.id());
  auto eval = dropout(x, 0.5, false, 1, 2);
  EXPECT_EQ(eval.id(), x.id());
  auto y = dropout(x, 0.25, true, 1, 2);
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if (y.data()[i] == 0.0f) {
      ++dropped;
    } else {
      EXPECT_FLOAT_EQ(y.data()[i], x.data()[i] / 0.75f);
    }
  }
  EXPECT_GT(dropped, 20u);
  EXPECT_LT(dropped, 80u);
  auto again = dropout(x, 0.25, true, 1, 2);
  EXPECT_TRUE(std::equal(y.data().begin(), y.data().end(), again.data().begin()));
  expect_fd(oracle::fd_check([](const auto& in) { return dropout(in[0], 0.3, true, 9, 4); }, {{4, 6}}));
}

TEST(Shapes, MeanPoolHeight) {
  Tensor x(Shape{1, 1, 4, 1}, {1, 2, 3, 4});
  auto y = mean_pool_height(x);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_FLOAT_EQ(y.item(), 2.5f);
  expect_fd(oracle::fd_check([](const auto& in) { return mean_pool_height(in[0]); }, {{2, 3, 4, 5}}));
}

TEST(Shapes, ReshapeTransposeRoundTrip) {
  Tensor x = random_tensor({2, 3, 4}, 5);
  auto t = transpose(transpose(x, {2, 0, 1}), {1, 2, 0});
  EXPECT_EQ(t.shape(), x.shape());
  EXPECT_TRUE(std::equal(t.data().begin(), t.data().end(), x.data().begin()));
  auto r = reshape(reshape(x, Shape{6, 4}), Shape{2, 3, 4});
  EXPECT_TRUE(std::equal(r.data().begin(), r.data().end(), x.data().begin()));
  expect_error([&] { reshape(x, Shape{5, 5}); }, ErrorKind::kShape);
  expect_fd(oracle::fd_check([](const auto& in) { return reshape(in[0], Shape{4, 6}); }, {{2, 3, 4}}));
  expect_fd(oracle::fd_check([](const auto& in) { return transpose(in[0], {2, 0, 1}); }, {{2, 3, 4}}));
  expect_fd(oracle::fd_check([](const auto& in) { return slice_last(in[0], 3, 4); }, {{2, 3, 9}}));
}

TEST(Elementwise, FiniteDifferences) {
  expect_fd(oracle::fd_check([](const auto& in) { return add(in[0], in[1]); }, {{3, 4}, {3, 4}}));
  expect_fd(oracle::fd_check([](const auto& in) { return add(in[0], in[1]); }, {{2, 3, 4}, {4}}));
  expect_fd(oracle::fd_check([](const auto& in) { return mul(in[0], in[1]); }, {{3, 4}, {3, 4}}));
  expect_fd(oracle::fd_check(
      [](const auto& in) {
        using T = typename std::decay_t<decltype(in[0])>::value_type;
        return scale(in[0], T(-0.6));
      },
      {{3, 4}}));
  expect_fd(oracle::fd_check([](const auto& in) { return sum(in[0]); }, {{3, 4}}));
  expect_fd(oracle::fd_check([](const auto& in) { return mean(in[0]); }, {{3, 4}}));
}

TEST(Backward, SimpleLosses) {
  Tensor x = random_tensor({5}, 6).set_requires_grad(true);
  {
    Graph g;
    GraphScope scope(g);
    backward(sum(x), g);
  }
  for (float v : x.grad()) EXPECT_EQ(v, 1.0f);
  x.clear_grad();
  {
    Graph g;
    GraphScope scope(g);
    backward(sum(mul(x, x)), g);
  }
  for (std::size_t i = 0; i < 5; ++i) EXPECT_FLOAT_EQ(x.grad()[i], 2.0f * x.data()[i]);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tensor x = random_tensor({3}, 7).set_requires_grad(true);
  Graph g;
  GraphScope scope(g);
  auto y = scale(x, 2.0f);
  expect_error([&] { backward(y, g); }, ErrorKind::kContract);
}

TEST(Backward, CompositeChainAndGraphInvariants) {
  auto chain = [](const auto& in) {
    auto c = conv2d(in[0], in[1], in[2], Conv2dGeometry{1, 1, 1, 1});          // [1,4,3,4]
    auto tokens = transpose(reshape(c, Shape{1, 4, 12}), {0, 2, 1});            // [1,12,4]
    return linear(layer_norm(tokens, in[3], in[4]), in[5], in[6]);
  };
  expect_fd(oracle::fd_check(chain, {{1, 2, 3, 4}, {4, 2, 3, 3}, {4}, {4}, {4}, {4, 3}, {3}}));

  std::vector<Tensor> in;
  const std::vector<Shape> shapes{{1, 2, 3, 4}, {4, 2, 3, 3}, {4}, {4}, {4}, {4, 3}, {3}};
  for (std::size_t i = 0; i < shapes.size(); ++i) in.push_back(random_tensor(shapes[i], 10 + i).set_requires_grad(true));
  Graph g;
  {
    GraphScope scope(g);
    backward(sum(chain(in)), g);
  }
  for (const auto& node : g.nodes()) EXPECT_EQ(node.visits, 1u) << node.op;
  for (const auto& t : in) EXPECT_TRUE(t.has_grad());
}

TEST(Backward, RepeatedPassesAreBitIdentical) {
  auto run = [] {
    Tensor x = random_tensor({2, 6, 8}, 11).set_requires_grad(true);
    Tensor w = random_tensor({8, 8}, 12).set_requires_grad(true);
    Graph g;
    {
      GraphScope scope(g);
      backward(sum(gelu(dropout(matmul(x, w), 0.2, true, 3, 5))), g);
    }
    std::vector<float> out(x.grad().begin(), x.grad().end());
    out.insert(out.end(), w.grad().begin(), w.grad().end());
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(Backward, UntrackedWithoutGraph) {
  Tensor x = random_tensor({3}, 13).set_requires_grad(true);
  auto y = sum(x);
  Graph g;
  expect_error([&] { backward(y, g); }, ErrorKind::kContract);
}
