#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles/layers.hpp"
#include "petlab/tensor/autograd.hpp"
#include "petlab/tensor/grad_check.hpp"
#include "petlab/tensor/ops.hpp"

using namespace petlab;
using namespace petlab::tensor;

namespace {

std::vector<double> as_double(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Tensor undefined() { return Tensor(); }

} // namespace

TEST_CASE("tensor construction enforces shape/data agreement") {
  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({2, 0}), ShapeError);
  auto t = Tensor::zeros({2, 3});
  CHECK(t.numel() == 6);
  CHECK_FALSE(t.has_grad());
  CHECK_THROWS_AS(t.grad(), StateError);
  auto s = Tensor::scalar(3.5f);
  CHECK(s.rank() == 0);
  CHECK(s.item() == 3.5f);
}

TEST_CASE("conv2d_same") {
  SUBCASE("zero kernel gives zero output") {
    auto x = seeded_uniform<float>({2, 3, 5, 4}, 1);
    auto y = conv2d_same(x, Tensor::zeros({4, 3, 3, 3}), Tensor::zeros({4}));
    CHECK(y.shape() == Shape{2, 4, 5, 4});
    for (auto v : y.data()) CHECK(v == 0.0f);
  }
  SUBCASE("identity kernel reproduces input") {
    auto x = seeded_uniform<float>({1, 1, 6, 5}, 2);
    auto k = Tensor::zeros({1, 1, 3, 3});
    k.mutable_data()[4] = 1.0f;
    auto y = conv2d_same(x, k, Tensor::zeros({1}));
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
  }
  SUBCASE("matches sliding-window oracle") {
    for (std::uint64_t seed : {3u, 4u, 5u}) {
      auto x = seeded_uniform<float>({1, 1, 4, 4}, seed);
      auto k = seeded_uniform<float>({1, 1, 3, 3}, seed + 100);
      auto y = conv2d_same(x, k, undefined());
      auto ref = oracle::conv3x3(as_double(x), 1, 1, 4, 4, as_double(k), 1, {});
      for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-5));
    }
    auto x = seeded_uniform<float>({2, 3, 5, 7}, 9);
    auto k = seeded_uniform<float>({4, 3, 3, 3}, 10);
    auto b = seeded_uniform<float>({4}, 11);
    auto y = conv2d_same(x, k, b);
    auto ref = oracle::conv3x3(as_double(x), 2, 3, 5, 7, as_double(k), 4, as_double(b));
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(y[i] - ref[i]) < 1e-5);
  }
  SUBCASE("channel mismatch is a shape error") {
    CHECK_THROWS_AS(conv2d_same(Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 3, 3, 3}), undefined()),
                    ShapeError);
  }
  SUBCASE("linear in the input for fixed weights") {
    auto k = seeded_uniform<float>({3, 2, 3, 3}, 12);
    auto x = seeded_uniform<float>({1, 2, 6, 6}, 13);
    auto z = seeded_uniform<float>({1, 2, 6, 6}, 14);
    const double a = 0.7, b = -1.3;
    auto combo = add(scale(x, a), scale(z, b));
    auto lhs = conv2d_same(combo, k, undefined());
    auto fx = conv2d_same(x, k, undefined());
    auto fz = conv2d_same(z, k, undefined());
    for (std::size_t i = 0; i < lhs.numel(); ++i) CHECK(std::abs(lhs[i] - (a * fx[i] + b * fz[i])) < 1e-5);
  }
}

TEST_CASE("batch_norm") {
  SUBCASE("zero input stays zero") {
    BatchNormState<float> st(2);
    auto y = batch_norm(Tensor::zeros({2, 2, 3, 3}), Tensor::full({2}, 1.0f), Tensor::zeros({2}), st,
                        Mode::train);
    for (auto v : y.data()) CHECK(v == 0.0f);
  }
  SUBCASE("constant input normalises to ~0") {
    BatchNormState<float> st(1);
    auto y = batch_norm(Tensor::full({2, 1, 4, 4}, 3.0f), Tensor::full({1}, 1.0f), Tensor::zeros({1}),
                        st, Mode::train);
    for (auto v : y.data()) CHECK(std::abs(v) < 1e-6);
  }
  SUBCASE("train-mode output moments") {
    BatchNormState<float> st(2);
    auto x = seeded_uniform<float>({4, 2, 4, 4}, 21, -3.0, 5.0);
    auto y = batch_norm(x, Tensor::full({2}, 1.0f), Tensor::zeros({2}), st, Mode::train);
    for (std::size_t ch = 0; ch < 2; ++ch) {
      double m = 0, v = 0;
      for (std::size_t s = 0; s < 4; ++s)
        for (std::size_t i = 0; i < 16; ++i) m += y[(s * 2 + ch) * 16 + i];
      m /= 64;
      for (std::size_t s = 0; s < 4; ++s)
        for (std::size_t i = 0; i < 16; ++i) v += std::pow(y[(s * 2 + ch) * 16 + i] - m, 2);
      v /= 64;
      CHECK(std::abs(m) < 1e-5);
      CHECK(std::abs(v - 1.0) < 1e-3);
    }
  }
  SUBCASE("eval mode requires populated statistics") {
    BatchNormState<float> st(1);
    CHECK_THROWS_AS(batch_norm(Tensor::zeros({1, 1, 2, 2}), Tensor::full({1}, 1.0f), Tensor::zeros({1}),
                               st, Mode::eval),
                    StateError);
  }
  SUBCASE("running statistics follow an exponential moving average") {
    BatchNormState<float> st(1);
    auto g = Tensor::full({1}, 1.0f);
    auto b = Tensor::zeros({1});
    batch_norm(Tensor::full({1, 1, 2, 2}, 2.0f), g, b, st, Mode::train);
    CHECK(st.initialized);
    CHECK(st.running_mean[0] == doctest::Approx(2.0));
    batch_norm(Tensor::full({1, 1, 2, 2}, 4.0f), g, b, st, Mode::train);
    CHECK(st.running_mean[0] == doctest::Approx(0.9 * 2.0 + 0.1 * 4.0));
    auto y = batch_norm(Tensor::full({1, 1, 2, 2}, 2.2f), g, b, st, Mode::eval);
    CHECK(y[0] == doctest::Approx(0.0).epsilon(1e-3));
  }
}

TEST_CASE("relu, pooling and upsampling") {
  auto r = relu(Tensor::from_data({3}, {-1.0f, 0.0f, 2.0f}));
  CHECK(r[0] == 0.0f);
  CHECK(r[1] == 0.0f);
  CHECK(r[2] == 2.0f);

  auto p = maxpool2x2(Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4}));
  CHECK(p.shape() == Shape{1, 1, 1, 1});
  CHECK(p[0] == 4.0f);
  CHECK_THROWS_AS(maxpool2x2(Tensor::zeros({1, 1, 3, 4})), ShapeError);

  SUBCASE("constant images survive upsample then maxpool") {
    auto c = Tensor::full({1, 2, 3, 5}, 1.75f);
    auto u = upsample_bilinear2x(c);
    CHECK(u.shape() == Shape{1, 2, 6, 10});
    auto back = maxpool2x2(u);
    for (std::size_t i = 0; i < c.numel(); ++i) CHECK(back[i] == c[i]);
  }
  SUBCASE("upsampling matches per-pixel bilinear oracle") {
    for (std::uint64_t seed : {31u, 32u, 33u}) {
      auto x = seeded_uniform<float>({1, 1, 3, 3}, seed);
      auto u = upsample_bilinear2x(x);
      auto ref = oracle::upsample2x(as_double(x), 3, 3);
      for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(u[i] - ref[i]) < 1e-6);
    }
  }
  SUBCASE("maxpool gradient ties go to the first element in row-major order") {
    auto x = Tensor::full({1, 1, 2, 2}, 1.0f, true);
    backward(sum(maxpool2x2(x)));
    CHECK(x.grad()[0] == 1.0f);
    CHECK(x.grad()[1] == 0.0f);
    CHECK(x.grad()[2] == 0.0f);
    CHECK(x.grad()[3] == 0.0f);
  }
  SUBCASE("nonnegativity is preserved") {
    auto x = seeded_uniform<float>({2, 3, 4, 6}, 34, 0.0, 2.0);
    const auto pooled = maxpool2x2(x);
    const auto up = upsample_bilinear2x(x);
    const auto rectified = relu(seeded_uniform<float>({50}, 35));
    for (auto v : pooled.data()) CHECK(v >= 0.0f);
    for (auto v : up.data()) CHECK(v >= 0.0f);
    for (auto v : rectified.data()) CHECK(v >= 0.0f);
  }
}

TEST_CASE("concat, add, reductions") {
  auto c = concat_channels(Tensor::zeros({1, 2, 2, 2}), Tensor::zeros({1, 3, 2, 2}));
  CHECK(c.shape() == Shape{1, 5, 2, 2});
  CHECK_THROWS_AS(concat_channels(Tensor::zeros({1, 2, 2, 2}), Tensor::zeros({1, 3, 2, 3})), ShapeError);

  auto x = seeded_uniform<float>({2, 3}, 41);
  auto y = add(x, Tensor::zeros({2, 3}));
  for (std::size_t i = 0; i < 6; ++i) CHECK(y[i] == x[i]);
  CHECK_THROWS_AS(add(x, Tensor::zeros({3, 2})), ShapeError);

  auto m = mean(Tensor::from_data({4}, {1, 2, 3, 4}));
  CHECK(m.rank() == 0);
  CHECK(m.item() == doctest::Approx(2.5));

  auto sl = slice_channels(seeded_uniform<float>({2, 4, 2, 2}, 42), 1, 2);
  CHECK(sl.shape() == Shape{2, 2, 2, 2});
  CHECK_THROWS_AS(slice_channels(Tensor::zeros({1, 2, 2, 2}), 1, 2), ShapeError);
}

TEST_CASE("backward") {
  SUBCASE("gradient of the mean") {
    auto x = Tensor::from_data({4}, {1, 5, -2, 0}, true);
    backward(mean(x));
    for (auto g : x.grad()) CHECK(g == doctest::Approx(0.25));
  }
  SUBCASE("gradient of mean of squares") {
    auto x = Tensor::from_data({2}, {1, -2}, true);
    backward(mean(square(x)));
    CHECK(x.grad()[0] == doctest::Approx(1.0));
    CHECK(x.grad()[1] == doctest::Approx(-2.0));
  }
  SUBCASE("non-scalar loss is rejected") {
    auto x = Tensor::from_data({2}, {1, 2}, true);
    CHECK_THROWS_AS(backward(square(x)), ContractError);
    CHECK_THROWS_AS(backward(Tensor::scalar(1.0f)), ContractError);
  }
  SUBCASE("repeated backward resets; accumulation is opt-in") {
    auto x = Tensor::from_data({2}, {1, 3}, true);
    auto loss = sum(square(x));
    backward(loss);
    backward(loss);
    CHECK(x.grad()[1] == doctest::Approx(6.0));
    backward(loss, {.accumulate = true});
    CHECK(x.grad()[1] == doctest::Approx(12.0));
    x.zero_grad();
    CHECK(x.grad()[1] == 0.0f);
  }
  SUBCASE("shared subexpressions accumulate over all paths") {
    auto x = Tensor::from_data({1}, {3}, true);
    auto y = mul(x, x);
    backward(sum(add(y, y)));
    CHECK(x.grad()[0] == doctest::Approx(12.0));
  }
  SUBCASE("tape is topologically ordered and traversed once per node") {
    auto x = Tensor::from_data({3}, {1, 2, 3}, true);
    auto a = square(x);
    auto b = add(a, x);
    auto loss = mean(mul(b, a));
    auto tape = Tape<float>::record(loss);
    CHECK(tape.size() == 5);
    for (std::size_t i = 0; i < tape.size(); ++i) {
      for (const auto& p : tape.nodes()[i]->parents) {
        bool earlier = false;
        for (std::size_t j = 0; j < i; ++j) earlier = earlier || tape.nodes()[j] == p;
        CHECK(earlier);
      }
    }
    for (const auto& n : tape.nodes()) n->ensure_grad();
    loss.node_ptr()->grad[0] = 1.0f;
    CHECK(tape.run_backward() == 4);
  }
  SUBCASE("no-grad guard records nothing") {
    auto x = Tensor::from_data({2}, {1, 2}, true);
    NoGradGuard guard;
    auto y = mean(square(x));
    CHECK_FALSE(y.requires_grad());
    CHECK(y.is_leaf());
  }
}

TEST_CASE("forward passes are bit-reproducible") {
  auto x = seeded_uniform<float>({2, 3, 8, 8}, 51);
  auto k = seeded_uniform<float>({4, 3, 3, 3}, 52);
  auto run = [&] { return upsample_bilinear2x(maxpool2x2(relu(conv2d_same(x, k, undefined())))); };
  auto a = run();
  auto b = run();
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}

namespace {

template <typename T>
void check_all_ops(double tol, std::uint64_t seed) {
  CAPTURE(tol);
  CAPTURE(seed);
  using TT = BasicTensor<T>;
  GradCheckOptions opt{.tolerance = tol, .step = 1e-3, .projection_seed = seed};
  const std::vector<Shape> image_shapes = {{1, 2, 4, 4}, {2, 3, 4, 6}, {3, 1, 6, 4}};
  for (std::size_t k = 0; k < image_shapes.size(); ++k) {
    const auto& sh = image_shapes[k];
    const std::uint64_t s = seed * 100 + k;
    CAPTURE(shape_string(sh));
    {
      auto r = grad_check<T>(
          [](const std::vector<TT>& in) { return conv2d_same(in[0], in[1], in[2]); },
          {seeded_uniform<T>(sh, s), seeded_uniform<T>({3, sh[1], 3, 3}, s + 1),
           seeded_uniform<T>({3}, s + 2)},
          {"x", "w", "b"}, opt);
      CHECK_MESSAGE(r.passed, "conv2d_same " << r.summary());
    }
    {
      BatchNormState<T> st(sh[1]);
      Shape bs = sh;
      bs[0] = std::max<std::size_t>(sh[0], 2);
      auto r = grad_check<T>(
          [&st](const std::vector<TT>& in) {
            return batch_norm(in[0], in[1], in[2], st, Mode::train);
          },
          {seeded_uniform<T>(bs, s + 3), seeded_uniform<T>({sh[1]}, s + 4, 0.5, 1.5),
           seeded_uniform<T>({sh[1]}, s + 5)},
          {"x", "gamma", "beta"}, opt);
      CHECK_MESSAGE(r.passed, "batch_norm " << r.summary());
    }
    {
      auto r = grad_check<T>([](const std::vector<TT>& in) { return relu(in[0]); },
                             {seeded_uniform<T>(sh, s + 6, -1.0, 1.0, 0.1)}, {"x"}, opt);
      CHECK_MESSAGE(r.passed, "relu " << r.summary());
    }
    {
      auto r = grad_check<T>([](const std::vector<TT>& in) { return maxpool2x2(in[0]); },
                             {seeded_distinct<T>(sh, s + 7)}, {"x"}, opt);
      CHECK_MESSAGE(r.passed, "maxpool2x2 " << r.summary());
    }
    {
      auto r = grad_check<T>([](const std::vector<TT>& in) { return upsample_bilinear2x(in[0]); },
                             {seeded_uniform<T>(sh, s + 8)}, {"x"}, opt);
      CHECK_MESSAGE(r.passed, "upsample " << r.summary());
    }
    {
      Shape other = sh;
      other[1] = 2;
      auto r = grad_check<T>(
          [](const std::vector<TT>& in) { return concat_channels(in[0], in[1]); },
          {seeded_uniform<T>(sh, s + 9), seeded_uniform<T>(other, s + 10)}, {"a", "b"}, opt);
      CHECK_MESSAGE(r.passed, "concat " << r.summary());
    }
    {
      auto r = grad_check<T>([](const std::vector<TT>& in) { return add(in[0], in[1]); },
                             {seeded_uniform<T>(sh, s + 11), seeded_uniform<T>(sh, s + 12)},
                             {"a", "b"}, opt);
      CHECK_MESSAGE(r.passed, "add " << r.summary());
    }
    {
      auto r = grad_check<T>(
          [](const std::vector<TT>& in) { return mean(square(sub(in[0], in[1]))); },
          {seeded_uniform<T>(sh, s + 13), seeded_uniform<T>(sh, s + 14)}, {"a", "b"}, opt);
      CHECK_MESSAGE(r.passed, "mean/square/sub " << r.summary());
    }
  }
}

} // namespace

TEST_CASE("finite-difference gradient checks, 32-bit") { check_all_ops<float>(1e-2, 1); }

TEST_CASE("finite-difference gradient checks, 64-bit") { check_all_ops<double>(1e-4, 2); }

TEST_CASE("grad_check reports failures") {
  // A deliberately wrong backward rule: forward is x^2 but gradient is 1.
  auto bad = [](const std::vector<Tensor64>& in) {
    auto x = in[0];
    std::vector<double> out(x.data().begin(), x.data().end());
    for (auto& v : out) v *= v;
    return make_op_result<double>(x.shape(), std::move(out), "bad", {x}, [](detail::Node<double>& self) {
      auto& g = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
  };
  auto r = grad_check<double>(bad, {seeded_uniform<double>({5}, 3, 1.0, 2.0)}, {"x"}, {.tolerance = 1e-4});
  CHECK_FALSE(r.passed);
  CHECK(r.entries.size() == 1);
  CHECK(r.worst() > 0.1);
}
