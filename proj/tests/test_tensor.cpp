#include <doctest.h>

#include <cmath>
#include <random>

#include "msenet/gradcheck.hpp"
#include "msenet/tensor.hpp"

using msenet::Tensor;
using T64 = msenet::Tensor<double>;

TEST_CASE("multiply: d(x*x)/dx = 2x") {
  auto x = T64::scalar(3.0, true);
  auto y = msenet::mul(x, x);
  CHECK(y.item() == doctest::Approx(9.0));
  msenet::backward(y);
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("softmax of a constant row is uniform") {
  for (double c : {-4.0, 0.0, 2.5}) {
    auto x = T64::full({3}, c);
    auto s = msenet::softmax_lastdim(x);
    for (double v : s.values()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));
  }
}

TEST_CASE("softmax([0, ln 2]) = [1/3, 2/3]") {
  auto x = T64::from_values({2}, {0.0, std::log(2.0)});
  auto s = msenet::softmax_lastdim(x);
  CHECK(std::abs(s.values()[0] - 1.0 / 3) < 1e-12);
  CHECK(std::abs(s.values()[1] - 2.0 / 3) < 1e-12);
}

TEST_CASE("softmax rows sum to one and shift-invariance holds") {
  std::mt19937_64 rng(7);
  auto x = T64::randn({5, 6}, rng, 1.0);
  auto s = msenet::softmax_lastdim(x);
  for (int r = 0; r < 5; ++r) {
    double acc = 0;
    for (int j = 0; j < 6; ++j) {
      const double v = s.values()[(size_t)(r * 6 + j)];
      CHECK(v >= 0.0);
      acc += v;
    }
    CHECK(std::abs(acc - 1.0) < 1e-12);
  }
  // shift one row by a constant
  auto shifted_vals = x.values();
  for (int j = 0; j < 6; ++j) shifted_vals[(size_t)(2 * 6 + j)] += 17.25;
  auto s2 = msenet::softmax_lastdim(T64::from_values({5, 6}, shifted_vals));
  for (int j = 0; j < 6; ++j) {
    CHECK(std::abs(s2.values()[(size_t)(2 * 6 + j)] -
                   s.values()[(size_t)(2 * 6 + j)]) < 1e-12);
  }
}

TEST_CASE("fan-out gradients accumulate: sum(a + a) -> grad 2") {
  auto a = T64::full({4}, 1.5, true);
  auto loss = msenet::sum(msenet::add(a, a));
  msenet::backward(loss);
  for (double g : a.grad()) CHECK(g == doctest::Approx(2.0));
}

TEST_CASE("sigmoid gradient at zero is 1/4") {
  auto x = T64::zeros({3}, true);
  auto loss = msenet::sum(msenet::sigmoid(x));
  msenet::backward(loss);
  for (double g : x.grad()) CHECK(g == doctest::Approx(0.25));
}

TEST_CASE("double backward without rebuilding is an error") {
  auto x = T64::scalar(2.0, true);
  auto y = msenet::mul(x, x);
  msenet::backward(y);
  CHECK_THROWS_AS(msenet::backward(y), msenet::contract_error);
}

TEST_CASE("backward requires a scalar") {
  auto x = T64::full({2}, 1.0, true);
  auto y = msenet::add(x, x);
  CHECK_THROWS_AS(msenet::backward(y), msenet::contract_error);
}

TEST_CASE("shape mismatch names the op and both shapes") {
  auto a = T64::zeros({2, 3});
  auto b = T64::zeros({3, 2});
  try {
    msenet::add(a, b);
    FAIL("expected contract_error");
  } catch (const msenet::contract_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("add") != std::string::npos);
    CHECK(msg.find("[2, 3]") != std::string::npos);
    CHECK(msg.find("[3, 2]") != std::string::npos);
  }
}

TEST_CASE("write-once: tensors consumed by a live graph refuse mutation") {
  auto x = T64::full({2}, 1.0, true);
  auto y = msenet::mul(x, x);
  CHECK_THROWS_AS(x.mutable_values(), msenet::contract_error);
  // releasing the graph re-enables leaf updates
  y = T64();
  CHECK_NOTHROW(x.mutable_values());
}

TEST_CASE("graph evaluation is deterministic") {
  std::mt19937_64 rng(11);
  auto x = Tensor<float>::randn({2, 3, 5, 7}, rng, 1.0f);
  auto run = [&] {
    auto y = msenet::mul(msenet::silu(x), msenet::sigmoid(x));
    return msenet::sum(y).item();
  };
  const float a = run();
  const float b = run();
  CHECK(a == b);
}

TEST_CASE("gradcheck: elementwise and structural ops") {
  std::mt19937_64 rng(3);
  auto a = T64::randn({3, 4}, rng, 1.0, true);
  auto b = T64::randn({3, 4}, rng, 1.0, true);
  // keep div and atan well away from poles
  for (auto& v : b.mutable_values()) v = 2.0 + std::abs(v);

  auto f = [&] {
    auto t = msenet::div(msenet::mul(a, b), msenet::add_scalar(msenet::square(b), 1.0));
    t = msenet::add(t, msenet::arctan(msenet::sub(a, b)));
    t = msenet::add(t, msenet::maximum(a, msenet::mul_scalar(b, 0.5)));
    t = msenet::mul(t, msenet::silu(a));
    auto s = msenet::softmax_lastdim(t);
    return msenet::mean(msenet::mul(s, t));
  };
  auto report = msenet::gradcheck<double>(f, {a, b}, 1e-5, 1e-4, nullptr, {"a", "b"});
  INFO(report.to_string());
  CHECK(report.pass);
}

TEST_CASE("gradcheck: matmul, stack/select, pooling, scaling") {
  std::mt19937_64 rng(5);
  auto a = T64::randn({3, 4}, rng, 1.0, true);
  auto w = T64::randn({4, 2}, rng, 1.0, true);
  auto s = T64::randn({3}, rng, 1.0, true);
  auto x = T64::randn({2, 3, 2, 2}, rng, 1.0, true);

  auto f = [&] {
    auto mm = msenet::matmul(a, w);                       // [3,2]
    auto c0 = msenet::select_column(mm, 0);               // [3]
    auto c1 = msenet::select_column(mm, 1);
    auto st = msenet::stack_columns<double>({c0, msenet::mul(c1, s)});  // [3,2]
    auto pooled = msenet::global_avg_pool(x);             // [2,3]
    auto scaled = msenet::scale_rows(x, msenet::select_column(pooled, 1));
    return msenet::add(msenet::mean(st), msenet::mean(scaled));
  };
  auto report =
      msenet::gradcheck<double>(f, {a, w, s, x}, 1e-5, 1e-4, nullptr,
                                {"a", "w", "s", "x"});
  INFO(report.to_string());
  CHECK(report.pass);
}

TEST_CASE("gradcheck: f(x)=x^2 at x=1 within 1e-8") {
  auto x = T64::scalar(1.0, true);
  auto f = [&] { return msenet::mul(x, x); };
  auto report = msenet::gradcheck<double>(f, {x}, 1e-5, 1e-8);
  INFO(report.to_string());
  CHECK(report.pass);
}

TEST_CASE("gradcheck rejects a non-deterministic function") {
  auto x = T64::scalar(1.0, true);
  int calls = 0;
  auto f = [&] {
    ++calls;
    return msenet::mul_scalar(x, 1.0 + 1e-6 * calls);
  };
  CHECK_THROWS_AS(msenet::gradcheck<double>(f, {x}, 1e-5, 1e-4),
                  msenet::contract_error);
}
