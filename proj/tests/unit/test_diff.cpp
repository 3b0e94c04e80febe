#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "mmtrack/diff/checkpoint.hpp"
#include "mmtrack/diff/gradcheck.hpp"
#include "mmtrack/diff/ops.hpp"
#include "mmtrack/diff/optim.hpp"
#include "mmtrack/errors.hpp"

using namespace mmtrack;
using namespace mmtrack::diff;

TEST_CASE("tensor shapes and accessors") {
  Tensor t = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.at(1, 2) == 6.0);
  CHECK(t.reshaped({3, 2}).at(2, 1) == 6.0);
  CHECK_THROWS_AS(t.reshaped({4, 2}), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor::vector({1, 2}).item(), DimensionError);
  CHECK(Tensor::scalar(2.5).item() == 2.5);
  Tensor bad({2}, std::vector<double>{1.0, NAN});
  CHECK_FALSE(bad.all_finite());
}

TEST_CASE("linear forward and backward by hand") {
  Tape tape;
  Parameter w("w", Tensor::from_rows({{1, 2}, {3, 4}}));
  Parameter b("b", Tensor::vector({0.5, -0.5}).reshaped({2, 1}));
  Var x = tape.constant(Tensor::from_rows({{1, 0, 2}, {1, 1, 0}}));
  Var y = linear(x, tape.param(w), tape.param(b));
  CHECK(y.value() == Tensor::from_rows({{3.5, 2.5, 2.5}, {6.5, 3.5, 5.5}}));
  tape.backward(sum(y));
  // d sum / d w[o,i] = sum_k x[i,k]
  CHECK(w.grad == Tensor::from_rows({{3, 2}, {3, 2}}));
  CHECK(b.grad[0] == 3.0);
  CHECK(b.grad[1] == 3.0);
}

TEST_CASE("binding a parameter twice reuses its node") {
  Tape tape;
  Parameter p("p", Tensor::vector({2.0}));
  Var a = tape.param(p);
  Var b = tape.param(p);
  CHECK(a.id() == b.id());
  tape.backward(mul(a, b));
  CHECK(p.grad[0] == doctest::Approx(4.0));
}

TEST_CASE("backward contract") {
  Tape tape;
  Var x = tape.constant(Tensor::vector({1, 2}));
  CHECK_THROWS_AS(tape.backward(x), ContractError);
  Tape other;
  Var y = other.constant(Tensor::vector({1, 2}));
  CHECK_THROWS_AS(add(x, y), ContractError);
  CHECK_THROWS_AS(add(x, tape.constant(Tensor::vector({1, 2, 3}))), DimensionError);
}

TEST_CASE("softmax rows sum to one and survive large logits") {
  Tape tape;
  Var x = tape.constant(Tensor::from_rows({{1000, 1001, 999}, {-5, 0, 5}}));
  const Tensor s = softmax_rows(x).value();
  for (std::size_t r = 0; r < 2; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 3; ++c) total += s.at(r, c);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
  }
  CHECK(s.all_finite());
}

TEST_CASE("segment mean, gather and concat") {
  Tape tape;
  Var x = tape.constant(Tensor::from_rows({{1, 2, 3, 4}}));
  const Segment segs[] = {{0, 1}, {1, 4}};
  CHECK(segment_mean(x, segs).value() == Tensor::from_rows({{1, 3}}));
  const Segment empty[] = {{2, 2}};
  CHECK_THROWS(segment_mean(x, empty));
  const std::size_t cols[] = {3, 3, 0};
  CHECK(gather_cols(x, cols).value() == Tensor::from_rows({{4, 4, 1}}));
  const Var parts[] = {x, x};
  CHECK(concat(parts, 0).value().rows() == 2);
  CHECK(concat(parts, 1).value().cols() == 8);
}

TEST_CASE("kink signature tracks the branch taken") {
  auto signature = [](double v) {
    Tape t;
    relu(t.constant(Tensor::vector({v, 1.0})));
    return t.kink_signature();
  };
  CHECK(signature(0.5) == signature(0.7));
  CHECK(signature(0.5) != signature(-0.5));
}

TEST_CASE("Adam first step moves each entry by about the learning rate") {
  Parameter p("p", Tensor::vector({1.0, -1.0, 0.0}));
  p.grad = Tensor::vector({0.3, -2.0, 0.0});
  Parameter* params[] = {&p};
  Adam adam;
  adam.step(params);
  CHECK(p.value[0] == doctest::Approx(1.0 - 6e-4).epsilon(1e-9));
  CHECK(p.value[1] == doctest::Approx(-1.0 + 6e-4).epsilon(1e-9));
  CHECK(p.value[2] == 0.0);
  CHECK(p.grad[0] == 0.0);
  CHECK(adam.steps() == 1);
}

TEST_CASE("Adam fits a least-squares line") {
  Parameter w("w", Tensor::vector({0.0, 0.0}).reshaped({1, 2}));
  Parameter* params[] = {&w};
  Adam adam(AdamConfig{0.05});
  const Tensor x = Tensor::from_rows({{1, 2, 3, 4}, {1, 1, 1, 1}});
  const Tensor y = Tensor::from_rows({{3, 5, 7, 9}});
  for (int i = 0; i < 3000; ++i) {
    Tape tape;
    Var pred = linear(tape.constant(x), tape.param(w));
    tape.backward(mse(pred, y));
    adam.step(params);
  }
  CHECK(w.value[0] == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(w.value[1] == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("checkpoint round-trips exactly and rejects mismatches") {
  std::mt19937_64 rng(3);
  Parameter a("layer.weight", uniform_init({3, 4}, 4, rng));
  Parameter b("layer.bias", uniform_init({3, 1}, 4, rng));
  const Parameter* out[] = {&a, &b};
  std::stringstream ss;
  write_checkpoint(ss, out);

  Parameter a2("layer.weight", Tensor({3, 4}));
  Parameter b2("layer.bias", Tensor({3, 1}));
  Parameter* in[] = {&a2, &b2};
  read_checkpoint(ss, in);
  CHECK(a2.value == a.value);
  CHECK(b2.value == b.value);

  std::stringstream again(ss.str());
  Parameter wrong("layer.weight", Tensor({4, 3}));
  Parameter* bad[] = {&wrong};
  CHECK_THROWS_AS(read_checkpoint(again, bad), ParseError);

  std::stringstream garbage("not json");
  CHECK_THROWS_AS(read_checkpoint(garbage, in), ParseError);
}

TEST_CASE("grad check accepts correct gradients and rejects corrupted ones") {
  std::mt19937_64 rng(11);
  Parameter w("w", uniform_init({3, 4}, 4, rng));
  const Tensor x = uniform_init({4, 5}, 1, rng);
  Parameter* params[] = {&w};
  ForwardFn f = [&](Tape& t) { return sum(sigmoid(linear(t.constant(x), t.param(w)))); };
  CHECK(grad_check(f, params).passed);
  GradCheckOptions corrupt;
  corrupt.corrupt_backward = true;
  const auto report = grad_check(f, params, corrupt);
  CHECK_FALSE(report.passed);
  CHECK(report.max_rel_error == doctest::Approx(0.01 / 1.01).epsilon(1e-3));
}

TEST_CASE("grad check refuses a central difference across a relu kink") {
  Parameter w("w", Tensor::vector({2e-6}));
  Parameter* params[] = {&w};
  ForwardFn f = [&](Tape& t) { return sum(relu(t.param(w))); };
  const auto report = grad_check(f, params);
  CHECK(report.kink_crossings == 1);
  CHECK_FALSE(report.passed);
}
