// Copyright 2026 The pseudolang Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <cmath>
#include <random>

#include "pseudolang/error.hpp"
#include "pseudolang/nn.hpp"
#include "pseudolang/training.hpp"
#include "support.hpp"

using namespace pseudolang;

TEST_CASE("gelu derivative matches central differences") {
  for (double x = -4.0; x <= 4.0; x += 0.37) {
    const double h = 1e-5;
    const double fd = (nn::gelu(x + h) - nn::gelu(x - h)) / (2 * h);
    CHECK(nn::gelu_grad(x) == doctest::Approx(fd).epsilon(1e-7));
  }
  CHECK(nn::gelu(0.0) == 0.0);
}

TEST_CASE("log-softmax rows normalise and survive large logits") {
  nn::Mat z(3, 4);
  z.v = {1, 2, 3, 4, 1000, 1000, -1000, 0, -5, -5, -5, -5};
  const auto lp = nn::log_softmax_rows(z);
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0;
    for (std::size_t k = 0; k < 4; ++k) s += std::exp(lp(i, k));
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  CHECK(lp(1, 0) == doctest::Approx(-std::log(2.0)));
  CHECK(lp(2, 3) == doctest::Approx(-std::log(4.0)));
}

TEST_CASE("check_finite names the failing site") {
  nn::Mat m(1, 2);
  m.v = {1.0, std::nan("")};
  try {
    nn::check_finite(m, "decoder block 0");
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("decoder block 0") != std::string::npos);
  }
}

TEST_CASE("positions are sinusoids") {
  nn::Mat x(3, 4);
  nn::add_positions(x);
  CHECK(x(0, 0) == 0.0);
  CHECK(x(0, 1) == 1.0);
  CHECK(x(2, 0) == doctest::Approx(std::sin(2.0)));
  CHECK(x(2, 3) == doctest::Approx(std::cos(2.0 * std::pow(10000.0, -0.5))));
}

TEST_CASE("learning-rate schedule warms up then decays to a tenth") {
  const double peak = 2.0;
  CHECK(nn::scheduled_lr(peak, 0, 100, 0.1) == doctest::Approx(0.2));
  CHECK(nn::scheduled_lr(peak, 9, 100, 0.1) == doctest::Approx(2.0));
  CHECK(nn::scheduled_lr(peak, 99, 100, 0.1) == doctest::Approx(0.2));
  for (std::size_t s = 10; s < 99; ++s)
    CHECK(nn::scheduled_lr(peak, s + 1, 100, 0.1) <= nn::scheduled_lr(peak, s, 100, 0.1));
}

TEST_CASE("gradient clipping") {
  std::vector<double> g = {3, 4};
  CHECK(nn::clip_grad_norm(g, 1.0) == 5.0);
  CHECK(g[0] == doctest::Approx(0.6));
  CHECK(g[1] == doctest::Approx(0.8));
  std::vector<double> small = {0.1};
  nn::clip_grad_norm(small, 1.0);
  CHECK(small[0] == 0.1);
}

TEST_CASE("adam first step moves each coordinate by lr against the gradient sign") {
  std::vector<double> p = {1.0, -1.0, 0.5};
  const std::vector<double> g = {0.3, -2.0, 0.0};
  nn::Adam adam(3);
  adam.step(p, g, 0.01);
  CHECK(p[0] == doctest::Approx(0.99));
  CHECK(p[1] == doctest::Approx(-0.99));
  CHECK(p[2] == 0.5);
}

TEST_CASE("make_batch pads features with zeros and targets with pad") {
  std::vector<TrainExample> ex = {
      {FeatureSequence::from_rows("a", {{1, 2}, {3, 4}, {5, 6}}), {"a", {7}}},
      {FeatureSequence::from_rows("b", {{9, 9}}), {"b", {1, 2, 3}}},
  };
  const auto b = make_batch(ex, 10, 11, 12);
  CHECK(b.max_frames == 3);
  CHECK(b.max_targets == 5);
  CHECK(b.targets == std::vector<Symbol>{10, 7, 11, 12, 12, 10, 1, 2, 3, 11});
  CHECK(b.features[6 + 2] == 0.0);
  CHECK(b.frames(1).rows == 1);
  CHECK(b.target(0).size() == 3);
  CHECK(b.utterance_ids == std::vector<std::string>{"a", "b"});
  ex[1].features = FeatureSequence::from_rows("b", {{1}});
  CHECK_THROWS_AS(make_batch(ex, 10, 11, 12), ArgumentError);
}

TEST_CASE("run_training visits every example once per epoch") {
  std::vector<double> params(1, 0.0);
  std::vector<int> seen(10, 0);
  TrainOptions o;
  o.steps = 20;  // 4 epochs of 5 batches
  o.batch_size = 2;
  run_training(params, 10, o, [&](std::span<const std::size_t> idx) {
    for (auto i : idx) ++seen[i];
    GradResult g;
    g.loss = {1.0, 1};
    g.grads = {0.0};
    return g;
  });
  for (int s : seen) CHECK(s == 4);
}

TEST_CASE("run_training reports the diverging step") {
  std::vector<double> params(1, 0.0);
  TrainOptions o;
  o.steps = 10;
  int calls = 0;
  try {
    run_training(params, 4, o, [&](std::span<const std::size_t>) {
      if (++calls == 4) throw NumericError("non-finite activation in test");
      GradResult g;
      g.loss = {1.0, 1};
      g.grads = {0.1};
      return g;
    });
    FAIL("expected divergence");
  } catch (const TrainingDivergedError& e) {
    CHECK(e.step() == 3);
  }
  try {
    run_training(params, 4, o, [&](std::span<const std::size_t>) {
      GradResult g;
      g.loss = {INFINITY, 1};
      g.grads = {0.1};
      return g;
    });
    FAIL("expected divergence");
  } catch (const TrainingDivergedError& e) {
    CHECK(e.step() == 0);
  }
}

TEST_CASE("momentum SGD minimises a quadratic") {
  std::vector<double> params = {5.0, -3.0};
  TrainOptions o;
  o.steps = 300;
  o.lr = 0.05;
  o.optimizer = OptimizerKind::kMomentum;
  o.clip_norm = 0.0;
  run_training(params, 1, o, [&](std::span<const std::size_t>) {
    GradResult g;
    g.loss = {params[0] * params[0] + params[1] * params[1], 1};
    g.grads = {2 * params[0], 2 * params[1]};
    return g;
  });
  CHECK(std::abs(params[0]) < 1e-3);
  CHECK(std::abs(params[1]) < 1e-3);
}

TEST_CASE("loss curve CSV") {
  TrainResult r;
  r.loss_curve = {1.5, 0.25};
  CHECK(format_loss_curve(r) == "step,loss\n0,1.5\n1,0.25\n");
}
