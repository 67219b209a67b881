#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "support/gradcheck.hpp"
#include "topoaug/agent.hpp"
#include "topoaug/error.hpp"
#include "topoaug/nn.hpp"

using namespace topoaug;
using nn::Tensor;

namespace {

using gradcheck::kStep;
using gradcheck::kTol;
using gradcheck::numeric_grad;
using gradcheck::random_tensor;
using gradcheck::rel_err;
using gradcheck::weighted_sum;
constexpr int kSeeds = 20;

void check_close(const std::vector<double>& numeric, const Tensor<double>& analytic) {
  REQUIRE(numeric.size() == analytic.size());
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    INFO("entry " << i << " analytic " << analytic[i] << " numeric " << numeric[i]);
    CHECK(rel_err(analytic[i], numeric[i]) < kTol);
  }
}

}  // namespace

TEST_CASE("conv2d gradients match finite differences") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    const std::size_t c = 1 + seed % 2, o = 1 + seed % 3, h = 3 + seed % 3, w = 4;
    const std::size_t k = seed % 4 == 0 ? 1 : 3;
    Tensor<double> x = random_tensor({c, h, w}, rng);
    Tensor<double> wt = random_tensor({o, c, k, k}, rng);
    Tensor<double> b = random_tensor({o}, rng);
    const Tensor<double> probe = random_tensor({o, h, w}, rng);
    auto f = [&] { return weighted_sum(nn::conv2d_forward(x, wt, b), probe); };

    Tensor<double> gx, gw(wt.shape()), gb(b.shape());
    nn::conv2d_backward(x, wt, probe, &gx, gw, gb);
    check_close(numeric_grad(x, f), gx);
    check_close(numeric_grad(wt, f), gw);
    check_close(numeric_grad(b, f), gb);
  }
}

TEST_CASE("dense gradients match finite differences") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(100 + static_cast<std::uint64_t>(seed));
    const std::size_t in = 1 + seed % 7, out = 1 + seed % 5;
    Tensor<double> x = random_tensor({in}, rng);
    Tensor<double> wt = random_tensor({out, in}, rng);
    Tensor<double> b = random_tensor({out}, rng);
    const Tensor<double> probe = random_tensor({out}, rng);
    auto f = [&] { return weighted_sum(nn::dense_forward(x, wt, b), probe); };

    Tensor<double> gx, gw(wt.shape()), gb(b.shape());
    nn::dense_backward(x, wt, probe, &gx, gw, gb);
    check_close(numeric_grad(x, f), gx);
    check_close(numeric_grad(wt, f), gw);
    check_close(numeric_grad(b, f), gb);
  }
}

TEST_CASE("relu gradient matches finite differences away from the kink") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(200 + static_cast<std::uint64_t>(seed));
    Tensor<double> x = random_tensor({12}, rng);
    for (double& v : x.values()) {
      if (std::abs(v) < 10 * kStep) v += 0.1;
    }
    const Tensor<double> probe = random_tensor({12}, rng);
    auto f = [&] { return weighted_sum(nn::relu_forward(x), probe); };
    const Tensor<double> g = nn::relu_backward(nn::relu_forward(x), probe);
    check_close(numeric_grad(x, f), g);
  }
}

TEST_CASE("softmax and log-softmax") {
  const std::vector<double> logits{1.0, 2.0, 3.0};
  const auto p = nn::softmax<double>(logits);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(p[0] == doctest::Approx(std::exp(1.0) / z));
  CHECK(p[2] == doctest::Approx(std::exp(3.0) / z));
  const auto lp = nn::log_softmax<double>(logits);
  for (std::size_t i = 0; i < 3; ++i) CHECK(lp[i] == doctest::Approx(std::log(p[i])));

  const std::vector<float> huge{1000.0f, 1000.0f, -1000.0f};
  const auto q = nn::softmax<float>(huge);
  CHECK(q[0] == doctest::Approx(0.5));
  CHECK(q[2] == 0.0f);
  CHECK_THROWS_AS(nn::softmax<float>(std::vector<float>{}), ShapeError);

  // d/dz of sum_i w_i log softmax(z)_i
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(300 + static_cast<std::uint64_t>(seed));
    Tensor<double> z = random_tensor({6}, rng, 3.0);
    const Tensor<double> w = random_tensor({6}, rng);
    auto f = [&] {
      const auto l = nn::log_softmax<double>(z.values());
      double s = 0.0;
      for (std::size_t i = 0; i < l.size(); ++i) s += w[i] * l[i];
      return s;
    };
    const auto sm = nn::softmax<double>(z.values());
    double wsum = 0.0;
    for (double v : w.values()) wsum += v;
    Tensor<double> g({6});
    for (std::size_t i = 0; i < 6; ++i) g[i] = w[i] - wsum * sm[i];
    check_close(numeric_grad(z, f), g);
  }
}

TEST_CASE("full loss gradient matches finite differences") {
  Architecture arch;
  arch.tm_size = 3;
  arch.adj_size = 4;
  arch.actions = 3;
  arch.conv1_filters = 2;
  arch.conv2_filters = 2;
  arch.kernel = 3;
  arch.block_fc = 4;
  arch.trunk1 = 5;
  arch.trunk2 = 4;

  std::size_t checked = 0, kinks = 0;
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(400 + static_cast<std::uint64_t>(seed));
    ModelParams<double> model = init_params(arch, static_cast<std::uint64_t>(seed)).cast<double>();
    for (auto& t : model.params.tensors) {
      std::uniform_real_distribution<double> u(-0.6, 0.6);
      for (double& v : t.values()) v = u(rng);
    }
    std::vector<ExperienceEntry> log(2);
    std::vector<double> returns, advantages;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t s = 0; s < log.size(); ++s) {
      log[s].state.tm_plane = random_tensor({1, 3, 3}, rng).cast<float>();
      log[s].state.adj_plane = random_tensor({1, 4, 4}, rng).cast<float>();
      log[s].chosen_links = {static_cast<int>(rng() % 3)};
      returns.push_back(u(rng));
      advantages.push_back(u(rng) - 0.5);
    }
    TrainConfig cfg;
    cfg.entropy_beta = 0.05;

    nn::ParamSet<double> grads = model.params.zeros_like();
    compute_loss<double>(log, returns, advantages, model, cfg, &grads);
    auto f = [&] { return compute_loss<double>(log, returns, advantages, model, cfg, nullptr); };
    for (std::size_t k = 0; k < model.params.tensors.size(); ++k) {
      INFO("seed " << seed << " tensor " << k);
      const auto coarse = numeric_grad(model.params.tensors[k], f);
      const auto fine = numeric_grad(model.params.tensors[k], f, kStep / 16);
      for (std::size_t i = 0; i < coarse.size(); ++i) {
        ++checked;
        // A ReLU kink inside the stencil makes the two step sizes disagree.
        if (rel_err(coarse[i], fine[i]) > kTol) {
          ++kinks;
          continue;
        }
        INFO("entry " << i << " analytic " << grads.tensors[k][i] << " numeric " << coarse[i]);
        CHECK(rel_err(grads.tensors[k][i], coarse[i]) < kTol);
      }
    }
  }
  CHECK(kinks * 100 < checked);
}

TEST_CASE("global norm clipping") {
  nn::ParamSet<double> g;
  g.tensors.emplace_back(nn::Shape{2}, std::vector<double>{3.0, 4.0});
  nn::ParamSet<double> copy = g;
  CHECK(nn::clip_global_norm(copy, 0.0) == 5.0);
  CHECK(copy.tensors[0][0] == 3.0);
  CHECK(nn::clip_global_norm(copy, 10.0) == 5.0);
  CHECK(copy.tensors[0][1] == 4.0);
  CHECK(nn::clip_global_norm(g, 1.0) == 5.0);
  CHECK(g.tensors[0][0] == doctest::Approx(0.6));
  CHECK(g.tensors[0][1] == doctest::Approx(0.8));
  CHECK(nn::global_norm(g) == doctest::Approx(1.0));
}

TEST_CASE("Adam matches a hand-computed trajectory") {
  nn::ParamSet<double> p, g;
  p.tensors.emplace_back(nn::Shape{1}, std::vector<double>{1.0});
  g.tensors.emplace_back(nn::Shape{1}, std::vector<double>{0.5});
  nn::Adam<double> adam;
  adam.update(p, g, 0.1);
  const double p1 = 1.0 - 0.1 * 0.5 / (std::sqrt(0.00025 / 0.001) + 1e-8);
  CHECK(p.tensors[0][0] == doctest::Approx(p1).epsilon(1e-12));
  g.tensors[0][0] = -1.0;
  adam.update(p, g, 0.1);
  const double m = 0.9 * 0.05 + 0.1 * -1.0;
  const double v = 0.999 * 0.00025 + 0.001 * 1.0;
  const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.999 * 0.999);
  CHECK(p.tensors[0][0] == doctest::Approx(p1 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8)).epsilon(1e-9));
  CHECK(adam.steps() == 2);
  CHECK_THROWS_AS(adam.update(p, g, 0.0), ParameterError);
  nn::ParamSet<double> wrong;
  wrong.tensors.emplace_back(nn::Shape{2});
  CHECK_THROWS_AS(adam.update(p, wrong, 0.1), ShapeError);
}

TEST_CASE("learning-rate decay per episode") {
  CHECK(nn::decay_lr(1e-4, 0) == doctest::Approx(1e-4));
  CHECK(nn::decay_lr(1e-4, 1) == doctest::Approx(9.5e-5));
  CHECK(nn::decay_lr(1e-4, 2) == doctest::Approx(9.025e-5));
  CHECK(nn::decay_lr(1e-3, 3, 1.0) == 1e-3);
}

TEST_CASE("tensor shape checks") {
  CHECK_THROWS_AS(Tensor<float>({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  const Tensor<float> x({2, 3, 3});
  const Tensor<float> w({4, 3, 3, 3});
  const Tensor<float> b({4});
  CHECK_THROWS_AS(nn::conv2d_forward(x, w, b), ShapeError);
  CHECK_THROWS_AS(nn::dense_forward(Tensor<float>({5}), Tensor<float>({2, 4}), Tensor<float>({2})), ShapeError);
  CHECK(nn::shape_string({2, 3}).find('2') != std::string::npos);
}

TEST_CASE("policy outputs on the fat-tree have the right shapes and are finite") {
  const Topology topo = build_fattree(4);
  const Architecture arch = architecture_for(topo);
  CHECK(arch.tm_size == 8);
  CHECK(arch.adj_size == topo.node_count());
  CHECK(arch.actions == 28);
  const ModelParams<float> model = init_params(arch, 3);
  CHECK(model.params.tensors.size() == kSlotCount);

  SynthParams p;
  p.flow_count = 40;
  Simulator sim(topo, synthesize_trace(p));
  sim.reset();
  const StepReport r = sim.step();
  const AgentState state = encode_state(r);
  CHECK(state.tm_plane.shape() == nn::Shape{1, 8, 8});
  const auto out = forward_policy(model, state);
  CHECK(out.link_probs.size() == 28);
  double total = 0.0;
  for (float v : out.link_probs) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0f);
    total += v;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(std::isfinite(out.value));

  const ModelParams<float> again = init_params(arch, 3);
  for (std::size_t k = 0; k < kSlotCount; ++k) {
    CHECK(std::equal(again.params.tensors[k].values().begin(), again.params.tensors[k].values().end(),
                     model.params.tensors[k].values().begin()));
  }
}
