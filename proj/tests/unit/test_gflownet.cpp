#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>

#include "../support/fixtures.hpp"
#include "gfnadapt/crop.hpp"
#include "gfnadapt/gflownet.hpp"
#include "gfnadapt/landscape.hpp"

using namespace gfnadapt;

namespace {

PolicyModel random_model(const SpaceSpec& space, std::vector<int> hidden, std::uint64_t seed) {
  Rng rng(seed);
  auto model = make_policy(space, hidden, rng);
  model.randomize(rng);
  return model;
}

/// Logits of a delta policy: every head strongly prefers `key`.
PolicyModel delta_model(const SpaceSpec& space, const StateKey& key) {
  Rng rng(1);
  auto model = make_policy(space, {4}, rng);
  auto& theta = model.parameters();
  theta.setZero();
  const auto out = model.layer_count() - 1;
  for (std::size_t t = 0; t < space.slot_count(); ++t)
    model.bias(out)[model.head_offset(t) + key[t]] = 60.0;
  return model;
}

std::vector<TrajectoryRecord> scored_batch(const PolicyModel& model, const SpaceSpec& space,
                                           std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  auto batch = sample_paths(model, space, n, rng, 0.3);
  std::uniform_real_distribution<double> u(-3.0, 0.5);
  for (auto& tr : batch) {
    tr.log_reward = u(rng);
    tr.tb_residual = model.log_z() + tr.log_pf() - tr.log_reward;
  }
  return batch;
}

}  // namespace

TEST_SUITE("gflownet") {
  TEST_CASE("state encoding") {
    const auto space = builtin_space_definition().space;
    CHECK(feature_dim(space) == 35);
    const auto empty = encode_state(space, StateKey{});
    CHECK(empty.sum() == 6.0);
    // Undecided category of slot 0 and current slot 0.
    CHECK(empty[3] == 1.0);
    CHECK(empty[30] == 1.0);

    const auto partial = encode_state(space, StateKey{2, 4});
    CHECK(partial[2] == 1.0);
    CHECK(partial[3] == 0.0);
    CHECK(partial[4 + 4] == 1.0);
    CHECK(partial[30 + 2] == 1.0);
    CHECK(encode_state(space, StateKey{2, 4}) == partial);
    CHECK_THROWS_AS(encode_state(space, StateKey{0, 0, 0, 0, 0}), std::invalid_argument);

    CHECK(feature_dim(space.with_cycles(2)) == 2 * 30 + 10);
  }

  TEST_CASE("fresh policies are uniform and log-softmax normalizes") {
    const auto space = builtin_space_definition().space;
    Rng rng(3);
    const auto fresh = make_policy(space, {16, 16}, rng);
    CHECK(fresh.log_z() == 0.0);
    for (std::size_t t = 0; t < space.slot_count(); ++t) {
      const auto lp = forward_policy(fresh, encode_state(space, StateKey(std::vector<std::uint8_t>(t, 0))), t);
      CHECK(lp.size() == space.action_count(t));
      for (Eigen::Index a = 0; a < lp.size(); ++a)
        CHECK(lp[a] == doctest::Approx(-std::log(static_cast<double>(lp.size()))).epsilon(1e-14));
    }
    const auto exact = exact_terminal_distribution(fresh, space);
    for (Eigen::Index i = 0; i < exact.size(); ++i) CHECK(exact[i] == doctest::Approx(1.0 / 2625).epsilon(1e-12));

    const auto model = random_model(space, {16, 16}, 5);
    std::mt19937_64 krng(6);
    for (int trial = 0; trial < 50; ++trial) {
      const auto t = static_cast<std::size_t>(trial) % space.slot_count();
      const auto features = encode_state(space, fixtures::random_key(space, krng, t));
      const auto lp = forward_policy(model, features, t);
      CHECK(std::abs(lp.array().exp().sum() - 1.0) < 1e-6);
      CHECK(forward_policy(model, features, t) == lp);
    }
    CHECK_THROWS(forward_policy(model, Eigen::VectorXd::Zero(34), 0));
  }

  TEST_CASE("trajectory bookkeeping") {
    const auto space = builtin_space_definition().space;
    const auto model = random_model(space, {12, 12}, 8);
    Rng rng(2);
    const LogRewardFn log_reward = [](const StateKey& k) { return -0.1 * k[0]; };
    for (int i = 0; i < 100; ++i) {
      const auto tr = sample_trajectory(model, space, log_reward, rng, 0.2);
      CHECK(tr.step_logps.size() == space.slot_count());
      for (double lp : tr.step_logps) CHECK(lp <= 0.0);
      CHECK(tr.log_pf() == doctest::Approx(trajectory_log_pf(model, space, tr.key)).epsilon(1e-12));
      CHECK(tr.tb_residual == doctest::Approx(model.log_z() + tr.log_pf() - log_reward(tr.key)));
    }
  }

  TEST_CASE("delta policies always produce the same terminal") {
    const auto space = builtin_space_definition().space;
    const StateKey target{2, 0, 3, 4, 6};
    const auto model = delta_model(space, target);
    Rng rng(4);
    for (const auto& key : sample_terminals(model, space, 200, rng)) CHECK(key == target);
    CHECK(sample_terminals(model, space, 0, rng).empty());
  }

  TEST_CASE("near-uniform exploration gives uniform slot marginals") {
    const auto space = builtin_space_definition().space;
    const auto model = delta_model(space, StateKey{0, 0, 0, 0, 0});
    Rng rng(10);
    const std::size_t n = 10000;
    const auto paths = sample_paths(model, space, n, rng, 1.0 - 1e-9);
    for (std::size_t t = 0; t < space.slot_count(); ++t) {
      std::vector<double> counts(static_cast<std::size_t>(space.action_count(t)), 0.0);
      for (const auto& p : paths) counts[static_cast<std::size_t>(p.key[t])] += 1.0;
      const double prob = 1.0 / static_cast<double>(counts.size());
      const double sd = std::sqrt(n * prob * (1.0 - prob));
      for (double c : counts) CHECK(std::abs(c - n * prob) < 3.0 * sd);
    }
  }

  TEST_CASE("sampling is reproducible and agrees with exact probabilities") {
    const auto space = fixtures::counts_space({2, 3, 4});
    const auto model = random_model(space, {10, 10}, 12);
    Rng a(77), b(77);
    CHECK(sample_terminals(model, space, 500, a) == sample_terminals(model, space, 500, b));

    const auto exact = exact_terminal_distribution(model, space);
    CHECK(std::abs(exact.sum() - 1.0) < 1e-12);
    Rng rng(31);
    const std::size_t n = 100000;
    std::vector<double> counts(24, 0.0);
    for (const auto& key : sample_terminals(model, space, n, rng))
      counts[terminal_index(space, key)] += 1.0;
    double chi2 = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      const double e = n * exact[static_cast<Eigen::Index>(i)];
      chi2 += (counts[i] - e) * (counts[i] - e) / e;
    }
    CHECK(chi2 < 41.638);  // chi-square critical value, 23 degrees of freedom, alpha 0.01
  }

  TEST_CASE("exact distribution is the product of step probabilities") {
    const auto space = fixtures::counts_space({3, 2, 3});
    const auto model = random_model(space, {6}, 2);
    const auto exact = exact_terminal_distribution(model, space);
    for (const auto& key : enumerate_terminals(space))
      CHECK(std::log(exact[static_cast<Eigen::Index>(terminal_index(space, key))]) ==
            doctest::Approx(trajectory_log_pf(model, space, key)).epsilon(1e-12));
    CHECK_THROWS(exact_terminal_distribution(model, space, 10));
  }

  TEST_CASE("trajectory balance loss") {
    const auto space = builtin_space_definition().space;
    const auto model = random_model(space, {8, 8}, 21);
    auto batch = scored_batch(model, space, 12, 3);
    double expected = 0.0;
    for (const auto& tr : batch) expected += tr.tb_residual * tr.tb_residual;
    CHECK(tb_loss(model, space, batch) == doctest::Approx(expected / 12).epsilon(1e-12));

    auto reversed = batch;
    std::reverse(reversed.begin(), reversed.end());
    CHECK(tb_loss(model, space, reversed) == doctest::Approx(tb_loss(model, space, batch)).epsilon(1e-14));

    for (auto& tr : batch) tr.log_reward = model.log_z() + trajectory_log_pf(model, space, tr.key);
    CHECK(tb_loss(model, space, batch) < 1e-24);

    batch[0].log_reward = std::nan("");
    CHECK_THROWS(tb_loss(model, space, batch));
    CHECK_THROWS(tb_loss(model, space, {}));
  }

  TEST_CASE("single-terminal space optimum") {
    GroupSpec g{1, "g", {{"none", {}}}};
    const auto space = build_space({g}, {{"x", 0, 1, 0.5, 1}}, 1, 0.3);
    TrainConfig config;
    config.steps = 600;
    config.hidden = {4};
    config.lr = 0.05;
    const auto trained = train(space, [](const StateKey&) { return 0.7; }, config);
    CHECK(trained.model.log_z() == doctest::Approx(0.7).epsilon(1e-3));
    CHECK(trained.log.back().tb_loss < 1e-5);
  }

  TEST_CASE("analytic gradient matches central differences") {
    const auto space = builtin_space_definition().space;
    auto model = random_model(space, {8, 8, 8}, 42);
    const auto batch = scored_batch(model, space, 8, 9);
    const auto [loss, grad] = tb_loss_gradient(model, space, batch);
    CHECK(loss == doctest::Approx(tb_loss(model, space, batch)).epsilon(1e-12));

    const double h = 1e-4;
    auto& theta = model.parameters();
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      const double saved = theta[i];
      theta[i] = saved + h;
      const double up = tb_loss(model, space, batch);
      theta[i] = saved - h;
      const double down = tb_loss(model, space, batch);
      theta[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double diff = std::abs(numeric - grad[i]);
      CHECK_MESSAGE((diff <= 1e-4 * std::max(std::abs(numeric), std::abs(grad[i])) || diff < 1e-8),
                    "parameter " << i << ": analytic " << grad[i] << " numeric " << numeric);
    }
  }

  TEST_CASE("optimal tabular policy reproduces the target") {
    // Flow-matching construction: P(a | s) = F(s a) / F(s), F(s) = sum of rewards below s.
    const auto space = fixtures::counts_space({2, 3});
    const std::vector<double> rewards = {0.5, 2.0, 1.0, 3.0, 0.25, 1.25};
    double z = std::accumulate(rewards.begin(), rewards.end(), 0.0);
    std::map<StateKey, double> flow;
    for (const auto& key : enumerate_terminals(space))
      for (std::size_t t = 0; t <= key.size(); ++t)
        flow[key.prefix(t)] += rewards[terminal_index(space, key)];
    for (const auto& key : enumerate_terminals(space)) {
      double log_pf = 0.0;
      for (std::size_t t = 0; t < key.size(); ++t) log_pf += std::log(flow[key.prefix(t + 1)] / flow[key.prefix(t)]);
      const double residual = std::log(z) + log_pf - std::log(rewards[terminal_index(space, key)]);
      CHECK(std::abs(residual) < 1e-12);
      CHECK(std::exp(log_pf) == doctest::Approx(rewards[terminal_index(space, key)] / z).epsilon(1e-12));
    }
  }

  TEST_CASE("training on a tiny space makes progress and stays deterministic") {
    const auto space = fixtures::counts_space({2, 3});
    const std::vector<double> rewards = {1, 2, 3, 4, 5, 6};
    const LogRewardFn log_reward = [&](const StateKey& k) {
      return std::log(rewards[terminal_index(space, k)] / 21.0);
    };
    TrainConfig config;
    config.steps = 2000;
    config.hidden = {32, 32};
    config.seed = 3;
    const auto a = train(space, log_reward, config);
    const auto b = train(space, log_reward, config);
    CHECK(a.model.parameters() == b.model.parameters());
    CHECK(a.log.size() == 2000);
    CHECK(a.first_seen.size() == 6);

    double first = 0.0, last = 0.0;
    for (int i = 0; i < 200; ++i) {
      first += a.log[static_cast<std::size_t>(i)].tb_loss;
      last += a.log[a.log.size() - 1 - static_cast<std::size_t>(i)].tb_loss;
    }
    CHECK(last < 0.1 * first);
  }

  TEST_CASE("non-finite rewards are reported") {
    const auto space = fixtures::counts_space({2, 2});
    TrainConfig config;
    config.steps = 5;
    config.hidden = {4};
    CHECK_THROWS_WITH(train(space, [](const StateKey&) { return std::nan(""); }, config),
                      doctest::Contains("non-finite"));
  }

  TEST_CASE("checkpoint round trip") {
    const auto space = builtin_space_definition().space;
    const auto model = random_model(space, {7, 5}, 17);
    const auto path = std::filesystem::temp_directory_path() / "gfnadapt-test-ckpt.bin";
    save_checkpoint(path, {model, "abc123", "rng-state"});
    const auto back = load_checkpoint(path);
    CHECK(back.config_hash == "abc123");
    CHECK(back.rng_state == "rng-state");
    CHECK(back.model.parameters() == model.parameters());
    CHECK(back.model.hidden() == model.hidden());
    CHECK(back.model.heads() == model.heads());
    CHECK(exact_terminal_distribution(back.model, space) == exact_terminal_distribution(model, space));

    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 40);
    CHECK_THROWS(load_checkpoint(path));
    CHECK_THROWS(load_checkpoint(path.string() + ".absent"));
  }

  TEST_CASE("adam follows the bias-corrected update") {
    Adam<double> adam(2, 0.1);
    Eigen::VectorXd p = Eigen::Vector2d(1.0, -1.0);
    adam.step(p, Eigen::Vector2d(0.5, -2.0));
    // First step moves each coordinate by lr * sign(g) (up to eps).
    CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-7));
    CHECK(p[1] == doctest::Approx(-0.9).epsilon(1e-7));
    adam.set_learning_rate(1, 0.0);
    const double frozen = p[1];
    adam.step(p, Eigen::Vector2d(0.5, -2.0));
    CHECK(p[1] == frozen);
    CHECK(p[0] < 0.9);
  }
}
