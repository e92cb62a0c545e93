#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "v2m/predictor.hpp"

using namespace v2m;

namespace {

Tensor random_sem(int m, int d, Rng& rng, bool requires_grad = false) {
  std::vector<double> v(static_cast<size_t>(m) * d);
  for (double& x : v) x = rng.gaussian();
  return Tensor::leaf({m, d}, std::move(v), requires_grad);
}

std::vector<double> random_curve(int m, Rng& rng) {
  std::vector<double> v(m);
  for (double& x : v) x = rng.uniform();
  return v;
}

PredictorConfig tiny_config() {
  PredictorConfig cfg;
  cfg.sem_dim = 8;
  cfg.d_model = 16;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.out_dim = 3;
  cfg.max_len = 12;
  return cfg;
}

}  // namespace

TEST_CASE("fresh predictor input reduces to the semantic projection") {
  ParamRegistry reg;
  Rng rng(11);
  PredictorConfig cfg = tiny_config();
  Predictor pred(cfg, reg, rng);

  Rng data_rng(12);
  const int m = 5;
  Tensor sem = random_sem(m, cfg.sem_dim, data_rng);
  std::vector<int> scene(m, 1);
  std::vector<double> curve = random_curve(m, data_rng);

  Tensor x = pred.build_input(sem, scene, curve);
  REQUIRE(x.shape() == Shape{m, cfg.d_model});

  // scene embedding and curve projection start at zero
  Tensor w = *reg.find("predictor.proj.w");
  Tensor b = *reg.find("predictor.proj.b");
  Tensor manual = broadcast_add(matmul(sem, w), b);
  for (int i = 0; i < x.numel(); ++i) CHECK(x.data()[i] == manual.data()[i]);
}

TEST_CASE("scene flags shift every frame by the same learned row") {
  ParamRegistry reg;
  Rng rng(21);
  PredictorConfig cfg = tiny_config();
  Predictor pred(cfg, reg, rng);

  Tensor table = *reg.find("predictor.scene_embed");
  Rng fill(22);
  for (double& v : table.data()) v = fill.gaussian();

  Rng data_rng(23);
  const int m = 4;
  Tensor sem = random_sem(m, cfg.sem_dim, data_rng);
  std::vector<double> curve(m, 0.0);
  Tensor x0 = pred.build_input(sem, std::vector<int>(m, 0), curve);
  Tensor x1 = pred.build_input(sem, std::vector<int>(m, 1), curve);

  for (int r = 0; r < m; ++r)
    for (int c = 0; c < cfg.d_model; ++c) {
      const double diff = x1.data()[r * cfg.d_model + c] - x0.data()[r * cfg.d_model + c];
      const double expected = table.data()[cfg.d_model + c] - table.data()[c];
      CHECK(diff == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("predictions have the right shape and live in the unit interval") {
  ParamRegistry reg;
  Rng rng(31);
  PredictorConfig cfg = tiny_config();
  Predictor pred(cfg, reg, rng);

  Rng data_rng(32);
  const int m = 7;
  Tensor sem = random_sem(m, cfg.sem_dim, data_rng);
  std::vector<int> scene(m, 0);
  scene[2] = 1;
  Tensor out = pred(sem, scene, random_curve(m, data_rng));

  REQUIRE(out.shape() == Shape{m, cfg.out_dim});
  for (double v : out.data()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("future frames cannot influence earlier predictions") {
  for (int layers : {1, 2, 4}) {
    CAPTURE(layers);
    ParamRegistry reg;
    Rng rng(41);
    PredictorConfig cfg = tiny_config();
    cfg.n_layers = layers;
    Predictor pred(cfg, reg, rng);

    Rng data_rng(42);
    const int m = 6;
    Tensor sem_a = random_sem(m, cfg.sem_dim, data_rng);
    std::vector<double> edited(sem_a.data());
    for (int c = 0; c < cfg.sem_dim; ++c)
      edited[(m - 1) * cfg.sem_dim + c] += 3.0;
    Tensor sem_b = Tensor::leaf({m, cfg.sem_dim}, std::move(edited));

    std::vector<int> scene(m, 0);
    std::vector<double> curve = random_curve(m, data_rng);
    Tensor out_a = pred(sem_a, scene, curve);
    Tensor out_b = pred(sem_b, scene, curve);

    for (int r = 0; r < m - 1; ++r)
      for (int c = 0; c < cfg.out_dim; ++c)
        CHECK(out_a.data()[r * cfg.out_dim + c] == out_b.data()[r * cfg.out_dim + c]);

    bool last_changed = false;
    for (int c = 0; c < cfg.out_dim; ++c)
      if (out_a.data()[(m - 1) * cfg.out_dim + c] !=
          out_b.data()[(m - 1) * cfg.out_dim + c])
        last_changed = true;
    CHECK(last_changed);
  }
}

TEST_CASE("same seed builds the same predictor") {
  PredictorConfig cfg = tiny_config();
  ParamRegistry reg_a, reg_b;
  Rng rng_a(51), rng_b(51);
  Predictor pa(cfg, reg_a, rng_a);
  Predictor pb(cfg, reg_b, rng_b);

  REQUIRE(reg_a.items.size() == reg_b.items.size());
  for (size_t i = 0; i < reg_a.items.size(); ++i) {
    CHECK(reg_a.items[i].first == reg_b.items[i].first);
    CHECK(reg_a.items[i].second.data() == reg_b.items[i].second.data());
  }

  Rng data_rng(52);
  const int m = 5;
  Tensor sem = random_sem(m, cfg.sem_dim, data_rng);
  std::vector<int> scene(m, 0);
  std::vector<double> curve = random_curve(m, data_rng);
  Tensor out_a = pa(sem, scene, curve);
  Tensor out_b = pb(sem, scene, curve);
  CHECK(out_a.data() == out_b.data());
}

TEST_CASE("input validation names the offending dimension") {
  ParamRegistry reg;
  Rng rng(61);
  PredictorConfig cfg = tiny_config();
  cfg.max_len = 5;
  Predictor pred(cfg, reg, rng);

  Rng data_rng(62);
  Tensor sem6 = random_sem(6, cfg.sem_dim, data_rng);
  std::vector<int> scene6(6, 0);
  std::vector<double> curve6(6, 0.0);
  CHECK_THROWS_WITH_AS(pred(sem6, scene6, curve6),
                       "predictor: sequence length 6 exceeds max_len 5",
                       std::runtime_error);

  Tensor sem4 = random_sem(4, cfg.sem_dim, data_rng);
  CHECK_THROWS_WITH_AS(pred.build_input(sem4, std::vector<int>(3, 0),
                                        std::vector<double>(4, 0.0)),
                       "predictor input: 3 scene flags for 4 frames",
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(pred.build_input(sem4, std::vector<int>(4, 0),
                                        std::vector<double>(5, 0.0)),
                       "predictor input: 5 curve values for 4 frames",
                       std::runtime_error);
  std::vector<int> bad_scene(4, 0);
  bad_scene[3] = 2;
  CHECK_THROWS_WITH_AS(pred.build_input(sem4, bad_scene, std::vector<double>(4, 0.0)),
                       "predictor input: scene flag at frame 3 is 2, expected 0 or 1",
                       std::runtime_error);

  Tensor wrong_width = random_sem(4, cfg.sem_dim + 1, data_rng);
  CHECK_THROWS(pred.build_input(wrong_width, std::vector<int>(4, 0),
                                std::vector<double>(4, 0.0)));
}

TEST_CASE("loss is zero on a perfect match and scales with error, not length") {
  Tensor a = Tensor::full({4, 2}, 0.3);
  CHECK(predictor_loss(a, a).data()[0] == 0.0);

  Tensor pred3 = Tensor::full({3, 2}, 0.5);
  Tensor gt3 = Tensor::full({3, 2}, 0.6);
  Tensor pred9 = Tensor::full({9, 2}, 0.5);
  Tensor gt9 = Tensor::full({9, 2}, 0.6);
  const double l3 = predictor_loss(pred3, gt3).data()[0];
  const double l9 = predictor_loss(pred9, gt9).data()[0];
  CHECK(l3 == doctest::Approx(0.01).epsilon(1e-7));
  CHECK(l3 == doctest::Approx(l9).epsilon(1e-12));
}

TEST_CASE("gradients match finite differences through the whole stack") {
  ParamRegistry reg;
  Rng rng(71);
  PredictorConfig cfg = tiny_config();
  cfg.n_layers = 1;
  Predictor pred(cfg, reg, rng);

  Rng data_rng(72);
  const int m = 4;
  Tensor sem = random_sem(m, cfg.sem_dim, data_rng, /*requires_grad=*/true);
  std::vector<int> scene{0, 1, 0, 1};
  std::vector<double> curve = random_curve(m, data_rng);
  Tensor target = Tensor::full({m, cfg.out_dim}, 0.4);

  // nonzero scene and curve weights so their paths carry gradient too
  Rng fill(73);
  for (double& v : reg.find("predictor.scene_embed")->data()) v = 0.3 * fill.gaussian();
  for (double& v : reg.find("predictor.curve.w")->data()) v = 0.3 * fill.gaussian();

  auto loss_from_sem = [&](const Tensor& s) {
    return predictor_loss(pred(s, scene, curve), target);
  };
  CHECK(grad_check(loss_from_sem, sem) < 1e-3);

  auto loss_fixed = [&](const Tensor&) {
    return predictor_loss(pred(sem, scene, curve), target);
  };
  CHECK(grad_check(loss_fixed, *reg.find("predictor.block0.attn.wq.w")) < 1e-3);
  CHECK(grad_check(loss_fixed, *reg.find("predictor.head.w")) < 1e-3);
  CHECK(grad_check(loss_fixed, *reg.find("predictor.curve.w")) < 1e-3);
  CHECK(grad_check(loss_fixed, *reg.find("predictor.ln_out.gamma")) < 1e-3);
}

TEST_CASE("a small predictor overfits a fixed clip") {
  ParamRegistry reg;
  Rng rng(81);
  PredictorConfig cfg;
  cfg.sem_dim = 8;
  cfg.d_model = 32;
  cfg.n_layers = 2;
  cfg.n_heads = 4;
  cfg.out_dim = 1;
  cfg.max_len = 10;
  Predictor pred(cfg, reg, rng);

  Rng data_rng(82);
  const int m = 6;
  Tensor sem = random_sem(m, cfg.sem_dim, data_rng);
  std::vector<int> scene{0, 1, 0, 0, 1, 0};
  std::vector<double> curve{0.0, 1.0, 0.2, 0.1, 0.9, 0.0};
  Tensor target = Tensor::leaf({m, 1}, {0.0, 1.0, 0.0, 0.0, 1.0, 0.0});

  AdamW opt;
  opt.lr = 2e-2;
  opt.weight_decay = 0.0;
  opt.init(reg);

  double last = 1.0;
  for (int step = 0; step < 500; ++step) {
    reg.zero_grad();
    Tensor loss = predictor_loss(pred(sem, scene, curve), target);
    backward(loss);
    opt.update(reg);
    last = loss.data()[0];
  }
  CHECK(last < 0.01);
}
