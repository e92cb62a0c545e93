#include "v2m/selfcheck.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <stdexcept>

#include "v2m/diffusion.hpp"
#include "v2m/generator.hpp"
#include "v2m/predictor.hpp"
#include "v2m/rng.hpp"

namespace v2m {

namespace {

constexpr double kGradTol = 1e-3;

Tensor rand_leaf(Shape shape, Rng& rng, double scale = 0.5) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.gaussian();
  return Tensor::leaf(shape, v, true);
}

void randomize(ParamRegistry& reg, Rng& rng, double scale = 0.2) {
  for (auto& [name, t] : reg.items)
    for (double& x : t.data()) x = scale * rng.gaussian();
}

void record(CheckSummary& s, const std::string& name, double err, double tol,
            bool verbose) {
  CheckResult r{name, err, err < tol};
  if (verbose)
    std::printf("[%s] %-34s %.3e\n", r.ok ? "ok" : "FAIL", name.c_str(), err);
  s.all_ok = s.all_ok && r.ok;
  s.max_err = std::max(s.max_err, err);
  s.results.push_back(std::move(r));
}

void check_grad(CheckSummary& s, const std::string& name,
                const std::function<Tensor(const Tensor&)>& fn, Tensor input,
                bool verbose) {
  record(s, name, grad_check(fn, input), kGradTol, verbose);
}

GeneratorConfig toy_config(FusionKind kind) {
  GeneratorConfig cfg;
  cfg.d_model = 16;
  cfg.n_blocks = 2;
  cfg.n_heads = 2;
  cfg.ffn_mult = 2;
  cfg.d_lat = 5;
  cfg.emo_dim = 4;
  cfg.sem_dim = 5;
  cfg.rhy_dim = 2;
  cfg.max_len = 8;
  cfg.strategy.kind = kind;
  return cfg;
}

struct ToyInputs {
  Tensor emo, sem, rhy, z, target;
};

ToyInputs toy_inputs(Rng& rng) {
  ToyInputs in;
  in.emo = rand_leaf({3, 4}, rng);
  in.sem = rand_leaf({3, 5}, rng);
  in.rhy = rand_leaf({3, 2}, rng);
  in.z = rand_leaf({3, 5}, rng);
  in.target = rand_leaf({3, 5}, rng);
  return in;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

Tensor& named_param(ParamRegistry& reg, const std::string& name) {
  Tensor* p = reg.find(name);
  if (!p) throw std::runtime_error("selfcheck: no parameter named '" + name + "'");
  return *p;
}

}  // namespace

CheckSummary gradient_battery(bool verbose) {
  CheckSummary s;
  Rng rng(20240817);

  Tensor a = rand_leaf({3, 4}, rng);
  Tensor b4x2 = rand_leaf({4, 2}, rng);
  Tensor b3x4 = rand_leaf({3, 4}, rng);
  Tensor row = rand_leaf({1, 4}, rng);

  check_grad(s, "matmul", [&](const Tensor& x) { return sum(matmul(x, b4x2)); }, a, verbose);
  check_grad(s, "add", [&](const Tensor& x) { return sum(mul(add(x, b3x4), b3x4)); }, a, verbose);
  check_grad(s, "sub", [&](const Tensor& x) { return sum(mul(sub(x, b3x4), b3x4)); }, a, verbose);
  check_grad(s, "mul", [&](const Tensor& x) { return sum(mul(x, b3x4)); }, a, verbose);
  check_grad(s, "scale", [&](const Tensor& x) { return sum(mul(scale(x, -1.7), b3x4)); }, a, verbose);
  check_grad(s, "transpose", [&](const Tensor& x) { return sum(matmul(transpose(x), b3x4)); }, a, verbose);
  check_grad(s, "reshape", [&](const Tensor& x) { return sum(matmul(reshape(x, {4, 3}), b3x4)); }, a, verbose);
  check_grad(s, "concat", [&](const Tensor& x) { return sum(mul(concat({x, b3x4}, 1), concat({b3x4, x}, 1))); }, a, verbose);
  check_grad(s, "slice", [&](const Tensor& x) { return sum(mul(slice(x, 1, 1, 2), slice(b3x4, 1, 0, 2))); }, a, verbose);
  check_grad(s, "softmax", [&](const Tensor& x) { return sum(mul(softmax(x, 1), b3x4)); }, a, verbose);
  check_grad(s, "layer_norm", [&](const Tensor& x) { return sum(mul(layer_norm(x, 1), b3x4)); }, a, verbose);
  check_grad(s, "sigmoid", [&](const Tensor& x) { return sum(mul(sigmoid(x), b3x4)); }, a, verbose);
  check_grad(s, "gelu", [&](const Tensor& x) { return sum(mul(gelu(x), b3x4)); }, a, verbose);
  check_grad(s, "embedding_lookup",
             [&](const Tensor& x) { return sum(mul(embedding_lookup(x, {2, 0, 2}), b3x4)); },
             rand_leaf({3, 4}, rng), verbose);
  check_grad(s, "mean", [&](const Tensor& x) { return mean(mul(x, b3x4)); }, a, verbose);
  check_grad(s, "sum", [&](const Tensor& x) { return sum(mul(x, b3x4)); }, a, verbose);
  check_grad(s, "mse_loss", [&](const Tensor& x) { return mse_loss(x, b3x4); }, a, verbose);
  check_grad(s, "broadcast_add", [&](const Tensor& x) { return sum(mul(broadcast_add(x, row), b3x4)); }, a, verbose);
  check_grad(s, "broadcast_add_row", [&](const Tensor& x) { return sum(mul(broadcast_add(b3x4, x), b3x4)); }, row, verbose);

  {
    ParamRegistry reg;
    Attention attn(reg, "t.attn", 16, 2, rng, /*causal_mask=*/true, /*use_rope=*/true);
    randomize(reg, rng);
    Tensor x = rand_leaf({4, 16}, rng);
    check_grad(s, "attention_causal_rope",
               [&](const Tensor& q) { return sum(mul(attn.self(q), q)); }, x, verbose);
  }
  {
    ParamRegistry reg;
    Ffn ffn(reg, "t.ffn", 16, 2, rng);
    randomize(reg, rng);
    Tensor x = rand_leaf({4, 16}, rng);
    check_grad(s, "ffn", [&](const Tensor& q) { return sum(mul(ffn(q), q)); }, x, verbose);
  }

  // the full conditioned model, every fusion strategy, gradient vs the latent
  for (FusionKind kind :
       {FusionKind::Weighted, FusionKind::Additive, FusionKind::FeatureSelection,
        FusionKind::PreAttnFiLM, FusionKind::PostAttnFiLM,
        FusionKind::PostAttnFiLMwithFS}) {
    ParamRegistry reg;
    Rng init(7);
    Generator gen(toy_config(kind), reg, init);
    randomize(reg, rng);
    Rng data(11);
    ToyInputs in = toy_inputs(data);
    auto fn = [&](const Tensor& z) {
      ConditionSet cond = gen.encode_conditions(in.emo, in.sem, in.rhy, 0.35, 0.0, 3.0);
      return mse_loss(gen.forward(z, cond, 0.35), in.target);
    };
    check_grad(s, std::string("generator_z_") + fusion_kind_name(kind), fn, in.z, verbose);
  }

  // parameter gradients through both blocks; the gate path needs the
  // weighted strategy, the film path needs a film strategy
  {
    ParamRegistry reg;
    Rng init(7);
    Generator gen(toy_config(FusionKind::Weighted), reg, init);
    randomize(reg, rng);
    Rng data(11);
    ToyInputs in = toy_inputs(data);
    auto loss_for = [&](const Tensor&) {
      ConditionSet cond = gen.encode_conditions(in.emo, in.sem, in.rhy, 0.35, 0.0, 3.0);
      return mse_loss(gen.forward(in.z, cond, 0.35), in.target);
    };
    for (const char* pname :
         {"gen.enc_sem.w", "gen.in_proj.w", "gen.block0.attn_self.wq.w",
          "gen.block0.gate.l1.w", "gen.block1.ffn.w1.w", "gen.out_proj.w"}) {
      check_grad(s, std::string("generator_param ") + pname,
                 [&](const Tensor& t) { return loss_for(t); },
                 named_param(reg, pname), verbose);
    }
  }
  {
    ParamRegistry reg;
    Rng init(7);
    Generator gen(toy_config(FusionKind::PostAttnFiLM), reg, init);
    randomize(reg, rng);
    Rng data(11);
    ToyInputs in = toy_inputs(data);
    auto loss_for = [&](const Tensor&) {
      ConditionSet cond = gen.encode_conditions(in.emo, in.sem, in.rhy, 0.35, 0.0, 3.0);
      return mse_loss(gen.forward(in.z, cond, 0.35), in.target);
    };
    for (const char* pname :
         {"gen.block0.film_sem.gamma1.w", "gen.block1.film_rhy.beta1.w"}) {
      check_grad(s, std::string("generator_param ") + pname,
                 [&](const Tensor& t) { return loss_for(t); },
                 named_param(reg, pname), verbose);
    }
  }

  {
    PredictorConfig cfg;
    cfg.sem_dim = 5;
    cfg.d_model = 16;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.out_dim = 2;
    cfg.max_len = 8;
    ParamRegistry reg;
    Rng init(7);
    Predictor pred(cfg, reg, init);
    randomize(reg, rng);
    Rng data(13);
    Tensor sem = rand_leaf({4, 5}, data);
    Tensor target = rand_leaf({4, 2}, data);
    std::vector<int> scene = {0, 1, 0, 1};
    std::vector<double> curve = {0.0, 0.8, 0.1, 0.6};
    check_grad(s, "predictor_sem",
               [&](const Tensor& x) { return mse_loss(pred(x, scene, curve), target); },
               sem, verbose);
    check_grad(s, "predictor_param predictor.head.w",
               [&](const Tensor&) { return mse_loss(pred(sem, scene, curve), target); },
               named_param(reg, "predictor.head.w"), verbose);
  }

  return s;
}

CheckSummary self_test(bool verbose) {
  CheckSummary s;
  Rng rng(99);

  {
    double worst = 0.0;
    for (int i = 0; i <= 1000; ++i) {
      Schedule sc = schedule(i / 1000.0);
      worst = std::max(worst, std::fabs(sc.alpha * sc.alpha + sc.sigma * sc.sigma - 1.0));
    }
    record(s, "schedule_unit_circle", worst, 1e-6, verbose);
  }
  {
    double worst = std::fabs(p_pred(5) - 0.0);
    worst = std::max(worst, std::fabs(p_pred(20) - 0.5));
    worst = std::max(worst, std::fabs(p_pred(40) - 1.0));
    record(s, "conditioning_ramp", worst, 1e-15, verbose);
  }
  {
    Waveform w;
    w.samples.resize(3 * kSampleRate);
    for (double& x : w.samples) x = rng.uniform(-0.9, 0.9);
    Waveform back = latent_decode(latent_encode(w));
    record(s, "latent_codec_round_trip",
           max_abs_diff(w.samples, back.samples), 1e-9, verbose);
  }
  {
    const int t_rows = 4, d = 6;
    Tensor z0 = rand_leaf({t_rows, d}, rng);
    VModel oracle = [&](const Tensor& z, double t) {
      Schedule sc = schedule(t);
      return scale(sub(scale(z, sc.alpha), z0), 1.0 / sc.sigma);
    };
    Tensor out = ddim_sample(oracle, oracle, t_rows, d, 10, 1.0, 5);
    record(s, "ddim_exact_velocity", max_abs_diff(out.data(), z0.data()), 1e-4, verbose);
  }
  {
    // a half-open gate must reproduce plain averaging bit for bit
    ParamRegistry rw, ra;
    Rng iw(3), ia(3);
    Generator gw(toy_config(FusionKind::Weighted), rw, iw);
    Generator ga(toy_config(FusionKind::Additive), ra, ia);
    Rng fill(21);
    randomize(rw, fill);
    for (size_t i = 0; i < ra.items.size(); ++i)
      ra.items[i].second.data() = rw.items[i].second.data();
    for (const char* pname : {"gen.block0.gate.l2.w", "gen.block0.gate.l2.b",
                              "gen.block1.gate.l2.w", "gen.block1.gate.l2.b"}) {
      for (double& x : named_param(rw, pname).data()) x = 0.0;
      for (double& x : named_param(ra, pname).data()) x = 0.0;
    }
    Rng data(31);
    ToyInputs in = toy_inputs(data);
    ConditionSet cw = gw.encode_conditions(in.emo, in.sem, in.rhy, 0.4, 0.0, 3.0);
    ConditionSet ca = ga.encode_conditions(in.emo, in.sem, in.rhy, 0.4, 0.0, 3.0);
    double diff = max_abs_diff(gw.forward(in.z, cw, 0.4).data(),
                               ga.forward(in.z, ca, 0.4).data());
    record(s, "weighted_gate_degeneracy", diff, 1e-300, verbose);
  }

  return s;
}

}  // namespace v2m
