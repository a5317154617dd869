#pragma once

#include "rdcm/autograd.hpp"
#include "rdcm/data.hpp"
#include "rdcm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace rdcm::testing {

inline Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, scale);
  for (double& v : t.values()) v = n(rng);
  return t;
}

inline Tensor random_simplex(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  Tensor t({rows, cols});
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sum += (t(r, c) = u(rng));
    for (std::size_t c = 0; c < cols; ++c) t(r, c) /= sum;
  }
  return t;
}

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

using InputBuilder = std::function<Var(Tape&, std::vector<Var>&)>;

// Largest relative error between tape gradients w.r.t. `inputs` and central differences.
inline double fd_input_error(std::vector<Tensor> inputs, const InputBuilder& build, double h = 1e-4) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.variable(t));
    Var loss = build(tape, vars);
    tape.backward(loss);
    for (Var v : vars) analytic.push_back(tape.grad(v));
  }
  auto eval = [&]() {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.variable(t));
    return build(tape, vars).value().item();
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t k = 0; k < inputs[i].size(); ++k) {
      double& x = inputs[i].values()[k];
      const double saved = x;
      x = saved + h;
      const double up = eval();
      x = saved - h;
      const double down = eval();
      x = saved;
      worst = std::max(worst, relative_error(analytic[i].values()[k], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

using ParamBuilder = std::function<Var(Tape&)>;

// Same check over every scalar of `params`.
inline double fd_param_error(ParamSet& params, const ParamBuilder& build, double h = 1e-4) {
  {
    Tape tape;
    compute_gradients(tape, build(tape), params);
  }
  double worst = 0.0;
  for (auto& e : params.entries()) {
    for (std::size_t k = 0; k < e.value.size(); ++k) {
      double& x = e.value.values()[k];
      const double saved = x;
      x = saved + h;
      double up = 0.0, down = 0.0;
      {
        Tape tape;
        up = build(tape).value().item();
      }
      x = saved - h;
      {
        Tape tape;
        down = build(tape).value().item();
      }
      x = saved;
      worst = std::max(worst, relative_error(e.grad.values()[k], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

// A small synthetic dataset for fast model tests.
inline DatasetBundle tiny_dataset(std::size_t domains = 3, std::size_t samples = 40, std::uint64_t seed = 11) {
  SynthConfig cfg;
  cfg.domains = domains;
  cfg.samples_per_domain = samples;
  cfg.latent_dim = 3;
  cfg.text_dim = 5;
  cfg.vis_dim = 4;
  cfg.inst_dim = 3;
  cfg.seed = seed;
  return synth_generate(cfg);
}

}  // namespace rdcm::testing
