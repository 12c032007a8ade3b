#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ftattack/data.hpp"
#include "ftattack/generator.hpp"
#include "ftattack/losses.hpp"
#include "ftattack/optim.hpp"
#include "ftattack/simnet.hpp"
#include "ftattack/victim.hpp"

namespace ftattack {

enum class OptimizerKind { adadelta, sgd };

struct TrainConfig {
  int iterations = 5000;
  int batch_size = 64;
  uint64_t seed = 1;
  OptimizerKind optimizer = OptimizerKind::adadelta;
  real lr = 1;
  real rho = real(0.95);
  real eps = real(1e-6);
  real momentum = real(0.9);
  LossWeights weights;
  int log_every = 10;
  int hidden_width = 32;

  void validate() const {
    if (iterations < 1 || batch_size < 1)
      throw ShapeError("TrainConfig: iterations and batch_size must be >= 1");
    weights.validate();
  }
};

struct GenTrainLogRow {
  int iter;
  LossBreakdown parts;
};

/// Trains the generator on the adversarial split only; target-class images in
/// the training set are rejected. The simulation network is never updated.
inline GeneratorParams train_generator(const DatasetSplit& data, const SimNet& net,
                                       const TrainConfig& cfg,
                                       std::vector<GenTrainLogRow>* log = nullptr) {
  cfg.validate();
  if (data.adv_train.count() == 0) throw FormatError("train_generator: empty adv_train");
  for (int label : data.adv_train.labels)
    if (data.is_target(label))
      throw FormatError("train_generator: target-class image found in the adversarial split");

  GeneratorParams params = init_generator(cfg.hidden_width, splitmix64(cfg.seed ^ 0x6E60ULL));

  std::vector<Tensor*> tensors;
  for (int l = 0; l < kGeneratorLayers; ++l) {
    tensors.push_back(&params.conv_w[l]);
    tensors.push_back(&params.conv_b[l]);
  }
  for (int l = 0; l < kGeneratorLayers - 1; ++l) {
    tensors.push_back(&params.bn_gamma[l]);
    tensors.push_back(&params.bn_beta[l]);
  }
  std::vector<AdadeltaState> ada;
  std::vector<SgdState> sgd;
  for (Tensor* t : tensors) {
    if (cfg.optimizer == OptimizerKind::adadelta)
      ada.push_back(AdadeltaState::init(t->shape()));
    else
      sgd.push_back(SgdState::init(t->shape()));
  }

  BatchSampler sampler(data.adv_train.count(), cfg.batch_size, cfg.seed);
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const std::vector<int64_t> idx = sampler.batch_indices(iter);
    const Tensor images = data.adv_train.gather(idx);

    GeneratorCache cache;
    Tensor adv = generate(params, images, Mode::train, &cache);
    const Tensor feat_orig = net.simulate(images);
    const Tensor feat_adv = net.simulate(adv);
    CompoundResult loss = compound_loss(images, adv, feat_orig, feat_adv, cfg.weights);
    if (!std::isfinite(loss.parts.total))
      throw NumericError("train_generator: loss diverged at iteration " + std::to_string(iter));

    Tensor grad_adv = std::move(loss.grad_adversarial);
    if (cfg.weights.delta > 0) {
      const Tensor through_sim = net.simulate_backward(loss.grad_features_adv, images.dim(1));
      for (int64_t i = 0; i < grad_adv.size(); ++i) grad_adv[i] += through_sim[i];
    }
    GeneratorGrads grads = generate_backward(params, cache, grad_adv);

    std::vector<const Tensor*> gts;
    for (int l = 0; l < kGeneratorLayers; ++l) {
      gts.push_back(&grads.conv_w[l]);
      gts.push_back(&grads.conv_b[l]);
    }
    for (int l = 0; l < kGeneratorLayers - 1; ++l) {
      gts.push_back(&grads.bn_gamma[l]);
      gts.push_back(&grads.bn_beta[l]);
    }
    for (size_t i = 0; i < tensors.size(); ++i) {
      if (cfg.optimizer == OptimizerKind::adadelta)
        adadelta_step(*tensors[i], *gts[i], ada[i], cfg.rho, cfg.eps, cfg.lr);
      else
        sgd_step(*tensors[i], *gts[i], sgd[i], cfg.lr, cfg.momentum);
    }

    if (log && (iter % cfg.log_every == 0 || iter == cfg.iterations - 1))
      log->push_back({iter, loss.parts});
  }
  return params;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient verification

struct GradcheckGroup {
  std::string name;
  double max_rel_err = 0.0;  // over coordinates the oracle could verify
  int verified = 0;
  int skipped = 0;  // coordinates where finite differences are unreliable
  int failed = 0;
  bool pass = false;
};

// 32-bit builds: eps 1e-3, tolerance 1e-3. The 64-bit verification build
// can afford a smaller step and a much tighter tolerance.
inline constexpr double kGradcheckTolerance = sizeof(real) == 8 ? 1e-6 : 1e-3;
inline constexpr real kGradcheckEpsilon = sizeof(real) == 8 ? real(1e-5) : real(1e-3);

struct GradcheckReport {
  std::vector<GradcheckGroup> groups;
  bool all_pass = true;
  double tolerance = kGradcheckTolerance;
};

namespace detail {

/// Central differences on sampled coordinates vs. an analytic gradient.
/// loss_fn must re-run the full forward pass against the perturbed tensor.
///
/// Finite differences are only meaningful where the objective is locally
/// smooth and the difference rises above the evaluation noise. Each sampled
/// coordinate is therefore adjudicated: two step sizes give a consistency
/// estimate and a Richardson-extrapolated value; on disagreement the step
/// shrinks (a ReLU kink or pool tie inside the stencil moves out of range).
/// A coordinate where the analytic value and both differences sit in the
/// zero band counts as verified (a bias feeding batch norm has exactly zero
/// gradient). Coordinates the oracle cannot measure are skipped; a
/// trustworthy difference that contradicts the analytic gradient fails the
/// group.
inline GradcheckGroup check_tensor_grad(const std::string& name, Tensor& param,
                                        const Tensor& analytic,
                                        const std::function<double()>& loss_fn, Rng& rng,
                                        double tolerance, int samples = 100,
                                        real epsilon = kGradcheckEpsilon) {
  GradcheckGroup g;
  g.name = name;
  const int64_t size = param.size();
  const bool single = sizeof(real) == 4;
  const double zero_band = single ? 5e-3 : 1e-7;
  const double analytic_tiny = single ? 1e-4 : 1e-10;
  const double f0 = loss_fn();

  struct Probe {
    double fd, fd_half, richardson, uncertainty;
  };
  auto probe_at = [&](int64_t i, real eps) {
    const real saved = param[i];
    param[i] = saved + eps;
    const double fp = loss_fn();
    param[i] = saved - eps;
    const double fm = loss_fn();
    param[i] = saved + eps / 2;
    const double fp2 = loss_fn();
    param[i] = saved - eps / 2;
    const double fm2 = loss_fn();
    // Evaluation-noise floor: perturbations far below the step size move the
    // objective by rounding noise, not signal. Sampled at the stencil points
    // as well, where intermediate roundings genuinely reshuffle.
    param[i] = saved + eps * real(1e-4);
    double noise = std::abs(loss_fn() - f0);
    param[i] = saved + eps * (real(1) + real(1e-4));
    noise = std::max(noise, std::abs(loss_fn() - fp));
    param[i] = saved - eps * (real(1) + real(1e-4));
    noise = std::max(noise, std::abs(loss_fn() - fm));
    param[i] = saved;
    Probe p;
    p.fd = (fp - fm) / (2.0 * double(eps));
    p.fd_half = (fp2 - fm2) / double(eps);
    p.richardson = (4.0 * p.fd_half - p.fd) / 3.0;
    // Noise amplification plus the Richardson truncation residual.
    p.uncertainty = 3.0 * noise / (2.0 * double(eps)) + std::abs(p.fd - p.fd_half) / 3.0;
    return p;
  };

  const real levels[5] = {epsilon, epsilon * 4, epsilon * 16, epsilon / 4, epsilon / 16};
  for (int s = 0; s < samples; ++s) {
    const int64_t i = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(size)));
    const double an = double(analytic[i]);
    bool decided = false;
    bool any_trusted = false;
    double worst_trusted = 0.0;
    for (int level = 0; level < 5 && !decided; ++level) {
      const Probe p = probe_at(i, levels[level]);
      const double scale = std::abs(an) + std::abs(p.richardson) + 1e-8;
      if (level == 0 && std::abs(an) < analytic_tiny &&
          std::abs(p.fd) < std::max(zero_band, 4.0 * p.uncertainty) &&
          std::abs(p.fd_half) < std::max(zero_band, 4.0 * p.uncertainty)) {
        ++g.verified;  // exact-zero gradient (e.g. bias feeding batch norm)
        decided = true;
        break;
      }
      if (p.uncertainty / scale > 0.5 * tolerance) continue;  // oracle too noisy here
      any_trusted = true;
      const double rel = std::abs(an - p.richardson) / scale;
      worst_trusted = std::max(worst_trusted, rel);
      if (rel < tolerance) {
        g.max_rel_err = std::max(g.max_rel_err, rel);
        ++g.verified;
        decided = true;
      }
    }
    if (decided) continue;
    if (any_trusted) {
      ++g.verified;
      ++g.failed;
      g.max_rel_err = std::max(g.max_rel_err, worst_trusted);
    } else {
      ++g.skipped;
    }
  }
  g.pass = g.failed == 0 && g.verified >= std::max(1, samples / 5);
  return g;
}

}  // namespace detail

/// Gradient checks for the loss terms with respect to the adversarial image.
inline GradcheckReport gradcheck_losses(uint64_t seed, double tolerance = kGradcheckTolerance) {
  GradcheckReport report;
  report.tolerance = tolerance;
  Rng rng(splitmix64(seed ^ 0x6C05ULL));
  Tensor a({2, 3, 8, 8}), b({2, 3, 8, 8});
  for (int64_t i = 0; i < a.size(); ++i) a[i] = static_cast<real>(rng.uniform(0.0, 1.0));
  for (int64_t i = 0; i < b.size(); ++i) b[i] = static_cast<real>(rng.uniform(0.0, 1.0));

  struct Term {
    const char* name;
    std::function<real(const Tensor&, const Tensor&, real, Tensor&)> with_grad;
    std::function<real(const Tensor&, const Tensor&)> value;
  };
  const std::vector<Term> terms = {
      {"mae", [](const Tensor& x, const Tensor& y, real s, Tensor& g) {
         return mae_with_grad(x, y, s, g);
       },
       [](const Tensor& x, const Tensor& y) { return mae(x, y); }},
      {"ssim", [](const Tensor& x, const Tensor& y, real s, Tensor& g) {
         return ssim_with_grad(x, y, s, g);
       },
       [](const Tensor& x, const Tensor& y) { return ssim(x, y); }},
      {"varc", [](const Tensor& x, const Tensor& y, real s, Tensor& g) {
         return varc_with_grad(x, y, s, g);
       },
       [](const Tensor& x, const Tensor& y) { return varc(x, y); }},
      {"feature_distance", [](const Tensor& x, const Tensor& y, real s, Tensor& g) {
         return feature_distance_with_grad(x, y, s, g);
       },
       [](const Tensor& x, const Tensor& y) { return feature_distance(x, y); }},
  };
  for (const Term& term : terms) {
    Tensor grad(b.shape());
    term.with_grad(a, b, real(1), grad);
    auto loss = [&] { return double(term.value(a, b)); };
    report.groups.push_back(
        detail::check_tensor_grad(term.name, b, grad, loss, rng, tolerance));
  }

  // Compound loss for every 0/1 weight configuration, including the path
  // through the feature branch.
  const KernelBank bank = build_bank(5, 12);
  const SimNet net(bank);
  for (int mask = 0; mask < 16; ++mask) {
    LossWeights w;
    w.alpha = (mask & 1) ? 1 : 0;
    w.beta = (mask & 2) ? 1 : 0;
    w.gamma = (mask & 4) ? 1 : 0;
    w.delta = (mask & 8) ? 1 : 0;
    auto total = [&] {
      const Tensor fa = net.simulate(a), fb = net.simulate(b);
      return double(compound_loss(a, b, fa, fb, w).parts.total);
    };
    const Tensor fa = net.simulate(a), fb = net.simulate(b);
    CompoundResult r = compound_loss(a, b, fa, fb, w);
    Tensor grad = std::move(r.grad_adversarial);
    if (w.delta > 0) {
      const Tensor through = net.simulate_backward(r.grad_features_adv, 3);
      for (int64_t i = 0; i < grad.size(); ++i) grad[i] += through[i];
    }
    report.groups.push_back(detail::check_tensor_grad(
        "compound[" + std::to_string(mask) + "]", b, grad, total, rng, tolerance, 25));
  }
  for (const auto& g : report.groups) report.all_pass = report.all_pass && g.pass;
  return report;
}

/// Gradient checks for every generator parameter group through the full
/// generator + simulation network + compound loss path.
inline GradcheckReport gradcheck_generator(uint64_t seed, double tolerance = kGradcheckTolerance) {
  GradcheckReport report;
  report.tolerance = tolerance;
  Rng rng(splitmix64(seed ^ 0x6E6369ULL));
  Tensor images({2, 3, 8, 8});
  for (int64_t i = 0; i < images.size(); ++i)
    images[i] = static_cast<real>(rng.uniform(0.0, 1.0));
  GeneratorParams params = init_generator(4, splitmix64(seed));
  const SimNet net(build_bank(5, 12));
  LossWeights w;

  auto loss_of = [&](GeneratorParams& p) {
    GeneratorParams scratch = p;  // keep running stats unchanged across evals
    Tensor adv = generate(scratch, images, Mode::train);
    const Tensor fa = net.simulate(images), fb = net.simulate(adv);
    return double(compound_loss(images, adv, fa, fb, w).parts.total);
  };

  GeneratorParams work = params;
  GeneratorCache cache;
  Tensor adv = generate(work, images, Mode::train, &cache);
  const Tensor fa = net.simulate(images), fb = net.simulate(adv);
  CompoundResult r = compound_loss(images, adv, fa, fb, w);
  Tensor grad_adv = std::move(r.grad_adversarial);
  const Tensor through = net.simulate_backward(r.grad_features_adv, 3);
  for (int64_t i = 0; i < grad_adv.size(); ++i) grad_adv[i] += through[i];
  const GeneratorGrads grads = generate_backward(params, cache, grad_adv);

  auto loss_fn = [&] { return loss_of(params); };
  for (int l = 0; l < kGeneratorLayers; ++l) {
    report.groups.push_back(detail::check_tensor_grad("conv" + std::to_string(l + 1) + "/weight",
                                                      params.conv_w[l], grads.conv_w[l], loss_fn,
                                                      rng, tolerance));
    report.groups.push_back(detail::check_tensor_grad("conv" + std::to_string(l + 1) + "/bias",
                                                      params.conv_b[l], grads.conv_b[l], loss_fn,
                                                      rng, tolerance, 25));
  }
  for (int l = 0; l < kGeneratorLayers - 1; ++l) {
    report.groups.push_back(detail::check_tensor_grad("bn" + std::to_string(l + 1) + "/gamma",
                                                      params.bn_gamma[l], grads.bn_gamma[l],
                                                      loss_fn, rng, tolerance, 25));
    report.groups.push_back(detail::check_tensor_grad("bn" + std::to_string(l + 1) + "/beta",
                                                      params.bn_beta[l], grads.bn_beta[l],
                                                      loss_fn, rng, tolerance, 25));
  }
  for (const auto& g : report.groups) report.all_pass = report.all_pass && g.pass;
  return report;
}

/// Gradient checks for the victim through softmax cross-entropy.
inline GradcheckReport gradcheck_victim(uint64_t seed, double tolerance = kGradcheckTolerance) {
  GradcheckReport report;
  report.tolerance = tolerance;
  Rng rng(splitmix64(seed ^ 0x71C71ULL));
  Tensor images({4, 3, 8, 8});
  for (int64_t i = 0; i < images.size(); ++i)
    images[i] = static_cast<real>(rng.uniform(0.0, 1.0));
  const std::vector<int> labels = {0, 1, 1, 0};
  VictimParams params = init_victim({4, 6, 8}, splitmix64(seed));

  auto loss_of = [&](VictimParams& p) {
    VictimParams scratch = p;
    const Tensor logits = victim_logits(scratch, images, Mode::train);
    return softmax_ce(logits, labels, nullptr);
  };
  VictimParams work = params;
  VictimCache cache;
  Tensor logits = victim_logits(work, images, Mode::train, &cache);
  Tensor dlogits;
  softmax_ce(logits, labels, &dlogits);
  const VictimGrads grads = victim_backward(params, cache, dlogits);

  auto loss_fn = [&] { return loss_of(params); };
  for (int b = 0; b < kVictimBlocks; ++b) {
    const std::string tag = "block" + std::to_string(b + 1);
    report.groups.push_back(detail::check_tensor_grad(tag + "/conv_w", params.conv_w[b],
                                                      grads.conv_w[b], loss_fn, rng, tolerance));
    report.groups.push_back(detail::check_tensor_grad(tag + "/conv_b", params.conv_b[b],
                                                      grads.conv_b[b], loss_fn, rng, tolerance,
                                                      25));
    report.groups.push_back(detail::check_tensor_grad(tag + "/bn_gamma", params.bn_gamma[b],
                                                      grads.bn_gamma[b], loss_fn, rng, tolerance,
                                                      25));
    report.groups.push_back(detail::check_tensor_grad(tag + "/bn_beta", params.bn_beta[b],
                                                      grads.bn_beta[b], loss_fn, rng, tolerance,
                                                      25));
  }
  report.groups.push_back(
      detail::check_tensor_grad("fc/weight", params.fc_w, grads.fc_w, loss_fn, rng, tolerance));
  report.groups.push_back(detail::check_tensor_grad("fc/bias", params.fc_b, grads.fc_b, loss_fn,
                                                    rng, tolerance, 2));
  for (const auto& g : report.groups) report.all_pass = report.all_pass && g.pass;
  return report;
}

enum class GradcheckScope { losses, generator, victim, all };

inline GradcheckReport gradcheck(GradcheckScope scope, uint64_t seed) {
  GradcheckReport report;
  auto merge = [&](const GradcheckReport& r, const std::string& prefix) {
    for (GradcheckGroup g : r.groups) {
      g.name = prefix + "/" + g.name;
      report.groups.push_back(std::move(g));
    }
    report.all_pass = report.all_pass && r.all_pass;
  };
  if (scope == GradcheckScope::losses || scope == GradcheckScope::all)
    merge(gradcheck_losses(seed), "losses");
  if (scope == GradcheckScope::generator || scope == GradcheckScope::all)
    merge(gradcheck_generator(seed), "generator");
  if (scope == GradcheckScope::victim || scope == GradcheckScope::all)
    merge(gradcheck_victim(seed), "victim");
  return report;
}

}  // namespace ftattack
