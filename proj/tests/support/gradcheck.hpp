#pragma once

#include "chordtex/vae.hpp"

#include <string>

namespace chordtex::testing {

struct GradCheckReport {
  double max_rel_err = 0;
  int checked = 0;
  std::string worst;
};

// Central-difference check of the full VAE objective against the tape
// gradients, on a coordinate sample of every parameter tensor. The noise
// draws are frozen so the loss is a deterministic function of the weights.
inline GradCheckReport vaeGradCheck(VaeModel<double>& model, const VaeBatch<double>& batch,
                                    const nn::Mat<double>& eps_chd,
                                    const nn::Mat<double>& eps_txt, double kl_weight, double h,
                                    int samples_per_param, uint64_t seed) {
  auto& store = model.params();
  auto lossValue = [&]() {
    nn::Tape<double> t;
    auto g = model.buildLossGraph(t, batch, &eps_chd, &eps_txt, kl_weight);
    return t.val(g.total)(0, 0);
  };

  store.zeroGrad();
  {
    nn::Tape<double> t;
    auto g = model.buildLossGraph(t, batch, &eps_chd, &eps_txt, kl_weight);
    t.backward(g.total);
  }
  std::vector<nn::Mat<double>> analytic;
  for (size_t i = 0; i < store.count(); ++i) analytic.push_back(store.entry(i).grad);

  Rng rng(seed);
  GradCheckReport report;
  for (size_t i = 0; i < store.count(); ++i) {
    auto& value = store.entry(i).value;
    const int total = static_cast<int>(value.size());
    for (int s = 0; s < samples_per_param; ++s) {
      const int flat = static_cast<int>(rng.below(total));
      const Eigen::Index r = flat % value.rows();
      const Eigen::Index c = flat / value.rows();
      const double saved = value(r, c);
      value(r, c) = saved + h;
      const double up = lossValue();
      value(r, c) = saved - h;
      const double down = lossValue();
      value(r, c) = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[i](r, c);
      const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a) + std::abs(numeric));
      ++report.checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst = store.entry(i).name + "(" + std::to_string(r) + "," + std::to_string(c) +
                       "): analytic " + std::to_string(a) + " numeric " + std::to_string(numeric);
      }
    }
  }
  return report;
}

}  // namespace chordtex::testing
