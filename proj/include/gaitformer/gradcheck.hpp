// Copyright (c) 2026 the gaitformer authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "gaitformer/autograd.hpp"
#include "gaitformer/rng.hpp"

namespace gaitformer {

struct GradCheckReport {
  std::string parameter;
  double max_rel_error = 0.0;
  bool pass = false;
};

struct GradCheckOptions {
  double step = 1e-5;        // central-difference perturbation
  double tolerance = 1e-4;   // relative
  std::size_t max_coords = 64;
  std::uint64_t seed = 0x5eed;
};

inline bool all_pass(const std::vector<GradCheckReport>& reports) {
  return std::all_of(reports.begin(), reports.end(),
                     [](const GradCheckReport& r) { return r.pass; });
}

/// Compares reverse-mode gradients against central finite differences
/// (f(t+h) - f(t-h)) / 2h for every parameter. Tensors larger than
/// max_coords are subsampled deterministically by seed. loss_fn must build a
/// fresh scalar from the current parameter values on every call.
inline std::vector<GradCheckReport> grad_check(
    const std::function<Var()>& loss_fn, ParamSet& params,
    const GradCheckOptions& opt = {}) {
  params.zero_grad_all();
  Var loss = loss_fn();
  if (loss.size() != 1) {
    throw ContractError("grad_check requires a scalar loss, got shape " +
                        shape_str(loss.shape()));
  }
  backward(loss);

  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) analytic.push_back(p.grad());

  std::vector<GradCheckReport> reports;
  reports.reserve(params.size());
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = params[pi];
    std::vector<std::size_t> coords;
    if (p.size() <= opt.max_coords) {
      coords.resize(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) coords[i] = i;
    } else {
      Rng rng(opt.seed ^ (0x9e3779b97f4a7c15ull * (pi + 1)));
      coords = rng.sample_without_replacement(p.size(), opt.max_coords);
    }

    double max_rel = 0.0;
    for (std::size_t ci : coords) {
      const double orig = p.value()(ci);
      p.value()(ci) = orig + opt.step;
      const double fplus = loss_fn().value()(0);
      p.value()(ci) = orig - opt.step;
      const double fminus = loss_fn().value()(0);
      p.value()(ci) = orig;
      const double fd = (fplus - fminus) / (2.0 * opt.step);
      const double an = analytic[pi](ci);
      const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-8});
      max_rel = std::max(max_rel, std::fabs(fd - an) / denom);
    }
    reports.push_back({p.name(), max_rel, max_rel <= opt.tolerance});
  }
  return reports;
}

}  // namespace gaitformer
