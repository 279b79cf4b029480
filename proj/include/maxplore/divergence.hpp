#pragma once

// Information-theoretic primitives used as disagreement utilities:
// Shannon entropy / Jensen-Shannon divergence for categorical predictions and
// quadratic Renyi entropy / Jensen-Renyi divergence for diagonal-Gaussian
// ensembles. All entropies are in nats.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <vector>

#include "maxplore/common.hpp"

namespace maxplore {

// Probability vector over K outcomes.
struct CategoricalDist {
  std::vector<double> probs;

  void validate(double tol = 1e-6) const {
    if (probs.empty()) throw ValidationError("CategoricalDist: empty support");
    double sum = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0)) throw ValidationError("CategoricalDist: negative or NaN entry");
      sum += p;
    }
    if (std::abs(sum - 1.0) > tol)
      throw ValidationError("CategoricalDist: probabilities sum to " + std::to_string(sum));
  }

  int sample(Rng& rng) const {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < probs.size(); ++k) {
      acc += probs[k];
      if (u < acc) return static_cast<int>(k);
    }
    return static_cast<int>(probs.size()) - 1;
  }
};

// Diagonal Gaussian over d dimensions.
struct GaussianDiag {
  std::vector<double> mean;
  std::vector<double> var;

  std::size_t dim() const { return mean.size(); }

  void validate() const {
    if (mean.empty() || mean.size() != var.size())
      throw ValidationError("GaussianDiag: mean/var dimension mismatch");
    for (double v : var) {
      if (!(v > 0.0)) throw ValidationError("GaussianDiag: variance must be positive");
    }
  }

  std::vector<double> sample(Rng& rng) const {
    std::vector<double> x(mean.size());
    for (std::size_t k = 0; k < mean.size(); ++k)
      x[k] = mean[k] + std::sqrt(var[k]) * rng.normal();
    return x;
  }
};

// Temperature rescaling of predicted variances toward the upper bound.
struct VarianceTempering {
  double lambda = 0.1;
  std::vector<double> sigma_upper;

  void validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0))
      throw ValidationError("VarianceTempering: lambda must lie in [0,1]");
    if (sigma_upper.empty())
      throw ValidationError("VarianceTempering: sigma_upper is empty");
    for (double s : sigma_upper) {
      if (!(s > 0.0))
        throw ValidationError("VarianceTempering: sigma_upper entries must be positive");
    }
  }
};

// -sum p ln p with 0 ln 0 := 0.
inline double entropy_categorical(const CategoricalDist& p) {
  p.validate();
  double h = 0.0;
  for (double q : p.probs) {
    if (q > 0.0) h -= q * std::log(q);
  }
  return h;
}

// Entropy of the average distribution minus the average entropy.
inline double jsd_categorical(std::span<const CategoricalDist> dists) {
  if (dists.empty()) throw ValidationError("jsd_categorical: no distributions");
  const std::size_t k = dists.front().probs.size();
  for (const auto& d : dists) {
    if (d.probs.size() != k)
      throw ValidationError("jsd_categorical: mismatched support sizes");
  }
  CategoricalDist mix;
  mix.probs.assign(k, 0.0);
  double mean_h = 0.0;
  for (const auto& d : dists) {
    mean_h += entropy_categorical(d);
    for (std::size_t i = 0; i < k; ++i) mix.probs[i] += d.probs[i];
  }
  const double n = static_cast<double>(dists.size());
  for (double& p : mix.probs) p /= n;
  mean_h /= n;
  return entropy_categorical(mix) - mean_h;
}

// |Omega|^(-1/2) exp(-1/2 Delta^T Omega^-1 Delta) with Omega = var_i + var_j,
// computed as exp(-(p + q)/2) in log space.
inline double pairwise_gaussian_kernel(const GaussianDiag& gi, const GaussianDiag& gj) {
  if (gi.dim() != gj.dim())
    throw ValidationError("pairwise_gaussian_kernel: dimension mismatch");
  double p = 0.0;
  double q = 0.0;
  for (std::size_t k = 0; k < gi.dim(); ++k) {
    const double omega = gi.var[k] + gj.var[k];
    const double delta = gj.mean[k] - gi.mean[k];
    p += delta * delta / omega;
    q += std::log(omega);
  }
  return std::exp(-0.5 * (p + q));
}

// Jensen-Renyi divergence (quadratic Renyi entropy) of a Gaussian mixture with
// uniform weights. Pairwise exponents are combined with log-sum-exp.
inline double jrd_gaussians(std::span<const GaussianDiag> gs) {
  if (gs.empty()) throw ValidationError("jrd_gaussians: no members");
  const std::size_t n = gs.size();
  const std::size_t d = gs.front().dim();
  for (const auto& g : gs) {
    if (g.dim() != d) throw ValidationError("jrd_gaussians: dimension mismatch");
  }

  // exponents e_ij = -(p_ij + q_ij)/2, symmetric
  std::vector<double> exponents;
  exponents.reserve(n * (n + 1) / 2);
  std::vector<int> multiplicity;
  multiplicity.reserve(n * (n + 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double p = 0.0;
      double q = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double omega = gs[i].var[k] + gs[j].var[k];
        const double delta = gs[j].mean[k] - gs[i].mean[k];
        p += delta * delta / omega;
        q += std::log(omega);
      }
      exponents.push_back(-0.5 * (p + q));
      multiplicity.push_back(i == j ? 1 : 2);
    }
  }

  const double emax = *std::max_element(exponents.begin(), exponents.end());
  if (!std::isfinite(emax))
    throw NumericError("jrd_gaussians: non-finite pairwise exponent");
  double acc = 0.0;
  for (std::size_t t = 0; t < exponents.size(); ++t)
    acc += multiplicity[t] * std::exp(exponents[t] - emax);
  const double lse = emax + std::log(acc);

  double mean_logdet = 0.0;
  for (const auto& g : gs) {
    for (double v : g.var) mean_logdet += std::log(v);
  }
  mean_logdet /= static_cast<double>(n);

  const double log_n = std::log(static_cast<double>(n));
  const double result =
      2.0 * log_n - lse - 0.5 * mean_logdet - 0.5 * static_cast<double>(d) * std::log(2.0);

  if (!std::isfinite(result)) {
    std::ostringstream os;
    os << "jrd_gaussians: non-finite result (lse=" << lse << ", mean_logdet=" << mean_logdet
       << ")";
    throw NumericError(os.str());
  }
  if (std::abs(result) < 1e-9) return 0.0;  // cancellation noise
  if (result < 0.0)
    throw NumericError("jrd_gaussians: negative divergence " + std::to_string(result));
  return result;
}

// var_hat = (1 - lambda) * sigma_upper + lambda * var; means unchanged.
inline std::vector<GaussianDiag> rescale_variances(std::span<const GaussianDiag> gs,
                                                   const VarianceTempering& t) {
  t.validate();
  std::vector<GaussianDiag> out;
  out.reserve(gs.size());
  for (const auto& g : gs) {
    if (g.dim() != t.sigma_upper.size())
      throw ValidationError("rescale_variances: dimension mismatch with sigma_upper");
    GaussianDiag h;
    h.mean = g.mean;
    h.var.resize(g.dim());
    for (std::size_t k = 0; k < g.dim(); ++k) {
      if (g.var[k] > t.sigma_upper[k] * (1.0 + 1e-12))
        throw ValidationError("rescale_variances: variance above sigma_upper");
      h.var[k] = (1.0 - t.lambda) * t.sigma_upper[k] + t.lambda * g.var[k];
    }
    out.push_back(std::move(h));
  }
  return out;
}

}  // namespace maxplore
