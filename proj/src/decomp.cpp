#include "hopelab/decomp.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>

#include "hopelab/error.hpp"

namespace hope {

std::vector<ComponentContribution> component_contributions(std::span<const double> q,
                                                           std::span<const double> k, double m,
                                                           double n,
                                                           std::span<const double> freqs) {
  if (q.size() != 2 * freqs.size() || k.size() != 2 * freqs.size()) {
    throw InvalidArgument("component_contributions: q/k length must be 2 x " +
                          std::to_string(freqs.size()));
  }
  std::vector<ComponentContribution> out(freqs.size());
  const double rel = m - n;
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    const double q0 = q[2 * i], q1 = q[2 * i + 1];
    const double k0 = k[2 * i], k1 = k[2 * i + 1];
    const double angle = rel * freqs[i];
    out[i] = {static_cast<int>(i),
              (q0 * k0 + q1 * k1) * std::cos(angle) + (q0 * k1 - q1 * k0) * std::sin(angle)};
  }
  return out;
}

std::vector<ComponentContribution> component_contributions(std::span<const double> q,
                                                           std::span<const double> k, double m,
                                                           double n,
                                                           const RotarySpectrum& spectrum) {
  return component_contributions(q, k, m, n, std::span<const double>(spectrum.thetas));
}

double vaf(std::span<const double> y, std::span<const double> y_hat, VafMode mode) {
  if (y.size() != y_hat.size()) {
    throw InvalidArgument("vaf: series lengths differ (" + std::to_string(y.size()) + " vs " +
                          std::to_string(y_hat.size()) + ")");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - y_hat[i];
    if (mode == VafMode::Literal) {
      num += r;
      den += y[i];
    } else {
      num += r * r;
      den += y[i] * y[i];
    }
  }
  if (den == 0.0) {
    throw DegenerateInput(mode == VafMode::Literal ? "vaf: sum of y is zero"
                                                   : "vaf: sum of y^2 is zero");
  }
  return (1.0 - num / den) * 100.0;
}

std::vector<ComponentClass> classify_components(const RotarySpectrum& spectrum,
                                                int train_length) {
  if (train_length < 1) throw InvalidArgument("train_length must be >= 1");
  std::vector<ComponentClass> out;
  out.reserve(spectrum.thetas.size());
  for (std::size_t i = 0; i < spectrum.thetas.size(); ++i) {
    const double theta = spectrum.thetas[i];
    out.push_back({static_cast<int>(i), classify_theta(theta, train_length), theta});
  }
  return out;
}

std::vector<int> band_members(std::span<const ComponentClass> classes, FrequencyBand band) {
  std::vector<int> idx;
  for (const auto& c : classes) {
    if (c.band == band) idx.push_back(c.index);
  }
  return idx;
}

std::vector<PhaseCoverageReport> phase_coverage(std::span<const double> freqs,
                                                int train_length, int test_length) {
  if (train_length < 1 || test_length < train_length) {
    throw InvalidArgument("phase_coverage requires test_length >= train_length >= 1");
  }
  constexpr double kFullCycle = 2.0 * std::numbers::pi;
  std::vector<PhaseCoverageReport> out;
  out.reserve(freqs.size());
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    PhaseCoverageReport r;
    r.index = static_cast<int>(i);
    r.theta = freqs[i];
    r.train_phase_max = freqs[i] * (train_length - 1);
    r.test_phase_max = freqs[i] * (test_length - 1);
    r.ood_flag = r.train_phase_max < kFullCycle && r.test_phase_max > r.train_phase_max;
    out.push_back(r);
  }
  return out;
}

std::vector<PhaseCoverageReport> phase_coverage(const RotarySpectrum& spectrum,
                                                int train_length, int test_length) {
  return phase_coverage(std::span<const double>(spectrum.thetas), train_length, test_length);
}

std::vector<int> ood_indices(std::span<const PhaseCoverageReport> reports) {
  std::vector<int> idx;
  for (const auto& r : reports) {
    if (r.ood_flag) idx.push_back(r.index);
  }
  return idx;
}

void write_component_report_csv(std::ostream& os, std::span<const ComponentReportRow> rows) {
  os << "index,theta,band,curve_file,vaf,ood_flag\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.theta);
    os << r.index << ',' << buf << ',' << to_string(r.band) << ',' << r.curve_file << ',';
    if (r.vaf) {
      std::snprintf(buf, sizeof buf, "%.10g", *r.vaf);
      os << buf;
    }
    os << ',' << (r.ood_flag ? 1 : 0) << '\n';
  }
}

}  // namespace hope
