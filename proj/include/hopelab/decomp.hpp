#pragma once

// Per-component decomposition of rotary attention logits, VAF, frequency-band
// classification and phase-coverage (OOD) analysis.

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hopelab/pe_core.hpp"

namespace hope {

struct ComponentContribution {
  int index = 0;
  double value = 0.0;
};

/// C_i = (q0 k0 + q1 k1) cos(delta_i) + (q0 k1 - q1 k0) sin(delta_i),
/// delta_i = (m - n) * freqs[i]. The C_i sum to the rotary dot product.
std::vector<ComponentContribution> component_contributions(std::span<const double> q,
                                                           std::span<const double> k, double m,
                                                           double n,
                                                           std::span<const double> freqs);

std::vector<ComponentContribution> component_contributions(std::span<const double> q,
                                                           std::span<const double> k, double m,
                                                           double n,
                                                           const RotarySpectrum& spectrum);

enum class VafMode {
  Literal,  // [1 - sum(y - yhat) / sum(y)] * 100, exactly as printed
  Squared,  // [1 - sum((y - yhat)^2) / sum(y^2)] * 100
};

/// Percent of `y` accounted for by `y_hat`. Throws DegenerateInput when the
/// denominator is zero and InvalidArgument on a length mismatch.
double vaf(std::span<const double> y, std::span<const double> y_hat,
           VafMode mode = VafMode::Squared);

struct ComponentClass {
  int index = 0;
  FrequencyBand band = FrequencyBand::HighFrequency;
  double theta = 0.0;
};

std::vector<ComponentClass> classify_components(const RotarySpectrum& spectrum,
                                                int train_length);

/// Indices of every component in `band`, ascending.
std::vector<int> band_members(std::span<const ComponentClass> classes, FrequencyBand band);

struct PhaseCoverageReport {
  int index = 0;
  double theta = 0.0;
  double train_phase_max = 0.0;  // theta * (L_train - 1)
  double test_phase_max = 0.0;   // theta * (L_test - 1)
  bool ood_flag = false;
};

std::vector<PhaseCoverageReport> phase_coverage(std::span<const double> freqs,
                                                int train_length, int test_length);

std::vector<PhaseCoverageReport> phase_coverage(const RotarySpectrum& spectrum,
                                                int train_length, int test_length);

std::vector<int> ood_indices(std::span<const PhaseCoverageReport> reports);

/// One row of the per-component CSV report.
struct ComponentReportRow {
  int index = 0;
  double theta = 0.0;
  FrequencyBand band = FrequencyBand::HighFrequency;
  std::string curve_file;
  std::optional<double> vaf;  // empty when the component curve is degenerate
  bool ood_flag = false;
};

void write_component_report_csv(std::ostream& os, std::span<const ComponentReportRow> rows);

}  // namespace hope
