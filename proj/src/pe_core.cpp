#include "hopelab/pe_core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "hopelab/error.hpp"

namespace hope {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require_pair_lengths(std::span<const double> q, std::span<const double> k,
                          std::size_t expected) {
  if (q.size() != expected || k.size() != expected) {
    throw InvalidArgument("vector length mismatch: q=" + std::to_string(q.size()) +
                          " k=" + std::to_string(k.size()) +
                          " expected=" + std::to_string(expected));
  }
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string_view to_string(FrequencyBand band) {
  switch (band) {
    case FrequencyBand::HighFrequency: return "high";
    case FrequencyBand::Activated: return "activated";
    case FrequencyBand::LowFrequency: return "low";
  }
  return "?";
}

FrequencyBand classify_theta(double theta, int train_length) {
  const double upper = kTwoPi / train_length;
  const double lower = std::numbers::pi / train_length;
  if (theta >= upper) return FrequencyBand::HighFrequency;
  if (theta > lower) return FrequencyBand::Activated;
  return FrequencyBand::LowFrequency;
}

std::string_view to_string(EncodingTag tag) {
  switch (tag) {
    case EncodingTag::NoPE: return "nope";
    case EncodingTag::RoPE: return "rope";
    case EncodingTag::HoPE: return "hope";
    case EncodingTag::AB1: return "ab1";
    case EncodingTag::AB2: return "ab2";
    case EncodingTag::AB3: return "ab3";
    case EncodingTag::ALiBi: return "alibi";
    case EncodingTag::LearnableAPE: return "ape";
  }
  return "?";
}

EncodingTag parse_encoding(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (auto tag : {EncodingTag::NoPE, EncodingTag::RoPE, EncodingTag::HoPE, EncodingTag::AB1,
                   EncodingTag::AB2, EncodingTag::AB3, EncodingTag::ALiBi,
                   EncodingTag::LearnableAPE}) {
    if (lower == to_string(tag)) return tag;
  }
  if (lower == "learnable_ape" || lower == "learnableape") return EncodingTag::LearnableAPE;
  throw InvalidArgument("unknown encoding '" + std::string(name) + "'");
}

bool is_rotary_family(EncodingTag tag) {
  switch (tag) {
    case EncodingTag::NoPE:
    case EncodingTag::RoPE:
    case EncodingTag::HoPE:
    case EncodingTag::AB1:
    case EncodingTag::AB2:
    case EncodingTag::AB3:
      return true;
    default:
      return false;
  }
}

double scale_positions(double position, PositionScaler scaler) {
  return position / scaler.scale;
}

RotarySpectrum build_spectrum(double base, int head_dim) {
  if (head_dim < 2 || head_dim % 2 != 0) {
    throw InvalidArgument("head_dim must be even and >= 2, got " + std::to_string(head_dim));
  }
  if (!(base > 1.0)) {
    throw InvalidArgument("rotary base must be > 1, got " + format_real(base));
  }
  RotarySpectrum s{base, head_dim, {}};
  s.thetas.resize(head_dim / 2);
  for (int i = 0; i < head_dim / 2; ++i) {
    s.thetas[i] = std::pow(base, -2.0 * i / head_dim);
  }
  return s;
}

HopePartition partition_for_hope(const RotarySpectrum& spectrum, int train_length) {
  if (train_length < 1) throw InvalidArgument("train_length must be >= 1");
  const double threshold = kTwoPi / train_length;
  // thetas are strictly decreasing, so the retained set is a prefix.
  int a = 0;
  while (a < spectrum.num_components() && spectrum.thetas[a] >= threshold) ++a;
  HopePartition p;
  p.spectrum = spectrum;
  p.train_length = train_length;
  p.cutoff_index = a;
  p.high_thetas.assign(spectrum.thetas.begin(), spectrum.thetas.begin() + a);
  return p;
}

std::vector<double> ablation_frequencies(const RotarySpectrum& spectrum, int train_length,
                                         Ablation variant) {
  std::vector<double> freqs = spectrum.thetas;
  const int high = partition_for_hope(spectrum, train_length).cutoff_index;
  for (int i = 0; i < spectrum.num_components(); ++i) {
    const FrequencyBand band = classify_theta(spectrum.thetas[i], train_length);
    switch (variant) {
      case Ablation::AB1:
        if (band == FrequencyBand::Activated) freqs[i] = 0.0;
        break;
      case Ablation::AB2:
        if (band == FrequencyBand::LowFrequency) freqs[i] = 0.0;
        break;
      case Ablation::AB3:
        // No high band to borrow from: nothing to re-tile with.
        if (band != FrequencyBand::HighFrequency && high > 0) freqs[i] = spectrum.thetas[i % high];
        break;
    }
  }
  return freqs;
}

std::vector<double> rotary_frequencies(EncodingTag tag, const RotarySpectrum& spectrum,
                                       int train_length) {
  const auto n = static_cast<std::size_t>(spectrum.num_components());
  switch (tag) {
    case EncodingTag::RoPE:
      return spectrum.thetas;
    case EncodingTag::HoPE: {
      std::vector<double> freqs(n, 0.0);
      const int a = partition_for_hope(spectrum, train_length).cutoff_index;
      std::copy_n(spectrum.thetas.begin(), a, freqs.begin());
      return freqs;
    }
    case EncodingTag::AB1: return ablation_frequencies(spectrum, train_length, Ablation::AB1);
    case EncodingTag::AB2: return ablation_frequencies(spectrum, train_length, Ablation::AB2);
    case EncodingTag::AB3: return ablation_frequencies(spectrum, train_length, Ablation::AB3);
    case EncodingTag::NoPE:
    case EncodingTag::ALiBi:
    case EncodingTag::LearnableAPE:
      return std::vector<double>(n, 0.0);
  }
  return std::vector<double>(n, 0.0);
}

std::vector<double> rotate(std::span<const double> v, double position,
                           std::span<const double> freqs) {
  if (v.size() != 2 * freqs.size()) {
    throw InvalidArgument("vector length " + std::to_string(v.size()) +
                          " does not match 2 x " + std::to_string(freqs.size()) + " components");
  }
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    const double angle = position * freqs[i];
    const double c = std::cos(angle), s = std::sin(angle);
    const double x0 = v[2 * i], x1 = v[2 * i + 1];
    out[2 * i] = x0 * c - x1 * s;
    out[2 * i + 1] = x0 * s + x1 * c;
  }
  return out;
}

std::vector<double> apply_rotary(std::span<const double> v, double position,
                                 const RotarySpectrum& spectrum) {
  if (v.size() != static_cast<std::size_t>(spectrum.head_dim)) {
    throw InvalidArgument("vector length " + std::to_string(v.size()) + " != head_dim " +
                          std::to_string(spectrum.head_dim));
  }
  return rotate(v, position, spectrum.thetas);
}

double rotary_dot(std::span<const double> q, std::span<const double> k, double m, double n,
                  std::span<const double> freqs) {
  require_pair_lengths(q, k, 2 * freqs.size());
  const auto qm = rotate(q, m, freqs);
  const auto kn = rotate(k, n, freqs);
  double acc = 0.0;
  for (std::size_t i = 0; i < qm.size(); ++i) acc += qm[i] * kn[i];
  return acc;
}

double rope_dot(std::span<const double> q, std::span<const double> k, double m, double n,
                const RotarySpectrum& spectrum) {
  require_pair_lengths(q, k, static_cast<std::size_t>(spectrum.head_dim));
  return rotary_dot(q, k, m, n, spectrum.thetas);
}

double hope_dot(std::span<const double> q, std::span<const double> k, double m, double n,
                const HopePartition& partition) {
  const auto d = static_cast<std::size_t>(partition.spectrum.head_dim);
  require_pair_lengths(q, k, d);
  const std::size_t split = 2 * static_cast<std::size_t>(partition.cutoff_index);
  if (split == d) return rope_dot(q, k, m, n, partition.spectrum);

  double acc = 0.0;
  if (split > 0) {
    acc = rotary_dot(q.first(split), k.first(split), m, n, partition.high_thetas);
  }
  for (std::size_t i = split; i < d; ++i) acc += q[i] * k[i];
  return acc;
}

double ablation_dot(std::span<const double> q, std::span<const double> k, double m, double n,
                    const RotarySpectrum& spectrum, int train_length, Ablation variant) {
  require_pair_lengths(q, k, static_cast<std::size_t>(spectrum.head_dim));
  const auto freqs = ablation_frequencies(spectrum, train_length, variant);
  return rotary_dot(q, k, m, n, freqs);
}

std::vector<double> alibi_slopes(int num_heads) {
  if (num_heads < 1) throw InvalidArgument("num_heads must be >= 1");
  std::vector<double> slopes(num_heads);
  for (int h = 1; h <= num_heads; ++h) {
    slopes[h - 1] = std::exp2(-8.0 * h / num_heads);
  }
  return slopes;
}

AlibiBias alibi_bias(int num_heads, int query_len, int key_len) {
  if (num_heads < 1 || query_len < 1 || key_len < 1) {
    throw InvalidArgument("alibi_bias arguments must be >= 1");
  }
  const auto slopes = alibi_slopes(num_heads);
  AlibiBias b{num_heads, query_len, key_len, {}};
  b.values.resize(static_cast<std::size_t>(num_heads) * query_len * key_len);
  std::size_t idx = 0;
  for (int h = 0; h < num_heads; ++h) {
    for (int i = 0; i < query_len; ++i) {
      for (int j = 0; j < key_len; ++j, ++idx) {
        b.values[idx] = j <= i ? -slopes[h] * (i - j) : -std::numeric_limits<double>::infinity();
      }
    }
  }
  return b;
}

std::string partition_to_json(const HopePartition& p) {
  std::ostringstream os;
  os << "{\"base\":" << format_real(p.spectrum.base) << ",\"head_dim\":" << p.spectrum.head_dim
     << ",\"thetas\":[";
  for (std::size_t i = 0; i < p.spectrum.thetas.size(); ++i) {
    if (i) os << ',';
    os << format_real(p.spectrum.thetas[i]);
  }
  os << "],\"train_length\":" << p.train_length << ",\"cutoff_index\":" << p.cutoff_index << '}';
  return os.str();
}

HopePartition partition_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("partition JSON: ") + e.what());
  }
  for (const char* key : {"base", "head_dim", "thetas", "train_length", "cutoff_index"}) {
    if (!j.contains(key)) throw FormatError(std::string("partition JSON missing '") + key + "'");
  }
  RotarySpectrum spectrum = build_spectrum(j["base"].get<double>(), j["head_dim"].get<int>());
  const auto thetas = j["thetas"].get<std::vector<double>>();
  if (thetas.size() != spectrum.thetas.size()) {
    throw FormatError("partition JSON: thetas length does not match head_dim");
  }
  spectrum.thetas = thetas;
  HopePartition p = partition_for_hope(spectrum, j["train_length"].get<int>());
  if (p.cutoff_index != j["cutoff_index"].get<int>()) {
    throw FormatError("partition JSON: cutoff_index inconsistent with thetas and train_length");
  }
  return p;
}

}  // namespace hope
