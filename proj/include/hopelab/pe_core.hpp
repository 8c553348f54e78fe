#pragma once

// Positional-encoding kernels: rotary spectrum, rotations, the RoPE / HoPE /
// ablation dot products, ALiBi bias and linear position interpolation.
//
// Everything here is a pure function of its arguments and runs in double
// precision.

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hope {

/// Frequency ladder theta_i = base^(-2i/head_dim), i in [0, head_dim/2).
struct RotarySpectrum {
  double base = 10000.0;
  int head_dim = 0;
  std::vector<double> thetas;

  int num_components() const { return head_dim / 2; }
};

/// Split of a spectrum at the training length: components with
/// theta >= 2*pi/L stay rotary, the rest become position-independent.
struct HopePartition {
  RotarySpectrum spectrum;
  int train_length = 0;
  int cutoff_index = 0;             // number of retained (high-frequency) components
  std::vector<double> high_thetas;  // thetas[0, cutoff_index)
};

enum class FrequencyBand { HighFrequency, Activated, LowFrequency };

std::string_view to_string(FrequencyBand band);

/// High iff theta >= 2pi/L, Activated iff pi/L < theta < 2pi/L, Low otherwise.
FrequencyBand classify_theta(double theta, int train_length);

enum class EncodingTag { NoPE, RoPE, HoPE, AB1, AB2, AB3, ALiBi, LearnableAPE };

std::string_view to_string(EncodingTag tag);
/// Case-insensitive; throws InvalidArgument on an unknown name.
EncodingTag parse_encoding(std::string_view name);

/// Encodings that act on q/k through per-component rotations (NoPE counts:
/// it is the all-zero-frequency member of the family).
bool is_rotary_family(EncodingTag tag);

struct EncodingKind {
  EncodingTag tag = EncodingTag::RoPE;
  double rope_base = 10000.0;

  bool operator==(const EncodingKind&) const = default;
};

/// Linear position interpolation: effective position = raw / scale.
struct PositionScaler {
  double scale = 1.0;
};

double scale_positions(double position, PositionScaler scaler);

enum class Ablation { AB1, AB2, AB3 };

RotarySpectrum build_spectrum(double base, int head_dim);

HopePartition partition_for_hope(const RotarySpectrum& spectrum, int train_length);

/// Per-component angular frequency an encoding actually applies. Zero marks a
/// position-independent component (rotation by 0 is the exact identity).
/// ALiBi and learnable APE return all zeros: they leave q/k untouched.
std::vector<double> rotary_frequencies(EncodingTag tag, const RotarySpectrum& spectrum,
                                       int train_length);

/// Rotates every 2-slice (v[2i], v[2i+1]) by position * freqs[i].
std::vector<double> rotate(std::span<const double> v, double position,
                           std::span<const double> freqs);

std::vector<double> apply_rotary(std::span<const double> v, double position,
                                 const RotarySpectrum& spectrum);

/// Sum over components of the 2-slice inner product at relative phase (m-n)*freqs[i].
double rotary_dot(std::span<const double> q, std::span<const double> k, double m, double n,
                  std::span<const double> freqs);

double rope_dot(std::span<const double> q, std::span<const double> k, double m, double n,
                const RotarySpectrum& spectrum);

/// Rotary product over the first 2a coordinates plus a plain dot product over the tail.
double hope_dot(std::span<const double> q, std::span<const double> k, double m, double n,
                const HopePartition& partition);

std::vector<double> ablation_frequencies(const RotarySpectrum& spectrum, int train_length,
                                         Ablation variant);

double ablation_dot(std::span<const double> q, std::span<const double> k, double m, double n,
                    const RotarySpectrum& spectrum, int train_length, Ablation variant);

/// Geometric head slopes 2^(-8h/H), h = 1..H.
std::vector<double> alibi_slopes(int num_heads);

struct AlibiBias {
  int num_heads = 0;
  int query_len = 0;
  int key_len = 0;
  std::vector<double> values;  // [head][query][key]; -inf above the diagonal

  double at(int head, int query, int key) const {
    return values[(static_cast<std::size_t>(head) * query_len + query) * key_len + key];
  }
};

AlibiBias alibi_bias(int num_heads, int query_len, int key_len);

/// {base, head_dim, thetas[], train_length, cutoff_index}, reals at 17 significant digits.
std::string partition_to_json(const HopePartition& partition);
HopePartition partition_from_json(std::string_view text);

}  // namespace hope
