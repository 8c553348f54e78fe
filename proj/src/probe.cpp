#include "hopelab/probe.hpp"

#include <algorithm>
#include <cmath>

#include "hopelab/error.hpp"
#include "hopelab/rng.hpp"

namespace hope {

namespace {

constexpr int kChunk = 16;  // probe rows per forward pass; fixed so results never depend on it

ProbeCurve empty_curve(ProbeScope scope, QueryMode mode, int points, int layer, int head) {
  ProbeCurve c;
  c.scope = scope;
  c.mode = mode;
  c.layer = layer;
  c.head = head;
  c.positions.resize(points);
  for (int i = 0; i < points; ++i) c.positions[i] = i;
  c.values.assign(points, 0.0);
  return c;
}

void check_batch(const Transformer<double>& model, const ProbeBatch& batch) {
  if (batch.samples.empty()) throw InvalidArgument("probe batch is empty");
  if (batch.length < 2) throw InvalidArgument("probe length must be >= 2");
  for (const auto& s : batch.samples) {
    if (static_cast<int>(s.size()) != batch.length) {
      throw InvalidArgument("probe rows must all have the batch length");
    }
  }
  if (model.config().encoding.tag == EncodingTag::LearnableAPE &&
      batch.length > model.config().train_length) {
    throw InvalidArgument("learnable absolute positions cannot probe past train_length");
  }
}

// Runs the batch in fixed-size chunks and hands every layer capture to `f`
// together with the index of the chunk's first sample.
template <typename F>
void for_each_capture(const Transformer<double>& model, const ProbeBatch& batch, F&& f) {
  const int n = static_cast<int>(batch.samples.size());
  const int T = batch.length;
  for (int start = 0; start < n; start += kChunk) {
    const int rows = std::min(kChunk, n - start);
    std::vector<int> tokens;
    tokens.reserve(static_cast<std::size_t>(rows) * T);
    for (int r = 0; r < rows; ++r) {
      const auto& s = batch.samples[start + r];
      tokens.insert(tokens.end(), s.begin(), s.end());
    }
    CaptureHook<double> hook = [&](const LayerCapture<double>& cap) { f(cap); };
    model.forward(tokens, rows, T, &hook);
  }
}

void divide(ProbeCurve& c, const std::vector<double>& counts) {
  for (std::size_t i = 0; i < c.values.size(); ++i) {
    c.values[i] = counts[i] > 0 ? c.values[i] / counts[i] : 0.0;
  }
}

}  // namespace

std::string to_string(QueryMode mode) { return mode == QueryMode::Last ? "last" : "relative"; }

std::string to_string(ProbeScope scope) {
  switch (scope) {
    case ProbeScope::AllLayersHeads: return "all";
    case ProbeScope::PerLayer: return "layer";
    case ProbeScope::PerHead: return "head";
  }
  return "all";
}

ProbeBatch gen_probe_batch(int vocab_size, int length, int samples, std::uint64_t seed,
                           int bos_token) {
  if (vocab_size < 2) throw InvalidArgument("probe vocabulary must have >= 2 tokens");
  if (length < 2) throw InvalidArgument("probe length must be >= 2");
  if (samples < 1) throw InvalidArgument("probe needs at least one sample");
  if (bos_token < 0 || bos_token >= vocab_size) throw InvalidArgument("BOS outside vocabulary");
  Rng rng(seed);
  ProbeBatch b;
  b.length = length;
  b.bos_token = bos_token;
  for (int s = 0; s < samples; ++s) {
    std::vector<int> row(length);
    row[0] = bos_token;
    for (int t = 1; t < length; ++t) row[t] = static_cast<int>(rng.below(vocab_size));
    b.samples.push_back(std::move(row));
  }
  return b;
}

AttentionPattern attention_pattern(const Transformer<double>& model, const ProbeBatch& batch,
                                   QueryMode mode) {
  check_batch(model, batch);
  const int layers = model.config().num_layers, heads = model.config().num_heads;
  const int T = batch.length;
  AttentionPattern out;
  out.all = empty_curve(ProbeScope::AllLayersHeads, mode, T, -1, -1);
  for (int l = 0; l < layers; ++l) {
    out.per_layer.push_back(empty_curve(ProbeScope::PerLayer, mode, T, l, -1));
    for (int h = 0; h < heads; ++h) {
      out.per_head.push_back(empty_curve(ProbeScope::PerHead, mode, T, l, h));
    }
  }
  // Per-head sums; the coarser curves are averages of these with equal weights.
  std::vector<double> counts(T, 0.0);
  for_each_capture(model, batch, [&](const LayerCapture<double>& cap) {
    const auto& d = cap.dims;
    for (int b = 0; b < d.batch; ++b) {
      for (int h = 0; h < d.heads; ++h) {
        auto& curve = out.per_head[cap.layer * heads + h].values;
        const double* m = cap.pre_logits.data() + ((static_cast<std::size_t>(b) * d.heads + h) *
                                                   d.seq * d.seq);
        if (mode == QueryMode::Last) {
          const double* row = m + static_cast<std::size_t>(T - 1) * T;
          for (int s = 0; s < T; ++s) curve[s] += row[s];
        } else {
          for (int t = 0; t < T; ++t) {
            for (int s = 0; s <= t; ++s) curve[t - s] += m[static_cast<std::size_t>(t) * T + s];
          }
        }
      }
    }
    if (cap.layer == 0) {
      for (int b = 0; b < d.batch; ++b) {
        if (mode == QueryMode::Last) {
          for (int s = 0; s < T; ++s) counts[s] += 1.0;
        } else {
          for (int r = 0; r < T; ++r) counts[r] += T - r;
        }
      }
    }
  });
  const int n = static_cast<int>(batch.samples.size());
  for (auto& c : out.per_head) {
    divide(c, counts);
    c.sample_count = n;
  }
  for (int l = 0; l < layers; ++l) {
    auto& lc = out.per_layer[l];
    for (int h = 0; h < heads; ++h) {
      const auto& hv = out.per_head[l * heads + h].values;
      for (int i = 0; i < T; ++i) lc.values[i] += hv[i];
    }
    for (auto& v : lc.values) v /= heads;
    lc.sample_count = n;
    for (int i = 0; i < T; ++i) out.all.values[i] += lc.values[i];
  }
  for (auto& v : out.all.values) v /= layers;
  out.all.sample_count = n;
  return out;
}

ComponentPattern component_pattern(const Transformer<double>& model, const ProbeBatch& batch,
                                   std::optional<int> layer) {
  check_batch(model, batch);
  const auto& cfg = model.config();
  if (!is_rotary_family(cfg.encoding.tag)) {
    throw InvalidArgument("component decomposition needs a rotary-family encoding, got " +
                          std::string(to_string(cfg.encoding.tag)));
  }
  if (layer && (*layer < 0 || *layer >= cfg.num_layers)) {
    throw InvalidArgument("probe layer out of range");
  }
  const int T = batch.length, heads = cfg.num_heads, dh = cfg.d_head, comps = dh / 2;
  const auto& freqs = model.frequencies();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const PositionScaler scaler{cfg.position_scale};
  const double m = scale_positions(T - 1, scaler);
  std::vector<double> n_pos(T);
  for (int s = 0; s < T; ++s) n_pos[s] = scale_positions(s, scaler);

  ComponentPattern out;
  out.freqs = freqs;
  out.total = empty_curve(ProbeScope::AllLayersHeads, QueryMode::Last, T, layer.value_or(-1), -1);
  if (layer) out.total.scope = ProbeScope::PerLayer;
  for (int i = 0; i < comps; ++i) out.components.push_back(out.total);

  std::vector<double> cos_d(static_cast<std::size_t>(T) * comps),
      sin_d(static_cast<std::size_t>(T) * comps);
  for (int s = 0; s < T; ++s) {
    for (int i = 0; i < comps; ++i) {
      const double delta = (m - n_pos[s]) * freqs[i];
      cos_d[s * comps + i] = std::cos(delta);
      sin_d[s * comps + i] = std::sin(delta);
    }
  }

  double terms = 0.0;
  for_each_capture(model, batch, [&](const LayerCapture<double>& cap) {
    if (layer && cap.layer != *layer) return;
    const auto& d = cap.dims;
    const int W = d.width();
    for (int b = 0; b < d.batch; ++b) {
      for (int h = 0; h < d.heads; ++h) {
        const double* lg = cap.pre_logits.data() +
                           ((static_cast<std::size_t>(b) * heads + h) * T + (T - 1)) * T;
        const double* q = cap.q.data() + (static_cast<std::size_t>(b) * T + (T - 1)) * W + h * dh;
        for (int s = 0; s < T; ++s) {
          out.total.values[s] += lg[s];
          const double* k = cap.k.data() + (static_cast<std::size_t>(b) * T + s) * W + h * dh;
          for (int i = 0; i < comps; ++i) {
            const double q0 = q[2 * i], q1 = q[2 * i + 1], k0 = k[2 * i], k1 = k[2 * i + 1];
            const double c = (q0 * k0 + q1 * k1) * cos_d[s * comps + i] +
                             (q0 * k1 - q1 * k0) * sin_d[s * comps + i];
            out.components[i].values[s] += scale * c;
          }
        }
        terms += 1.0;
      }
    }
  });
  const int n = static_cast<int>(batch.samples.size());
  for (auto& v : out.total.values) v /= terms;
  out.total.sample_count = n;
  for (auto& c : out.components) {
    for (auto& v : c.values) v /= terms;
    c.sample_count = n;
  }
  return out;
}

ExtrapolationReport extrapolation_report(const Transformer<double>& model, int train_length,
                                         int test_length, int samples, std::uint64_t seed) {
  if (train_length < 2) throw InvalidArgument("train_length must be >= 2");
  if (test_length < train_length) throw InvalidArgument("test_length must be >= train_length");
  const auto& cfg = model.config();
  ExtrapolationReport r;
  r.train_length = train_length;
  r.test_length = test_length;
  const auto train_batch = gen_probe_batch(cfg.vocab_size, train_length, samples, seed);
  const auto test_batch = gen_probe_batch(cfg.vocab_size, test_length, samples, seed);
  r.train_curves = component_pattern(model, train_batch, 0);
  r.test_curves = component_pattern(model, test_batch, 0);
  r.phase = phase_coverage(model.frequencies(), train_length, test_length);
  r.phase_flags = ood_indices(r.phase);

  for (std::size_t i = 0; i < r.train_curves.components.size(); ++i) {
    if (r.train_curves.freqs[i] == 0.0) continue;
    const auto& tv = r.train_curves.components[i].values;
    const auto [lo_it, hi_it] = std::minmax_element(tv.begin(), tv.end());
    const double lo = *lo_it, hi = *hi_it, tol = 0.01 * (hi - lo);
    const auto& xv = r.test_curves.components[i].values;
    // Key positions whose distance to the last query reaches train_length.
    const int last_extrapolated = test_length - 1 - train_length;
    for (int s = 0; s <= last_extrapolated; ++s) {
      if (xv[s] < lo - tol || xv[s] > hi + tol) {
        r.envelope_flags.push_back(static_cast<int>(i));
        break;
      }
    }
  }
  std::set_union(r.phase_flags.begin(), r.phase_flags.end(), r.envelope_flags.begin(),
                 r.envelope_flags.end(), std::back_inserter(r.flagged));
  return r;
}

}  // namespace hope
