// Serial textbook versions of every kernel. Not used by the model; kept as the
// independent baseline for tests and benchmarks.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "hopelab/kernels.hpp"
#include "kernels_instantiate.hpp"

namespace hope::kernels::reference {

template <typename T>
void matmul_forward(std::span<T> out, std::span<const T> in, std::span<const T> w, int rows,
                    int in_dim, int out_dim) {
  for (int r = 0; r < rows; ++r) {
    for (int j = 0; j < out_dim; ++j) {
      T acc = 0;
      for (int i = 0; i < in_dim; ++i) acc += in[r * in_dim + i] * w[i * out_dim + j];
      out[r * out_dim + j] = acc;
    }
  }
}

template <typename T>
void matmul_backward(std::span<T> d_in, std::span<T> d_w, std::span<const T> d_out,
                     std::span<const T> in, std::span<const T> w, int rows, int in_dim,
                     int out_dim) {
  for (int r = 0; r < rows; ++r) {
    for (int i = 0; i < in_dim; ++i) {
      for (int j = 0; j < out_dim; ++j) {
        const T g = d_out[r * out_dim + j];
        if (!d_in.empty()) d_in[r * in_dim + i] += g * w[i * out_dim + j];
        d_w[i * out_dim + j] += g * in[r * in_dim + i];
      }
    }
  }
}

template <typename T>
void rmsnorm_forward(std::span<T> out, std::span<T> rstd, std::span<const T> in,
                     std::span<const T> gain, int rows, int dim, T eps) {
  for (int r = 0; r < rows; ++r) {
    T ss = 0;
    for (int i = 0; i < dim; ++i) ss += in[r * dim + i] * in[r * dim + i];
    rstd[r] = T(1) / std::sqrt(ss / dim + eps);
    for (int i = 0; i < dim; ++i) out[r * dim + i] = in[r * dim + i] * rstd[r] * gain[i];
  }
}

template <typename T>
void rmsnorm_backward(std::span<T> d_in, std::span<T> d_gain, std::span<const T> d_out,
                      std::span<const T> in, std::span<const T> gain, std::span<const T> rstd,
                      int rows, int dim) {
  // Direct Jacobian: y_j = g_j x_j s, ds/dx_i = -x_i s^3 / dim.
  for (int r = 0; r < rows; ++r) {
    const T s = rstd[r];
    for (int i = 0; i < dim; ++i) {
      T acc = 0;
      for (int j = 0; j < dim; ++j) {
        const T dyj_dxi =
            gain[j] * ((i == j ? s : T(0)) - in[r * dim + j] * in[r * dim + i] * s * s * s / dim);
        acc += d_out[r * dim + j] * dyj_dxi;
      }
      d_in[r * dim + i] += acc;
    }
    for (int j = 0; j < dim; ++j) d_gain[j] += d_out[r * dim + j] * in[r * dim + j] * s;
  }
}

template <typename T>
void gelu_forward(std::span<T> out, std::span<const T> in) {
  const T c = static_cast<T>(std::sqrt(2.0 / 3.141592653589793));
  for (std::size_t i = 0; i < in.size(); ++i) {
    const T x = in[i];
    out[i] = T(0.5) * x * (T(1) + std::tanh(c * (x + T(0.044715) * x * x * x)));
  }
}

template <typename T>
void gelu_backward(std::span<T> d_in, std::span<const T> d_out, std::span<const T> in) {
  const T c = static_cast<T>(std::sqrt(2.0 / 3.141592653589793));
  for (std::size_t i = 0; i < in.size(); ++i) {
    const T x = in[i];
    const T t = std::tanh(c * (x + T(0.044715) * x * x * x));
    const T sech2 = T(1) - t * t;
    d_in[i] += d_out[i] * (T(0.5) * (T(1) + t) +
                           T(0.5) * x * sech2 * c * (T(1) + T(3) * T(0.044715) * x * x));
  }
}

template <typename T>
void rotary_apply(std::span<T> x, std::span<const T> cos_table, std::span<const T> sin_table,
                  AttentionDims dims, bool inverse) {
  const int comps = dims.head_dim / 2;
  for (int b = 0; b < dims.batch; ++b) {
    for (int t = 0; t < dims.seq; ++t) {
      for (int h = 0; h < dims.heads; ++h) {
        for (int i = 0; i < comps; ++i) {
          const std::size_t base =
              (static_cast<std::size_t>(b) * dims.seq + t) * dims.width() + h * dims.head_dim;
          const T c = cos_table[t * comps + i];
          const T s = inverse ? -sin_table[t * comps + i] : sin_table[t * comps + i];
          const T x0 = x[base + 2 * i], x1 = x[base + 2 * i + 1];
          x[base + 2 * i] = c * x0 - s * x1;
          x[base + 2 * i + 1] = s * x0 + c * x1;
        }
      }
    }
  }
}

template <typename T>
void attention_forward(std::span<T> out, std::span<T> probs, std::span<T> pre_logits,
                       std::span<const T> q, std::span<const T> k, std::span<const T> v,
                       AttentionDims dims, T scale, std::span<const T> alibi_slopes) {
  const int S = dims.seq, D = dims.head_dim, W = dims.width();
  const T neg_inf = -std::numeric_limits<T>::infinity();
  auto at = [&](int b, int t, int h) { return (static_cast<std::size_t>(b) * S + t) * W + h * D; };
  for (int b = 0; b < dims.batch; ++b) {
    for (int h = 0; h < dims.heads; ++h) {
      for (int t = 0; t < S; ++t) {
        std::vector<T> logit(S, neg_inf);
        for (int s = 0; s <= t; ++s) {
          T dot = 0;
          for (int i = 0; i < D; ++i) dot += q[at(b, t, h) + i] * k[at(b, s, h) + i];
          logit[s] = dot * scale;
          if (!alibi_slopes.empty()) logit[s] += -alibi_slopes[h] * static_cast<T>(t - s);
        }
        const std::size_t row = ((static_cast<std::size_t>(b) * dims.heads + h) * S + t) * S;
        if (!pre_logits.empty()) std::copy(logit.begin(), logit.end(), pre_logits.begin() + row);
        const T maxv = *std::max_element(logit.begin(), logit.end());
        T sum = 0;
        for (int s = 0; s < S; ++s) sum += (s <= t) ? std::exp(logit[s] - maxv) : T(0);
        for (int s = 0; s < S; ++s) probs[row + s] = (s <= t) ? std::exp(logit[s] - maxv) / sum : T(0);
        for (int i = 0; i < D; ++i) {
          T acc = 0;
          for (int s = 0; s <= t; ++s) acc += probs[row + s] * v[at(b, s, h) + i];
          out[at(b, t, h) + i] = acc;
        }
      }
    }
  }
}

template <typename T>
void attention_backward(std::span<T> dq, std::span<T> dk, std::span<T> dv,
                        std::span<const T> d_out, std::span<const T> probs,
                        std::span<const T> q, std::span<const T> k, std::span<const T> v,
                        AttentionDims dims, T scale) {
  const int S = dims.seq, D = dims.head_dim, W = dims.width();
  auto at = [&](int b, int t, int h) { return (static_cast<std::size_t>(b) * S + t) * W + h * D; };
  for (int b = 0; b < dims.batch; ++b) {
    for (int h = 0; h < dims.heads; ++h) {
      for (int t = 0; t < S; ++t) {
        const std::size_t row = ((static_cast<std::size_t>(b) * dims.heads + h) * S + t) * S;
        // dP = dO . V^T, then the softmax Jacobian row by row.
        std::vector<T> dp(S, T(0));
        for (int s = 0; s <= t; ++s) {
          for (int i = 0; i < D; ++i) dp[s] += d_out[at(b, t, h) + i] * v[at(b, s, h) + i];
        }
        for (int s = 0; s <= t; ++s) {
          T dlogit = 0;
          for (int u = 0; u <= t; ++u) {
            const T jac = probs[row + s] * ((s == u ? T(1) : T(0)) - probs[row + u]);
            dlogit += jac * dp[u];
          }
          for (int i = 0; i < D; ++i) {
            dq[at(b, t, h) + i] += dlogit * scale * k[at(b, s, h) + i];
            dk[at(b, s, h) + i] += dlogit * scale * q[at(b, t, h) + i];
            dv[at(b, s, h) + i] += probs[row + s] * d_out[at(b, t, h) + i];
          }
        }
      }
    }
  }
}

template <typename T>
double softmax_cross_entropy(std::span<T> d_logits, std::span<const T> logits,
                             std::span<const int> targets, int rows, int vocab, T grad_scale) {
  double total = 0.0;
  for (int r = 0; r < rows; ++r) {
    const int target = targets[r];
    double sum = 0.0;
    for (int j = 0; j < vocab; ++j) sum += std::exp(static_cast<double>(logits[r * vocab + j]));
    for (int j = 0; j < vocab; ++j) {
      if (target < 0) {
        d_logits[r * vocab + j] = T(0);
        continue;
      }
      const double p = std::exp(static_cast<double>(logits[r * vocab + j])) / sum;
      d_logits[r * vocab + j] = static_cast<T>((p - (j == target ? 1.0 : 0.0)) * grad_scale);
    }
    if (target >= 0) total += std::log(sum) - static_cast<double>(logits[r * vocab + target]);
  }
  return total;
}

HOPELAB_INSTANTIATE(float)
HOPELAB_INSTANTIATE(double)

}  // namespace hope::kernels::reference
