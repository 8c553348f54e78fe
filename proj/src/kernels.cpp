#include "hopelab/kernels.hpp"
#include "kernels_instantiate.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hope::kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

namespace {

template <typename T>
struct Vec;
template <>
struct Vec<float> {
  typedef float type __attribute__((vector_size(64)));
};
template <>
struct Vec<double> {
  typedef double type __attribute__((vector_size(64)));
};

// C[M, N] (+)= A[M, K] . B[K, N], with A read as stored [K, M] when
// TransA. Each task owns a block of RB rows of C and
// keeps an RB x (2 vectors) tile of it in registers while k runs in ascending
// order; ragged edges take the scalar path with the same summation order.
template <bool TransA, typename T>
void gemm(T* __restrict c, const T* __restrict a, const T* __restrict b, int m, int k_dim, int n,
          bool accumulate) {
  using V = typename Vec<T>::type;
  constexpr int L = sizeof(V) / sizeof(T);
  constexpr int RB = 4;
  constexpr int JB = 2 * L;
  const int blocks = (m + RB - 1) / RB;
#pragma omp parallel for schedule(static)
  for (int blk = 0; blk < blocks; ++blk) {
    const int r0 = blk * RB;
    const int rn = std::min(RB, m - r0);
    for (int j0 = 0; j0 < n; j0 += JB) {
      const int jn = std::min(JB, n - j0);
      if (rn == RB && jn == JB) {
        V acc[RB][2];
        for (int rr = 0; rr < RB; ++rr) {
          const T* crow = c + static_cast<std::size_t>(r0 + rr) * n + j0;
          if (accumulate) {
            std::memcpy(&acc[rr][0], crow, sizeof(V));
            std::memcpy(&acc[rr][1], crow + L, sizeof(V));
          } else {
            acc[rr][0] = V{};
            acc[rr][1] = V{};
          }
        }
        for (int kk = 0; kk < k_dim; ++kk) {
          const T* brow = b + static_cast<std::size_t>(kk) * n + j0;
          V b0, b1;
          std::memcpy(&b0, brow, sizeof(V));
          std::memcpy(&b1, brow + L, sizeof(V));
          for (int rr = 0; rr < RB; ++rr) {
            const V av = V{} + (TransA ? a[static_cast<std::size_t>(kk) * m + r0 + rr]
                                       : a[static_cast<std::size_t>(r0 + rr) * k_dim + kk]);
            acc[rr][0] += av * b0;
            acc[rr][1] += av * b1;
          }
        }
        for (int rr = 0; rr < RB; ++rr) {
          T* crow = c + static_cast<std::size_t>(r0 + rr) * n + j0;
          std::memcpy(crow, &acc[rr][0], sizeof(V));
          std::memcpy(crow + L, &acc[rr][1], sizeof(V));
        }
      } else {
        for (int rr = 0; rr < rn; ++rr) {
          T* crow = c + static_cast<std::size_t>(r0 + rr) * n + j0;
          for (int jj = 0; jj < jn; ++jj) {
            T acc = accumulate ? crow[jj] : T(0);
            for (int kk = 0; kk < k_dim; ++kk) {
              const T av = TransA ? a[static_cast<std::size_t>(kk) * m + r0 + rr]
                                  : a[static_cast<std::size_t>(r0 + rr) * k_dim + kk];
              acc += av * b[static_cast<std::size_t>(kk) * n + j0 + jj];
            }
            crow[jj] = acc;
          }
        }
      }
    }
  }
}

template <typename T>
std::vector<T> transpose(const T* src, int rows, int cols) {
  std::vector<T> t(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      t[static_cast<std::size_t>(c) * rows + r] = src[static_cast<std::size_t>(r) * cols + c];
    }
  }
  return t;
}

}  // namespace

template <typename T>
void matmul_forward(std::span<T> out, std::span<const T> in, std::span<const T> w, int rows,
                    int in_dim, int out_dim) {
  gemm<false>(out.data(), in.data(), w.data(), rows, in_dim, out_dim, false);
}

template <typename T>
void matmul_backward(std::span<T> d_in, std::span<T> d_w, std::span<const T> d_out,
                     std::span<const T> in, std::span<const T> w, int rows, int in_dim,
                     int out_dim) {
  if (!d_in.empty()) {
    const auto wt = transpose(w.data(), in_dim, out_dim);
    gemm<false>(d_in.data(), d_out.data(), wt.data(), rows, out_dim, in_dim, true);
  }
  gemm<true>(d_w.data(), in.data(), d_out.data(), in_dim, rows, out_dim, true);
}

template <typename T>
void rmsnorm_forward(std::span<T> out, std::span<T> rstd, std::span<const T> in,
                     std::span<const T> gain, int rows, int dim, T eps) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const T* x = in.data() + static_cast<std::size_t>(r) * dim;
    T* o = out.data() + static_cast<std::size_t>(r) * dim;
    T ss = 0;
    for (int i = 0; i < dim; ++i) ss += x[i] * x[i];
    const T s = T(1) / std::sqrt(ss / dim + eps);
    rstd[r] = s;
    for (int i = 0; i < dim; ++i) o[i] = x[i] * s * gain[i];
  }
}

template <typename T>
void rmsnorm_backward(std::span<T> d_in, std::span<T> d_gain, std::span<const T> d_out,
                      std::span<const T> in, std::span<const T> gain, std::span<const T> rstd,
                      int rows, int dim) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const T* x = in.data() + static_cast<std::size_t>(r) * dim;
    const T* g = d_out.data() + static_cast<std::size_t>(r) * dim;
    T* di = d_in.data() + static_cast<std::size_t>(r) * dim;
    const T s = rstd[r];
    T dot = 0;
    for (int i = 0; i < dim; ++i) dot += g[i] * gain[i] * x[i];
    const T coef = dot * s * s * s / dim;
    for (int i = 0; i < dim; ++i) di[i] += g[i] * gain[i] * s - x[i] * coef;
  }
  // Column reduction kept serial over rows to fix the summation order.
#pragma omp parallel for schedule(static)
  for (int i = 0; i < dim; ++i) {
    T acc = 0;
    for (int r = 0; r < rows; ++r) {
      const std::size_t off = static_cast<std::size_t>(r) * dim + i;
      acc += d_out[off] * in[off] * rstd[r];
    }
    d_gain[i] += acc;
  }
}

namespace {

template <typename T>
constexpr T kGeluC = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)

// Cheaper than std::tanh; the absolute error stays at rounding level, which is
// all GELU needs.
template <typename T>
inline T tanh_via_exp(T u) {
  return T(1) - T(2) / (std::exp(T(2) * u) + T(1));
}

template <typename T>
inline T gelu_value(T x) {
  const T u = kGeluC<T> * (x + T(0.044715) * x * x * x);
  return T(0.5) * x * (T(1) + tanh_via_exp(u));
}

template <typename T>
inline T gelu_grad(T x) {
  const T x2 = x * x;
  const T u = kGeluC<T> * (x + T(0.044715) * x2 * x);
  const T t = tanh_via_exp(u);
  const T du = kGeluC<T> * (T(1) + T(3 * 0.044715) * x2);
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * du;
}

}  // namespace

template <typename T>
void gelu_forward(std::span<T> out, std::span<const T> in) {
  const auto n = static_cast<std::ptrdiff_t>(in.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = gelu_value(in[i]);
}

template <typename T>
void gelu_backward(std::span<T> d_in, std::span<const T> d_out, std::span<const T> in) {
  const auto n = static_cast<std::ptrdiff_t>(in.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) d_in[i] += d_out[i] * gelu_grad(in[i]);
}

template <typename T>
void rotary_apply(std::span<T> x, std::span<const T> cos_table, std::span<const T> sin_table,
                  AttentionDims dims, bool inverse) {
  const int comps = dims.head_dim / 2;
  const int rows = dims.rows();
  const T sign = inverse ? T(-1) : T(1);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const int t = r % dims.seq;
    const T* c = cos_table.data() + static_cast<std::size_t>(t) * comps;
    const T* s = sin_table.data() + static_cast<std::size_t>(t) * comps;
    T* row = x.data() + static_cast<std::size_t>(r) * dims.width();
    for (int h = 0; h < dims.heads; ++h) {
      T* v = row + h * dims.head_dim;
      for (int i = 0; i < comps; ++i) {
        const T x0 = v[2 * i], x1 = v[2 * i + 1];
        const T si = sign * s[i];
        v[2 * i] = x0 * c[i] - x1 * si;
        v[2 * i + 1] = x0 * si + x1 * c[i];
      }
    }
  }
}

template <typename T>
void attention_forward(std::span<T> out, std::span<T> probs, std::span<T> pre_logits,
                       std::span<const T> q, std::span<const T> k, std::span<const T> v,
                       AttentionDims dims, T scale, std::span<const T> alibi_slopes) {
  const int B = dims.batch, S = dims.seq, H = dims.heads, D = dims.head_dim, W = dims.width();
  const bool capture = !pre_logits.empty();
  const bool biased = !alibi_slopes.empty();
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < B; ++b) {
    for (int h = 0; h < H; ++h) {
      const std::size_t plane = (static_cast<std::size_t>(b) * H + h) * S * S;
      const T slope = biased ? alibi_slopes[h] : T(0);
      for (int t = 0; t < S; ++t) {
        const T* qt = q.data() + (static_cast<std::size_t>(b) * S + t) * W + h * D;
        T* p = probs.data() + plane + static_cast<std::size_t>(t) * S;
        T maxv = -std::numeric_limits<T>::infinity();
        for (int s = 0; s <= t; ++s) {
          const T* ks = k.data() + (static_cast<std::size_t>(b) * S + s) * W + h * D;
          T dot = 0;
#pragma omp simd reduction(+ : dot)
          for (int i = 0; i < D; ++i) dot += qt[i] * ks[i];
          T logit = dot * scale;
          if (biased) logit -= slope * static_cast<T>(t - s);
          p[s] = logit;
          maxv = std::max(maxv, logit);
        }
        if (capture) {
          T* pl = pre_logits.data() + plane + static_cast<std::size_t>(t) * S;
          std::copy(p, p + t + 1, pl);
          std::fill(pl + t + 1, pl + S, -std::numeric_limits<T>::infinity());
        }
        T sum = 0;
        for (int s = 0; s <= t; ++s) {
          p[s] = std::exp(p[s] - maxv);
          sum += p[s];
        }
        const T inv = T(1) / sum;
        for (int s = 0; s <= t; ++s) p[s] *= inv;
        std::fill(p + t + 1, p + S, T(0));

        T* o = out.data() + (static_cast<std::size_t>(b) * S + t) * W + h * D;
        std::fill(o, o + D, T(0));
        for (int s = 0; s <= t; ++s) {
          const T* vs = v.data() + (static_cast<std::size_t>(b) * S + s) * W + h * D;
          const T ps = p[s];
          for (int i = 0; i < D; ++i) o[i] += ps * vs[i];
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
  const int B = dims.batch, S = dims.seq, H = dims.heads, D = dims.head_dim, W = dims.width();
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < B; ++b) {
    for (int h = 0; h < H; ++h) {
      const std::size_t plane = (static_cast<std::size_t>(b) * H + h) * S * S;
      std::vector<T> dl(S);
      for (int t = 0; t < S; ++t) {
        const std::size_t row_t = (static_cast<std::size_t>(b) * S + t) * W + h * D;
        const T* p = probs.data() + plane + static_cast<std::size_t>(t) * S;
        const T* go = d_out.data() + row_t;
        T weighted = 0;
        for (int s = 0; s <= t; ++s) {
          const std::size_t row_s = (static_cast<std::size_t>(b) * S + s) * W + h * D;
          const T* vs = v.data() + row_s;
          T* dvs = dv.data() + row_s;
          T dp = 0;
#pragma omp simd reduction(+ : dp)
          for (int i = 0; i < D; ++i) dp += go[i] * vs[i];
          for (int i = 0; i < D; ++i) dvs[i] += p[s] * go[i];
          dl[s] = dp;
          weighted += p[s] * dp;
        }
        const T* qt = q.data() + row_t;
        T* dqt = dq.data() + row_t;
        for (int s = 0; s <= t; ++s) {
          const std::size_t row_s = (static_cast<std::size_t>(b) * S + s) * W + h * D;
          const T g = p[s] * (dl[s] - weighted) * scale;
          const T* ks = k.data() + row_s;
          T* dks = dk.data() + row_s;
          for (int i = 0; i < D; ++i) {
            dqt[i] += g * ks[i];
            dks[i] += g * qt[i];
          }
        }
      }
    }
  }
}

template <typename T>
double softmax_cross_entropy(std::span<T> d_logits, std::span<const T> logits,
                             std::span<const int> targets, int rows, int vocab, T grad_scale) {
  std::vector<double> row_loss(rows, 0.0);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    const T* z = logits.data() + static_cast<std::size_t>(r) * vocab;
    T* dz = d_logits.data() + static_cast<std::size_t>(r) * vocab;
    const int target = targets[r];
    if (target < 0) {
      std::fill(dz, dz + vocab, T(0));
      continue;
    }
    const T maxv = *std::max_element(z, z + vocab);
    double sum = 0.0;
    for (int j = 0; j < vocab; ++j) sum += std::exp(static_cast<double>(z[j] - maxv));
    const double log_sum = std::log(sum);
    row_loss[r] = log_sum - static_cast<double>(z[target] - maxv);
    const double inv = 1.0 / sum;
    for (int j = 0; j < vocab; ++j) {
      dz[j] = static_cast<T>(std::exp(static_cast<double>(z[j] - maxv)) * inv) * grad_scale;
    }
    dz[target] -= grad_scale;
  }
  double total = 0.0;
  for (double l : row_loss) total += l;
  return total;
}

HOPELAB_INSTANTIATE(float)
HOPELAB_INSTANTIATE(double)

}  // namespace hope::kernels
