#pragma once

// Dense kernels behind the toy transformer.
//
// hope::kernels holds the OpenMP versions used by the model. Each parallel
// loop owns a disjoint slice of the output and walks its reduction in a fixed
// order, so results do not depend on the thread count.
// hope::kernels::reference holds plain serial loops with the same contracts;
// the test suite checks the two against each other and kernels_bench times them.
//
// Layouts (row-major):
//   activations  [rows, dim]            rows = batch * seq
//   weights      [in_dim, out_dim]      out = in . W
//   q, k, v      [batch, seq, heads * head_dim]
//   probs/logits [batch, heads, seq, seq]
//   rotary cos/sin tables [seq, head_dim / 2]

#include <span>

namespace hope::kernels {

struct AttentionDims {
  int batch = 1;
  int seq = 1;
  int heads = 1;
  int head_dim = 2;

  int width() const { return heads * head_dim; }
  int rows() const { return batch * seq; }
};

#define HOPELAB_KERNEL_DECLS                                                                   \
  template <typename T>                                                                        \
  void matmul_forward(std::span<T> out, std::span<const T> in, std::span<const T> w, int rows, \
                      int in_dim, int out_dim);                                                \
  /* Accumulates into d_in (may be empty to skip) and d_w. */                                  \
  template <typename T>                                                                        \
  void matmul_backward(std::span<T> d_in, std::span<T> d_w, std::span<const T> d_out,          \
                       std::span<const T> in, std::span<const T> w, int rows, int in_dim,      \
                       int out_dim);                                                           \
  template <typename T>                                                                        \
  void rmsnorm_forward(std::span<T> out, std::span<T> rstd, std::span<const T> in,             \
                       std::span<const T> gain, int rows, int dim, T eps);                     \
  /* Accumulates into d_in and d_gain. */                                                      \
  template <typename T>                                                                        \
  void rmsnorm_backward(std::span<T> d_in, std::span<T> d_gain, std::span<const T> d_out,      \
                        std::span<const T> in, std::span<const T> gain,                        \
                        std::span<const T> rstd, int rows, int dim);                           \
  template <typename T>                                                                        \
  void gelu_forward(std::span<T> out, std::span<const T> in);                                  \
  /* Accumulates into d_in. */                                                                 \
  template <typename T>                                                                        \
  void gelu_backward(std::span<T> d_in, std::span<const T> d_out, std::span<const T> in);      \
  /* In place; inverse = true rotates by the negated angle (the adjoint). */                   \
  template <typename T>                                                                        \
  void rotary_apply(std::span<T> x, std::span<const T> cos_table,                              \
                    std::span<const T> sin_table, AttentionDims dims, bool inverse);           \
  /* pre_logits may be empty; when given it receives scale*q.k + bias, -inf when masked. */    \
  template <typename T>                                                                        \
  void attention_forward(std::span<T> out, std::span<T> probs, std::span<T> pre_logits,        \
                         std::span<const T> q, std::span<const T> k, std::span<const T> v,     \
                         AttentionDims dims, T scale, std::span<const T> alibi_slopes);        \
  /* Accumulates into dq, dk, dv. */                                                           \
  template <typename T>                                                                        \
  void attention_backward(std::span<T> dq, std::span<T> dk, std::span<T> dv,                   \
                          std::span<const T> d_out, std::span<const T> probs,                  \
                          std::span<const T> q, std::span<const T> k, std::span<const T> v,    \
                          AttentionDims dims, T scale);                                        \
  /* Returns the summed NLL over rows with target >= 0 and writes                              \
     d_logits = grad_scale * (softmax - onehot) (zero rows for ignored targets). */            \
  template <typename T>                                                                        \
  double softmax_cross_entropy(std::span<T> d_logits, std::span<const T> logits,               \
                               std::span<const int> targets, int rows, int vocab,              \
                               T grad_scale);

HOPELAB_KERNEL_DECLS

namespace reference {
HOPELAB_KERNEL_DECLS
}  // namespace reference

#undef HOPELAB_KERNEL_DECLS

/// Number of OpenMP threads the kernels will use (1 without OpenMP).
int max_threads();
/// Pins the kernels to `n` threads; n = 1 is the documented deterministic mode.
void set_threads(int n);

}  // namespace hope::kernels
