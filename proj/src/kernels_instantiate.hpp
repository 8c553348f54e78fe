#pragma once

// Explicit instantiation list shared by the parallel and reference kernels.

#include <span>

#define HOPELAB_INSTANTIATE(T)                                                                   \
  template void matmul_forward<T>(std::span<T>, std::span<const T>, std::span<const T>, int,    \
                                  int, int);                                                    \
  template void matmul_backward<T>(std::span<T>, std::span<T>, std::span<const T>,              \
                                   std::span<const T>, std::span<const T>, int, int, int);      \
  template void rmsnorm_forward<T>(std::span<T>, std::span<T>, std::span<const T>,              \
                                   std::span<const T>, int, int, T);                            \
  template void rmsnorm_backward<T>(std::span<T>, std::span<T>, std::span<const T>,             \
                                    std::span<const T>, std::span<const T>, std::span<const T>, \
                                    int, int);                                                  \
  template void gelu_forward<T>(std::span<T>, std::span<const T>);                              \
  template void gelu_backward<T>(std::span<T>, std::span<const T>, std::span<const T>);         \
  template void rotary_apply<T>(std::span<T>, std::span<const T>, std::span<const T>,           \
                                AttentionDims, bool);                                           \
  template void attention_forward<T>(std::span<T>, std::span<T>, std::span<T>,                  \
                                     std::span<const T>, std::span<const T>,                    \
                                     std::span<const T>, AttentionDims, T, std::span<const T>); \
  template void attention_backward<T>(std::span<T>, std::span<T>, std::span<T>,                 \
                                      std::span<const T>, std::span<const T>,                   \
                                      std::span<const T>, std::span<const T>,                   \
                                      std::span<const T>, AttentionDims, T);                    \
  template double softmax_cross_entropy<T>(std::span<T>, std::span<const T>,                    \
                                           std::span<const int>, int, int, T);
