#pragma once

#include <cstdint>

namespace tweetlm::kernels {

// The hot loops live here in two variants: kernels::serial is the plain
// reference implementation, kernels::par adds OpenMP worksharing. Both
// parallelize only across independent output elements, so they produce
// bitwise-identical results (asserted in tests). The dispatch functions
// below pick a variant from a process-wide flag; tools/bench_kernels
// compares the two.

bool parallel_enabled();
void set_parallel(bool enabled);

namespace serial {

// c(m,n) = op(a) * op(b), op transposes when the flag is set.
// Storage: a is (m,k) or (k,m) when ta; b is (k,n) or (n,k) when tb.
template <typename T>
void matmul(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool ta, bool tb);

// Batched matmul over g independent groups.
template <typename T>
void bmm(const T* a, const T* b, T* c, int64_t g, int64_t m, int64_t k, int64_t n, bool ta,
         bool tb);

template <typename T>
void add_rowbias(T* x, const T* bias, int64_t rows, int64_t cols);

template <typename T>
void colsum_accum(const T* x, T* out, int64_t rows, int64_t cols);

// Attention softmax: scores (b*h, tq, tk) -> probs. key_mask is (b, tk) with
// nonzero = real token; masked keys get probability exactly 0. A fully
// masked row yields all zeros.
template <typename T>
void attn_softmax(const T* scores, const uint8_t* key_mask, T* probs, int64_t b, int64_t h,
                  int64_t tq, int64_t tk);

// dx = y .* (dy - rowsum(dy .* y)), accumulated into dx.
template <typename T>
void softmax_backward_accum(const T* y, const T* dy, T* dx, int64_t rows, int64_t cols);

template <typename T>
void layernorm_fwd(const T* x, const T* gain, const T* bias, T* y, T* mean, T* rstd,
                   int64_t rows, int64_t cols, T eps);

template <typename T>
void layernorm_bwd(const T* x, const T* gain, const T* mean, const T* rstd, const T* dy, T* dx,
                   T* dgain, T* dbias, int64_t rows, int64_t cols);

template <typename T>
void gelu_fwd(const T* x, T* y, int64_t n);

template <typename T>
void gelu_bwd_accum(const T* x, const T* dy, T* dx, int64_t n);

template <typename T>
void gather_rows(const T* table, const int32_t* ids, T* out, int64_t rows, int64_t cols);

// dtable[ids[r]] += dout[r]; parallel variant splits the column range so
// repeated ids never race and the accumulation order stays fixed.
template <typename T>
void scatter_add_rows(const T* dout, const int32_t* ids, T* dtable, int64_t rows, int64_t cols);

template <typename T>
void embed_sum(const T* tok, const T* pos, const T* seg, const int32_t* ids,
               const int32_t* seg_ids, T* out, int64_t bt, int64_t t, int64_t cols);

// One bias-corrected Adam update; t is the post-increment step counter.
template <typename T>
void adam_update(T* param, const T* grad, T* m, T* v, int64_t n, T lr, T beta1, T beta2, T eps,
                 int64_t t, T weight_decay);

}  // namespace serial

namespace par {

template <typename T>
void matmul(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool ta, bool tb);

template <typename T>
void bmm(const T* a, const T* b, T* c, int64_t g, int64_t m, int64_t k, int64_t n, bool ta,
         bool tb);

template <typename T>
void add_rowbias(T* x, const T* bias, int64_t rows, int64_t cols);

template <typename T>
void colsum_accum(const T* x, T* out, int64_t rows, int64_t cols);

template <typename T>
void attn_softmax(const T* scores, const uint8_t* key_mask, T* probs, int64_t b, int64_t h,
                  int64_t tq, int64_t tk);

template <typename T>
void softmax_backward_accum(const T* y, const T* dy, T* dx, int64_t rows, int64_t cols);

template <typename T>
void layernorm_fwd(const T* x, const T* gain, const T* bias, T* y, T* mean, T* rstd,
                   int64_t rows, int64_t cols, T eps);

template <typename T>
void layernorm_bwd(const T* x, const T* gain, const T* mean, const T* rstd, const T* dy, T* dx,
                   T* dgain, T* dbias, int64_t rows, int64_t cols);

template <typename T>
void gelu_fwd(const T* x, T* y, int64_t n);

template <typename T>
void gelu_bwd_accum(const T* x, const T* dy, T* dx, int64_t n);

template <typename T>
void gather_rows(const T* table, const int32_t* ids, T* out, int64_t rows, int64_t cols);

template <typename T>
void scatter_add_rows(const T* dout, const int32_t* ids, T* dtable, int64_t rows, int64_t cols);

template <typename T>
void embed_sum(const T* tok, const T* pos, const T* seg, const int32_t* ids,
               const int32_t* seg_ids, T* out, int64_t bt, int64_t t, int64_t cols);

template <typename T>
void adam_update(T* param, const T* grad, T* m, T* v, int64_t n, T lr, T beta1, T beta2, T eps,
                 int64_t t, T weight_decay);

}  // namespace par

#define TWEETLM_DISPATCH(fn, ...) \
  (parallel_enabled() ? par::fn(__VA_ARGS__) : serial::fn(__VA_ARGS__))

template <typename T>
inline void matmul(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool ta,
                   bool tb) {
  TWEETLM_DISPATCH(matmul, a, b, c, m, k, n, ta, tb);
}

template <typename T>
inline void bmm(const T* a, const T* b, T* c, int64_t g, int64_t m, int64_t k, int64_t n,
                bool ta, bool tb) {
  TWEETLM_DISPATCH(bmm, a, b, c, g, m, k, n, ta, tb);
}

template <typename T>
inline void add_rowbias(T* x, const T* bias, int64_t rows, int64_t cols) {
  TWEETLM_DISPATCH(add_rowbias, x, bias, rows, cols);
}

template <typename T>
inline void colsum_accum(const T* x, T* out, int64_t rows, int64_t cols) {
  TWEETLM_DISPATCH(colsum_accum, x, out, rows, cols);
}

template <typename T>
inline void attn_softmax(const T* scores, const uint8_t* key_mask, T* probs, int64_t b,
                         int64_t h, int64_t tq, int64_t tk) {
  TWEETLM_DISPATCH(attn_softmax, scores, key_mask, probs, b, h, tq, tk);
}

template <typename T>
inline void softmax_backward_accum(const T* y, const T* dy, T* dx, int64_t rows, int64_t cols) {
  TWEETLM_DISPATCH(softmax_backward_accum, y, dy, dx, rows, cols);
}

template <typename T>
inline void layernorm_fwd(const T* x, const T* gain, const T* bias, T* y, T* mean, T* rstd,
                          int64_t rows, int64_t cols, T eps) {
  TWEETLM_DISPATCH(layernorm_fwd, x, gain, bias, y, mean, rstd, rows, cols, eps);
}

template <typename T>
inline void layernorm_bwd(const T* x, const T* gain, const T* mean, const T* rstd, const T* dy,
                          T* dx, T* dgain, T* dbias, int64_t rows, int64_t cols) {
  TWEETLM_DISPATCH(layernorm_bwd, x, gain, mean, rstd, dy, dx, dgain, dbias, rows, cols);
}

template <typename T>
inline void gelu_fwd(const T* x, T* y, int64_t n) {
  TWEETLM_DISPATCH(gelu_fwd, x, y, n);
}

template <typename T>
inline void gelu_bwd_accum(const T* x, const T* dy, T* dx, int64_t n) {
  TWEETLM_DISPATCH(gelu_bwd_accum, x, dy, dx, n);
}

template <typename T>
inline void gather_rows(const T* table, const int32_t* ids, T* out, int64_t rows, int64_t cols) {
  TWEETLM_DISPATCH(gather_rows, table, ids, out, rows, cols);
}

template <typename T>
inline void scatter_add_rows(const T* dout, const int32_t* ids, T* dtable, int64_t rows,
                             int64_t cols) {
  TWEETLM_DISPATCH(scatter_add_rows, dout, ids, dtable, rows, cols);
}

template <typename T>
inline void embed_sum(const T* tok, const T* pos, const T* seg, const int32_t* ids,
                      const int32_t* seg_ids, T* out, int64_t bt, int64_t t, int64_t cols) {
  TWEETLM_DISPATCH(embed_sum, tok, pos, seg, ids, seg_ids, out, bt, t, cols);
}

template <typename T>
inline void adam_update(T* param, const T* grad, T* m, T* v, int64_t n, T lr, T beta1, T beta2,
                        T eps, int64_t t, T weight_decay) {
  TWEETLM_DISPATCH(adam_update, param, grad, m, v, n, lr, beta1, beta2, eps, t, weight_decay);
}

#undef TWEETLM_DISPATCH

}  // namespace tweetlm::kernels
