#include "tweetlm/kernels.hpp"

#include <atomic>
#include <cmath>

// Reference implementations. The OpenMP variants in kernels_par.cpp must
// reproduce these bitwise: every output element is accumulated in the same
// order here and there, so the pair can be compared with operator==.

namespace tweetlm::kernels {

namespace {
std::atomic<bool> g_parallel{true};
}

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel(bool enabled) { g_parallel.store(enabled, std::memory_order_relaxed); }

namespace serial {

template <typename T>
void matmul(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool ta, bool tb) {
  if (!ta && !tb) {
    for (int64_t i = 0; i < m; ++i) {
      T* crow = c + i * n;
      for (int64_t j = 0; j < n; ++j) crow[j] = T(0);
      const T* arow = a + i * k;
      for (int64_t p = 0; p < k; ++p) {
        const T av = arow[p];
        const T* brow = b + p * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!ta && tb) {
    for (int64_t i = 0; i < m; ++i) {
      const T* arow = a + i * k;
      T* crow = c + i * n;
      for (int64_t j = 0; j < n; ++j) {
        const T* brow = b + j * k;
        T acc = T(0);
        for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        crow[j] = acc;
      }
    }
  } else if (ta && !tb) {
    // a stored (k, m)
    for (int64_t i = 0; i < m; ++i) {
      T* crow = c + i * n;
      for (int64_t j = 0; j < n; ++j) crow[j] = T(0);
      for (int64_t p = 0; p < k; ++p) {
        const T av = a[p * m + i];
        const T* brow = b + p * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    // a stored (k, m), b stored (n, k)
    for (int64_t i = 0; i < m; ++i) {
      T* crow = c + i * n;
      for (int64_t j = 0; j < n; ++j) {
        const T* brow = b + j * k;
        T acc = T(0);
        for (int64_t p = 0; p < k; ++p) acc += a[p * m + i] * brow[p];
        crow[j] = acc;
      }
    }
  }
}

template <typename T>
void bmm(const T* a, const T* b, T* c, int64_t g, int64_t m, int64_t k, int64_t n, bool ta,
         bool tb) {
  const int64_t asz = m * k, bsz = k * n, csz = m * n;
  for (int64_t gi = 0; gi < g; ++gi) {
    matmul(a + gi * asz, b + gi * bsz, c + gi * csz, m, k, n, ta, tb);
  }
}

template <typename T>
void add_rowbias(T* x, const T* bias, int64_t rows, int64_t cols) {
  for (int64_t r = 0; r < rows; ++r) {
    T* row = x + r * cols;
    for (int64_t j = 0; j < cols; ++j) row[j] += bias[j];
  }
}

template <typename T>
void colsum_accum(const T* x, T* out, int64_t rows, int64_t cols) {
  for (int64_t r = 0; r < rows; ++r) {
    const T* row = x + r * cols;
    for (int64_t j = 0; j < cols; ++j) out[j] += row[j];
  }
}

template <typename T>
void attn_softmax(const T* scores, const uint8_t* key_mask, T* probs, int64_t b, int64_t h,
                  int64_t tq, int64_t tk) {
  const int64_t rows = b * h * tq;
  for (int64_t r = 0; r < rows; ++r) {
    const int64_t batch = r / (h * tq);
    const uint8_t* mask = key_mask + batch * tk;
    const T* in = scores + r * tk;
    T* out = probs + r * tk;

    T mx = T(0);
    bool any = false;
    for (int64_t j = 0; j < tk; ++j) {
      if (mask[j] && (!any || in[j] > mx)) {
        mx = in[j];
        any = true;
      }
    }
    if (!any) {
      for (int64_t j = 0; j < tk; ++j) out[j] = T(0);
      continue;
    }
    T sum = T(0);
    for (int64_t j = 0; j < tk; ++j) {
      if (mask[j]) {
        out[j] = std::exp(in[j] - mx);
        sum += out[j];
      } else {
        out[j] = T(0);
      }
    }
    const T inv = T(1) / sum;
    for (int64_t j = 0; j < tk; ++j) out[j] *= inv;
  }
}

template <typename T>
void softmax_backward_accum(const T* y, const T* dy, T* dx, int64_t rows, int64_t cols) {
  for (int64_t r = 0; r < rows; ++r) {
    const T* yr = y + r * cols;
    const T* dyr = dy + r * cols;
    T* dxr = dx + r * cols;
    T dot = T(0);
    for (int64_t j = 0; j < cols; ++j) dot += dyr[j] * yr[j];
    for (int64_t j = 0; j < cols; ++j) dxr[j] += yr[j] * (dyr[j] - dot);
  }
}

template <typename T>
void layernorm_fwd(const T* x, const T* gain, const T* bias, T* y, T* mean, T* rstd,
                   int64_t rows, int64_t cols, T eps) {
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = x + r * cols;
    T* yr = y + r * cols;
    T mu = T(0);
    for (int64_t j = 0; j < cols; ++j) mu += xr[j];
    mu /= T(cols);
    T var = T(0);
    for (int64_t j = 0; j < cols; ++j) {
      const T d = xr[j] - mu;
      var += d * d;
    }
    var /= T(cols);
    const T rs = T(1) / std::sqrt(var + eps);
    mean[r] = mu;
    rstd[r] = rs;
    for (int64_t j = 0; j < cols; ++j) yr[j] = (xr[j] - mu) * rs * gain[j] + bias[j];
  }
}

template <typename T>
void layernorm_bwd(const T* x, const T* gain, const T* mean, const T* rstd, const T* dy, T* dx,
                   T* dgain, T* dbias, int64_t rows, int64_t cols) {
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = x + r * cols;
    const T* dyr = dy + r * cols;
    T* dxr = dx + r * cols;
    const T mu = mean[r], rs = rstd[r];
    T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
    for (int64_t j = 0; j < cols; ++j) {
      const T xhat = (xr[j] - mu) * rs;
      const T dxhat = dyr[j] * gain[j];
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * xhat;
    }
    const T inv_cols = T(1) / T(cols);
    for (int64_t j = 0; j < cols; ++j) {
      const T xhat = (xr[j] - mu) * rs;
      const T dxhat = dyr[j] * gain[j];
      dxr[j] += rs * (dxhat - inv_cols * sum_dxhat - xhat * inv_cols * sum_dxhat_xhat);
    }
  }
  for (int64_t j = 0; j < cols; ++j) {
    T dg = T(0), db = T(0);
    for (int64_t r = 0; r < rows; ++r) {
      const T xhat = (x[r * cols + j] - mean[r]) * rstd[r];
      dg += dy[r * cols + j] * xhat;
      db += dy[r * cols + j];
    }
    dgain[j] += dg;
    dbias[j] += db;
  }
}

template <typename T>
void gelu_fwd(const T* x, T* y, int64_t n) {
  constexpr T kInvSqrt2 = T(0.7071067811865475244);
  for (int64_t i = 0; i < n; ++i) {
    y[i] = T(0.5) * x[i] * (T(1) + std::erf(x[i] * kInvSqrt2));
  }
}

template <typename T>
void gelu_bwd_accum(const T* x, const T* dy, T* dx, int64_t n) {
  constexpr T kInvSqrt2 = T(0.7071067811865475244);
  constexpr T kInvSqrt2Pi = T(0.3989422804014326779);
  for (int64_t i = 0; i < n; ++i) {
    const T cdf = T(0.5) * (T(1) + std::erf(x[i] * kInvSqrt2));
    const T pdf = kInvSqrt2Pi * std::exp(T(-0.5) * x[i] * x[i]);
    dx[i] += dy[i] * (cdf + x[i] * pdf);
  }
}

template <typename T>
void gather_rows(const T* table, const int32_t* ids, T* out, int64_t rows, int64_t cols) {
  for (int64_t r = 0; r < rows; ++r) {
    const T* src = table + static_cast<int64_t>(ids[r]) * cols;
    T* dst = out + r * cols;
    for (int64_t j = 0; j < cols; ++j) dst[j] = src[j];
  }
}

template <typename T>
void scatter_add_rows(const T* dout, const int32_t* ids, T* dtable, int64_t rows, int64_t cols) {
  for (int64_t r = 0; r < rows; ++r) {
    T* dst = dtable + static_cast<int64_t>(ids[r]) * cols;
    const T* src = dout + r * cols;
    for (int64_t j = 0; j < cols; ++j) dst[j] += src[j];
  }
}

template <typename T>
void embed_sum(const T* tok, const T* pos, const T* seg, const int32_t* ids,
               const int32_t* seg_ids, T* out, int64_t bt, int64_t t, int64_t cols) {
  for (int64_t r = 0; r < bt; ++r) {
    const T* trow = tok + static_cast<int64_t>(ids[r]) * cols;
    const T* prow = pos + (r % t) * cols;
    const T* srow = seg + static_cast<int64_t>(seg_ids[r]) * cols;
    T* dst = out + r * cols;
    for (int64_t j = 0; j < cols; ++j) dst[j] = trow[j] + prow[j] + srow[j];
  }
}

template <typename T>
void adam_update(T* param, const T* grad, T* m, T* v, int64_t n, T lr, T beta1, T beta2, T eps,
                 int64_t t, T weight_decay) {
  const T bc1 = T(1) - std::pow(beta1, T(t));
  const T bc2 = T(1) - std::pow(beta2, T(t));
  for (int64_t i = 0; i < n; ++i) {
    const T g = grad[i] + weight_decay * param[i];
    m[i] = beta1 * m[i] + (T(1) - beta1) * g;
    v[i] = beta2 * v[i] + (T(1) - beta2) * g * g;
    const T mhat = m[i] / bc1;
    const T vhat = v[i] / bc2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

#define TWEETLM_INSTANTIATE(T)                                                                 \
  template void matmul<T>(const T*, const T*, T*, int64_t, int64_t, int64_t, bool, bool);      \
  template void bmm<T>(const T*, const T*, T*, int64_t, int64_t, int64_t, int64_t, bool,       \
                       bool);                                                                  \
  template void add_rowbias<T>(T*, const T*, int64_t, int64_t);                                \
  template void colsum_accum<T>(const T*, T*, int64_t, int64_t);                               \
  template void attn_softmax<T>(const T*, const uint8_t*, T*, int64_t, int64_t, int64_t,       \
                                int64_t);                                                      \
  template void softmax_backward_accum<T>(const T*, const T*, T*, int64_t, int64_t);           \
  template void layernorm_fwd<T>(const T*, const T*, const T*, T*, T*, T*, int64_t, int64_t,   \
                                 T);                                                           \
  template void layernorm_bwd<T>(const T*, const T*, const T*, const T*, const T*, T*, T*, T*, \
                                 int64_t, int64_t);                                            \
  template void gelu_fwd<T>(const T*, T*, int64_t);                                            \
  template void gelu_bwd_accum<T>(const T*, const T*, T*, int64_t);                            \
  template void gather_rows<T>(const T*, const int32_t*, T*, int64_t, int64_t);                \
  template void scatter_add_rows<T>(const T*, const int32_t*, T*, int64_t, int64_t);           \
  template void embed_sum<T>(const T*, const T*, const T*, const int32_t*, const int32_t*,     \
                             T*, int64_t, int64_t, int64_t);                                   \
  template void adam_update<T>(T*, const T*, T*, T*, int64_t, T, T, T, T, int64_t, T);

TWEETLM_INSTANTIATE(float)
TWEETLM_INSTANTIATE(double)
#undef TWEETLM_INSTANTIATE

}  // namespace serial
}  // namespace tweetlm::kernels
