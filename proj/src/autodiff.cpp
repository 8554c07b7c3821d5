#include "tweetlm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>

#include "tweetlm/kernels.hpp"
#include "tweetlm/rng.hpp"

namespace tweetlm::ad {

namespace {

template <typename T>
void accum(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.data();
  const T* s = src.data();
  const int64_t n = dst.numel();
  for (int64_t i = 0; i < n; ++i) d[i] += s[i];
}

void expect(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b, bool ta, bool tb) {
  Graph<T>& g = *a.g;
  const Tensor<T>& av = g.val(a.id);
  const Tensor<T>& bv = g.val(b.id);
  expect(av.rank() == 2 && bv.rank() == 2, "matmul: rank-2 operands required");
  const int64_t m = ta ? av.dim(1) : av.dim(0);
  const int64_t k = ta ? av.dim(0) : av.dim(1);
  const int64_t kb = tb ? bv.dim(1) : bv.dim(0);
  const int64_t n = tb ? bv.dim(0) : bv.dim(1);
  expect(k == kb, "matmul: inner dimensions disagree " + Tensor<T>::shape_str(av.shape()) +
                      " x " + Tensor<T>::shape_str(bv.shape()));

  Tensor<T> out({m, n});
  kernels::matmul(av.data(), bv.data(), out.data(), m, k, n, ta, tb);

  const bool rg = g.requires_grad(a.id) || g.requires_grad(b.id);
  const int aid = a.id, bid = b.id;
  return g.make_node(std::move(out), rg, [aid, bid, ta, tb, m, k, n](Graph<T>& gr, int self) {
    const Tensor<T>& dc = gr.grad_of(self);
    const Tensor<T>& av2 = gr.val(aid);
    const Tensor<T>& bv2 = gr.val(bid);
    if (gr.requires_grad(aid)) {
      Tensor<T> da(av2.shape());
      if (!ta && !tb) {
        kernels::matmul(dc.data(), bv2.data(), da.data(), m, n, k, false, true);
      } else if (!ta && tb) {
        kernels::matmul(dc.data(), bv2.data(), da.data(), m, n, k, false, false);
      } else if (ta && !tb) {
        kernels::matmul(bv2.data(), dc.data(), da.data(), k, n, m, false, true);
      } else {
        kernels::matmul(bv2.data(), dc.data(), da.data(), k, n, m, true, true);
      }
      accum(gr.grad_of(aid), da);
    }
    if (gr.requires_grad(bid)) {
      Tensor<T> db(bv2.shape());
      if (!ta && !tb) {
        kernels::matmul(av2.data(), dc.data(), db.data(), k, m, n, true, false);
      } else if (!ta && tb) {
        kernels::matmul(dc.data(), av2.data(), db.data(), n, m, k, true, false);
      } else if (ta && !tb) {
        kernels::matmul(av2.data(), dc.data(), db.data(), k, m, n, false, false);
      } else {
        kernels::matmul(dc.data(), av2.data(), db.data(), n, m, k, true, true);
      }
      accum(gr.grad_of(bid), db);
    }
  });
}

template <typename T>
Var<T> bmm(Var<T> a, Var<T> b, bool ta, bool tb) {
  Graph<T>& g = *a.g;
  const Tensor<T>& av = g.val(a.id);
  const Tensor<T>& bv = g.val(b.id);
  expect(av.rank() == 3 && bv.rank() == 3, "bmm: rank-3 operands required");
  expect(av.dim(0) == bv.dim(0), "bmm: group counts disagree");
  expect(!ta, "bmm: transposed first operand not supported");
  const int64_t grp = av.dim(0);
  const int64_t m = av.dim(1);
  const int64_t k = av.dim(2);
  const int64_t kb = tb ? bv.dim(2) : bv.dim(1);
  const int64_t n = tb ? bv.dim(1) : bv.dim(2);
  expect(k == kb, "bmm: inner dimensions disagree");

  Tensor<T> out({grp, m, n});
  kernels::bmm(av.data(), bv.data(), out.data(), grp, m, k, n, false, tb);

  const bool rg = g.requires_grad(a.id) || g.requires_grad(b.id);
  const int aid = a.id, bid = b.id;
  return g.make_node(std::move(out), rg, [aid, bid, tb, grp, m, k, n](Graph<T>& gr, int self) {
    const Tensor<T>& dc = gr.grad_of(self);
    const Tensor<T>& av2 = gr.val(aid);
    const Tensor<T>& bv2 = gr.val(bid);
    if (gr.requires_grad(aid)) {
      Tensor<T> da(av2.shape());
      // d(a) = dc * op(b)^T
      kernels::bmm(dc.data(), bv2.data(), da.data(), grp, m, n, k, false, !tb);
      accum(gr.grad_of(aid), da);
    }
    if (gr.requires_grad(bid)) {
      Tensor<T> db(bv2.shape());
      if (!tb) {
        // db (k,n) = a^T * dc, done per group via the (t,f) kernel
        const int64_t asz = m * k, csz = m * n, bsz = k * n;
        for (int64_t gi = 0; gi < grp; ++gi) {
          kernels::matmul(av2.data() + gi * asz, dc.data() + gi * csz, db.data() + gi * bsz, k,
                          m, n, true, false);
        }
      } else {
        // b stored (n,k): db = dc^T * a per group
        const int64_t asz = m * k, csz = m * n, bsz = n * k;
        for (int64_t gi = 0; gi < grp; ++gi) {
          kernels::matmul(dc.data() + gi * csz, av2.data() + gi * asz, db.data() + gi * bsz, n,
                          m, k, true, false);
        }
      }
      accum(gr.grad_of(bid), db);
    }
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Graph<T>& g = *a.g;
  const Tensor<T>& av = g.val(a.id);
  const Tensor<T>& bv = g.val(b.id);
  expect(av.same_shape(bv), "add: shape mismatch");
  Tensor<T> out(av.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = av[i] + bv[i];

  const bool rg = g.requires_grad(a.id) || g.requires_grad(b.id);
  const int aid = a.id, bid = b.id;
  return g.make_node(std::move(out), rg, [aid, bid](Graph<T>& gr, int self) {
    const Tensor<T>& d = gr.grad_of(self);
    if (gr.requires_grad(aid)) accum(gr.grad_of(aid), d);
    if (gr.requires_grad(bid)) accum(gr.grad_of(bid), d);
  });
}

template <typename T>
Var<T> add_rowbias(Var<T> x, Var<T> bias) {
  Graph<T>& g = *x.g;
  const Tensor<T>& xv = g.val(x.id);
  const Tensor<T>& bv = g.val(bias.id);
  expect(xv.rank() == 2 && bv.rank() == 1 && xv.dim(1) == bv.dim(0),
         "add_rowbias: expected (rows,cols) + (cols)");
  Tensor<T> out = xv;
  kernels::add_rowbias(out.data(), bv.data(), xv.dim(0), xv.dim(1));

  const bool rg = g.requires_grad(x.id) || g.requires_grad(bias.id);
  const int xid = x.id, bid = bias.id;
  const int64_t rows = xv.dim(0), cols = xv.dim(1);
  return g.make_node(std::move(out), rg, [xid, bid, rows, cols](Graph<T>& gr, int self) {
    const Tensor<T>& d = gr.grad_of(self);
    if (gr.requires_grad(xid)) accum(gr.grad_of(xid), d);
    if (gr.requires_grad(bid)) {
      kernels::colsum_accum(d.data(), gr.grad_of(bid).data(), rows, cols);
    }
  });
}

template <typename T>
Var<T> scale(Var<T> x, T c) {
  Graph<T>& g = *x.g;
  const Tensor<T>& xv = g.val(x.id);
  Tensor<T> out(xv.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = xv[i] * c;
  const int xid = x.id;
  return g.make_node(std::move(out), g.requires_grad(x.id), [xid, c](Graph<T>& gr, int self) {
    const Tensor<T>& d = gr.grad_of(self);
    Tensor<T>& dx = gr.grad_of(xid);
    const int64_t m = d.numel();
    for (int64_t i = 0; i < m; ++i) dx[i] += c * d[i];
  });
}

template <typename T>
Var<T> gelu(Var<T> x) {
  Graph<T>& g = *x.g;
  const Tensor<T>& xv = g.val(x.id);
  Tensor<T> out(xv.shape());
  kernels::gelu_fwd(xv.data(), out.data(), xv.numel());
  const int xid = x.id;
  return g.make_node(std::move(out), g.requires_grad(x.id), [xid](Graph<T>& gr, int self) {
    const Tensor<T>& d = gr.grad_of(self);
    const Tensor<T>& xv2 = gr.val(xid);
    kernels::gelu_bwd_accum(xv2.data(), d.data(), gr.grad_of(xid).data(), xv2.numel());
  });
}

template <typename T>
Var<T> tanh_act(Var<T> x) {
  Graph<T>& g = *x.g;
  const Tensor<T>& xv = g.val(x.id);
  Tensor<T> out(xv.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = std::tanh(xv[i]);
  const int xid = x.id;
  return g.make_node(std::move(out), g.requires_grad(x.id), [xid](Graph<T>& gr, int self) {
    const Tensor<T>& d = gr.grad_of(self);
    const Tensor<T>& y = gr.val(self);
    Tensor<T>& dx = gr.grad_of(xid);
    const int64_t m = d.numel();
    for (int64_t i = 0; i < m; ++i) dx[i] += d[i] * (T(1) - y[i] * y[i]);
  });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps) {
  Graph<T>& g = *x.g;
  const Tensor<T>& xv = g.val(x.id);
  const Tensor<T>& gv = g.val(gain.id);
  const Tensor<T>& bv = g.val(bias.id);
  expect(xv.rank() == 2, "layer_norm: rank-2 input required");
  const int64_t rows = xv.dim(0), cols = xv.dim(1);
  expect(gv.numel() == cols && bv.numel() == cols, "layer_norm: gain/bias length mismatch");

  Tensor<T> out({rows, cols});
  auto mean = std::make_shared<Tensor<T>>(std::vector<int64_t>{rows});
  auto rstd = std::make_shared<Tensor<T>>(std::vector<int64_t>{rows});
  kernels::layernorm_fwd(xv.data(), gv.data(), bv.data(), out.data(), mean->data(),
                         rstd->data(), rows, cols, eps);

  const bool rg = g.requires_grad(x.id) || g.requires_grad(gain.id) || g.requires_grad(bias.id);
  const int xid = x.id, gid = gain.id, bid = bias.id;
  return g.make_node(std::move(out), rg,
                     [xid, gid, bid, rows, cols, mean, rstd](Graph<T>& gr, int self) {
                       const Tensor<T>& d = gr.grad_of(self);
                       const Tensor<T>& xv2 = gr.val(xid);
                       const Tensor<T>& gv2 = gr.val(gid);
                       kernels::layernorm_bwd(xv2.data(), gv2.data(), mean->data(),
                                              rstd->data(), d.data(), gr.grad_of(xid).data(),
                                              gr.grad_of(gid).data(), gr.grad_of(bid).data(),
                                              rows, cols);
                     });
}

template <typename T>
Var<T> dropout(Var<T> x, T p, std::mt19937_64& rng) {
  Graph<T>& g = *x.g;
  expect(p >= T(0) && p < T(1), "dropout: p must be in [0,1)");
  const Tensor<T>& xv = g.val(x.id);
  const int64_t n = xv.numel();
  if (p == T(0)) return x;

  auto mask = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(n));
  const T inv_keep = T(1) / (T(1) - p);
  Tensor<T> out(xv.shape());
  for (int64_t i = 0; i < n; ++i) {
    const bool keep = tweetlm::rng::uniform01(rng) >= static_cast<double>(p);
    (*mask)[static_cast<size_t>(i)] = keep ? 1 : 0;
    out[i] = keep ? xv[i] * inv_keep : T(0);
  }
  const int xid = x.id;
  return g.make_node(std::move(out), g.requires_grad(x.id),
                     [xid, mask, inv_keep](Graph<T>& gr, int self) {
                       const Tensor<T>& d = gr.grad_of(self);
                       Tensor<T>& dx = gr.grad_of(xid);
                       const int64_t m = d.numel();
                       for (int64_t i = 0; i < m; ++i) {
                         if ((*mask)[static_cast<size_t>(i)]) dx[i] += d[i] * inv_keep;
                       }
                     });
}

template <typename T>
Var<T> attn_softmax(Var<T> scores, Tensor<uint8_t> key_mask, int64_t b, int64_t h) {
  Graph<T>& g = *scores.g;
  const Tensor<T>& sv = g.val(scores.id);
  expect(sv.rank() == 3 && sv.dim(0) == b * h, "attn_softmax: scores must be (b*h, tq, tk)");
  const int64_t tq = sv.dim(1), tk = sv.dim(2);
  expect(key_mask.numel() == b * tk, "attn_softmax: key mask must be (b, tk)");

  Tensor<T> out(sv.shape());
  kernels::attn_softmax(sv.data(), key_mask.data(), out.data(), b, h, tq, tk);

  const int sid = scores.id;
  const int64_t rows = b * h * tq;
  return g.make_node(std::move(out), g.requires_grad(scores.id),
                     [sid, rows, tk](Graph<T>& gr, int self) {
                       const Tensor<T>& d = gr.grad_of(self);
                       const Tensor<T>& y = gr.val(self);
                       kernels::softmax_backward_accum(y.data(), d.data(),
                                                       gr.grad_of(sid).data(), rows, tk);
                     });
}

template <typename T>
Var<T> split_heads(Var<T> x, int64_t b, int64_t t, int64_t heads) {
  Graph<T>& g = *x.g;
  const Tensor<T>& xv = g.val(x.id);
  expect(xv.rank() == 2 && xv.dim(0) == b * t, "split_heads: input must be (b*t, hidden)");
  const int64_t hid = xv.dim(1);
  expect(hid % heads == 0, "split_heads: hidden not divisible by heads");
  const int64_t dh = hid / heads;

  Tensor<T> out({b * heads, t, dh});
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int64_t hi = 0; hi < heads; ++hi) {
      for (int64_t ti = 0; ti < t; ++ti) {
        const T* src = xv.data() + (bi * t + ti) * hid + hi * dh;
        T* dst = out.data() + ((bi * heads + hi) * t + ti) * dh;
        for (int64_t j = 0; j < dh; ++j) dst[j] = src[j];
      }
    }
  }
  const int xid = x.id;
  return g.make_node(std::move(out), g.requires_grad(x.id),
                     [xid, b, t, heads, hid, dh](Graph<T>& gr, int self) {
                       const Tensor<T>& d = gr.grad_of(self);
                       Tensor<T>& dx = gr.grad_of(xid);
                       for (int64_t bi = 0; bi < b; ++bi) {
                         for (int64_t hi = 0; hi < heads; ++hi) {
                           for (int64_t ti = 0; ti < t; ++ti) {
                             const T* src = d.data() + ((bi * heads + hi) * t + ti) * dh;
                             T* dst = dx.data() + (bi * t + ti) * hid + hi * dh;
                             for (int64_t j = 0; j < dh; ++j) dst[j] += src[j];
                           }
                         }
                       }
                     });
}

template <typename T>
Var<T> merge_heads(Var<T> x, int64_t b, int64_t t, int64_t heads) {
  Graph<T>& g = *x.g;
  const Tensor<T>& xv = g.val(x.id);
  expect(xv.rank() == 3 && xv.dim(0) == b * heads && xv.dim(1) == t,
         "merge_heads: input must be (b*heads, t, dh)");
  const int64_t dh = xv.dim(2);
  const int64_t hid = heads * dh;

  Tensor<T> out({b * t, hid});
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int64_t hi = 0; hi < heads; ++hi) {
      for (int64_t ti = 0; ti < t; ++ti) {
        const T* src = xv.data() + ((bi * heads + hi) * t + ti) * dh;
        T* dst = out.data() + (bi * t + ti) * hid + hi * dh;
        for (int64_t j = 0; j < dh; ++j) dst[j] = src[j];
      }
    }
  }
  const int xid = x.id;
  return g.make_node(std::move(out), g.requires_grad(x.id),
                     [xid, b, t, heads, hid, dh](Graph<T>& gr, int self) {
                       const Tensor<T>& d = gr.grad_of(self);
                       Tensor<T>& dx = gr.grad_of(xid);
                       for (int64_t bi = 0; bi < b; ++bi) {
                         for (int64_t hi = 0; hi < heads; ++hi) {
                           for (int64_t ti = 0; ti < t; ++ti) {
                             const T* src = d.data() + (bi * t + ti) * hid + hi * dh;
                             T* dst = dx.data() + ((bi * heads + hi) * t + ti) * dh;
                             for (int64_t j = 0; j < dh; ++j) dst[j] += src[j];
                           }
                         }
                       }
                     });
}

template <typename T>
Var<T> embed_sum(Var<T> tok, Var<T> pos, Var<T> seg, Tensor<int32_t> ids,
                 Tensor<int32_t> seg_ids, int64_t t) {
  Graph<T>& g = *tok.g;
  const Tensor<T>& tv = g.val(tok.id);
  const Tensor<T>& pv = g.val(pos.id);
  const Tensor<T>& sv = g.val(seg.id);
  const int64_t bt = ids.numel();
  expect(seg_ids.numel() == bt, "embed_sum: ids and seg_ids length mismatch");
  expect(bt % t == 0, "embed_sum: id count not a multiple of sequence length");
  const int64_t cols = tv.dim(1);
  expect(pv.dim(1) == cols && sv.dim(1) == cols, "embed_sum: embedding widths disagree");
  expect(t <= pv.dim(0), "embed_sum: sequence longer than position table");

  Tensor<T> out({bt, cols});
  kernels::embed_sum(tv.data(), pv.data(), sv.data(), ids.data(), seg_ids.data(), out.data(),
                     bt, t, cols);

  // position ids for the scatter in backward
  auto pos_ids = std::make_shared<Tensor<int32_t>>(std::vector<int64_t>{bt});
  for (int64_t r = 0; r < bt; ++r) (*pos_ids)[r] = static_cast<int32_t>(r % t);
  auto ids_p = std::make_shared<Tensor<int32_t>>(std::move(ids));
  auto seg_p = std::make_shared<Tensor<int32_t>>(std::move(seg_ids));

  const bool rg = g.requires_grad(tok.id) || g.requires_grad(pos.id) || g.requires_grad(seg.id);
  const int tid = tok.id, pid = pos.id, sid = seg.id;
  return g.make_node(std::move(out), rg,
                     [tid, pid, sid, ids_p, seg_p, pos_ids, bt, cols](Graph<T>& gr, int self) {
                       const Tensor<T>& d = gr.grad_of(self);
                       if (gr.requires_grad(tid)) {
                         kernels::scatter_add_rows(d.data(), ids_p->data(),
                                                   gr.grad_of(tid).data(), bt, cols);
                       }
                       if (gr.requires_grad(pid)) {
                         kernels::scatter_add_rows(d.data(), pos_ids->data(),
                                                   gr.grad_of(pid).data(), bt, cols);
                       }
                       if (gr.requires_grad(sid)) {
                         kernels::scatter_add_rows(d.data(), seg_p->data(),
                                                   gr.grad_of(sid).data(), bt, cols);
                       }
                     });
}

template <typename T>
Var<T> gather_rows(Var<T> x, Tensor<int32_t> ids) {
  Graph<T>& g = *x.g;
  const Tensor<T>& xv = g.val(x.id);
  expect(xv.rank() == 2, "gather_rows: rank-2 input required");
  const int64_t rows = ids.numel(), cols = xv.dim(1);
  for (int64_t r = 0; r < rows; ++r) {
    expect(ids[r] >= 0 && ids[r] < xv.dim(0), "gather_rows: index out of range");
  }
  Tensor<T> out({rows, cols});
  kernels::gather_rows(xv.data(), ids.data(), out.data(), rows, cols);

  auto ids_p = std::make_shared<Tensor<int32_t>>(std::move(ids));
  const int xid = x.id;
  return g.make_node(std::move(out), g.requires_grad(x.id),
                     [xid, ids_p, rows, cols](Graph<T>& gr, int self) {
                       const Tensor<T>& d = gr.grad_of(self);
                       kernels::scatter_add_rows(d.data(), ids_p->data(),
                                                 gr.grad_of(xid).data(), rows, cols);
                     });
}

template <typename T>
Var<T> mean_pool_rows(Var<T> x, Tensor<uint8_t> mask, int64_t b, int64_t t) {
  Graph<T>& g = *x.g;
  const Tensor<T>& xv = g.val(x.id);
  expect(xv.rank() == 2 && xv.dim(0) == b * t, "mean_pool_rows: input must be (b*t, cols)");
  expect(mask.numel() == b * t, "mean_pool_rows: mask length mismatch");
  const int64_t cols = xv.dim(1);

  Tensor<T> out({b, cols});
  auto counts = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(b), 0);
  for (int64_t bi = 0; bi < b; ++bi) {
    T* dst = out.data() + bi * cols;
    int64_t cnt = 0;
    for (int64_t ti = 0; ti < t; ++ti) {
      if (!mask[bi * t + ti]) continue;
      ++cnt;
      const T* src = xv.data() + (bi * t + ti) * cols;
      for (int64_t j = 0; j < cols; ++j) dst[j] += src[j];
    }
    expect(cnt > 0, "mean_pool_rows: batch row with no unmasked positions");
    (*counts)[static_cast<size_t>(bi)] = cnt;
    const T inv = T(1) / T(cnt);
    for (int64_t j = 0; j < cols; ++j) dst[j] *= inv;
  }

  auto mask_p = std::make_shared<Tensor<uint8_t>>(std::move(mask));
  const int xid = x.id;
  return g.make_node(std::move(out), g.requires_grad(x.id),
                     [xid, mask_p, counts, b, t, cols](Graph<T>& gr, int self) {
                       const Tensor<T>& d = gr.grad_of(self);
                       Tensor<T>& dx = gr.grad_of(xid);
                       for (int64_t bi = 0; bi < b; ++bi) {
                         const T inv = T(1) / T((*counts)[static_cast<size_t>(bi)]);
                         const T* drow = d.data() + bi * cols;
                         for (int64_t ti = 0; ti < t; ++ti) {
                           if (!(*mask_p)[bi * t + ti]) continue;
                           T* dst = dx.data() + (bi * t + ti) * cols;
                           for (int64_t j = 0; j < cols; ++j) dst[j] += drow[j] * inv;
                         }
                       }
                     });
}

template <typename T>
LossInfo<T> cross_entropy(Var<T> logits, Tensor<int32_t> labels, int32_t ignore_label,
                          Tensor<T> class_weights, Reduction reduction) {
  Graph<T>& g = *logits.g;
  const Tensor<T>& lv = g.val(logits.id);
  expect(lv.rank() == 2, "cross_entropy: logits must be (n, v)");
  const int64_t n = lv.dim(0), v = lv.dim(1);
  expect(labels.numel() == n, "cross_entropy: label count mismatch");
  const bool weighted = !class_weights.empty();
  expect(!weighted || class_weights.numel() == v, "cross_entropy: weight vector length mismatch");

  // softmax probabilities are cached for supervised rows only
  auto probs = std::make_shared<Tensor<T>>(std::vector<int64_t>{n, v});
  auto row_weight = std::make_shared<std::vector<T>>(static_cast<size_t>(n), T(0));

  T total = T(0);
  T weight_sum = T(0);
  int64_t supervised = 0;
  for (int64_t i = 0; i < n; ++i) {
    const int32_t y = labels[i];
    if (y == ignore_label) continue;
    expect(y >= 0 && y < v, "cross_entropy: label out of range");
    const T* row = lv.data() + i * v;
    T mx = row[0];
    for (int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    T sum = T(0);
    for (int64_t j = 0; j < v; ++j) sum += std::exp(row[j] - mx);
    const T lse = mx + std::log(sum);
    T* prow = probs->data() + i * v;
    const T inv = T(1) / sum;
    for (int64_t j = 0; j < v; ++j) prow[j] = std::exp(row[j] - mx) * inv;

    const T w = weighted ? class_weights[y] : T(1);
    (*row_weight)[static_cast<size_t>(i)] = w;
    total += w * (lse - row[y]);
    weight_sum += w;
    ++supervised;
  }
  if (supervised == 0) {
    throw std::invalid_argument("cross_entropy: no supervised positions (all labels ignored)");
  }
  const T denom = reduction == Reduction::kMean ? weight_sum : T(1);
  Tensor<T> out({1});
  out[0] = total / denom;

  auto labels_p = std::make_shared<Tensor<int32_t>>(std::move(labels));
  const int lid = logits.id;
  Var<T> loss = g.make_node(
      std::move(out), g.requires_grad(logits.id),
      [lid, probs, labels_p, row_weight, ignore_label, denom, n, v](Graph<T>& gr, int self) {
        const T dscale = gr.grad_of(self)[0] / denom;
        Tensor<T>& dx = gr.grad_of(lid);
        for (int64_t i = 0; i < n; ++i) {
          const int32_t y = (*labels_p)[i];
          if (y == ignore_label) continue;
          const T w = (*row_weight)[static_cast<size_t>(i)] * dscale;
          const T* prow = probs->data() + i * v;
          T* drow = dx.data() + i * v;
          for (int64_t j = 0; j < v; ++j) drow[j] += w * prow[j];
          drow[y] -= w;
        }
      });
  LossInfo<T> info;
  info.loss = loss;
  info.supervised = supervised;
  info.weight_denom = weight_sum;
  return info;
}

#define TWEETLM_INSTANTIATE_OPS(T)                                                           \
  template Var<T> matmul<T>(Var<T>, Var<T>, bool, bool);                                     \
  template Var<T> bmm<T>(Var<T>, Var<T>, bool, bool);                                        \
  template Var<T> add<T>(Var<T>, Var<T>);                                                   \
  template Var<T> add_rowbias<T>(Var<T>, Var<T>);                                           \
  template Var<T> scale<T>(Var<T>, T);                                                      \
  template Var<T> gelu<T>(Var<T>);                                                          \
  template Var<T> tanh_act<T>(Var<T>);                                                      \
  template Var<T> layer_norm<T>(Var<T>, Var<T>, Var<T>, T);                                 \
  template Var<T> dropout<T>(Var<T>, T, std::mt19937_64&);                                  \
  template Var<T> attn_softmax<T>(Var<T>, Tensor<uint8_t>, int64_t, int64_t);               \
  template Var<T> split_heads<T>(Var<T>, int64_t, int64_t, int64_t);                        \
  template Var<T> merge_heads<T>(Var<T>, int64_t, int64_t, int64_t);                        \
  template Var<T> embed_sum<T>(Var<T>, Var<T>, Var<T>, Tensor<int32_t>, Tensor<int32_t>,    \
                               int64_t);                                                    \
  template Var<T> gather_rows<T>(Var<T>, Tensor<int32_t>);                                  \
  template Var<T> mean_pool_rows<T>(Var<T>, Tensor<uint8_t>, int64_t, int64_t);             \
  template LossInfo<T> cross_entropy<T>(Var<T>, Tensor<int32_t>, int32_t, Tensor<T>,        \
                                        Reduction);

TWEETLM_INSTANTIATE_OPS(float)
TWEETLM_INSTANTIATE_OPS(double)
#undef TWEETLM_INSTANTIATE_OPS

}  // namespace tweetlm::ad
