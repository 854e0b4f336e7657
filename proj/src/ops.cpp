#include "mkt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mkt/errors.hpp"

namespace mkt::tg {
namespace {

Tape& same_tape(Var a, Var b) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape())
    throw ContractError("operands recorded on different tapes");
  return a.tape();
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

// Shared driver for unary elementwise ops: `fwd` maps x -> y and `dydx`
// maps (x, y) -> local derivative.
template <class Fwd, class Deriv>
Var unary(const char* op, Var x, Fwd fwd, Deriv dydx) {
  Tape& t = x.tape();
  const Tensor& xv = x.value();
  Tensor out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  const std::size_t xid = x.id();
  return t.record(op, {xid}, std::move(out), [xid, dydx](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_acc(self);
    const Tensor& xv = tp.value(xid);
    const Tensor& yv = tp.value(self);
    Tensor& gx = tp.grad_acc(xid);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dydx(xv[i], yv[i]);
  });
}

double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows())
    throw DimensionError("matmul: inner dimensions differ, " + av.shape_str() + " x " + bv.shape_str());
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    double* o = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = av(i, p);
      const double* br = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += s * br[j];
    }
  }
  const std::size_t aid = a.id(), bid = b.id();
  return t.record("matmul", {aid, bid}, std::move(out), [aid, bid, m, k, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_acc(self);
    const Tensor& av = tp.value(aid);
    const Tensor& bv = tp.value(bid);
    if (tp.requires_grad(aid)) {
      Tensor& ga = tp.grad_acc(aid);  // g * b^T
      for (std::size_t i = 0; i < m; ++i) {
        const double* gr = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* br = bv.data() + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += gr[j] * br[j];
          ga(i, p) += acc;
        }
      }
    }
    if (tp.requires_grad(bid)) {
      Tensor& gb = tp.grad_acc(bid);  // a^T * g
      for (std::size_t i = 0; i < m; ++i) {
        const double* gr = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double s = av(i, p);
          double* o = gb.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) o[j] += s * gr[j];
        }
      }
    }
  });
}

namespace {

// out(i, j) = x_i . w_j (+ bias_j)
Tensor forward_nt(const Tensor& xv, const Tensor& wv, const Tensor* bv) {
  const std::size_t m = xv.rows(), k = xv.cols(), n = wv.rows();
  Tensor out(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* xr = xv.data() + i * k;
    double* o = out.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* wr = wv.data() + j * k;
      double acc = bv ? (*bv)[j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += xr[p] * wr[p];
      o[j] = acc;
    }
  }
  return out;
}

void backward_nt(Tape& tp, std::size_t self, std::size_t xid, std::size_t wid, const std::size_t* bid) {
  const Tensor& g = tp.grad_acc(self);
  const Tensor& xv = tp.value(xid);
  const Tensor& wv = tp.value(wid);
  const std::size_t m = xv.rows(), k = xv.cols(), n = wv.rows();
  if (tp.requires_grad(xid)) {
    Tensor& gx = tp.grad_acc(xid);
    for (std::size_t i = 0; i < m; ++i) {
      double* o = gx.data() + i * k;
      for (std::size_t j = 0; j < n; ++j) {
        const double s = g(i, j);
        if (s == 0.0) continue;
        const double* wr = wv.data() + j * k;
        for (std::size_t p = 0; p < k; ++p) o[p] += s * wr[p];
      }
    }
  }
  if (tp.requires_grad(wid)) {
    Tensor& gw = tp.grad_acc(wid);
    for (std::size_t i = 0; i < m; ++i) {
      const double* xr = xv.data() + i * k;
      for (std::size_t j = 0; j < n; ++j) {
        const double s = g(i, j);
        if (s == 0.0) continue;
        double* o = gw.data() + j * k;
        for (std::size_t p = 0; p < k; ++p) o[p] += s * xr[p];
      }
    }
  }
  if (bid && tp.requires_grad(*bid)) {
    Tensor& gb = tp.grad_acc(*bid);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gb[j] += g(i, j);
  }
}

}  // namespace

Var matmul_nt(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols())
    throw DimensionError("matmul_nt: inner dimensions differ, " + av.shape_str() + " x " + bv.shape_str() + "^T");
  const std::size_t aid = a.id(), bid = b.id();
  return t.record("matmul_nt", {aid, bid}, forward_nt(av, bv, nullptr),
                  [aid, bid](Tape& tp, std::size_t self) { backward_nt(tp, self, aid, bid, nullptr); });
}

Var linear(Var x, Var w) { return matmul_nt(x, w); }

Var linear(Var x, Var w, Var b) {
  Tape& t = same_tape(x, w);
  same_tape(x, b);
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  if (xv.cols() != wv.cols())
    throw DimensionError("linear: input " + xv.shape_str() + " does not fit weight " + wv.shape_str());
  if (bv.rows() != wv.rows() || bv.cols() != 1)
    throw DimensionError("linear: bias " + bv.shape_str() + " does not fit weight " + wv.shape_str());
  const std::size_t xid = x.id(), wid = w.id(), bid = b.id();
  return t.record("linear", {xid, wid, bid}, forward_nt(xv, wv, &bv),
                  [xid, wid, bid](Tape& tp, std::size_t self) { backward_nt(tp, self, xid, wid, &bid); });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape("add", a.value(), b.value());
  Tensor out = a.value();
  out += b.value();
  const std::size_t aid = a.id(), bid = b.id();
  return t.record("add", {aid, bid}, std::move(out), [aid, bid](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_acc(self);
    if (tp.requires_grad(aid)) tp.grad_acc(aid) += g;
    if (tp.requires_grad(bid)) tp.grad_acc(bid) += g;
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape("sub", a.value(), b.value());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const std::size_t aid = a.id(), bid = b.id();
  return t.record("sub", {aid, bid}, std::move(out), [aid, bid](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_acc(self);
    if (tp.requires_grad(aid)) tp.grad_acc(aid) += g;
    if (tp.requires_grad(bid)) {
      Tensor& gb = tp.grad_acc(bid);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape("mul", a.value(), b.value());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const std::size_t aid = a.id(), bid = b.id();
  return t.record("mul", {aid, bid}, std::move(out), [aid, bid](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_acc(self);
    const Tensor& av = tp.value(aid);
    const Tensor& bv = tp.value(bid);
    if (tp.requires_grad(aid)) {
      Tensor& ga = tp.grad_acc(aid);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tp.requires_grad(bid)) {
      Tensor& gb = tp.grad_acc(bid);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var x, double c) {
  return unary("scale", x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Var relu(Var x) {
  return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var x) {
  return unary("sigmoid", x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var clamp(Var x, double lo, double hi) {
  return unary("clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
               [lo, hi](double v, double) { return v > lo && v < hi ? 1.0 : 0.0; });
}

Var tanh(Var x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var add_bias(Var x, Var b) {
  Tape& t = same_tape(x, b);
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  if (bv.cols() != 1 || bv.rows() != xv.cols())
    throw DimensionError("add_bias: bias " + bv.shape_str() + " does not fit input " + xv.shape_str());
  Tensor out = xv;
  const std::size_t d = xv.cols();
  for (std::size_t i = 0; i < xv.rows(); ++i)
    for (std::size_t j = 0; j < d; ++j) out(i, j) += bv[j];
  const std::size_t xid = x.id(), bid = b.id();
  return t.record("add_bias", {xid, bid}, std::move(out), [xid, bid, d](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_acc(self);
    if (tp.requires_grad(xid)) tp.grad_acc(xid) += g;
    if (tp.requires_grad(bid)) {
      Tensor& gb = tp.grad_acc(bid);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < d; ++j) gb[j] += g(i, j);
    }
  });
}

Var mul_rows(Var x, Var s) {
  Tape& t = same_tape(x, s);
  const Tensor& xv = x.value();
  const Tensor& sv = s.value();
  if (sv.cols() != 1 || sv.rows() != xv.rows())
    throw DimensionError("mul_rows: scale " + sv.shape_str() + " does not fit input " + xv.shape_str());
  Tensor out(xv.rows(), xv.cols());
  const std::size_t d = xv.cols();
  for (std::size_t i = 0; i < xv.rows(); ++i)
    for (std::size_t j = 0; j < d; ++j) out(i, j) = xv(i, j) * sv[i];
  const std::size_t xid = x.id(), sid = s.id();
  return t.record("mul_rows", {xid, sid}, std::move(out), [xid, sid, d](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_acc(self);
    const Tensor& xv = tp.value(xid);
    const Tensor& sv = tp.value(sid);
    if (tp.requires_grad(xid)) {
      Tensor& gx = tp.grad_acc(xid);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < d; ++j) gx(i, j) += g(i, j) * sv[i];
    }
    if (tp.requires_grad(sid)) {
      Tensor& gs = tp.grad_acc(sid);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += g(i, j) * xv(i, j);
        gs[i] += acc;
      }
    }
  });
}

Var scale_blocks(Var x, Var p) {
  Tape& t = same_tape(x, p);
  const Tensor& xv = x.value();
  const Tensor& pv = p.value();
  const std::size_t n = pv.cols();
  if (pv.rows() != xv.rows() || n == 0 || xv.cols() % n != 0)
    throw DimensionError("scale_blocks: scores " + pv.shape_str() + " do not fit input " + xv.shape_str());
  const std::size_t d = xv.cols() / n;
  Tensor out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.rows(); ++i)
    for (std::size_t f = 0; f < n; ++f)
      for (std::size_t e = 0; e < d; ++e) out(i, f * d + e) = xv(i, f * d + e) * pv(i, f);
  const std::size_t xid = x.id(), pid = p.id();
  return t.record("scale_blocks", {xid, pid}, std::move(out), [xid, pid, n, d](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_acc(self);
    const Tensor& xv = tp.value(xid);
    const Tensor& pv = tp.value(pid);
    Tensor* gx = tp.requires_grad(xid) ? &tp.grad_acc(xid) : nullptr;
    Tensor* gp = tp.requires_grad(pid) ? &tp.grad_acc(pid) : nullptr;
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t f = 0; f < n; ++f) {
        double acc = 0.0;
        for (std::size_t e = 0; e < d; ++e) {
          const std::size_t c = f * d + e;
          if (gx) (*gx)(i, c) += g(i, c) * pv(i, f);
          acc += g(i, c) * xv(i, c);
        }
        if (gp) (*gp)(i, f) += acc;
      }
  });
}

Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat: empty part list");
  Tape& t = parts.front().tape();
  const std::size_t m = parts.front().rows();
  std::size_t total = 0;
  std::vector<std::size_t> ids, widths;
  for (const Var& v : parts) {
    same_tape(parts.front(), v);
    if (v.rows() != m)
      throw DimensionError("concat: row count " + std::to_string(v.rows()) + " differs from " + std::to_string(m));
    ids.push_back(v.id());
    widths.push_back(v.cols());
    total += v.cols();
  }
  Tensor out(m, total);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t off = 0;
    for (const Var& v : parts) {
      const auto row = v.value().row_span(i);
      std::copy(row.begin(), row.end(), out.data() + i * total + off);
      off += row.size();
    }
  }
  return t.record("concat", ids, std::move(out), [ids, widths, total](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_acc(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tp.requires_grad(ids[k])) {
        Tensor& gp = tp.grad_acc(ids[k]);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) gp(i, j) += g(i, off + j);
      }
      off += widths[k];
    }
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  Tape& t = x.tape();
  const Tensor& xv = x.value();
  if (begin + count > xv.cols())
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + xv.shape_str());
  Tensor out(xv.rows(), count);
  for (std::size_t i = 0; i < xv.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = xv(i, begin + j);
  const std::size_t xid = x.id();
  return t.record("slice_cols", {xid}, std::move(out), [xid, begin, count](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_acc(self);
    Tensor& gx = tp.grad_acc(xid);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < count; ++j) gx(i, begin + j) += g(i, j);
  });
}

Var gather(Var table, std::vector<std::int32_t> ids) {
  Tape& t = table.tape();
  const Tensor& tv = table.value();
  const std::size_t d = tv.cols();
  Tensor out(ids.size(), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.rows())
      throw DimensionError("gather: row " + std::to_string(ids[i]) + " out of range for table " + tv.shape_str());
    const auto row = tv.row_span(static_cast<std::size_t>(ids[i]));
    std::copy(row.begin(), row.end(), out.data() + i * d);
  }
  const std::size_t tid = table.id();
  return t.record("gather", {tid}, std::move(out), [tid, d, ids = std::move(ids)](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_acc(self);
    Tensor& gt = tp.grad_acc(tid);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      double* o = gt.data() + static_cast<std::size_t>(ids[i]) * d;
      const double* gr = g.data() + i * d;
      for (std::size_t j = 0; j < d; ++j) o[j] += gr[j];
    }
  });
}

Var softmax_rows(Var x) {
  Tape& t = x.tape();
  const Tensor& xv = x.value();
  Tensor out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    const auto row = xv.row_span(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) z += (out(i, j) = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < row.size(); ++j) out(i, j) /= z;
  }
  const std::size_t xid = x.id();
  return t.record("softmax_rows", {xid}, std::move(out), [xid](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_acc(self);
    const Tensor& y = tp.value(self);
    Tensor& gx = tp.grad_acc(xid);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j) gx(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

Var attention_pool(Var queries, Var keys, std::vector<std::size_t> offsets, std::vector<double>* weights) {
  Tape& t = same_tape(queries, keys);
  const Tensor& qv = queries.value();
  const Tensor& kv = keys.value();
  const std::size_t b = qv.rows(), d = qv.cols();
  if (kv.cols() != d)
    throw DimensionError("attention_pool: queries " + qv.shape_str() + " and keys " + kv.shape_str());
  if (offsets.size() != b + 1 || offsets.front() != 0 || offsets.back() != kv.rows())
    throw DimensionError("attention_pool: segment offsets do not cover the key rows");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  std::vector<double> attn(kv.rows());
  Tensor out(b, d);
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t lo = offsets[i], hi = offsets[i + 1];
    if (lo > hi) throw DimensionError("attention_pool: decreasing offsets");
    if (lo == hi) continue;
    double mx = -INFINITY;
    for (std::size_t r = lo; r < hi; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += qv(i, j) * kv(r, j);
      attn[r] = s * inv_sqrt_d;
      mx = std::max(mx, attn[r]);
    }
    double z = 0.0;
    for (std::size_t r = lo; r < hi; ++r) z += (attn[r] = std::exp(attn[r] - mx));
    for (std::size_t r = lo; r < hi; ++r) {
      attn[r] /= z;
      for (std::size_t j = 0; j < d; ++j) out(i, j) += attn[r] * kv(r, j);
    }
  }
  if (weights) *weights = attn;

  const std::size_t qid = queries.id(), kid = keys.id();
  return t.record("attention_pool", {qid, kid}, std::move(out),
                  [qid, kid, d, inv_sqrt_d, offsets = std::move(offsets), attn = std::move(attn)](Tape& tp,
                                                                                                   std::size_t self) {
                    const Tensor& g = tp.grad_acc(self);
                    const Tensor& qv = tp.value(qid);
                    const Tensor& kv = tp.value(kid);
                    const bool need_q = tp.requires_grad(qid), need_k = tp.requires_grad(kid);
                    std::vector<double> ds;
                    for (std::size_t i = 0; i + 1 < offsets.size(); ++i) {
                      const std::size_t lo = offsets[i], hi = offsets[i + 1];
                      if (lo == hi) continue;
                      // d out / d a_r = k_r . g_i
                      ds.assign(hi - lo, 0.0);
                      double weighted = 0.0;
                      for (std::size_t r = lo; r < hi; ++r) {
                        double da = 0.0;
                        for (std::size_t j = 0; j < d; ++j) da += kv(r, j) * g(i, j);
                        ds[r - lo] = da;
                        weighted += attn[r] * da;
                      }
                      for (std::size_t r = lo; r < hi; ++r) {
                        const double dscore = attn[r] * (ds[r - lo] - weighted) * inv_sqrt_d;
                        if (need_q) {
                          Tensor& gq = tp.grad_acc(qid);
                          for (std::size_t j = 0; j < d; ++j) gq(i, j) += dscore * kv(r, j);
                        }
                        if (need_k) {
                          Tensor& gk = tp.grad_acc(kid);
                          for (std::size_t j = 0; j < d; ++j) gk(r, j) += attn[r] * g(i, j) + dscore * qv(i, j);
                        }
                      }
                    }
                  });
}

Var cosine(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape("cosine", a.value(), b.value());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.rows(), d = av.cols();
  Tensor out(m, 1);
  std::vector<double> na(m), nb(m), dots(m);
  for (std::size_t i = 0; i < m; ++i) {
    double aa = 0.0, bb = 0.0, ab = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      aa += av(i, j) * av(i, j);
      bb += bv(i, j) * bv(i, j);
      ab += av(i, j) * bv(i, j);
    }
    na[i] = std::sqrt(aa + kCosineEps);
    nb[i] = std::sqrt(bb + kCosineEps);
    dots[i] = ab;
    out[i] = ab / (na[i] * nb[i]);
  }
  const std::size_t aid = a.id(), bid = b.id();
  return t.record("cosine", {aid, bid}, std::move(out),
                  [aid, bid, d, na = std::move(na), nb = std::move(nb)](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad_acc(self);
                    const Tensor& c = tp.value(self);
                    const Tensor& av = tp.value(aid);
                    const Tensor& bv = tp.value(bid);
                    for (std::size_t i = 0; i < g.rows(); ++i) {
                      const double inv = 1.0 / (na[i] * nb[i]);
                      if (tp.requires_grad(aid)) {
                        Tensor& ga = tp.grad_acc(aid);
                        const double ca = c[i] / (na[i] * na[i]);
                        for (std::size_t j = 0; j < d; ++j) ga(i, j) += g[i] * (bv(i, j) * inv - ca * av(i, j));
                      }
                      if (tp.requires_grad(bid)) {
                        Tensor& gb = tp.grad_acc(bid);
                        const double cb = c[i] / (nb[i] * nb[i]);
                        for (std::size_t j = 0; j < d; ++j) gb(i, j) += g[i] * (av(i, j) * inv - cb * bv(i, j));
                      }
                    }
                  });
}

Var bce_with_logits(Var logits, std::span<const double> labels) {
  Tape& t = logits.tape();
  const Tensor& z = logits.value();
  if (z.cols() != 1 || z.rows() != labels.size())
    throw DimensionError("bce_with_logits: logits " + z.shape_str() + " vs " + std::to_string(labels.size()) +
                         " labels");
  std::vector<double> y(labels.begin(), labels.end());
  Tensor out(z.rows(), 1);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0)
      throw ValidationError("bce_with_logits: label " + std::to_string(y[i]) + " is not in {0, 1}");
    // max(z, 0) - z*y + log(1 + exp(-|z|))
    out[i] = std::max(z[i], 0.0) - z[i] * y[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  const std::size_t zid = logits.id();
  return t.record("bce_with_logits", {zid}, std::move(out), [zid, y = std::move(y)](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_acc(self);
    const Tensor& z = tp.value(zid);
    Tensor& gz = tp.grad_acc(zid);
    for (std::size_t i = 0; i < y.size(); ++i) gz[i] += g[i] * (stable_sigmoid(z[i]) - y[i]);
  });
}

Var sum(Var x) {
  Tape& t = x.tape();
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  const std::size_t xid = x.id();
  return t.record("sum", {xid}, Tensor::scalar(s), [xid](Tape& tp, std::size_t self) {
    const double g = tp.grad_acc(self)[0];
    Tensor& gx = tp.grad_acc(xid);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

Var mean(Var x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var detach(Var x) { return x.tape().constant(x.value()); }

}  // namespace mkt::tg
