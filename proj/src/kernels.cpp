// Copyright (c) 2026 The nmt Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "nmt/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nmt/error.hpp"

namespace nmt::kernels {

namespace {

void check_matrix(const Tensor& t, const char* what) {
  if (t.rank() < 2) throw DimensionError(std::string(what) + " must be a matrix, got " + shape_string(t.shape()));
}

// Rows are independent and each output element accumulates over k in
// ascending order, so blocking rows does not change any result bit.
void gemm_rows(const Real* a, const Real* b, Real* out, std::size_t m, std::size_t k,
               std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    Real* o0 = out + i * n;
    Real* o1 = o0 + n;
    Real* o2 = o1 + n;
    Real* o3 = o2 + n;
    const Real* a0 = a + i * k;
    const Real* a1 = a0 + k;
    const Real* a2 = a1 + k;
    const Real* a3 = a2 + k;
    for (std::size_t p = 0; p < k; ++p) {
      const Real* br = b + p * n;
      const Real x0 = a0[p], x1 = a1[p], x2 = a2[p], x3 = a3[p];
      for (std::size_t j = 0; j < n; ++j) {
        const Real bv = br[j];
        o0[j] += x0 * bv;
        o1[j] += x1 * bv;
        o2[j] += x2 * bv;
        o3[j] += x3 * bv;
      }
    }
  }
  for (; i < m; ++i) {
    Real* o = out + i * n;
    const Real* ar = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const Real* br = b + p * n;
      const Real x = ar[p];
      for (std::size_t j = 0; j < n; ++j) o[j] += x * br[j];
    }
  }
}

}  // namespace

void matmul_accumulate(const Tensor& a, const Tensor& b, Tensor& out) {
  check_matrix(b, "matmul rhs");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k || b.rank() != 2)
    throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) + " by " +
                         shape_string(b.shape()));
  if (out.rows() != m || out.cols() != n)
    throw DimensionError("matmul: output " + shape_string(out.shape()) + " does not fit " +
                         shape_string(a.shape()) + " x " + shape_string(b.shape()));
  gemm_rows(a.data().data(), b.data().data(), out.data().data(), m, k, n);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_matrix(a, "matmul lhs");
  check_matrix(b, "matmul rhs");
  if (a.cols() != b.rows() || b.rank() != 2)
    throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) + " by " +
                         shape_string(b.shape()));
  Tensor out({a.rows(), b.cols()});
  gemm_rows(a.data().data(), b.data().data(), out.data().data(), a.rows(), a.cols(), b.cols());
  return out;
}

Tensor transpose(const Tensor& a) {
  check_matrix(a, "transpose operand");
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check_matrix(b, "matmul_nt rhs");
  if (a.cols() != b.cols())
    throw DimensionError("matmul_nt: cannot multiply " + shape_string(a.shape()) +
                         " by transpose of " + shape_string(b.shape()));
  return matmul(a, transpose(b));
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  check_matrix(a, "matmul_tn lhs");
  if (a.rows() != b.rows())
    throw DimensionError("matmul_tn: cannot multiply transpose of " + shape_string(a.shape()) +
                         " by " + shape_string(b.shape()));
  return matmul(transpose(a), b);
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError("add: shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  Tensor out = a;
  add_into(out, b);
  return out;
}

void add_into(Tensor& dst, const Tensor& src) {
  if (dst.size() != src.size())
    throw DimensionError("add: shapes " + shape_string(dst.shape()) + " and " +
                         shape_string(src.shape()) + " differ");
  Real* d = dst.data().data();
  const Real* s = src.data().data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.size() != a.cols())
    throw DimensionError("add_row: row of " + std::to_string(row.size()) + " values for " +
                         shape_string(a.shape()));
  Tensor out = a;
  const std::size_t n = a.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    Real* o = out.data().data() + r * n;
    for (std::size_t j = 0; j < n; ++j) o[j] += row[j];
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (Real& v : out.data()) v = v > Real(0) ? v : Real(0);
  return out;
}

Real sigmoid(Real x) {
  if (x >= Real(0)) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = x;
  for (Real& v : out.data()) v = sigmoid(v);
  return out;
}

void ssru_update(const Tensor& f, const Tensor& u, Tensor& c) {
  if (f.shape() != c.shape() || u.shape() != c.shape())
    throw DimensionError("ssru_update: gate " + shape_string(f.shape()) + ", candidate " + shape_string(u.shape()) +
                         ", cell " + shape_string(c.shape()));
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = f[i] * c[i] + (Real(1) - f[i]) * u[i];
}

SsruOutput ssru_cell(const Tensor& x, const Tensor& c_prev, const Tensor& w_f, const Tensor& b_f,
                     const Tensor& w) {
  SsruOutput out;
  out.c = c_prev;
  ssru_update(sigmoid(add_row(matmul(x, w_f), b_f)), matmul(x, w), out.c);
  out.h = relu(out.c);
  return out;
}

Tensor softmax(const Tensor& x) {
  Tensor out = x;
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    Real* row = out.data().data() + r * n;
    Real m = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < n; ++j) m = std::max(m, row[j]);
    double sum = 0;
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - m);
      sum += row[j];
    }
    const Real inv = Real(1.0 / sum);
    for (std::size_t j = 0; j < n; ++j) row[j] *= inv;
  }
  return out;
}

void log_softmax_inplace(std::span<Real> row) {
  Real m = -std::numeric_limits<Real>::infinity();
  for (Real v : row) m = std::max(m, v);
  double sum = 0;
  for (Real v : row) sum += std::exp(double(v - m));
  const Real shift = m + Real(std::log(sum));
  for (Real& v : row) v -= shift;
}

Tensor log_softmax(const Tensor& x) {
  Tensor out = x;
  for (std::size_t r = 0; r < x.rows(); ++r) log_softmax_inplace(out.row(r));
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps,
                  LayerNormStats* stats) {
  const std::size_t d = x.cols();
  if (gain.size() != d || bias.size() != d)
    throw DimensionError("layer_norm: gain/bias of " + std::to_string(gain.size()) + "/" +
                         std::to_string(bias.size()) + " values for " + shape_string(x.shape()));
  Tensor out(x.shape());
  if (stats) {
    stats->mean.assign(x.rows(), 0);
    stats->rstd.assign(x.rows(), 0);
  }
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const Real* in = x.data().data() + r * d;
    Real* o = out.data().data() + r * d;
    double sum = 0;
    for (std::size_t j = 0; j < d; ++j) sum += in[j];
    const double mean = sum / double(d);
    double var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= double(d);
    const Real rstd = Real(1.0 / std::sqrt(var + double(eps)));
    const Real mu = Real(mean);
    for (std::size_t j = 0; j < d; ++j) o[j] = (in[j] - mu) * rstd * gain[j] + bias[j];
    if (stats) {
      stats->mean[r] = mu;
      stats->rstd[r] = rstd;
    }
  }
  return out;
}

Tensor positional_encoding(std::size_t len, std::size_t dim, std::size_t offset) {
  Tensor out({len, dim});
  for (std::size_t t = 0; t < len; ++t) {
    const double pos = double(t + offset);
    for (std::size_t i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, double(2 * (i / 2)) / double(dim));
      out.at(t, i) = Real(i % 2 == 0 ? std::sin(pos / rate) : std::cos(pos / rate));
    }
  }
  return out;
}

AttentionResult attention_core(const Tensor& q, const Tensor& k, const Tensor& v,
                               const AttentionShape& s, std::span<const std::uint8_t> key_mask,
                               bool causal) {
  const std::size_t d = q.cols();
  if (s.heads == 0 || d % s.heads != 0)
    throw ConfigError("attention: model dimension " + std::to_string(d) +
                      " is not divisible by " + std::to_string(s.heads) + " heads");
  if (q.rows() != s.batch * s.query_len || k.rows() != s.batch * s.key_len ||
      v.rows() != s.batch * s.key_len || k.cols() != d || v.cols() != d)
    throw DimensionError("attention: q " + shape_string(q.shape()) + ", k " +
                         shape_string(k.shape()) + ", v " + shape_string(v.shape()) +
                         " do not match the batch layout");
  if (!key_mask.empty() && key_mask.size() != s.batch * s.key_len)
    throw DimensionError("attention: key mask has " + std::to_string(key_mask.size()) +
                         " entries, expected " + std::to_string(s.batch * s.key_len));
  if (causal && s.query_len != s.key_len)
    throw DimensionError("attention: causal mask needs equal query and key lengths");

  const std::size_t dh = d / s.heads;
  const Real scale = Real(1) / std::sqrt(Real(dh));
  AttentionResult res{Tensor({s.batch * s.query_len, d}),
                      Tensor({s.batch, s.heads, s.query_len, s.key_len})};
  std::vector<Real> scores(s.key_len);
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t h = 0; h < s.heads; ++h) {
      for (std::size_t i = 0; i < s.query_len; ++i) {
        const Real* qi = q.data().data() + (b * s.query_len + i) * d + h * dh;
        Real m = -std::numeric_limits<Real>::infinity();
        for (std::size_t j = 0; j < s.key_len; ++j) {
          const bool allowed = (key_mask.empty() || key_mask[b * s.key_len + j]) && (!causal || j <= i);
          if (!allowed) {
            scores[j] = -std::numeric_limits<Real>::infinity();
            continue;
          }
          const Real* kj = k.data().data() + (b * s.key_len + j) * d + h * dh;
          Real dot = 0;
          for (std::size_t c = 0; c < dh; ++c) dot += qi[c] * kj[c];
          scores[j] = dot * scale;
          m = std::max(m, scores[j]);
        }
        Real* p = res.probs.data().data() + ((b * s.heads + h) * s.query_len + i) * s.key_len;
        if (m == -std::numeric_limits<Real>::infinity()) {
          std::fill(p, p + s.key_len, Real(0));
          continue;
        }
        double sum = 0;
        for (std::size_t j = 0; j < s.key_len; ++j) {
          p[j] = scores[j] == -std::numeric_limits<Real>::infinity() ? Real(0) : std::exp(scores[j] - m);
          sum += p[j];
        }
        const Real inv = Real(1.0 / sum);
        Real* o = res.output.data().data() + (b * s.query_len + i) * d + h * dh;
        for (std::size_t j = 0; j < s.key_len; ++j) {
          p[j] *= inv;
          if (p[j] == Real(0)) continue;
          const Real* vj = v.data().data() + (b * s.key_len + j) * d + h * dh;
          for (std::size_t c = 0; c < dh; ++c) o[c] += p[j] * vj[c];
        }
      }
    }
  }
  return res;
}

void attention_core_backward(const Tensor& q, const Tensor& k, const Tensor& v,
                             const Tensor& probs, const Tensor& grad_out,
                             const AttentionShape& s, Tensor* grad_q, Tensor* grad_k,
                             Tensor* grad_v) {
  const std::size_t d = q.cols();
  const std::size_t dh = d / s.heads;
  const Real scale = Real(1) / std::sqrt(Real(dh));
  std::vector<Real> dp(s.key_len);
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t h = 0; h < s.heads; ++h) {
      for (std::size_t i = 0; i < s.query_len; ++i) {
        const std::size_t qrow = b * s.query_len + i;
        const Real* go = grad_out.data().data() + qrow * d + h * dh;
        const Real* p = probs.data().data() + ((b * s.heads + h) * s.query_len + i) * s.key_len;
        double dot_sum = 0;
        for (std::size_t j = 0; j < s.key_len; ++j) {
          if (p[j] == Real(0)) {
            dp[j] = 0;
            continue;
          }
          const std::size_t krow = b * s.key_len + j;
          const Real* vj = v.data().data() + krow * d + h * dh;
          Real acc = 0;
          for (std::size_t c = 0; c < dh; ++c) acc += go[c] * vj[c];
          dp[j] = acc;
          dot_sum += double(p[j]) * acc;
          if (grad_v) {
            Real* gv = grad_v->data().data() + krow * d + h * dh;
            for (std::size_t c = 0; c < dh; ++c) gv[c] += p[j] * go[c];
          }
        }
        const Real* qi = q.data().data() + qrow * d + h * dh;
        Real* gq = grad_q ? grad_q->data().data() + qrow * d + h * dh : nullptr;
        for (std::size_t j = 0; j < s.key_len; ++j) {
          if (p[j] == Real(0)) continue;
          const Real ds = p[j] * (dp[j] - Real(dot_sum)) * scale;
          const std::size_t krow = b * s.key_len + j;
          const Real* kj = k.data().data() + krow * d + h * dh;
          if (gq)
            for (std::size_t c = 0; c < dh; ++c) gq[c] += ds * kj[c];
          if (grad_k) {
            Real* gk = grad_k->data().data() + krow * d + h * dh;
            for (std::size_t c = 0; c < dh; ++c) gk[c] += ds * qi[c];
          }
        }
      }
    }
  }
}

Tensor multi_head_attention(const Tensor& query, const Tensor& key, const Tensor& value,
                            const AttentionWeights& w, std::size_t heads, AttentionMask mask) {
  const std::size_t d = w.wq.cols();
  if (heads == 0 || d % heads != 0)
    throw ConfigError("attention: model dimension " + std::to_string(d) +
                      " is not divisible by " + std::to_string(heads) + " heads");
  const Tensor q = add_row(matmul(query, w.wq), w.bq);
  const Tensor k = add_row(matmul(key, w.wk), w.bk);
  const Tensor v = add_row(matmul(value, w.wv), w.bv);
  AttentionShape shape{1, q.rows(), k.rows(), heads};
  AttentionResult r = attention_core(q, k, v, shape, {}, mask == AttentionMask::causal);
  return add_row(matmul(r.output, w.wo), w.bo);
}

}  // namespace nmt::kernels
