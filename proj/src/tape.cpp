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

#include "nmt/tape.hpp"

#include <cmath>
#include <limits>
#include <memory>

#include "nmt/error.hpp"

namespace nmt {

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Var Tape::external(const Tensor& value, bool requires_grad) {
  Node n;
  n.external = &value;
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  Node n;
  n.owned = std::move(value);
  for (Var in : inputs) n.requires_grad = n.requires_grad || nodes_.at(in.id).requires_grad;
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.external ? *n.external : n.owned;
}

Tensor& Tape::grad_buffer(Var v) {
  Node& n = nodes_.at(v.id);
  if (n.grad.empty()) n.grad = Tensor(value(v).shape());
  return n.grad;
}

void Tape::backward(Var root) {
  if (value(root).size() != 1)
    throw DimensionError("backward: root must be a scalar, got " + shape_string(value(root).shape()));
  backward_ops_ = 0;
  if (!nodes_.at(root.id).requires_grad) return;
  grad_buffer(root).fill(Real(1));
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, n.grad);
    ++backward_ops_;
  }
}

namespace ad {

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
}

Tensor scalar(double v) { return Tensor({1}, {Real(v)}); }

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  Tensor out = kernels::matmul(t.value(a), t.value(b));
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) kernels::add_into(t.grad_buffer(a), kernels::matmul_nt(g, t.value(b)));
    if (t.requires_grad(b)) kernels::add_into(t.grad_buffer(b), kernels::matmul_tn(t.value(a), g));
  });
}

Var matmul_nt(Tape& t, Var a, Var b) {
  Tensor out = kernels::matmul_nt(t.value(a), t.value(b));
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) kernels::add_into(t.grad_buffer(a), kernels::matmul(g, t.value(b)));
    if (t.requires_grad(b)) kernels::add_into(t.grad_buffer(b), kernels::matmul_tn(g, t.value(a)));
  });
}

Var add(Tape& t, Var a, Var b) {
  Tensor out = kernels::add(t.value(a), t.value(b));
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) kernels::add_into(t.grad_buffer(a), g);
    if (t.requires_grad(b)) kernels::add_into(t.grad_buffer(b), g);
  });
}

Var add_row(Tape& t, Var a, Var row) {
  Tensor out = kernels::add_row(t.value(a), t.value(row));
  return t.record(std::move(out), {a, row}, [a, row](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) kernels::add_into(t.grad_buffer(a), g);
    if (t.requires_grad(row)) {
      Tensor& gr = t.grad_buffer(row);
      const std::size_t n = g.cols();
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t j = 0; j < n; ++j) gr[j] += g[r * n + j];
    }
  });
}

Var mul(Tape& t, Var a, Var b) {
  require_same(t.value(a), t.value(b), "mul");
  Tensor out = t.value(a);
  const Tensor& bv = t.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Tape& t, Var a, Real factor) {
  Tensor out = t.value(a);
  for (Real& v : out.data()) v *= factor;
  return t.record(std::move(out), {a}, [a, factor](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

Var relu(Tape& t, Var x) {
  return t.record(kernels::relu(t.value(x)), {x}, [x](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(x);
    Tensor& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > Real(0)) gx[i] += g[i];
  });
}

Var sigmoid(Tape& t, Var x) {
  Tensor out = kernels::sigmoid(t.value(x));
  auto saved = std::make_shared<Tensor>(out);
  return t.record(std::move(out), {x}, [x, saved](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x);
    const Tensor& y = *saved;
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (Real(1) - y[i]);
  });
}

Var gated_mix(Tape& t, Var gate, Var a, Var b) {
  const Tensor& f = t.value(gate);
  require_same(f, t.value(a), "gated_mix");
  require_same(f, t.value(b), "gated_mix");
  Tensor out(f.shape());
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f[i] * av[i] + (Real(1) - f[i]) * bv[i];
  return t.record(std::move(out), {gate, a, b}, [gate, a, b](Tape& t, const Tensor& g) {
    const Tensor& f = t.value(gate);
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    if (t.requires_grad(gate)) {
      Tensor& gf = t.grad_buffer(gate);
      for (std::size_t i = 0; i < g.size(); ++i) gf[i] += g[i] * (av[i] - bv[i]);
    }
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * f[i];
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * (Real(1) - f[i]);
    }
  });
}

Var layer_norm(Tape& t, Var x, Var gain, Var bias, Real eps) {
  auto stats = std::make_shared<kernels::LayerNormStats>();
  Tensor out = kernels::layer_norm(t.value(x), t.value(gain), t.value(bias), eps, stats.get());
  return t.record(std::move(out), {x, gain, bias}, [x, gain, bias, stats](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(x);
    const Tensor& gv = t.value(gain);
    const std::size_t d = xv.cols();
    Tensor* gx = t.requires_grad(x) ? &t.grad_buffer(x) : nullptr;
    Tensor* gg = t.requires_grad(gain) ? &t.grad_buffer(gain) : nullptr;
    Tensor* gb = t.requires_grad(bias) ? &t.grad_buffer(bias) : nullptr;
    std::vector<Real> xhat(d), dxhat(d);
    for (std::size_t r = 0; r < xv.rows(); ++r) {
      const Real mu = stats->mean[r], rstd = stats->rstd[r];
      double mean_dxhat = 0, mean_dxhat_xhat = 0;
      for (std::size_t j = 0; j < d; ++j) {
        const Real gr = g[r * d + j];
        xhat[j] = (xv[r * d + j] - mu) * rstd;
        dxhat[j] = gr * gv[j];
        if (gg) (*gg)[j] += gr * xhat[j];
        if (gb) (*gb)[j] += gr;
        mean_dxhat += dxhat[j];
        mean_dxhat_xhat += dxhat[j] * xhat[j];
      }
      if (!gx) continue;
      mean_dxhat /= double(d);
      mean_dxhat_xhat /= double(d);
      for (std::size_t j = 0; j < d; ++j)
        (*gx)[r * d + j] += rstd * (dxhat[j] - Real(mean_dxhat) - xhat[j] * Real(mean_dxhat_xhat));
    }
  });
}

Var softmax(Tape& t, Var x) {
  Tensor out = kernels::softmax(t.value(x));
  auto saved = std::make_shared<Tensor>(out);
  return t.record(std::move(out), {x}, [x, saved](Tape& t, const Tensor& g) {
    const Tensor& y = *saved;
    Tensor& gx = t.grad_buffer(x);
    const std::size_t n = y.cols();
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += double(g[r * n + j]) * y[r * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += y[r * n + j] * (g[r * n + j] - Real(dot));
    }
  });
}

Var gather_rows(Tape& t, Var table, std::vector<int> ids) {
  const Tensor& tv = t.value(table);
  const std::size_t d = tv.cols();
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || std::size_t(ids[i]) >= tv.rows())
      throw InputError("embedding id " + std::to_string(ids[i]) + " outside table of " +
                       std::to_string(tv.rows()) + " rows");
    std::copy_n(tv.data().data() + std::size_t(ids[i]) * d, d, out.data().data() + i * d);
  }
  return t.record(std::move(out), {table}, [table, ids = std::move(ids)](Tape& t, const Tensor& g) {
    Tensor& gt = t.grad_buffer(table);
    const std::size_t d = gt.cols();
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) gt[std::size_t(ids[i]) * d + j] += g[i * d + j];
  });
}

Var concat_cols(Tape& t, std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = t.value(parts[0]).rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    if (t.value(p).rows() != rows)
      throw DimensionError("concat_cols: row counts " + std::to_string(rows) + " and " +
                           std::to_string(t.value(p).rows()) + " differ");
    cols += t.value(p).cols();
  }
  Tensor out({rows, cols});
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor& pv = t.value(p);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(pv.data().data() + r * pv.cols(), pv.cols(), out.data().data() + r * cols + offset);
    offset += pv.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [inputs](Tape& t, const Tensor& g) {
    const std::size_t cols = g.cols();
    std::size_t offset = 0;
    for (Var p : inputs) {
      const std::size_t pc = t.value(p).cols();
      if (t.requires_grad(p)) {
        Tensor& gp = t.grad_buffer(p);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t j = 0; j < pc; ++j) gp[r * pc + j] += g[r * cols + offset + j];
      }
      offset += pc;
    }
  });
}

Var attention(Tape& t, Var q, Var k, Var v, const kernels::AttentionShape& shape,
              std::vector<std::uint8_t> key_mask, bool causal) {
  kernels::AttentionResult r =
      kernels::attention_core(t.value(q), t.value(k), t.value(v), shape, key_mask, causal);
  auto probs = std::make_shared<Tensor>(std::move(r.probs));
  return t.record(std::move(r.output), {q, k, v}, [q, k, v, shape, probs](Tape& t, const Tensor& g) {
    Tensor* gq = t.requires_grad(q) ? &t.grad_buffer(q) : nullptr;
    Tensor* gk = t.requires_grad(k) ? &t.grad_buffer(k) : nullptr;
    Tensor* gv = t.requires_grad(v) ? &t.grad_buffer(v) : nullptr;
    kernels::attention_core_backward(t.value(q), t.value(k), t.value(v), *probs, g, shape, gq, gk, gv);
  });
}

Var ssru_scan(Tape& t, Var forget, Var candidate, std::size_t batch, std::size_t steps) {
  const Tensor& f = t.value(forget);
  const Tensor& u = t.value(candidate);
  require_same(f, u, "ssru_scan");
  if (f.rows() != batch * steps)
    throw DimensionError("ssru_scan: " + std::to_string(f.rows()) + " rows for batch " +
                         std::to_string(batch) + " x " + std::to_string(steps) + " steps");
  const std::size_t d = f.cols();
  Tensor c(f.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t s = 0; s < steps; ++s) {
      const std::size_t row = b * steps + s;
      for (std::size_t j = 0; j < d; ++j) {
        const Real prev = s == 0 ? Real(0) : c[(row - 1) * d + j];
        const Real fv = f[row * d + j];
        c[row * d + j] = fv * prev + (Real(1) - fv) * u[row * d + j];
      }
    }
  }
  auto saved = std::make_shared<Tensor>(c);
  return t.record(std::move(c), {forget, candidate},
                  [forget, candidate, batch, steps, saved](Tape& t, const Tensor& g) {
                    const Tensor& f = t.value(forget);
                    const Tensor& u = t.value(candidate);
                    const Tensor& c = *saved;
                    const std::size_t d = f.cols();
                    Tensor* gf = t.requires_grad(forget) ? &t.grad_buffer(forget) : nullptr;
                    Tensor* gu = t.requires_grad(candidate) ? &t.grad_buffer(candidate) : nullptr;
                    std::vector<Real> carry(d);
                    for (std::size_t b = 0; b < batch; ++b) {
                      std::fill(carry.begin(), carry.end(), Real(0));
                      for (std::size_t s = steps; s-- > 0;) {
                        const std::size_t row = b * steps + s;
                        for (std::size_t j = 0; j < d; ++j) {
                          const std::size_t i = row * d + j;
                          const Real dc = g[i] + carry[j];
                          const Real prev = s == 0 ? Real(0) : c[i - d];
                          if (gf) (*gf)[i] += dc * (prev - u[i]);
                          if (gu) (*gu)[i] += dc * (Real(1) - f[i]);
                          carry[j] = dc * f[i];
                        }
                      }
                    }
                  });
}

Var max_pool(Tape& t, Var x, std::size_t batch, std::size_t len, std::vector<std::uint8_t> mask) {
  const Tensor& xv = t.value(x);
  if (xv.rows() != batch * len)
    throw DimensionError("max_pool: " + std::to_string(xv.rows()) + " rows for batch " +
                         std::to_string(batch) + " x " + std::to_string(len));
  const std::size_t d = xv.cols();
  Tensor out({batch, d});
  auto argmax = std::make_shared<std::vector<std::size_t>>(batch * d, 0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < d; ++j) {
      Real best = -std::numeric_limits<Real>::infinity();
      std::size_t arg = b * len;
      for (std::size_t s = 0; s < len; ++s) {
        if (!mask.empty() && !mask[b * len + s]) continue;
        const Real v = xv[(b * len + s) * d + j];
        if (v > best) {
          best = v;
          arg = b * len + s;
        }
      }
      out[b * d + j] = best == -std::numeric_limits<Real>::infinity() ? Real(0) : best;
      (*argmax)[b * d + j] = arg;
    }
  }
  return t.record(std::move(out), {x}, [x, argmax](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x);
    const std::size_t d = gx.cols();
    for (std::size_t i = 0; i < argmax->size(); ++i) gx[(*argmax)[i] * d + i % d] += g[i];
  });
}

Var sum(Tape& t, Var x) {
  double s = 0;
  for (Real v : t.value(x).data()) s += v;
  return t.record(scalar(s), {x}, [x](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x);
    for (Real& v : gx.data()) v += g[0];
  });
}

Var weighted_sum(Tape& t, Var x, Tensor weights) {
  const Tensor& xv = t.value(x);
  if (xv.size() != weights.size())
    throw DimensionError("weighted_sum: " + shape_string(xv.shape()) + " vs weights " +
                         shape_string(weights.shape()));
  double s = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) s += double(xv[i]) * weights[i];
  auto w = std::make_shared<Tensor>(std::move(weights));
  return t.record(scalar(s), {x}, [x, w](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0] * (*w)[i];
  });
}

Var smoothed_cross_entropy(Tape& t, Var logits, std::vector<int> targets, Real smoothing,
                           int ignore_id) {
  const Tensor& x = t.value(logits);
  if (targets.size() != x.rows())
    throw DimensionError("cross entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(x.rows()) + " rows of logits");
  const std::size_t n = x.cols();
  auto probs = std::make_shared<Tensor>(x.shape());
  double total = 0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    if (targets[r] == ignore_id) continue;
    if (targets[r] < 0 || std::size_t(targets[r]) >= n)
      throw InputError("cross entropy: target id " + std::to_string(targets[r]) +
                       " outside vocabulary of " + std::to_string(n));
    const Real* row = x.data().data() + r * n;
    Real m = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < n; ++j) m = std::max(m, row[j]);
    double z = 0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(double(row[j]) - m);
    const double lse = m + std::log(z);
    double sum_logits = 0;
    for (std::size_t j = 0; j < n; ++j) {
      sum_logits += row[j];
      (*probs)[r * n + j] = Real(std::exp(double(row[j]) - lse));
    }
    const double hit = row[targets[r]];
    total += lse - (1.0 - smoothing) * hit - smoothing / double(n) * sum_logits;
  }
  return t.record(scalar(total), {logits},
                  [logits, targets = std::move(targets), smoothing, ignore_id, probs](Tape& t, const Tensor& g) {
                    Tensor& gx = t.grad_buffer(logits);
                    const std::size_t n = gx.cols();
                    const Real uniform = smoothing / Real(n);
                    for (std::size_t r = 0; r < targets.size(); ++r) {
                      if (targets[r] == ignore_id) continue;
                      for (std::size_t j = 0; j < n; ++j) {
                        Real q = uniform;
                        if (int(j) == targets[r]) q += Real(1) - smoothing;
                        gx[r * n + j] += g[0] * ((*probs)[r * n + j] - q);
                      }
                    }
                  });
}

Var bce_with_logits(Tape& t, Var logits, Tensor targets) {
  const Tensor& x = t.value(logits);
  if (x.size() != targets.size())
    throw DimensionError("bce: logits " + shape_string(x.shape()) + " vs targets " +
                         shape_string(targets.shape()));
  double total = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i], z = targets[i];
    total += std::max(v, 0.0) - v * z + std::log1p(std::exp(-std::abs(v)));
  }
  auto z = std::make_shared<Tensor>(std::move(targets));
  return t.record(scalar(total), {logits}, [logits, z](Tape& t, const Tensor& g) {
    const Tensor& x = t.value(logits);
    Tensor& gx = t.grad_buffer(logits);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[0] * (kernels::sigmoid(x[i]) - (*z)[i]);
  });
}

}  // namespace ad
}  // namespace nmt
