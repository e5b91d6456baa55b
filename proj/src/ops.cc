#include <algorithm>
#include <cmath>
#include <limits>

#include "mctt/errors.h"
#include "mctt/tensor.h"

namespace mctt {

namespace {

// c[m x n] += a[m x k] * b[k x n]; accumulation over k is strictly ascending
// so that results do not depend on m or n.
void gemm_acc(const double* a, const double* b, double* c, std::size_t m,
              std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x n] += a[m x k] * b^T where b is [n x k].
void gemm_nt_acc(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c[i * n + j] += s;
    }
  }
}

// c[k x n] += a^T * b where a is [m x k], b is [m x n].
void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

std::size_t last_dim(const Tensor& x) {
  if (x.rank() == 0) throw DimensionError("rank-0 tensor has no last axis");
  return x.shape().back();
}

// Number of times b repeats inside a under trailing broadcast.
std::size_t broadcast_repeats(const Tensor& a, const Tensor& b,
                              const char* op) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (b.numel() == 1) return a.numel();
  bool suffix = sb.size() <= sa.size() &&
                std::equal(sb.rbegin(), sb.rend(), sa.rbegin());
  if (!suffix) {
    throw DimensionError(std::string(op) + ": cannot broadcast " +
                         shape_str(sb) + " onto " + shape_str(sa));
  }
  return a.numel() / b.numel();
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  auto y = out;
  return make_node(x.shape(), std::move(out), {x},
                   [x, y = std::move(y), deriv](const std::vector<double>& g,
                                                std::span<std::vector<double>*> in) {
                     if (!in[0]) return;
                     auto xv = x.values();
                     auto& dx = *in[0];
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       dx[i] += g[i] * deriv(xv[i], y[i]);
                     }
                   });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul: operands must have rank >= 2, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t k = a.shape().back();
  const std::size_t m = a.shape()[a.rank() - 2];
  if (b.shape()[b.rank() - 2] != k) {
    throw DimensionError("matmul: inner dimensions differ for " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t n = b.shape().back();
  std::size_t batch = a.numel() / (m * k);
  bool shared_b = b.rank() == 2;
  if (!shared_b) {
    Shape lead_a(a.shape().begin(), a.shape().end() - 2);
    Shape lead_b(b.shape().begin(), b.shape().end() - 2);
    if (lead_a != lead_b) {
      throw DimensionError("matmul: batch dimensions differ for " +
                           shape_str(a.shape()) + " and " +
                           shape_str(b.shape()));
    }
  }
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(n);
  std::vector<double> out(batch * m * n, 0.0);
  auto av = a.values();
  auto bv = b.values();
  if (shared_b) {
    gemm_acc(av.data(), bv.data(), out.data(), batch * m, k, n);
  } else {
    for (std::size_t s = 0; s < batch; ++s) {
      gemm_acc(av.data() + s * m * k, bv.data() + s * k * n,
               out.data() + s * m * n, m, k, n);
    }
  }
  return make_node(
      std::move(out_shape), std::move(out), {a, b},
      [a, b, batch, m, k, n, shared_b](const std::vector<double>& g,
                                       std::span<std::vector<double>*> in) {
        auto av = a.values();
        auto bv = b.values();
        if (shared_b) {
          if (in[0]) gemm_nt_acc(g.data(), bv.data(), in[0]->data(), batch * m, n, k);
          if (in[1]) gemm_tn_acc(av.data(), g.data(), in[1]->data(), batch * m, k, n);
          return;
        }
        for (std::size_t s = 0; s < batch; ++s) {
          const double* gs = g.data() + s * m * n;
          if (in[0]) {
            gemm_nt_acc(gs, bv.data() + s * k * n, in[0]->data() + s * m * k, m, n, k);
          }
          if (in[1]) {
            gemm_tn_acc(av.data() + s * m * k, gs, in[1]->data() + s * k * n, m, k, n);
          }
        }
      });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) {
    throw DimensionError("transpose: expected rank 2, got " + shape_str(a.shape()));
  }
  const std::size_t r = a.dim(0), c = a.dim(1);
  auto av = a.values();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return make_node({c, r}, std::move(out), {a},
                   [r, c](const std::vector<double>& g,
                          std::span<std::vector<double>*> in) {
                     if (!in[0]) return;
                     auto& d = *in[0];
                     for (std::size_t i = 0; i < r; ++i)
                       for (std::size_t j = 0; j < c; ++j) d[i * c + j] += g[j * r + i];
                   });
}

Tensor add(const Tensor& a, const Tensor& b) {
  const std::size_t reps = broadcast_repeats(a, b, "add");
  const std::size_t nb = b.numel();
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t r = 0; r < reps; ++r)
    for (std::size_t j = 0; j < nb; ++j) out[r * nb + j] = av[r * nb + j] + bv[j];
  return make_node(a.shape(), std::move(out), {a, b},
                   [reps, nb](const std::vector<double>& g,
                              std::span<std::vector<double>*> in) {
                     if (in[0]) {
                       auto& d = *in[0];
                       for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                     }
                     if (in[1]) {
                       auto& d = *in[1];
                       for (std::size_t r = 0; r < reps; ++r)
                         for (std::size_t j = 0; j < nb; ++j) d[j] += g[r * nb + j];
                     }
                   });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const std::size_t reps = broadcast_repeats(a, b, "sub");
  const std::size_t nb = b.numel();
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t r = 0; r < reps; ++r)
    for (std::size_t j = 0; j < nb; ++j) out[r * nb + j] = av[r * nb + j] - bv[j];
  return make_node(a.shape(), std::move(out), {a, b},
                   [reps, nb](const std::vector<double>& g,
                              std::span<std::vector<double>*> in) {
                     if (in[0]) {
                       auto& d = *in[0];
                       for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                     }
                     if (in[1]) {
                       auto& d = *in[1];
                       for (std::size_t r = 0; r < reps; ++r)
                         for (std::size_t j = 0; j < nb; ++j) d[j] -= g[r * nb + j];
                     }
                   });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const std::size_t reps = broadcast_repeats(a, b, "mul");
  const std::size_t nb = b.numel();
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t r = 0; r < reps; ++r)
    for (std::size_t j = 0; j < nb; ++j) out[r * nb + j] = av[r * nb + j] * bv[j];
  return make_node(a.shape(), std::move(out), {a, b},
                   [a, b, reps, nb](const std::vector<double>& g,
                                    std::span<std::vector<double>*> in) {
                     auto av = a.values();
                     auto bv = b.values();
                     for (std::size_t r = 0; r < reps; ++r) {
                       for (std::size_t j = 0; j < nb; ++j) {
                         const std::size_t i = r * nb + j;
                         if (in[0]) (*in[0])[i] += g[i] * bv[j];
                         if (in[1]) (*in[1])[j] += g[i] * av[i];
                       }
                     }
                   });
}

Tensor scale(const Tensor& a, double factor) {
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * factor;
  return make_node(a.shape(), std::move(out), {a},
                   [factor](const std::vector<double>& g,
                            std::span<std::vector<double>*> in) {
                     if (!in[0]) return;
                     auto& d = *in[0];
                     for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * factor;
                   });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor softmax_lastdim(const Tensor& x) {
  const std::size_t n = last_dim(x);
  if (n == 0) throw DimensionError("softmax over an empty axis");
  const std::size_t rows = x.numel() / n;
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * n;
    double* y = out.data() + r * n;
    double mx = row[0];
    for (std::size_t j = 0; j < n; ++j) {
      if (std::isnan(row[j])) throw NumericError("softmax: NaN input");
      mx = std::max(mx, row[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = std::exp(row[j] - mx);
      sum += y[j];
    }
    for (std::size_t j = 0; j < n; ++j) y[j] /= sum;
  }
  auto y = out;
  return make_node(x.shape(), std::move(out), {x},
                   [y = std::move(y), rows, n](const std::vector<double>& g,
                                               std::span<std::vector<double>*> in) {
                     if (!in[0]) return;
                     auto& d = *in[0];
                     for (std::size_t r = 0; r < rows; ++r) {
                       const std::size_t o = r * n;
                       double dot = 0.0;
                       for (std::size_t j = 0; j < n; ++j) dot += g[o + j] * y[o + j];
                       for (std::size_t j = 0; j < n; ++j) d[o + j] += y[o + j] * (g[o + j] - dot);
                     }
                   });
}

Tensor log_softmax_lastdim(const Tensor& x) {
  const std::size_t n = last_dim(x);
  if (n == 0) throw DimensionError("log_softmax over an empty axis");
  const std::size_t rows = x.numel() / n;
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * n;
    double* y = out.data() + r * n;
    double mx = row[0];
    for (std::size_t j = 0; j < n; ++j) {
      if (std::isnan(row[j])) throw NumericError("log_softmax: NaN input");
      mx = std::max(mx, row[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += std::exp(row[j] - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < n; ++j) y[j] = row[j] - lse;
  }
  auto y = out;
  return make_node(x.shape(), std::move(out), {x},
                   [y = std::move(y), rows, n](const std::vector<double>& g,
                                               std::span<std::vector<double>*> in) {
                     if (!in[0]) return;
                     auto& d = *in[0];
                     for (std::size_t r = 0; r < rows; ++r) {
                       const std::size_t o = r * n;
                       double gs = 0.0;
                       for (std::size_t j = 0; j < n; ++j) gs += g[o + j];
                       for (std::size_t j = 0; j < n; ++j) {
                         d[o + j] += g[o + j] - std::exp(y[o + j]) * gs;
                       }
                     }
                   });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  const std::size_t n = last_dim(x);
  if (gain.numel() != n || bias.numel() != n) {
    throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) +
                         " / bias " + shape_str(bias.shape()) +
                         " do not match last axis of " + shape_str(x.shape()));
  }
  if (!(eps > 0.0)) eps = kDefaultLayerNormEps;
  const std::size_t rows = x.numel() / n;
  auto xv = x.values();
  auto gv = gain.values();
  auto bv = bias.values();
  std::vector<double> out(xv.size());
  std::vector<double> xhat(xv.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (row[j] - mean) * is;
      xhat[r * n + j] = h;
      out[r * n + j] = h * gv[j] + bv[j];
    }
  }
  return make_node(
      x.shape(), std::move(out), {x, gain, bias},
      [gain, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, n](
          const std::vector<double>& g, std::span<std::vector<double>*> in) {
        auto gv = gain.values();
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t o = r * n;
          if (in[1] || in[2]) {
            for (std::size_t j = 0; j < n; ++j) {
              if (in[1]) (*in[1])[j] += g[o + j] * xhat[o + j];
              if (in[2]) (*in[2])[j] += g[o + j];
            }
          }
          if (!in[0]) continue;
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double dh = g[o + j] * gv[j];
            mean_d += dh;
            mean_dx += dh * xhat[o + j];
          }
          mean_d *= inv_n;
          mean_dx *= inv_n;
          auto& d = *in[0];
          for (std::size_t j = 0; j < n; ++j) {
            const double dh = g[o + j] * gv[j];
            d[o + j] += inv_std[r] * (dh - mean_d - xhat[o + j] * mean_dx);
          }
        }
      });
}

Tensor concat_lastdim(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_lastdim: no inputs");
  Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape pl(p.shape().begin(), p.shape().end() - 1);
    if (pl != lead) {
      throw DimensionError("concat_lastdim: " + shape_str(parts[0].shape()) +
                           " vs " + shape_str(p.shape()));
    }
    widths.push_back(p.shape().back());
    total += p.shape().back();
  }
  const std::size_t rows = shape_numel(lead);
  std::vector<double> out(rows * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto pv = parts[k].values();
    const std::size_t w = widths[k];
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(pv.data() + r * w, w, out.data() + r * total + off);
    off += w;
  }
  Shape out_shape = lead;
  out_shape.push_back(total);
  return make_node(std::move(out_shape), std::move(out), parts,
                   [widths, rows, total](const std::vector<double>& g,
                                         std::span<std::vector<double>*> in) {
                     std::size_t off = 0;
                     for (std::size_t k = 0; k < widths.size(); ++k) {
                       const std::size_t w = widths[k];
                       if (in[k]) {
                         auto& d = *in[k];
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t j = 0; j < w; ++j)
                             d[r * w + j] += g[r * total + off + j];
                       }
                       off += w;
                     }
                   });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  std::vector<double> out;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    Shape pt(p.shape().begin() + 1, p.shape().end());
    if (pt != tail) {
      throw DimensionError("concat_rows: " + shape_str(parts[0].shape()) +
                           " vs " + shape_str(p.shape()));
    }
    rows += p.dim(0);
    sizes.push_back(p.numel());
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  Shape out_shape{rows};
  out_shape.insert(out_shape.end(), tail.begin(), tail.end());
  return make_node(std::move(out_shape), std::move(out), parts,
                   [sizes](const std::vector<double>& g,
                           std::span<std::vector<double>*> in) {
                     std::size_t off = 0;
                     for (std::size_t k = 0; k < sizes.size(); ++k) {
                       if (in[k]) {
                         auto& d = *in[k];
                         for (std::size_t i = 0; i < sizes[k]; ++i) d[i] += g[off + i];
                       }
                       off += sizes[k];
                     }
                   });
}

Tensor stack(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("stack: no inputs");
  const Shape& s0 = parts[0].shape();
  std::vector<double> out;
  out.reserve(parts.size() * parts[0].numel());
  for (const auto& p : parts) {
    if (p.shape() != s0) {
      throw DimensionError("stack: " + shape_str(s0) + " vs " + shape_str(p.shape()));
    }
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  Shape out_shape{parts.size()};
  out_shape.insert(out_shape.end(), s0.begin(), s0.end());
  const std::size_t each = parts[0].numel();
  return make_node(std::move(out_shape), std::move(out), parts,
                   [each](const std::vector<double>& g,
                          std::span<std::vector<double>*> in) {
                     for (std::size_t k = 0; k < in.size(); ++k) {
                       if (!in[k]) continue;
                       auto& d = *in[k];
                       for (std::size_t i = 0; i < each; ++i) d[i] += g[k * each + i];
                     }
                   });
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  const auto& s = x.shape();
  if (axis >= s.size()) {
    throw DimensionError("mean_axis: axis " + std::to_string(axis) +
                         " out of range for " + shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  if (len == 0) throw DimensionError("mean_axis over an empty axis");
  auto xv = x.values();
  std::vector<double> out(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < len; ++k)
      for (std::size_t i = 0; i < inner; ++i)
        out[o * inner + i] += xv[(o * len + k) * inner + i];
  for (auto& v : out) v /= static_cast<double>(len);
  const double inv = 1.0 / static_cast<double>(len);
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out_shape.push_back(s[i]);
  if (out_shape.empty()) out_shape.push_back(1);
  return make_node(std::move(out_shape), std::move(out), {x},
                   [outer, inner, len, inv](const std::vector<double>& g,
                                            std::span<std::vector<double>*> in) {
                     if (!in[0]) return;
                     auto& d = *in[0];
                     for (std::size_t o = 0; o < outer; ++o)
                       for (std::size_t k = 0; k < len; ++k)
                         for (std::size_t i = 0; i < inner; ++i)
                           d[(o * len + k) * inner + i] += g[o * inner + i] * inv;
                   });
}

Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_node({1}, {s}, {x},
                   [](const std::vector<double>& g, std::span<std::vector<double>*> in) {
                     if (!in[0]) return;
                     for (auto& d : *in[0]) d += g[0];
                   });
}

Tensor slice_lastdim(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t n = last_dim(x);
  if (begin > end || end > n) {
    throw DimensionError("slice_lastdim [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of range for " +
                         shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / n;
  const std::size_t w = end - begin;
  auto xv = x.values();
  std::vector<double> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(xv.data() + r * n + begin, w, out.data() + r * w);
  Shape out_shape = x.shape();
  out_shape.back() = w;
  return make_node(std::move(out_shape), std::move(out), {x},
                   [rows, n, w, begin](const std::vector<double>& g,
                                       std::span<std::vector<double>*> in) {
                     if (!in[0]) return;
                     auto& d = *in[0];
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t j = 0; j < w; ++j) d[r * n + begin + j] += g[r * w + j];
                   });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() == 0 || begin > end || end > x.dim(0)) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of range for " +
                         shape_str(x.shape()));
  }
  const std::size_t row = x.numel() / x.dim(0);
  auto xv = x.values();
  std::vector<double> out(xv.begin() + begin * row, xv.begin() + end * row);
  Shape out_shape = x.shape();
  out_shape[0] = end - begin;
  return make_node(std::move(out_shape), std::move(out), {x},
                   [row, begin](const std::vector<double>& g,
                                std::span<std::vector<double>*> in) {
                     if (!in[0]) return;
                     auto& d = *in[0];
                     for (std::size_t i = 0; i < g.size(); ++i) d[begin * row + i] += g[i];
                   });
}

Tensor masked_fill(const Tensor& x, std::span<const std::uint8_t> allow,
                   double value) {
  if (allow.size() != x.numel()) {
    throw DimensionError("masked_fill: mask of " + std::to_string(allow.size()) +
                         " entries for tensor " + shape_str(x.shape()));
  }
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = allow[i] ? xv[i] : value;
  std::vector<std::uint8_t> keep(allow.begin(), allow.end());
  return make_node(x.shape(), std::move(out), {x},
                   [keep = std::move(keep)](const std::vector<double>& g,
                                            std::span<std::vector<double>*> in) {
                     if (!in[0]) return;
                     auto& d = *in[0];
                     for (std::size_t i = 0; i < g.size(); ++i)
                       if (keep[i]) d[i] += g[i];
                   });
}

Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids) {
  if (table.rank() != 2) {
    throw DimensionError("embedding: table must be rank 2, got " +
                         shape_str(table.shape()));
  }
  const std::size_t n = table.dim(0), d = table.dim(1);
  auto tv = table.values();
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= n) {
      throw DimensionError("embedding: id " + std::to_string(ids[i]) +
                           " outside table of " + std::to_string(n) + " rows");
    }
    std::copy_n(tv.data() + ids[i] * d, d, out.data() + i * d);
  }
  std::vector<std::int32_t> rows(ids.begin(), ids.end());
  return make_node({ids.size(), d}, std::move(out), {table},
                   [rows = std::move(rows), d](const std::vector<double>& g,
                                               std::span<std::vector<double>*> in) {
                     if (!in[0]) return;
                     auto& t = *in[0];
                     for (std::size_t i = 0; i < rows.size(); ++i)
                       for (std::size_t j = 0; j < d; ++j) t[rows[i] * d + j] += g[i * d + j];
                   });
}

Tensor pair_concat(const Tensor& left, const Tensor& right) {
  if (left.rank() != 2 || right.rank() != 2) {
    throw DimensionError("pair_concat: expected rank-2 inputs, got " +
                         shape_str(left.shape()) + " and " +
                         shape_str(right.shape()));
  }
  const std::size_t t = left.dim(0), a = left.dim(1);
  const std::size_t u = right.dim(0), b = right.dim(1);
  const std::size_t w = a + b;
  auto lv = left.values();
  auto rv = right.values();
  std::vector<double> out(t * u * w);
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < u; ++j) {
      double* dst = out.data() + (i * u + j) * w;
      std::copy_n(lv.data() + i * a, a, dst);
      std::copy_n(rv.data() + j * b, b, dst + a);
    }
  }
  return make_node({t, u, w}, std::move(out), {left, right},
                   [t, u, a, b, w](const std::vector<double>& g,
                                   std::span<std::vector<double>*> in) {
                     for (std::size_t i = 0; i < t; ++i) {
                       for (std::size_t j = 0; j < u; ++j) {
                         const double* src = g.data() + (i * u + j) * w;
                         if (in[0])
                           for (std::size_t k = 0; k < a; ++k) (*in[0])[i * a + k] += src[k];
                         if (in[1])
                           for (std::size_t k = 0; k < b; ++k) (*in[1])[j * b + k] += src[a + k];
                       }
                     }
                   });
}

}  // namespace mctt
