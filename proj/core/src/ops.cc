// Copyright 2026 The poet Authors. All Rights Reserved.
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

#include "poet/ops.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "poet/error.h"

namespace poet::ad {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMatrix = Eigen::Map<RowMatrix>;
using ConstMapMatrix = Eigen::Map<const RowMatrix>;

ConstMapMatrix AsMatrix(const Tensor& t) {
  return ConstMapMatrix(t.data().data(), t.dim(0), t.dim(1));
}

[[noreturn]] void ShapeFail(const char* op, const Shape& a, const Shape& b) {
  throw Error(ErrorCode::kShapeMismatch,
              std::string(op) + ": " + ShapeString(a) + " vs " + ShapeString(b));
}

void RequireRank(const char* op, const Var& a, int rank) {
  if (a.value().rank() != rank) {
    throw Error(ErrorCode::kShapeMismatch, std::string(op) + ": expected rank " +
                                               std::to_string(rank) + ", got " +
                                               ShapeString(a.shape()));
  }
}

void RequireSameShape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) ShapeFail(op, a.shape(), b.shape());
}

Tape& TapeOf(const Var& a) {
  if (!a.valid()) throw Error(ErrorCode::kNotRecorded, "operand is not recorded on a tape");
  return *a.tape();
}

// Elementwise unary op: f gives the value, df(x, y) the local derivative.
template <typename F, typename DF>
Var Unary(const Var& a, F f, DF df) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const int ia = a.id();
  const int64_t n = x.size();
  Tape& tape = TapeOf(a);
  const int out_id = static_cast<int>(tape.size());
  return tape.Record(std::move(y), {a}, [ia, n, out_id, df](Tape& t, std::span<const double> g) {
    double* ga = t.GradBuffer(ia);
    if (!ga) return;
    const Tensor& x = t.Value(ia);
    const Tensor& y = t.Value(out_id);
    for (int64_t i = 0; i < n; ++i) ga[i] += g[static_cast<size_t>(i)] * df(x[i], y[i]);
  });
}

}  // namespace

Var Add(const Var& a, const Var& b) {
  RequireSameShape("add", a, b);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) y[i] = x[i] + z[i];
  const int ia = a.id(), ib = b.id();
  return TapeOf(a).Record(std::move(y), {a, b}, [ia, ib](Tape& t, std::span<const double> g) {
    for (int id : {ia, ib}) {
      if (double* gx = t.GradBuffer(id)) {
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
    }
  });
}

Var Sub(const Var& a, const Var& b) {
  RequireSameShape("sub", a, b);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) y[i] = x[i] - z[i];
  const int ia = a.id(), ib = b.id();
  return TapeOf(a).Record(std::move(y), {a, b}, [ia, ib](Tape& t, std::span<const double> g) {
    if (double* ga = t.GradBuffer(ia)) {
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (double* gb = t.GradBuffer(ib)) {
      for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var Mul(const Var& a, const Var& b) {
  RequireSameShape("mul", a, b);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) y[i] = x[i] * z[i];
  const int ia = a.id(), ib = b.id();
  return TapeOf(a).Record(std::move(y), {a, b}, [ia, ib](Tape& t, std::span<const double> g) {
    const Tensor& x = t.Value(ia);
    const Tensor& z = t.Value(ib);
    if (double* ga = t.GradBuffer(ia)) {
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * z[static_cast<int64_t>(i)];
    }
    if (double* gb = t.GradBuffer(ib)) {
      for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[static_cast<int64_t>(i)];
    }
  });
}

Var Scale(const Var& a, double factor) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) y[i] = x[i] * factor;
  const int ia = a.id();
  return TapeOf(a).Record(std::move(y), {a}, [ia, factor](Tape& t, std::span<const double> g) {
    if (double* ga = t.GradBuffer(ia)) {
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    }
  });
}

Var AddRowVector(const Var& a, const Var& b) {
  RequireRank("add_row_vector", a, 2);
  const int64_t rows = a.value().dim(0), cols = a.value().dim(1);
  if (b.value().size() != cols) ShapeFail("add_row_vector", a.shape(), b.shape());
  const Tensor& x = a.value();
  const Tensor& v = b.value();
  Tensor y(x.shape());
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < cols; ++c) y[r * cols + c] = x[r * cols + c] + v[c];
  }
  const int ia = a.id(), ib = b.id();
  return TapeOf(a).Record(std::move(y), {a, b},
                          [ia, ib, rows, cols](Tape& t, std::span<const double> g) {
                            if (double* ga = t.GradBuffer(ia)) {
                              for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                            }
                            if (double* gb = t.GradBuffer(ib)) {
                              for (int64_t r = 0; r < rows; ++r) {
                                for (int64_t c = 0; c < cols; ++c) {
                                  gb[c] += g[static_cast<size_t>(r * cols + c)];
                                }
                              }
                            }
                          });
}

Var MatMul(const Var& a, const Var& b) {
  RequireRank("matmul", a, 2);
  RequireRank("matmul", b, 2);
  const int64_t m = a.value().dim(0), k = a.value().dim(1), n = b.value().dim(1);
  if (b.value().dim(0) != k) ShapeFail("matmul", a.shape(), b.shape());
  Tensor y({m, n});
  MapMatrix(y.data().data(), m, n).noalias() = AsMatrix(a.value()) * AsMatrix(b.value());
  const int ia = a.id(), ib = b.id();
  return TapeOf(a).Record(std::move(y), {a, b},
                          [ia, ib, m, k, n](Tape& t, std::span<const double> g) {
                            ConstMapMatrix gm(g.data(), m, n);
                            const double bias = testing::BackwardCorruption() ? 1e-3 : 0.0;
                            if (double* ga = t.GradBuffer(ia)) {
                              MapMatrix(ga, m, k).noalias() +=
                                  gm * AsMatrix(t.Value(ib)).transpose();
                              if (bias != 0.0) ga[0] += bias;
                            }
                            if (double* gb = t.GradBuffer(ib)) {
                              MapMatrix(gb, k, n).noalias() +=
                                  AsMatrix(t.Value(ia)).transpose() * gm;
                            }
                          });
}

Var MatMulTransposed(const Var& a, const Var& b) {
  RequireRank("matmul_transposed", a, 2);
  RequireRank("matmul_transposed", b, 2);
  const int64_t m = a.value().dim(0), k = a.value().dim(1), n = b.value().dim(0);
  if (b.value().dim(1) != k) ShapeFail("matmul_transposed", a.shape(), b.shape());
  Tensor y({m, n});
  MapMatrix(y.data().data(), m, n).noalias() =
      AsMatrix(a.value()) * AsMatrix(b.value()).transpose();
  const int ia = a.id(), ib = b.id();
  return TapeOf(a).Record(std::move(y), {a, b},
                          [ia, ib, m, k, n](Tape& t, std::span<const double> g) {
                            ConstMapMatrix gm(g.data(), m, n);
                            if (double* ga = t.GradBuffer(ia)) {
                              MapMatrix(ga, m, k).noalias() += gm * AsMatrix(t.Value(ib));
                            }
                            if (double* gb = t.GradBuffer(ib)) {
                              MapMatrix(gb, n, k).noalias() +=
                                  gm.transpose() * AsMatrix(t.Value(ia));
                            }
                          });
}

Var Transpose(const Var& a) {
  RequireRank("transpose", a, 2);
  const int64_t m = a.value().dim(0), n = a.value().dim(1);
  Tensor y({n, m});
  MapMatrix(y.data().data(), n, m) = AsMatrix(a.value()).transpose();
  const int ia = a.id();
  return TapeOf(a).Record(std::move(y), {a}, [ia, m, n](Tape& t, std::span<const double> g) {
    if (double* ga = t.GradBuffer(ia)) {
      MapMatrix(ga, m, n) += ConstMapMatrix(g.data(), n, m).transpose();
    }
  });
}

Var Reshape(const Var& a, Shape shape) {
  Tensor y = a.value().Reshaped(std::move(shape));
  const int ia = a.id();
  return TapeOf(a).Record(std::move(y), {a}, [ia](Tape& t, std::span<const double> g) {
    if (double* ga = t.GradBuffer(ia)) {
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
  });
}

Var Concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw Error(ErrorCode::kShapeMismatch, "concat of zero operands");
  if (axis != 0 && axis != 1) throw Error(ErrorCode::kShapeMismatch, "concat axis must be 0 or 1");
  for (const Var& p : parts) RequireRank("concat", p, 2);
  const int other = 1 - axis;
  const int64_t fixed = parts[0].value().dim(other);
  int64_t total = 0;
  std::vector<int64_t> extents;
  std::vector<int> ids;
  for (const Var& p : parts) {
    if (p.value().dim(other) != fixed) ShapeFail("concat", parts[0].shape(), p.shape());
    extents.push_back(p.value().dim(axis));
    ids.push_back(p.id());
    total += p.value().dim(axis);
  }
  const int64_t rows = axis == 0 ? total : fixed;
  const int64_t cols = axis == 0 ? fixed : total;
  Tensor y({rows, cols});
  int64_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& x = p.value();
    for (int64_t r = 0; r < x.dim(0); ++r) {
      for (int64_t c = 0; c < x.dim(1); ++c) {
        const int64_t rr = axis == 0 ? r + offset : r;
        const int64_t cc = axis == 0 ? c : c + offset;
        y[rr * cols + cc] = x[r * x.dim(1) + c];
      }
    }
    offset += x.dim(axis);
  }
  return TapeOf(parts[0]).Record(
      std::move(y), parts,
      [ids, extents, axis, fixed, cols](Tape& t, std::span<const double> g) {
        int64_t offset = 0;
        for (size_t p = 0; p < ids.size(); ++p) {
          const int64_t pr = axis == 0 ? extents[p] : fixed;
          const int64_t pc = axis == 0 ? fixed : extents[p];
          if (double* gp = t.GradBuffer(ids[p])) {
            for (int64_t r = 0; r < pr; ++r) {
              for (int64_t c = 0; c < pc; ++c) {
                const int64_t rr = axis == 0 ? r + offset : r;
                const int64_t cc = axis == 0 ? c : c + offset;
                gp[r * pc + c] += g[static_cast<size_t>(rr * cols + cc)];
              }
            }
          }
          offset += extents[p];
        }
      });
}

Var Slice(const Var& a, int axis, int64_t begin, int64_t end) {
  RequireRank("slice", a, 2);
  if (axis != 0 && axis != 1) throw Error(ErrorCode::kShapeMismatch, "slice axis must be 0 or 1");
  const int64_t rows = a.value().dim(0), cols = a.value().dim(1);
  const int64_t extent = a.value().dim(axis);
  if (begin < 0 || end > extent || begin > end) {
    throw Error(ErrorCode::kShapeMismatch, "slice [" + std::to_string(begin) + ", " +
                                               std::to_string(end) + ") out of range for " +
                                               ShapeString(a.shape()));
  }
  const int64_t out_rows = axis == 0 ? end - begin : rows;
  const int64_t out_cols = axis == 0 ? cols : end - begin;
  const int64_t r0 = axis == 0 ? begin : 0;
  const int64_t c0 = axis == 0 ? 0 : begin;
  Tensor y({out_rows, out_cols});
  const Tensor& x = a.value();
  for (int64_t r = 0; r < out_rows; ++r) {
    for (int64_t c = 0; c < out_cols; ++c) y[r * out_cols + c] = x[(r + r0) * cols + c + c0];
  }
  const int ia = a.id();
  return TapeOf(a).Record(
      std::move(y), {a},
      [ia, out_rows, out_cols, r0, c0, cols](Tape& t, std::span<const double> g) {
        if (double* ga = t.GradBuffer(ia)) {
          for (int64_t r = 0; r < out_rows; ++r) {
            for (int64_t c = 0; c < out_cols; ++c) {
              ga[(r + r0) * cols + c + c0] += g[static_cast<size_t>(r * out_cols + c)];
            }
          }
        }
      });
}

Var GatherRows(const Var& a, std::span<const int> rows) {
  RequireRank("gather_rows", a, 2);
  const int64_t n = a.value().dim(0), cols = a.value().dim(1);
  std::vector<int> idx(rows.begin(), rows.end());
  Tensor y({static_cast<int64_t>(idx.size()), cols});
  const Tensor& x = a.value();
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= n) {
      throw Error(ErrorCode::kShapeMismatch,
                  "gather_rows index " + std::to_string(idx[i]) + " out of range for " +
                      ShapeString(a.shape()));
    }
    for (int64_t c = 0; c < cols; ++c) {
      y[static_cast<int64_t>(i) * cols + c] = x[idx[i] * cols + c];
    }
  }
  const int ia = a.id();
  return TapeOf(a).Record(std::move(y), {a},
                          [ia, idx = std::move(idx), cols](Tape& t, std::span<const double> g) {
                            if (double* ga = t.GradBuffer(ia)) {
                              for (size_t i = 0; i < idx.size(); ++i) {
                                for (int64_t c = 0; c < cols; ++c) {
                                  ga[idx[i] * cols + c] +=
                                      g[i * static_cast<size_t>(cols) + static_cast<size_t>(c)];
                                }
                              }
                            }
                          });
}

Var Relu(const Var& a) {
  return Unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var Sigmoid(const Var& a) {
  return Unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var Tanh(const Var& a) {
  return Unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var Abs(const Var& a) {
  return Unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var Square(const Var& a) {
  return Unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var ClampedLog(const Var& a, double floor) {
  return Unary(
      a, [floor](double x) { return std::log(std::max(x, floor)); },
      [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

Var Softmax(const Var& a, int axis) {
  RequireRank("softmax", a, 2);
  if (axis != 0 && axis != 1) throw Error(ErrorCode::kShapeMismatch, "softmax axis must be 0 or 1");
  const int64_t rows = a.value().dim(0), cols = a.value().dim(1);
  // Walk either rows (axis 1) or columns (axis 0) as independent groups.
  const int64_t groups = axis == 1 ? rows : cols;
  const int64_t len = axis == 1 ? cols : rows;
  const int64_t group_stride = axis == 1 ? cols : 1;
  const int64_t elem_stride = axis == 1 ? 1 : cols;
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (int64_t gi = 0; gi < groups; ++gi) {
    const int64_t base = gi * group_stride;
    double mx = -INFINITY;
    for (int64_t j = 0; j < len; ++j) mx = std::max(mx, x[base + j * elem_stride]);
    double total = 0.0;
    for (int64_t j = 0; j < len; ++j) {
      const double e = std::exp(x[base + j * elem_stride] - mx);
      y[base + j * elem_stride] = e;
      total += e;
    }
    for (int64_t j = 0; j < len; ++j) y[base + j * elem_stride] /= total;
  }
  const int ia = a.id();
  Tape& tape = TapeOf(a);
  const int out_id = static_cast<int>(tape.size());
  return tape.Record(
      std::move(y), {a},
      [ia, out_id, groups, len, group_stride, elem_stride](Tape& t, std::span<const double> g) {
        double* ga = t.GradBuffer(ia);
        if (!ga) return;
        const Tensor& y = t.Value(out_id);
        for (int64_t gi = 0; gi < groups; ++gi) {
          const int64_t base = gi * group_stride;
          double dot = 0.0;
          for (int64_t j = 0; j < len; ++j) {
            const int64_t k = base + j * elem_stride;
            dot += g[static_cast<size_t>(k)] * y[k];
          }
          for (int64_t j = 0; j < len; ++j) {
            const int64_t k = base + j * elem_stride;
            ga[k] += y[k] * (g[static_cast<size_t>(k)] - dot);
          }
        }
      });
}

Var LayerNorm(const Var& x, const Var& gain, const Var& bias, double eps) {
  RequireRank("layer_norm", x, 2);
  const int64_t rows = x.value().dim(0), cols = x.value().dim(1);
  if (gain.value().size() != cols) ShapeFail("layer_norm gain", x.shape(), gain.shape());
  if (bias.value().size() != cols) ShapeFail("layer_norm bias", x.shape(), bias.shape());
  const Tensor& xv = x.value();
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  Tensor y(xv.shape());
  std::vector<double> normalized(static_cast<size_t>(rows * cols));
  std::vector<double> inv_std(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (int64_t c = 0; c < cols; ++c) mean += xv[r * cols + c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (int64_t c = 0; c < cols; ++c) {
      const double d = xv[r * cols + c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(r)] = is;
    for (int64_t c = 0; c < cols; ++c) {
      const double xh = (xv[r * cols + c] - mean) * is;
      normalized[static_cast<size_t>(r * cols + c)] = xh;
      y[r * cols + c] = xh * gv[c] + bv[c];
    }
  }
  const int ix = x.id(), ig = gain.id(), ib = bias.id();
  return TapeOf(x).Record(
      std::move(y), {x, gain, bias},
      [ix, ig, ib, rows, cols, normalized = std::move(normalized),
       inv_std = std::move(inv_std)](Tape& t, std::span<const double> g) {
        const Tensor& gv = t.Value(ig);
        if (double* gg = t.GradBuffer(ig)) {
          for (int64_t r = 0; r < rows; ++r) {
            for (int64_t c = 0; c < cols; ++c) {
              const size_t k = static_cast<size_t>(r * cols + c);
              gg[c] += g[k] * normalized[k];
            }
          }
        }
        if (double* gb = t.GradBuffer(ib)) {
          for (int64_t r = 0; r < rows; ++r) {
            for (int64_t c = 0; c < cols; ++c) gb[c] += g[static_cast<size_t>(r * cols + c)];
          }
        }
        if (double* gx = t.GradBuffer(ix)) {
          const double inv_n = 1.0 / static_cast<double>(cols);
          for (int64_t r = 0; r < rows; ++r) {
            double mean_dxh = 0.0, mean_dxh_xh = 0.0;
            for (int64_t c = 0; c < cols; ++c) {
              const size_t k = static_cast<size_t>(r * cols + c);
              const double dxh = g[k] * gv[c];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * normalized[k];
            }
            mean_dxh *= inv_n;
            mean_dxh_xh *= inv_n;
            const double is = inv_std[static_cast<size_t>(r)];
            for (int64_t c = 0; c < cols; ++c) {
              const size_t k = static_cast<size_t>(r * cols + c);
              const double dxh = g[k] * gv[c];
              gx[k] += is * (dxh - mean_dxh - normalized[k] * mean_dxh_xh);
            }
          }
        }
      });
}

Var Dropout(const Var& a, double rate, bool train, Rng& rng) {
  if (!train || rate <= 0.0) return a;
  if (rate >= 1.0) throw Error(ErrorCode::kInvalidConfig, "dropout rate must be < 1");
  const Tensor& x = a.value();
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(static_cast<size_t>(x.size()));
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) {
    const double m = rng.Uniform() < rate ? 0.0 : keep_scale;
    mask[static_cast<size_t>(i)] = m;
    y[i] = x[i] * m;
  }
  const int ia = a.id();
  return TapeOf(a).Record(std::move(y), {a},
                          [ia, mask = std::move(mask)](Tape& t, std::span<const double> g) {
                            if (double* ga = t.GradBuffer(ia)) {
                              for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
                            }
                          });
}

Var Sum(const Var& a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  const int ia = a.id();
  return TapeOf(a).Record(Tensor::Scalar(total), {a}, [ia](Tape& t, std::span<const double> g) {
    if (double* ga = t.GradBuffer(ia)) {
      const int64_t n = t.Value(ia).size();
      for (int64_t i = 0; i < n; ++i) ga[i] += g[0];
    }
  });
}

Var Mean(const Var& a) {
  const int64_t n = a.value().size();
  if (n == 0) throw Error(ErrorCode::kShapeMismatch, "mean of an empty tensor");
  return Scale(Sum(a), 1.0 / static_cast<double>(n));
}

Var Conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int padding) {
  RequireRank("conv2d input", x, 3);
  RequireRank("conv2d weight", weight, 4);
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const int64_t channels = xv.dim(0), height = xv.dim(1), width = xv.dim(2);
  const int64_t out_channels = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  if (wv.dim(1) != channels) ShapeFail("conv2d", x.shape(), weight.shape());
  if (bias.value().size() != out_channels) ShapeFail("conv2d bias", weight.shape(), bias.shape());
  if (stride < 1) throw Error(ErrorCode::kShapeMismatch, "conv2d stride must be >= 1");
  const int64_t out_h = (height + 2 * padding - kh) / stride + 1;
  const int64_t out_w = (width + 2 * padding - kw) / stride + 1;
  if (out_h <= 0 || out_w <= 0) ShapeFail("conv2d", x.shape(), weight.shape());
  const int64_t patch = channels * kh * kw;
  const int64_t positions = out_h * out_w;

  // im2col: column p holds the receptive field of output position p.
  RowMatrix cols = RowMatrix::Zero(patch, positions);
  for (int64_t c = 0; c < channels; ++c) {
    for (int64_t i = 0; i < kh; ++i) {
      for (int64_t j = 0; j < kw; ++j) {
        const int64_t row = (c * kh + i) * kw + j;
        for (int64_t oy = 0; oy < out_h; ++oy) {
          const int64_t iy = oy * stride - padding + i;
          if (iy < 0 || iy >= height) continue;
          for (int64_t ox = 0; ox < out_w; ++ox) {
            const int64_t ix = ox * stride - padding + j;
            if (ix < 0 || ix >= width) continue;
            cols(row, oy * out_w + ox) = xv[(c * height + iy) * width + ix];
          }
        }
      }
    }
  }
  Tensor y({out_channels, out_h, out_w});
  MapMatrix ym(y.data().data(), out_channels, positions);
  ym.noalias() = ConstMapMatrix(wv.data().data(), out_channels, patch) * cols;
  const Tensor& bv = bias.value();
  for (int64_t o = 0; o < out_channels; ++o) ym.row(o).array() += bv[o];

  const int ix = x.id(), iw = weight.id(), ib = bias.id();
  return TapeOf(x).Record(
      std::move(y), {x, weight, bias},
      [=, cols = std::move(cols)](Tape& t, std::span<const double> g) {
        ConstMapMatrix gm(g.data(), out_channels, positions);
        if (double* gw = t.GradBuffer(iw)) {
          MapMatrix(gw, out_channels, patch).noalias() += gm * cols.transpose();
        }
        if (double* gb = t.GradBuffer(ib)) {
          for (int64_t o = 0; o < out_channels; ++o) gb[o] += gm.row(o).sum();
        }
        if (double* gx = t.GradBuffer(ix)) {
          RowMatrix gcols = ConstMapMatrix(t.Value(iw).data().data(), out_channels, patch)
                                .transpose() *
                            gm;
          for (int64_t c = 0; c < channels; ++c) {
            for (int64_t i = 0; i < kh; ++i) {
              for (int64_t j = 0; j < kw; ++j) {
                const int64_t row = (c * kh + i) * kw + j;
                for (int64_t oy = 0; oy < out_h; ++oy) {
                  const int64_t iy = oy * stride - padding + i;
                  if (iy < 0 || iy >= height) continue;
                  for (int64_t ox = 0; ox < out_w; ++ox) {
                    const int64_t ixx = ox * stride - padding + j;
                    if (ixx < 0 || ixx >= width) continue;
                    gx[(c * height + iy) * width + ixx] += gcols(row, oy * out_w + ox);
                  }
                }
              }
            }
          }
        }
      });
}

}  // namespace poet::ad
