#include "babyhgrn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace babyhgrn {

using detail::make_result;
using detail::Node;

namespace {

// Gradient buffer of parent i, or nullptr when that parent is a constant.
real* parent_grad(Node& self, std::size_t i) {
  auto& parent = *self.parents[i];
  return parent.requires_grad ? parent.ensure_grad().data() : nullptr;
}

void expect_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    fail(ErrorKind::dimension, std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                                   " vs " + shape_string(b.shape()));
  }
}

void expect_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    fail(ErrorKind::dimension, std::string(op) + ": expected rank " + std::to_string(rank) +
                                   ", got " + shape_string(a.shape()));
  }
}

void expect_row_vector(const Tensor& a, const Tensor& row, const char* op) {
  expect_rank(a, 2, op);
  if (row.size() != a.dim(1)) {
    fail(ErrorKind::dimension, std::string(op) + ": row of shape " + shape_string(row.shape()) +
                                   " does not broadcast over " + shape_string(a.shape()));
  }
}

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    real* crow = c + i * n;
    const real* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const real av = arow[p];
      if (av == real(0)) continue;
      const real* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x k] += A[m x n] * B[k x n]^T
void gemm_nt(const real* a, const real* b, real* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const real* arow = a + i * n;
    real* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const real* brow = b + p * n;
      real acc = 0;
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

// C[k x n] += A[m x k]^T * B[m x n]
void gemm_tn(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const real* arow = a + i * k;
    const real* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const real av = arow[p];
      if (av == real(0)) continue;
      real* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, const char* op, Fwd fwd, Deriv deriv) {
  const auto in = a.data();
  std::vector<real> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return make_result(a.shape(), std::move(out), op, {a}, [deriv](Node& self) {
    real* ga = parent_grad(self, 0);
    if (!ga) return;
    const auto& x = self.parents[0]->data;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      ga[i] += self.grad[i] * deriv(x[i], self.data[i]);
    }
  });
}

real sigmoid_scalar(real x) {
  if (x >= 0) return real(1) / (real(1) + std::exp(-x));
  const real e = std::exp(x);
  return e / (real(1) + e);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  expect_rank(a, 2, "matmul");
  expect_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    fail(ErrorKind::dimension, "matmul: inner extents differ " + shape_string(a.shape()) + " x " +
                                   shape_string(b.shape()));
  }
  std::vector<real> out(m * n, real(0));
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](Node& self) {
    const real* dc = self.grad.data();
    if (real* ga = parent_grad(self, 0)) {
      gemm_nt(dc, self.parents[1]->data.data(), ga, m, n, k);
    }
    if (real* gb = parent_grad(self, 1)) {
      gemm_tn(self.parents[0]->data.data(), dc, gb, m, k, n);
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  expect_same_shape(a, b, "add");
  const auto x = a.data(), y = b.data();
  std::vector<real> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return make_result(a.shape(), std::move(out), "add", {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (real* g = parent_grad(self, p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  expect_same_shape(a, b, "sub");
  const auto x = a.data(), y = b.data();
  std::vector<real> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return make_result(a.shape(), std::move(out), "sub", {a, b}, [](Node& self) {
    if (real* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (real* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  expect_same_shape(a, b, "mul");
  const auto x = a.data(), y = b.data();
  std::vector<real> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), "mul", {a, b}, [](Node& self) {
    const auto& x = self.parents[0]->data;
    const auto& y = self.parents[1]->data;
    if (real* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * y[i];
    }
    if (real* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * x[i];
    }
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  expect_row_vector(a, row, "add_row");
  const std::size_t m = a.dim(0), n = a.dim(1);
  const auto x = a.data(), r = row.data();
  std::vector<real> out(x.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] + r[j];
  return make_result(a.shape(), std::move(out), "add_row", {a, row}, [m, n](Node& self) {
    if (real* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < m * n; ++i) g[i] += self.grad[i];
    }
    if (real* g = parent_grad(self, 1)) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0;
        for (std::size_t i = 0; i < m; ++i) acc += self.grad[i * n + j];
        g[j] += static_cast<real>(acc);
      }
    }
  });
}

Tensor mul_row(const Tensor& a, const Tensor& row) {
  expect_row_vector(a, row, "mul_row");
  const std::size_t m = a.dim(0), n = a.dim(1);
  const auto x = a.data(), r = row.data();
  std::vector<real> out(x.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] * r[j];
  return make_result(a.shape(), std::move(out), "mul_row", {a, row}, [m, n](Node& self) {
    const auto& x = self.parents[0]->data;
    const auto& r = self.parents[1]->data;
    if (real* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i * n + j] * r[j];
    }
    if (real* g = parent_grad(self, 1)) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0;
        for (std::size_t i = 0; i < m; ++i) acc += double(self.grad[i * n + j]) * x[i * n + j];
        g[j] += static_cast<real>(acc);
      }
    }
  });
}

Tensor scale(const Tensor& a, real factor) { return affine(a, factor, real(0)); }

Tensor affine(const Tensor& a, real factor, real offset) {
  const auto x = a.data();
  std::vector<real> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * factor + offset;
  return make_result(a.shape(), std::move(out), "affine", {a}, [factor](Node& self) {
    if (real* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
    }
  });
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, "sigmoid", sigmoid_scalar, [](real, real y) { return y * (real(1) - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(a, "tanh", [](real x) { return std::tanh(x); },
               [](real, real y) { return real(1) - y * y; });
}

Tensor exp(const Tensor& a) {
  return unary(a, "exp", [](real x) { return std::exp(x); }, [](real, real y) { return y; });
}

Tensor log(const Tensor& a) {
  for (real x : a.data()) {
    if (!(x > real(0))) fail(ErrorKind::numeric, "log of non-positive value");
  }
  return unary(a, "log", [](real x) { return std::log(x); },
               [](real x, real) { return real(1) / x; });
}

Tensor silu(const Tensor& a) {
  return unary(a, "silu", [](real x) { return x * sigmoid_scalar(x); },
               [](real x, real) {
                 const real s = sigmoid_scalar(x);
                 return s * (real(1) + x * (real(1) - s));
               });
}

namespace {

std::size_t last_extent(const Tensor& z, const char* op) {
  if (z.rank() == 0 || z.shape().back() == 0) {
    fail(ErrorKind::dimension, std::string(op) + ": empty last axis in " + shape_string(z.shape()));
  }
  return z.shape().back();
}

}  // namespace

Tensor softmax(const Tensor& z) {
  const std::size_t v = last_extent(z, "softmax");
  const auto x = z.data();
  const std::size_t rows = x.size() / v;
  std::vector<real> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const real* in = x.data() + r * v;
    real* o = out.data() + r * v;
    const real top = *std::max_element(in, in + v);
    double total = 0;
    for (std::size_t j = 0; j < v; ++j) total += std::exp(double(in[j]) - top);
    for (std::size_t j = 0; j < v; ++j) o[j] = static_cast<real>(std::exp(double(in[j]) - top) / total);
  }
  return make_result(z.shape(), std::move(out), "softmax", {z}, [v, rows](Node& self) {
    real* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const real* y = self.data.data() + r * v;
      const real* dy = self.grad.data() + r * v;
      double dot = 0;
      for (std::size_t j = 0; j < v; ++j) dot += double(dy[j]) * y[j];
      for (std::size_t j = 0; j < v; ++j) g[r * v + j] += static_cast<real>(y[j] * (dy[j] - dot));
    }
  });
}

Tensor log_softmax(const Tensor& z) {
  const std::size_t v = last_extent(z, "log_softmax");
  const auto x = z.data();
  const std::size_t rows = x.size() / v;
  std::vector<real> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const real* in = x.data() + r * v;
    real* o = out.data() + r * v;
    const real top = *std::max_element(in, in + v);
    double total = 0;
    for (std::size_t j = 0; j < v; ++j) total += std::exp(double(in[j]) - top);
    const double lse = top + std::log(total);
    for (std::size_t j = 0; j < v; ++j) o[j] = static_cast<real>(in[j] - lse);
  }
  return make_result(z.shape(), std::move(out), "log_softmax", {z}, [v, rows](Node& self) {
    real* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const real* y = self.data.data() + r * v;
      const real* dy = self.grad.data() + r * v;
      double total = 0;
      for (std::size_t j = 0; j < v; ++j) total += dy[j];
      for (std::size_t j = 0; j < v; ++j) {
        g[r * v + j] += static_cast<real>(dy[j] - std::exp(double(y[j])) * total);
      }
    }
  });
}

Tensor outer_product(const Tensor& a, const Tensor& b) {
  expect_rank(a, 1, "outer_product");
  expect_rank(b, 1, "outer_product");
  const std::size_t m = a.dim(0), n = b.dim(0);
  const auto x = a.data(), y = b.data();
  std::vector<real> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i] * y[j];
  return make_result({m, n}, std::move(out), "outer_product", {a, b}, [m, n](Node& self) {
    const auto& x = self.parents[0]->data;
    const auto& y = self.parents[1]->data;
    if (real* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        double acc = 0;
        for (std::size_t j = 0; j < n; ++j) acc += double(self.grad[i * n + j]) * y[j];
        g[i] += static_cast<real>(acc);
      }
    }
    if (real* g = parent_grad(self, 1)) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0;
        for (std::size_t i = 0; i < m; ++i) acc += double(self.grad[i * n + j]) * x[i];
        g[j] += static_cast<real>(acc);
      }
    }
  });
}

Tensor diag_scale(const Tensor& d, const Tensor& s) {
  expect_rank(d, 1, "diag_scale");
  expect_rank(s, 2, "diag_scale");
  const std::size_t m = s.dim(0), n = s.dim(1);
  if (d.dim(0) != m) {
    fail(ErrorKind::dimension, "diag_scale: diagonal " + shape_string(d.shape()) +
                                   " does not match rows of " + shape_string(s.shape()));
  }
  const auto dv = d.data(), sv = s.data();
  std::vector<real> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = dv[i] * sv[i * n + j];
  return make_result({m, n}, std::move(out), "diag_scale", {d, s}, [m, n](Node& self) {
    const auto& dv = self.parents[0]->data;
    const auto& sv = self.parents[1]->data;
    if (real* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        double acc = 0;
        for (std::size_t j = 0; j < n; ++j) acc += double(self.grad[i * n + j]) * sv[i * n + j];
        g[i] += static_cast<real>(acc);
      }
    }
    if (real* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i * n + j] * dv[i];
    }
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  expect_rank(a, 2, "slice_rows");
  const std::size_t n = a.dim(1);
  if (begin > end || end > a.dim(0)) {
    fail(ErrorKind::dimension, "slice_rows: [" + std::to_string(begin) + ", " +
                                   std::to_string(end) + ") outside " + shape_string(a.shape()));
  }
  const auto x = a.data();
  std::vector<real> out(x.begin() + begin * n, x.begin() + end * n);
  return make_result({end - begin, n}, std::move(out), "slice_rows", {a}, [begin, n](Node& self) {
    if (real* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * n + i] += self.grad[i];
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  expect_rank(a, 2, "slice_cols");
  const std::size_t m = a.dim(0), n = a.dim(1), w = end - begin;
  if (begin > end || end > n) {
    fail(ErrorKind::dimension, "slice_cols: [" + std::to_string(begin) + ", " +
                                   std::to_string(end) + ") outside " + shape_string(a.shape()));
  }
  const auto x = a.data();
  std::vector<real> out(m * w);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(x.begin() + i * n + begin, w, out.begin() + i * w);
  return make_result({m, w}, std::move(out), "slice_cols", {a}, [m, n, w, begin](Node& self) {
    if (real* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) g[i * n + begin + j] += self.grad[i * w + j];
    }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  require(!parts.empty(), ErrorKind::dimension, "concat_rows: no inputs");
  const std::size_t n = parts[0].dim(1);
  std::size_t m = 0;
  std::vector<real> out;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    expect_rank(p, 2, "concat_rows");
    if (p.dim(1) != n) fail(ErrorKind::dimension, "concat_rows: column extents differ");
    offsets.push_back(out.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
    m += p.dim(0);
  }
  return make_result({m, n}, std::move(out), "concat_rows",
                     std::vector<Tensor>(parts.begin(), parts.end()),
                     [offsets](Node& self) {
                       for (std::size_t p = 0; p < self.parents.size(); ++p) {
                         real* g = parent_grad(self, p);
                         if (!g) continue;
                         const std::size_t len = self.parents[p]->data.size();
                         for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[offsets[p] + i];
                       }
                     });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  require(!parts.empty(), ErrorKind::dimension, "concat_cols: no inputs");
  const std::size_t m = parts[0].dim(0);
  std::size_t n = 0;
  std::vector<std::size_t> offsets, widths;
  for (const auto& p : parts) {
    expect_rank(p, 2, "concat_cols");
    if (p.dim(0) != m) fail(ErrorKind::dimension, "concat_cols: row extents differ");
    offsets.push_back(n);
    widths.push_back(p.dim(1));
    n += p.dim(1);
  }
  std::vector<real> out(m * n);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto x = parts[p].data();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(x.begin() + i * widths[p], widths[p], out.begin() + i * n + offsets[p]);
  }
  return make_result({m, n}, std::move(out), "concat_cols",
                     std::vector<Tensor>(parts.begin(), parts.end()),
                     [m, n, offsets, widths](Node& self) {
                       for (std::size_t p = 0; p < self.parents.size(); ++p) {
                         real* g = parent_grad(self, p);
                         if (!g) continue;
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < widths[p]; ++j)
                             g[i * widths[p] + j] += self.grad[i * n + offsets[p] + j];
                       }
                     });
}

Tensor gather_rows(const Tensor& table, std::span<const std::int64_t> ids) {
  expect_rank(table, 2, "gather_rows");
  const std::size_t rows = table.dim(0), n = table.dim(1);
  const auto x = table.data();
  std::vector<real> out(ids.size() * n);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= rows) {
      fail(ErrorKind::data, "gather_rows: index " + std::to_string(ids[i]) + " outside [0, " +
                                std::to_string(rows) + ")");
    }
    std::copy_n(x.begin() + ids[i] * n, n, out.begin() + i * n);
  }
  std::vector<std::int64_t> saved(ids.begin(), ids.end());
  return make_result({ids.size(), n}, std::move(out), "gather_rows", {table},
                     [saved = std::move(saved), n](Node& self) {
                       real* g = parent_grad(self, 0);
                       if (!g) return;
                       for (std::size_t i = 0; i < saved.size(); ++i)
                         for (std::size_t j = 0; j < n; ++j)
                           g[saved[i] * n + j] += self.grad[i * n + j];
                     });
}

Tensor sum(const Tensor& a) {
  double acc = 0;
  for (real x : a.data()) acc += x;
  return make_result({}, {static_cast<real>(acc)}, "sum", {a}, [](Node& self) {
    if (real* g = parent_grad(self, 0)) {
      const std::size_t n = self.parents[0]->data.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& a) {
  require(a.size() > 0, ErrorKind::dimension, "mean of an empty tensor");
  double acc = 0;
  for (real x : a.data()) acc += x;
  const double count = static_cast<double>(a.size());
  return make_result({}, {static_cast<real>(acc / count)}, "mean", {a}, [count](Node& self) {
    if (real* g = parent_grad(self, 0)) {
      const real share = static_cast<real>(self.grad[0] / count);
      const std::size_t n = self.parents[0]->data.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += share;
    }
  });
}

Tensor rms_norm(const Tensor& x, const Tensor& gain, real eps) {
  expect_row_vector(x, gain, "rms_norm");
  const std::size_t m = x.dim(0), n = x.dim(1);
  const auto xv = x.data(), gv = gain.data();
  std::vector<real> out(m * n);
  std::vector<double> inv_rms(m);
  for (std::size_t i = 0; i < m; ++i) {
    double ss = 0;
    for (std::size_t j = 0; j < n; ++j) ss += double(xv[i * n + j]) * xv[i * n + j];
    inv_rms[i] = 1.0 / std::sqrt(ss / double(n) + eps);
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = static_cast<real>(xv[i * n + j] * inv_rms[i] * gv[j]);
    }
  }
  return make_result(x.shape(), std::move(out), "rms_norm", {x, gain},
                     [m, n, inv_rms = std::move(inv_rms)](Node& self) {
                       const auto& xv = self.parents[0]->data;
                       const auto& gv = self.parents[1]->data;
                       const auto& dy = self.grad;
                       if (real* gx = parent_grad(self, 0)) {
                         for (std::size_t i = 0; i < m; ++i) {
                           const double r = inv_rms[i];
                           double dot = 0;
                           for (std::size_t j = 0; j < n; ++j)
                             dot += double(dy[i * n + j]) * gv[j] * xv[i * n + j];
                           const double coef = r * r * r * dot / double(n);
                           for (std::size_t j = 0; j < n; ++j) {
                             gx[i * n + j] += static_cast<real>(double(dy[i * n + j]) * gv[j] * r -
                                                                coef * xv[i * n + j]);
                           }
                         }
                       }
                       if (real* gg = parent_grad(self, 1)) {
                         for (std::size_t j = 0; j < n; ++j) {
                           double acc = 0;
                           for (std::size_t i = 0; i < m; ++i)
                             acc += double(dy[i * n + j]) * xv[i * n + j] * inv_rms[i];
                           gg[j] += static_cast<real>(acc);
                         }
                       }
                     });
}

Tensor dropout(const Tensor& x, real p, Rng& rng) {
  require(p >= real(0) && p < real(1), ErrorKind::config, "dropout probability must be in [0, 1)");
  if (p == real(0)) return x;
  const real keep_scale = real(1) / (real(1) - p);
  std::vector<real> mask(x.size());
  for (auto& m : mask) m = rng.bernoulli(p) ? real(0) : keep_scale;
  const auto xv = x.data();
  std::vector<real> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  return make_result(x.shape(), std::move(out), "dropout", {x}, [mask = std::move(mask)](Node& self) {
    if (real* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < mask.size(); ++i) g[i] += self.grad[i] * mask[i];
    }
  });
}

}  // namespace babyhgrn
