#include "babyhgrn/recurrence.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace babyhgrn {

namespace {

void check_inputs(const RecurrenceDims& d, std::span<const real> q, std::span<const real> f,
                  std::span<const real> k, std::span<const real> v,
                  std::span<const real> initial_state) {
  const auto kw = d.rows() * d.key_width();
  if (q.size() != kw || f.size() != kw || k.size() != kw) {
    fail(ErrorKind::dimension, "recurrence: q/f/k must hold " + std::to_string(kw) + " values");
  }
  if (v.size() != d.rows() * d.value_width()) {
    fail(ErrorKind::dimension,
         "recurrence: v must hold " + std::to_string(d.rows() * d.value_width()) + " values");
  }
  if (!initial_state.empty() && initial_state.size() != d.batch * d.state_width()) {
    fail(ErrorKind::dimension, "recurrence: initial state must hold " +
                                   std::to_string(d.batch * d.state_width()) + " values");
  }
}

[[noreturn]] void non_finite(std::size_t b, std::size_t h, std::size_t t) {
  fail(ErrorKind::numeric, "recurrence produced a non-finite value at sequence " +
                               std::to_string(b) + ", head " + std::to_string(h) + ", step " +
                               std::to_string(t));
}

// Strided accessors for one (sequence, head) slice.
struct HeadView {
  const RecurrenceDims& d;
  std::size_t b, h;

  std::size_t key_at(std::size_t t, std::size_t c) const {
    return (b * d.steps + t) * d.key_width() + h * d.key_dim + c;
  }
  std::size_t value_at(std::size_t t, std::size_t j) const {
    return (b * d.steps + t) * d.value_width() + h * d.value_dim + j;
  }
  std::size_t state_at(std::size_t c, std::size_t j) const {
    return b * d.state_width() + h * d.key_dim * d.value_dim + c * d.value_dim + j;
  }
};

std::vector<double> load_state(const HeadView& hv, std::span<const real> initial_state) {
  std::vector<double> s(hv.d.key_dim * hv.d.value_dim, 0.0);
  if (initial_state.empty()) return s;
  for (std::size_t c = 0; c < hv.d.key_dim; ++c)
    for (std::size_t j = 0; j < hv.d.value_dim; ++j)
      s[c * hv.d.value_dim + j] = initial_state[hv.state_at(c, j)];
  return s;
}

void store_state(const HeadView& hv, const std::vector<double>& s, std::vector<real>& out) {
  for (std::size_t c = 0; c < hv.d.key_dim; ++c)
    for (std::size_t j = 0; j < hv.d.value_dim; ++j)
      out[hv.state_at(c, j)] = static_cast<real>(s[c * hv.d.value_dim + j]);
}

// One recurrence step on a head state held in f64.
void step(const HeadView& hv, std::size_t t, std::span<const real> f, std::span<const real> k,
          std::span<const real> v, std::vector<double>& s) {
  const std::size_t dv = hv.d.value_dim;
  for (std::size_t c = 0; c < hv.d.key_dim; ++c) {
    const double fc = f[hv.key_at(t, c)];
    const double kc = k[hv.key_at(t, c)];
    double* row = s.data() + c * dv;
    for (std::size_t j = 0; j < dv; ++j) row[j] = fc * row[j] + kc * double(v[hv.value_at(t, j)]);
  }
}

}  // namespace

RecurrenceResult recurrence_sequential(const RecurrenceDims& d, std::span<const real> q,
                                       std::span<const real> f, std::span<const real> k,
                                       std::span<const real> v,
                                       std::span<const real> initial_state) {
  check_inputs(d, q, f, k, v, initial_state);
  RecurrenceResult result;
  result.output.assign(d.rows() * d.value_width(), real(0));
  result.final_state.assign(d.batch * d.state_width(), real(0));
  const std::size_t dv = d.value_dim;
  std::vector<double> o(dv);
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t h = 0; h < d.heads; ++h) {
      const HeadView hv{d, b, h};
      auto s = load_state(hv, initial_state);
      for (std::size_t t = 0; t < d.steps; ++t) {
        step(hv, t, f, k, v, s);
        std::fill(o.begin(), o.end(), 0.0);
        for (std::size_t c = 0; c < d.key_dim; ++c) {
          const double qc = q[hv.key_at(t, c)];
          const double* row = s.data() + c * dv;
          for (std::size_t j = 0; j < dv; ++j) o[j] += qc * row[j];
        }
        for (std::size_t j = 0; j < dv; ++j) {
          if (!std::isfinite(o[j])) non_finite(b, h, t);
          result.output[hv.value_at(t, j)] = static_cast<real>(o[j]);
        }
      }
      store_state(hv, s, result.final_state);
    }
  }
  return result;
}

BlockSummary combine(const BlockSummary& earlier, const BlockSummary& later) {
  const std::size_t e = earlier.decay.size();
  const std::size_t dv = e ? earlier.state.size() / e : 0;
  BlockSummary out;
  out.decay.resize(e);
  out.state.resize(earlier.state.size());
  for (std::size_t c = 0; c < e; ++c) {
    out.decay[c] = earlier.decay[c] * later.decay[c];
    for (std::size_t j = 0; j < dv; ++j) {
      out.state[c * dv + j] = later.decay[c] * earlier.state[c * dv + j] + later.state[c * dv + j];
    }
  }
  return out;
}

RecurrenceResult recurrence_chunked(const RecurrenceDims& d, std::size_t block,
                                    std::span<const real> q, std::span<const real> f,
                                    std::span<const real> k, std::span<const real> v,
                                    std::span<const real> initial_state) {
  require(block >= 1, ErrorKind::config, "scan block size must be at least 1");
  if (block == 1) return recurrence_sequential(d, q, f, k, v, initial_state);
  check_inputs(d, q, f, k, v, initial_state);

  RecurrenceResult result;
  result.output.assign(d.rows() * d.value_width(), real(0));
  result.final_state.assign(d.batch * d.state_width(), real(0));
  const std::size_t e = d.key_dim, dv = d.value_dim;
  const std::size_t blocks = (d.steps + block - 1) / block;

  std::vector<BlockSummary> summaries(blocks + 1);
  std::vector<double> mix(block * block);
  std::vector<double> running(e), o(dv);

  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t h = 0; h < d.heads; ++h) {
      const HeadView hv{d, b, h};

      // Entry 0 carries the incoming state as a pure-offset summary.
      summaries[0].decay.assign(e, 0.0);
      summaries[0].state = load_state(hv, initial_state);
      for (std::size_t j = 0; j < blocks; ++j) {
        auto& sum = summaries[j + 1];
        sum.decay.assign(e, 1.0);
        sum.state.assign(e * dv, 0.0);
        const std::size_t t1 = std::min(d.steps, (j + 1) * block);
        for (std::size_t t = j * block; t < t1; ++t) {
          for (std::size_t c = 0; c < e; ++c) sum.decay[c] *= f[hv.key_at(t, c)];
          step(hv, t, f, k, v, sum.state);
        }
      }

      // entry[j] = state entering block j; entry[blocks] = final state.
      std::vector<BlockSummary> entry(blocks + 1);
      std::inclusive_scan(summaries.begin(), summaries.end(), entry.begin(), combine);

      for (std::size_t j = 0; j < blocks; ++j) {
        const std::size_t t0 = j * block;
        const std::size_t len = std::min(d.steps, t0 + block) - t0;
        const auto& s_in = entry[j].state;

        // mix[t][s] = sum_c q_t[c] k_s[c] prod_{s<r<=t} f_r[c]
        for (std::size_t s = 0; s < len; ++s) {
          std::fill(running.begin(), running.end(), 1.0);
          for (std::size_t t = s; t < len; ++t) {
            double acc = 0;
            for (std::size_t c = 0; c < e; ++c) {
              if (t > s) running[c] *= f[hv.key_at(t0 + t, c)];
              acc += double(q[hv.key_at(t0 + t, c)]) * k[hv.key_at(t0 + s, c)] * running[c];
            }
            mix[t * block + s] = acc;
          }
        }

        std::fill(running.begin(), running.end(), 1.0);
        for (std::size_t t = 0; t < len; ++t) {
          std::fill(o.begin(), o.end(), 0.0);
          for (std::size_t c = 0; c < e; ++c) {
            running[c] *= f[hv.key_at(t0 + t, c)];
            const double w = double(q[hv.key_at(t0 + t, c)]) * running[c];
            const double* row = s_in.data() + c * dv;
            for (std::size_t jj = 0; jj < dv; ++jj) o[jj] += w * row[jj];
          }
          for (std::size_t s = 0; s <= t; ++s) {
            const double w = mix[t * block + s];
            for (std::size_t jj = 0; jj < dv; ++jj) o[jj] += w * double(v[hv.value_at(t0 + s, jj)]);
          }
          for (std::size_t jj = 0; jj < dv; ++jj) {
            if (!std::isfinite(o[jj])) non_finite(b, h, t0 + t);
            result.output[hv.value_at(t0 + t, jj)] = static_cast<real>(o[jj]);
          }
        }
      }
      store_state(hv, entry[blocks].state, result.final_state);
    }
  }
  return result;
}

RecurrenceGrads recurrence_backward(const RecurrenceDims& d, std::span<const real> q,
                                    std::span<const real> f, std::span<const real> k,
                                    std::span<const real> v,
                                    std::span<const real> initial_state,
                                    std::span<const real> d_output,
                                    std::span<const real> d_final_state) {
  check_inputs(d, q, f, k, v, initial_state);
  RecurrenceGrads g;
  g.q.assign(q.size(), real(0));
  g.f.assign(f.size(), real(0));
  g.k.assign(k.size(), real(0));
  g.v.assign(v.size(), real(0));
  g.initial_state.assign(d.batch * d.state_width(), real(0));
  const std::size_t e = d.key_dim, dv = d.value_dim, span_len = e * dv;

  std::vector<double> states((d.steps + 1) * span_len);
  std::vector<double> adj(span_len);
  std::vector<double> dvj(dv);
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t h = 0; h < d.heads; ++h) {
      const HeadView hv{d, b, h};
      auto s = load_state(hv, initial_state);
      std::copy(s.begin(), s.end(), states.begin());
      for (std::size_t t = 0; t < d.steps; ++t) {
        step(hv, t, f, k, v, s);
        std::copy(s.begin(), s.end(), states.begin() + (t + 1) * span_len);
      }

      if (d_final_state.empty()) {
        std::fill(adj.begin(), adj.end(), 0.0);
      } else {
        for (std::size_t c = 0; c < e; ++c)
          for (std::size_t j = 0; j < dv; ++j) adj[c * dv + j] = d_final_state[hv.state_at(c, j)];
      }

      for (std::size_t tt = d.steps; tt-- > 0;) {
        const double* s_t = states.data() + (tt + 1) * span_len;
        const double* s_prev = states.data() + tt * span_len;
        if (!d_output.empty()) {
          for (std::size_t c = 0; c < e; ++c) {
            const double qc = q[hv.key_at(tt, c)];
            double dq = 0;
            for (std::size_t j = 0; j < dv; ++j) {
              const double dout = d_output[hv.value_at(tt, j)];
              adj[c * dv + j] += qc * dout;
              dq += s_t[c * dv + j] * dout;
            }
            g.q[hv.key_at(tt, c)] = static_cast<real>(dq);
          }
        }
        std::fill(dvj.begin(), dvj.end(), 0.0);
        for (std::size_t c = 0; c < e; ++c) {
          const double kc = k[hv.key_at(tt, c)];
          const double fc = f[hv.key_at(tt, c)];
          double df = 0, dk = 0;
          for (std::size_t j = 0; j < dv; ++j) {
            const double a = adj[c * dv + j];
            df += a * s_prev[c * dv + j];
            dk += a * double(v[hv.value_at(tt, j)]);
            dvj[j] += a * kc;
            adj[c * dv + j] = a * fc;
          }
          g.f[hv.key_at(tt, c)] = static_cast<real>(df);
          g.k[hv.key_at(tt, c)] = static_cast<real>(dk);
        }
        for (std::size_t j = 0; j < dv; ++j) g.v[hv.value_at(tt, j)] = static_cast<real>(dvj[j]);
      }
      store_state(hv, adj, g.initial_state);
    }
  }
  return g;
}

RecurrenceOutputs gated_recurrence(const Tensor& q, const Tensor& f, const Tensor& k,
                                   const Tensor& v, const Tensor& initial_state,
                                   const RecurrenceDims& dims, ScanMode mode,
                                   std::size_t block) {
  const bool has_state = initial_state.defined();
  const std::span<const real> s0 = has_state ? initial_state.data() : std::span<const real>{};
  RecurrenceResult fwd = mode == ScanMode::sequential
                             ? recurrence_sequential(dims, q.data(), f.data(), k.data(), v.data(), s0)
                             : recurrence_chunked(dims, block, q.data(), f.data(), k.data(), v.data(), s0);

  std::vector<Tensor> parents{q, f, k, v};
  if (has_state) parents.push_back(initial_state);

  // Both outputs share the parents; each backward handles its own upstream
  // gradient and the two contributions add.
  auto backward_into = [dims, has_state](detail::Node& self, bool from_output) {
    const auto& p = self.parents;
    const std::span<const real> s0 = has_state ? std::span<const real>(p[4]->data)
                                               : std::span<const real>{};
    const std::span<const real> upstream(self.grad);
    auto grads = recurrence_backward(dims, p[0]->data, p[1]->data, p[2]->data, p[3]->data, s0,
                                     from_output ? upstream : std::span<const real>{},
                                     from_output ? std::span<const real>{} : upstream);
    const std::vector<real>* parts[] = {&grads.q, &grads.f, &grads.k, &grads.v,
                                        &grads.initial_state};
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!p[i]->requires_grad) continue;
      auto& acc = p[i]->ensure_grad();
      for (std::size_t n = 0; n < acc.size(); ++n) acc[n] += (*parts[i])[n];
    }
  };

  RecurrenceOutputs out;
  out.output = detail::make_result({dims.rows(), dims.value_width()}, std::move(fwd.output),
                                   "gated_recurrence", parents,
                                   [backward_into](detail::Node& self) { backward_into(self, true); });
  out.final_state = detail::make_result({dims.batch, dims.state_width()},
                                        std::move(fwd.final_state), "gated_recurrence_state",
                                        parents,
                                        [backward_into](detail::Node& self) { backward_into(self, false); });
  return out;
}

}  // namespace babyhgrn
