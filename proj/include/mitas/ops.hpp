// Differentiable primitives: exactly the set the separation model needs.
//
// Every op takes an optional Tape<S>*. With a tape, the output gets a grad
// buffer and a backward closure is recorded; with nullptr the op is a plain
// forward evaluation. Convolutions follow the cross-correlation convention
// (no kernel flip).
#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "mitas/tape.hpp"
#include "mitas/tensor.hpp"

namespace mitas {

struct ConvOpts {
  int stride = 1;
  int dilation = 1;
  int padding = 0;
  int groups = 1;
};

namespace detail {

// Floor/ceil division for possibly negative numerators, positive divisor.
inline int floor_div(int a, int b) { return (a >= 0) ? a / b : -((-a + b - 1) / b); }
inline int ceil_div(int a, int b) { return (a >= 0) ? (a + b - 1) / b : -((-a) / b); }

template <typename S>
void track(const TensorPtr<S>& out, Tape<S>* tape, std::function<void()> backward_fn) {
  if (!tape) return;
  out->ensure_grad();
  tape->record(std::move(backward_fn));
}

template <typename S>
void require_rank(const TensorPtr<S>& t, int rank, const char* op, const char* name) {
  if (t->rank() != rank) {
    std::ostringstream os;
    os << op << ": " << name << " must have rank " << rank << ", got shape " << t->shape_str();
    throw std::invalid_argument(os.str());
  }
}

template <typename S>
void require_same_shape(const TensorPtr<S>& a, const TensorPtr<S>& b, const char* op) {
  if (a->shape != b->shape) {
    std::ostringstream os;
    os << op << ": shape mismatch " << a->shape_str() << " vs " << b->shape_str();
    throw std::invalid_argument(os.str());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and reduction primitives
// ---------------------------------------------------------------------------

template <typename S>
TensorPtr<S> add(const TensorPtr<S>& a, const TensorPtr<S>& b, Tape<S>* tape = nullptr) {
  detail::require_same_shape(a, b, "add");
  auto out = zeros<S>(a->shape);
  for (size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] + b->data[i];
  detail::track(out, tape, [a, b, out] {
    if (a->requires_grad)
      for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += out->grad[i];
    if (b->requires_grad)
      for (size_t i = 0; i < b->grad.size(); ++i) b->grad[i] += out->grad[i];
  });
  return out;
}

template <typename S>
TensorPtr<S> sub(const TensorPtr<S>& a, const TensorPtr<S>& b, Tape<S>* tape = nullptr) {
  detail::require_same_shape(a, b, "sub");
  auto out = zeros<S>(a->shape);
  for (size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] - b->data[i];
  detail::track(out, tape, [a, b, out] {
    if (a->requires_grad)
      for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += out->grad[i];
    if (b->requires_grad)
      for (size_t i = 0; i < b->grad.size(); ++i) b->grad[i] -= out->grad[i];
  });
  return out;
}

template <typename S>
TensorPtr<S> mul(const TensorPtr<S>& a, const TensorPtr<S>& b, Tape<S>* tape = nullptr) {
  detail::require_same_shape(a, b, "mul");
  auto out = zeros<S>(a->shape);
  for (size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] * b->data[i];
  detail::track(out, tape, [a, b, out] {
    if (a->requires_grad)
      for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += out->grad[i] * b->data[i];
    if (b->requires_grad)
      for (size_t i = 0; i < b->grad.size(); ++i) b->grad[i] += out->grad[i] * a->data[i];
  });
  return out;
}

template <typename S>
TensorPtr<S> scale(const TensorPtr<S>& a, S c, Tape<S>* tape = nullptr) {
  auto out = zeros<S>(a->shape);
  for (size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] * c;
  detail::track(out, tape, [a, out, c] {
    if (a->requires_grad)
      for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += out->grad[i] * c;
  });
  return out;
}

// y_i = a_i * s where s is a scalar tensor (grad flows into both).
template <typename S>
TensorPtr<S> scale_by(const TensorPtr<S>& a, const TensorPtr<S>& s, Tape<S>* tape = nullptr) {
  if (!s->is_scalar()) throw std::invalid_argument("scale_by: scale factor must be a scalar tensor");
  const S c = s->data[0];
  auto out = zeros<S>(a->shape);
  for (size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] * c;
  detail::track(out, tape, [a, s, out, c] {
    if (a->requires_grad)
      for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += out->grad[i] * c;
    if (s->requires_grad) {
      S acc = 0;
      for (size_t i = 0; i < out->grad.size(); ++i) acc += out->grad[i] * a->data[i];
      s->grad[0] += acc;
    }
  });
  return out;
}

template <typename S>
TensorPtr<S> sum(const TensorPtr<S>& a, Tape<S>* tape = nullptr) {
  S acc = 0;
  for (S v : a->data) acc += v;
  auto out = scalar_tensor<S>(acc);
  detail::track(out, tape, [a, out] {
    if (a->requires_grad) {
      const S g = out->grad[0];
      for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
    }
  });
  return out;
}

template <typename S>
TensorPtr<S> dot(const TensorPtr<S>& a, const TensorPtr<S>& b, Tape<S>* tape = nullptr) {
  detail::require_same_shape(a, b, "dot");
  S acc = 0;
  for (size_t i = 0; i < a->data.size(); ++i) acc += a->data[i] * b->data[i];
  auto out = scalar_tensor<S>(acc);
  detail::track(out, tape, [a, b, out] {
    const S g = out->grad[0];
    if (a->requires_grad)
      for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g * b->data[i];
    if (b->requires_grad)
      for (size_t i = 0; i < b->grad.size(); ++i) b->grad[i] += g * a->data[i];
  });
  return out;
}

// y = x - mean(x)
template <typename S>
TensorPtr<S> mean_center(const TensorPtr<S>& a, Tape<S>* tape = nullptr) {
  const S n = static_cast<S>(a->numel());
  S mean = 0;
  for (S v : a->data) mean += v;
  mean /= n;
  auto out = zeros<S>(a->shape);
  for (size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] - mean;
  detail::track(out, tape, [a, out, n] {
    if (a->requires_grad) {
      S gmean = 0;
      for (S g : out->grad) gmean += g;
      gmean /= n;
      for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += out->grad[i] - gmean;
    }
  });
  return out;
}

template <typename S>
TensorPtr<S> scalar_div(const TensorPtr<S>& a, const TensorPtr<S>& b, Tape<S>* tape = nullptr) {
  if (!a->is_scalar() || !b->is_scalar())
    throw std::invalid_argument("scalar_div: both operands must be scalar tensors");
  if (b->data[0] == S(0)) throw std::domain_error("scalar_div: division by zero");
  auto out = scalar_tensor<S>(a->data[0] / b->data[0]);
  detail::track(out, tape, [a, b, out] {
    const S g = out->grad[0];
    const S bv = b->data[0];
    if (a->requires_grad) a->grad[0] += g / bv;
    if (b->requires_grad) b->grad[0] -= g * a->data[0] / (bv * bv);
  });
  return out;
}

template <typename S>
TensorPtr<S> scalar_log10(const TensorPtr<S>& a, Tape<S>* tape = nullptr) {
  if (!a->is_scalar()) throw std::invalid_argument("scalar_log10: operand must be a scalar tensor");
  if (a->data[0] <= S(0)) {
    std::ostringstream os;
    os << "scalar_log10: operand must be positive, got " << a->data[0];
    throw std::domain_error(os.str());
  }
  auto out = scalar_tensor<S>(std::log10(a->data[0]));
  detail::track(out, tape, [a, out] {
    if (a->requires_grad) {
      constexpr double ln10 = 2.302585092994046;
      a->grad[0] += out->grad[0] / (a->data[0] * static_cast<S>(ln10));
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Shape plumbing
// ---------------------------------------------------------------------------

template <typename S>
TensorPtr<S> reshape(const TensorPtr<S>& a, std::vector<int> new_shape, Tape<S>* tape = nullptr) {
  const int64_t n = detail::checked_numel(new_shape);
  if (n != a->numel()) {
    std::ostringstream os;
    os << "reshape: cannot view " << a->shape_str() << " as numel " << n;
    throw std::invalid_argument(os.str());
  }
  auto out = std::make_shared<Tensor<S>>();
  out->shape = std::move(new_shape);
  out->data = a->data;
  detail::track(out, tape, [a, out] {
    if (a->requires_grad)
      for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += out->grad[i];
  });
  return out;
}

// Rows [r0, r1) of a rank-2 tensor.
template <typename S>
TensorPtr<S> slice_rows(const TensorPtr<S>& a, int r0, int r1, Tape<S>* tape = nullptr) {
  detail::require_rank(a, 2, "slice_rows", "input");
  const int rows = a->dim(0), cols = a->dim(1);
  if (r0 < 0 || r1 > rows || r0 >= r1) {
    std::ostringstream os;
    os << "slice_rows: range [" << r0 << "," << r1 << ") out of bounds for " << rows << " rows";
    throw std::invalid_argument(os.str());
  }
  auto out = zeros<S>({r1 - r0, cols});
  std::copy(a->data.begin() + static_cast<size_t>(r0) * cols,
            a->data.begin() + static_cast<size_t>(r1) * cols, out->data.begin());
  detail::track(out, tape, [a, out, r0, cols] {
    if (a->requires_grad) {
      const size_t base = static_cast<size_t>(r0) * cols;
      for (size_t i = 0; i < out->grad.size(); ++i) a->grad[base + i] += out->grad[i];
    }
  });
  return out;
}

// Stacks equally sized tensors (flattened) into [C, n].
template <typename S>
TensorPtr<S> stack_rows(const std::vector<TensorPtr<S>>& parts, Tape<S>* tape = nullptr) {
  if (parts.empty()) throw std::invalid_argument("stack_rows: no parts");
  const int64_t n = parts[0]->numel();
  for (const auto& p : parts)
    if (p->numel() != n) throw std::invalid_argument("stack_rows: parts differ in size");
  auto out = zeros<S>({static_cast<int>(parts.size()), static_cast<int>(n)});
  for (size_t c = 0; c < parts.size(); ++c)
    std::copy(parts[c]->data.begin(), parts[c]->data.end(), out->data.begin() + c * n);
  detail::track(out, tape, [parts, out, n] {
    for (size_t c = 0; c < parts.size(); ++c) {
      if (!parts[c]->requires_grad) continue;
      const size_t base = c * static_cast<size_t>(n);
      for (size_t i = 0; i < static_cast<size_t>(n); ++i) parts[c]->grad[i] += out->grad[base + i];
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Activations and normalization
// ---------------------------------------------------------------------------

template <typename S>
TensorPtr<S> relu(const TensorPtr<S>& a, Tape<S>* tape = nullptr) {
  auto out = zeros<S>(a->shape);
  for (size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] > S(0) ? a->data[i] : S(0);
  detail::track(out, tape, [a, out] {
    if (a->requires_grad)
      for (size_t i = 0; i < a->grad.size(); ++i)
        if (a->data[i] > S(0)) a->grad[i] += out->grad[i];
  });
  return out;
}

// prelu(x) = x for x >= 0, slope * x otherwise; slope is a one-element tensor.
template <typename S>
TensorPtr<S> prelu(const TensorPtr<S>& a, const TensorPtr<S>& slope, Tape<S>* tape = nullptr) {
  if (!slope->is_scalar()) throw std::invalid_argument("prelu: slope must be a one-element tensor");
  const S k = slope->data[0];
  auto out = zeros<S>(a->shape);
  for (size_t i = 0; i < a->data.size(); ++i)
    out->data[i] = a->data[i] >= S(0) ? a->data[i] : k * a->data[i];
  detail::track(out, tape, [a, slope, out, k] {
    if (a->requires_grad)
      for (size_t i = 0; i < a->grad.size(); ++i)
        a->grad[i] += out->grad[i] * (a->data[i] >= S(0) ? S(1) : k);
    if (slope->requires_grad) {
      S acc = 0;
      for (size_t i = 0; i < out->grad.size(); ++i)
        if (a->data[i] < S(0)) acc += out->grad[i] * a->data[i];
      slope->grad[0] += acc;
    }
  });
  return out;
}

template <typename S>
TensorPtr<S> sigmoid(const TensorPtr<S>& a, Tape<S>* tape = nullptr) {
  auto out = zeros<S>(a->shape);
  for (size_t i = 0; i < a->data.size(); ++i) out->data[i] = S(1) / (S(1) + std::exp(-a->data[i]));
  detail::track(out, tape, [a, out] {
    if (a->requires_grad)
      for (size_t i = 0; i < a->grad.size(); ++i) {
        const S y = out->data[i];
        a->grad[i] += out->grad[i] * y * (S(1) - y);
      }
  });
  return out;
}

// Softmax across `sources` row-groups of a [sources*N, T] tensor: entries
// x[c*N + n, t] for c = 0..sources-1 form one softmax fiber per (n, t).
template <typename S>
TensorPtr<S> softmax_sources(const TensorPtr<S>& a, int sources, Tape<S>* tape = nullptr) {
  detail::require_rank(a, 2, "softmax_sources", "input");
  const int rows = a->dim(0), T = a->dim(1);
  if (sources < 1 || rows % sources != 0) {
    std::ostringstream os;
    os << "softmax_sources: rows (" << rows << ") not divisible by sources (" << sources << ")";
    throw std::invalid_argument(os.str());
  }
  const int N = rows / sources;
  auto out = zeros<S>(a->shape);
  for (int n = 0; n < N; ++n) {
    for (int t = 0; t < T; ++t) {
      S m = a->data[static_cast<size_t>(n) * T + t];
      for (int c = 1; c < sources; ++c)
        m = std::max(m, a->data[(static_cast<size_t>(c) * N + n) * T + t]);
      S z = 0;
      for (int c = 0; c < sources; ++c) {
        const size_t idx = (static_cast<size_t>(c) * N + n) * T + t;
        out->data[idx] = std::exp(a->data[idx] - m);
        z += out->data[idx];
      }
      for (int c = 0; c < sources; ++c) out->data[(static_cast<size_t>(c) * N + n) * T + t] /= z;
    }
  }
  detail::track(out, tape, [a, out, sources, N, T] {
    if (!a->requires_grad) return;
    for (int n = 0; n < N; ++n) {
      for (int t = 0; t < T; ++t) {
        S dotv = 0;
        for (int c = 0; c < sources; ++c) {
          const size_t idx = (static_cast<size_t>(c) * N + n) * T + t;
          dotv += out->grad[idx] * out->data[idx];
        }
        for (int c = 0; c < sources; ++c) {
          const size_t idx = (static_cast<size_t>(c) * N + n) * T + t;
          a->grad[idx] += out->data[idx] * (out->grad[idx] - dotv);
        }
      }
    }
  });
  return out;
}

// Global layer norm over all C*T entries of a [C, T] tensor, with per-channel
// gain and bias: y = gain_c * (x - mu) / sqrt(var + eps) + bias_c.
template <typename S>
TensorPtr<S> global_layer_norm(const TensorPtr<S>& a, const TensorPtr<S>& gain,
                               const TensorPtr<S>& bias, S eps, Tape<S>* tape = nullptr) {
  detail::require_rank(a, 2, "global_layer_norm", "input");
  const int C = a->dim(0), T = a->dim(1);
  if (gain->numel() != C || bias->numel() != C) {
    std::ostringstream os;
    os << "global_layer_norm: gain/bias must have " << C << " entries, got "
       << gain->numel() << "/" << bias->numel();
    throw std::invalid_argument(os.str());
  }
  if (eps <= S(0)) throw std::invalid_argument("global_layer_norm: eps must be positive");
  const S n = static_cast<S>(a->numel());
  S mu = 0;
  for (S v : a->data) mu += v;
  mu /= n;
  S var = 0;
  for (S v : a->data) var += (v - mu) * (v - mu);
  var /= n;
  const S inv_sigma = S(1) / std::sqrt(var + eps);

  auto xhat = zeros<S>(a->shape);  // saved for backward
  auto out = zeros<S>(a->shape);
  for (int c = 0; c < C; ++c) {
    const S g = gain->data[c], b = bias->data[c];
    for (int t = 0; t < T; ++t) {
      const size_t idx = static_cast<size_t>(c) * T + t;
      xhat->data[idx] = (a->data[idx] - mu) * inv_sigma;
      out->data[idx] = g * xhat->data[idx] + b;
    }
  }
  detail::track(out, tape, [a, gain, bias, out, xhat, inv_sigma, C, T, n] {
    if (gain->requires_grad || bias->requires_grad) {
      for (int c = 0; c < C; ++c) {
        S gg = 0, gb = 0;
        for (int t = 0; t < T; ++t) {
          const size_t idx = static_cast<size_t>(c) * T + t;
          gg += out->grad[idx] * xhat->data[idx];
          gb += out->grad[idx];
        }
        if (gain->requires_grad) gain->grad[c] += gg;
        if (bias->requires_grad) bias->grad[c] += gb;
      }
    }
    if (a->requires_grad) {
      // u = gain_c * dy; dx = (u - mean(u) - xhat * mean(u .* xhat)) / sigma
      S u_mean = 0, ux_mean = 0;
      for (int c = 0; c < C; ++c) {
        const S g = gain->data[c];
        for (int t = 0; t < T; ++t) {
          const size_t idx = static_cast<size_t>(c) * T + t;
          const S u = g * out->grad[idx];
          u_mean += u;
          ux_mean += u * xhat->data[idx];
        }
      }
      u_mean /= n;
      ux_mean /= n;
      for (int c = 0; c < C; ++c) {
        const S g = gain->data[c];
        for (int t = 0; t < T; ++t) {
          const size_t idx = static_cast<size_t>(c) * T + t;
          const S u = g * out->grad[idx];
          a->grad[idx] += (u - u_mean - xhat->data[idx] * ux_mean) * inv_sigma;
        }
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Convolutions
// ---------------------------------------------------------------------------

namespace detail {

template <typename S>
void validate_conv1d(const TensorPtr<S>& input, const TensorPtr<S>& weight,
                     const TensorPtr<S>& bias, const ConvOpts& o) {
  require_rank(input, 2, "conv1d", "input");
  require_rank(weight, 3, "conv1d", "weight");
  if (o.stride < 1 || o.dilation < 1 || o.padding < 0 || o.groups < 1)
    throw std::invalid_argument("conv1d: stride/dilation must be >= 1, padding >= 0, groups >= 1");
  const int c_in = input->dim(0);
  const int c_out = weight->dim(0);
  if (c_in % o.groups != 0) {
    std::ostringstream os;
    os << "conv1d: input channels (" << c_in << ") not divisible by groups (" << o.groups << ")";
    throw std::invalid_argument(os.str());
  }
  if (c_out % o.groups != 0) {
    std::ostringstream os;
    os << "conv1d: output channels (" << c_out << ") not divisible by groups (" << o.groups << ")";
    throw std::invalid_argument(os.str());
  }
  if (weight->dim(1) != c_in / o.groups) {
    std::ostringstream os;
    os << "conv1d: weight expects " << weight->dim(1) << " channels per group, input provides "
       << c_in / o.groups << " (C_in=" << c_in << ", groups=" << o.groups << ")";
    throw std::invalid_argument(os.str());
  }
  const int K = weight->dim(2), T = input->dim(1);
  if (T + 2 * o.padding < o.dilation * (K - 1) + 1) {
    std::ostringstream os;
    os << "conv1d: input length " << T << " (+2*" << o.padding << " padding) shorter than "
       << "effective kernel span " << o.dilation * (K - 1) + 1;
    throw std::invalid_argument(os.str());
  }
  if (bias) {
    if (bias->numel() != c_out) {
      std::ostringstream os;
      os << "conv1d: bias has " << bias->numel() << " entries, expected C_out=" << c_out;
      throw std::invalid_argument(os.str());
    }
  }
}

}  // namespace detail

inline int conv1d_out_len(int T, int K, const ConvOpts& o) {
  return (T + 2 * o.padding - o.dilation * (K - 1) - 1) / o.stride + 1;
}

template <typename S>
TensorPtr<S> conv1d(const TensorPtr<S>& input, const TensorPtr<S>& weight,
                    const TensorPtr<S>& bias, const ConvOpts& opts = {},
                    Tape<S>* tape = nullptr) {
  detail::validate_conv1d(input, weight, bias, opts);
  const int c_in = input->dim(0), T = input->dim(1);
  const int c_out = weight->dim(0), K = weight->dim(2);
  const int ci_per_g = c_in / opts.groups, co_per_g = c_out / opts.groups;
  const int T_out = conv1d_out_len(T, K, opts);
  const int s = opts.stride, d = opts.dilation, p = opts.padding;

  auto out = zeros<S>({c_out, T_out});
  if (bias) {
    for (int co = 0; co < c_out; ++co)
      std::fill_n(out->data.begin() + static_cast<size_t>(co) * T_out, T_out, bias->data[co]);
  }
  for (int g = 0; g < opts.groups; ++g) {
    for (int co = g * co_per_g; co < (g + 1) * co_per_g; ++co) {
      S* orow = out->data.data() + static_cast<size_t>(co) * T_out;
      for (int cil = 0; cil < ci_per_g; ++cil) {
        const int ci = g * ci_per_g + cil;
        const S* xrow = input->data.data() + static_cast<size_t>(ci) * T;
        const S* wrow = weight->data.data() + (static_cast<size_t>(co) * ci_per_g + cil) * K;
        for (int k = 0; k < K; ++k) {
          const S w = wrow[k];
          const int off = k * d - p;  // input index = t*s + off
          const int t_lo = std::max(0, detail::ceil_div(-off, s));
          const int t_hi = std::min(T_out - 1, detail::floor_div(T - 1 - off, s));
          const S* xk = xrow + off;
          if (s == 1) {
            for (int t = t_lo; t <= t_hi; ++t) orow[t] += w * xk[t];
          } else {
            for (int t = t_lo; t <= t_hi; ++t) orow[t] += w * xk[static_cast<int64_t>(t) * s];
          }
        }
      }
    }
  }

  detail::track(out, tape, [input, weight, bias, out, opts, c_in, T, c_out, K, ci_per_g,
                            co_per_g, T_out, s, d, p] {
    for (int g = 0; g < opts.groups; ++g) {
      for (int co = g * co_per_g; co < (g + 1) * co_per_g; ++co) {
        const S* grow = out->grad.data() + static_cast<size_t>(co) * T_out;
        for (int cil = 0; cil < ci_per_g; ++cil) {
          const int ci = g * ci_per_g + cil;
          const S* xrow = input->data.data() + static_cast<size_t>(ci) * T;
          S* gxrow = input->requires_grad ? input->grad.data() + static_cast<size_t>(ci) * T : nullptr;
          const size_t wbase = (static_cast<size_t>(co) * ci_per_g + cil) * K;
          for (int k = 0; k < K; ++k) {
            const int off = k * d - p;
            const int t_lo = std::max(0, detail::ceil_div(-off, s));
            const int t_hi = std::min(T_out - 1, detail::floor_div(T - 1 - off, s));
            if (weight->requires_grad) {
              S acc = 0;
              for (int t = t_lo; t <= t_hi; ++t)
                acc += xrow[static_cast<int64_t>(t) * s + off] * grow[t];
              weight->grad[wbase + k] += acc;
            }
            if (gxrow) {
              const S w = weight->data[wbase + k];
              for (int t = t_lo; t <= t_hi; ++t)
                gxrow[static_cast<int64_t>(t) * s + off] += w * grow[t];
            }
          }
        }
      }
    }
    if (bias && bias->requires_grad) {
      for (int co = 0; co < c_out; ++co) {
        S acc = 0;
        const S* grow = out->grad.data() + static_cast<size_t>(co) * T_out;
        for (int t = 0; t < T_out; ++t) acc += grow[t];
        bias->grad[co] += acc;
      }
    }
  });
  return out;
}

// Transposed 1-D convolution (overlap-add): input [C_in, T], weight
// [C_in, C_out, K] -> output [C_out, (T-1)*stride + K]. Adjoint of conv1d
// with the same geometry (stride, no padding, dilation 1).
template <typename S>
TensorPtr<S> conv_transpose1d(const TensorPtr<S>& input, const TensorPtr<S>& weight, int stride,
                              Tape<S>* tape = nullptr) {
  detail::require_rank(input, 2, "conv_transpose1d", "input");
  detail::require_rank(weight, 3, "conv_transpose1d", "weight");
  if (stride < 1) throw std::invalid_argument("conv_transpose1d: stride must be >= 1");
  const int c_in = input->dim(0), T = input->dim(1);
  if (weight->dim(0) != c_in) {
    std::ostringstream os;
    os << "conv_transpose1d: weight C_in (" << weight->dim(0) << ") != input channels (" << c_in << ")";
    throw std::invalid_argument(os.str());
  }
  const int c_out = weight->dim(1), K = weight->dim(2);
  const int T_out = (T - 1) * stride + K;

  auto out = zeros<S>({c_out, T_out});
  for (int ci = 0; ci < c_in; ++ci) {
    const S* xrow = input->data.data() + static_cast<size_t>(ci) * T;
    for (int co = 0; co < c_out; ++co) {
      S* orow = out->data.data() + static_cast<size_t>(co) * T_out;
      const S* wrow = weight->data.data() + (static_cast<size_t>(ci) * c_out + co) * K;
      for (int k = 0; k < K; ++k) {
        const S w = wrow[k];
        for (int t = 0; t < T; ++t) orow[static_cast<int64_t>(t) * stride + k] += w * xrow[t];
      }
    }
  }

  detail::track(out, tape, [input, weight, out, stride, c_in, T, c_out, K, T_out] {
    for (int ci = 0; ci < c_in; ++ci) {
      const S* xrow = input->data.data() + static_cast<size_t>(ci) * T;
      S* gxrow = input->requires_grad ? input->grad.data() + static_cast<size_t>(ci) * T : nullptr;
      for (int co = 0; co < c_out; ++co) {
        const S* grow = out->grad.data() + static_cast<size_t>(co) * T_out;
        const size_t wbase = (static_cast<size_t>(ci) * c_out + co) * K;
        for (int k = 0; k < K; ++k) {
          if (weight->requires_grad) {
            S acc = 0;
            for (int t = 0; t < T; ++t) acc += xrow[t] * grow[static_cast<int64_t>(t) * stride + k];
            weight->grad[wbase + k] += acc;
          }
          if (gxrow) {
            const S w = weight->data[wbase + k];
            for (int t = 0; t < T; ++t) gxrow[t] += w * grow[static_cast<int64_t>(t) * stride + k];
          }
        }
      }
    }
  });
  return out;
}

}  // namespace mitas
