#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "patrack/rng.hpp"
#include "patrack/tensor.hpp"

namespace patrack {

namespace detail {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Creation helpers
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> uniform_tensor(Shape shape, Rng& rng, double lo, double hi) {
    Tensor<T> t = Tensor<T>::zeros(std::move(shape));
    for (T& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

template <typename T>
Tensor<T> normal_tensor(Shape shape, Rng& rng, double mean, double stddev) {
    Tensor<T> t = Tensor<T>::zeros(std::move(shape));
    for (T& v : t.data()) v = static_cast<T>(rng.normal(mean, stddev));
    return t;
}

template <typename T>
Tensor<T> truncated_normal_tensor(Shape shape, Rng& rng, double stddev) {
    Tensor<T> t = Tensor<T>::zeros(std::move(shape));
    for (T& v : t.data()) v = static_cast<T>(rng.truncated_normal(stddev));
    return t;
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "add");
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const auto& da = a.data();
    const auto& db = b.data();
    auto& dst = out.data();
    for (size_t i = 0; i < dst.size(); ++i) dst[i] = da[i] + db[i];
    detail::record_op<T>({a, b}, out, [ia = a.impl(), ib = b.impl()](const std::vector<T>& g) {
        detail::accumulate_grad(ia, g);
        detail::accumulate_grad(ib, g);
    });
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "sub");
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    for (size_t i = 0; i < out.data().size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
    detail::record_op<T>({a, b}, out, [ia = a.impl(), ib = b.impl()](const std::vector<T>& g) {
        detail::accumulate_grad(ia, g);
        if (ib->requires_grad) {
            std::vector<T> neg(g.size());
            for (size_t i = 0; i < g.size(); ++i) neg[i] = -g[i];
            detail::accumulate_grad(ib, neg);
        }
    });
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "mul");
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    for (size_t i = 0; i < out.data().size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    detail::record_op<T>({a, b}, out,
                         [ia = a.impl(), ib = b.impl(), va = a.data(), vb = b.data()](const std::vector<T>& g) {
                             if (ia->requires_grad) {
                                 std::vector<T> d(g.size());
                                 for (size_t i = 0; i < g.size(); ++i) d[i] = g[i] * vb[i];
                                 detail::accumulate_grad(ia, d);
                             }
                             if (ib->requires_grad) {
                                 std::vector<T> d(g.size());
                                 for (size_t i = 0; i < g.size(); ++i) d[i] = g[i] * va[i];
                                 detail::accumulate_grad(ib, d);
                             }
                         });
    return out;
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "div");
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    for (size_t i = 0; i < out.data().size(); ++i) out.data()[i] = a.data()[i] / b.data()[i];
    detail::record_op<T>({a, b}, out,
                         [ia = a.impl(), ib = b.impl(), va = a.data(), vb = b.data()](const std::vector<T>& g) {
                             if (ia->requires_grad) {
                                 std::vector<T> d(g.size());
                                 for (size_t i = 0; i < g.size(); ++i) d[i] = g[i] / vb[i];
                                 detail::accumulate_grad(ia, d);
                             }
                             if (ib->requires_grad) {
                                 std::vector<T> d(g.size());
                                 for (size_t i = 0; i < g.size(); ++i) d[i] = -g[i] * va[i] / (vb[i] * vb[i]);
                                 detail::accumulate_grad(ib, d);
                             }
                         });
    return out;
}

/// Elementwise minimum; ties route the gradient to the first operand.
template <typename T>
Tensor<T> minimum(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "minimum");
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    for (size_t i = 0; i < out.data().size(); ++i) out.data()[i] = std::min(a.data()[i], b.data()[i]);
    detail::record_op<T>({a, b}, out,
                         [ia = a.impl(), ib = b.impl(), va = a.data(), vb = b.data()](const std::vector<T>& g) {
                             std::vector<T> da(g.size(), T(0)), dbv(g.size(), T(0));
                             for (size_t i = 0; i < g.size(); ++i) {
                                 if (va[i] <= vb[i]) da[i] = g[i];
                                 else dbv[i] = g[i];
                             }
                             detail::accumulate_grad(ia, da);
                             detail::accumulate_grad(ib, dbv);
                         });
    return out;
}

template <typename T>
Tensor<T> maximum(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "maximum");
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    for (size_t i = 0; i < out.data().size(); ++i) out.data()[i] = std::max(a.data()[i], b.data()[i]);
    detail::record_op<T>({a, b}, out,
                         [ia = a.impl(), ib = b.impl(), va = a.data(), vb = b.data()](const std::vector<T>& g) {
                             std::vector<T> da(g.size(), T(0)), dbv(g.size(), T(0));
                             for (size_t i = 0; i < g.size(); ++i) {
                                 if (va[i] >= vb[i]) da[i] = g[i];
                                 else dbv[i] = g[i];
                             }
                             detail::accumulate_grad(ia, da);
                             detail::accumulate_grad(ib, dbv);
                         });
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    for (size_t i = 0; i < out.data().size(); ++i) out.data()[i] = a.data()[i] * c;
    detail::record_op<T>({a}, out, [ia = a.impl(), c](const std::vector<T>& g) {
        std::vector<T> d(g.size());
        for (size_t i = 0; i < g.size(); ++i) d[i] = g[i] * c;
        detail::accumulate_grad(ia, d);
    });
    return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    for (size_t i = 0; i < out.data().size(); ++i) out.data()[i] = a.data()[i] + c;
    detail::record_op<T>({a}, out,
                         [ia = a.impl()](const std::vector<T>& g) { detail::accumulate_grad(ia, g); });
    return out;
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
    return scale(a, T(-1));
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    for (size_t i = 0; i < out.data().size(); ++i) out.data()[i] = a.data()[i] > T(0) ? a.data()[i] : T(0);
    detail::record_op<T>({a}, out, [ia = a.impl(), va = a.data()](const std::vector<T>& g) {
        std::vector<T> d(g.size());
        for (size_t i = 0; i < g.size(); ++i) d[i] = va[i] > T(0) ? g[i] : T(0);
        detail::accumulate_grad(ia, d);
    });
    return out;
}

/// Exact GELU: 0.5 x (1 + erf(x / sqrt(2))).
template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    for (size_t i = 0; i < out.data().size(); ++i) {
        double x = static_cast<double>(a.data()[i]);
        out.data()[i] = static_cast<T>(0.5 * x * (1.0 + std::erf(x * inv_sqrt2)));
    }
    detail::record_op<T>({a}, out, [ia = a.impl(), va = a.data()](const std::vector<T>& g) {
        constexpr double inv_sqrt2 = 0.7071067811865475244;
        constexpr double inv_sqrt2pi = 0.3989422804014326779;
        std::vector<T> d(g.size());
        for (size_t i = 0; i < g.size(); ++i) {
            double x = static_cast<double>(va[i]);
            double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
            d[i] = static_cast<T>(static_cast<double>(g[i]) * (cdf + x * pdf));
        }
        detail::accumulate_grad(ia, d);
    });
    return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    for (size_t i = 0; i < out.data().size(); ++i) {
        double x = static_cast<double>(a.data()[i]);
        out.data()[i] = static_cast<T>(1.0 / (1.0 + std::exp(-x)));
    }
    detail::record_op<T>({a}, out, [ia = a.impl(), vo = out.data()](const std::vector<T>& g) {
        std::vector<T> d(g.size());
        for (size_t i = 0; i < g.size(); ++i) d[i] = g[i] * vo[i] * (T(1) - vo[i]);
        detail::accumulate_grad(ia, d);
    });
    return out;
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    for (size_t i = 0; i < out.data().size(); ++i) out.data()[i] = std::log(a.data()[i]);
    detail::record_op<T>({a}, out, [ia = a.impl(), va = a.data()](const std::vector<T>& g) {
        std::vector<T> d(g.size());
        for (size_t i = 0; i < g.size(); ++i) d[i] = g[i] / va[i];
        detail::accumulate_grad(ia, d);
    });
    return out;
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    for (size_t i = 0; i < out.data().size(); ++i) out.data()[i] = std::exp(a.data()[i]);
    detail::record_op<T>({a}, out, [ia = a.impl(), vo = out.data()](const std::vector<T>& g) {
        std::vector<T> d(g.size());
        for (size_t i = 0; i < g.size(); ++i) d[i] = g[i] * vo[i];
        detail::accumulate_grad(ia, d);
    });
    return out;
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    for (size_t i = 0; i < out.data().size(); ++i) out.data()[i] = std::abs(a.data()[i]);
    detail::record_op<T>({a}, out, [ia = a.impl(), va = a.data()](const std::vector<T>& g) {
        std::vector<T> d(g.size());
        for (size_t i = 0; i < g.size(); ++i) d[i] = va[i] > T(0) ? g[i] : (va[i] < T(0) ? -g[i] : T(0));
        detail::accumulate_grad(ia, d);
    });
    return out;
}

/// Elementwise power with constant non-negative base usage (focal loss terms).
template <typename T>
Tensor<T> pow_scalar(const Tensor<T>& a, T p) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    for (size_t i = 0; i < out.data().size(); ++i)
        out.data()[i] = static_cast<T>(std::pow(static_cast<double>(a.data()[i]), static_cast<double>(p)));
    detail::record_op<T>({a}, out, [ia = a.impl(), va = a.data(), p](const std::vector<T>& g) {
        std::vector<T> d(g.size());
        for (size_t i = 0; i < g.size(); ++i) {
            double x = static_cast<double>(va[i]);
            d[i] = static_cast<T>(static_cast<double>(g[i]) * static_cast<double>(p) *
                                  std::pow(x, static_cast<double>(p) - 1.0));
        }
        detail::accumulate_grad(ia, d);
    });
    return out;
}

// ---------------------------------------------------------------------------
// Reductions and structure
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    T acc = T(0);
    for (T v : a.data()) acc += v;
    Tensor<T> out = Tensor<T>::scalar(acc);
    detail::record_op<T>({a}, out, [ia = a.impl(), n = a.numel()](const std::vector<T>& g) {
        std::vector<T> d(static_cast<size_t>(n), g[0]);
        detail::accumulate_grad(ia, d);
    });
    return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
    return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ConfigError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    Tensor<T> out = Tensor<T>::from(std::move(shape), a.data());
    detail::record_op<T>({a}, out,
                         [ia = a.impl()](const std::vector<T>& g) { detail::accumulate_grad(ia, g); });
    return out;
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
    if (a.ndim() != 2) throw ConfigError("transpose2d: expected 2-D tensor, got " + shape_str(a.shape()));
    int64_t r = a.dim(0), c = a.dim(1);
    Tensor<T> out = Tensor<T>::zeros({c, r});
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) out.data()[j * r + i] = a.data()[i * c + j];
    detail::record_op<T>({a}, out, [ia = a.impl(), r, c](const std::vector<T>& g) {
        std::vector<T> d(static_cast<size_t>(r * c));
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) d[i * c + j] = g[j * r + i];
        detail::accumulate_grad(ia, d);
    });
    return out;
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, int64_t begin, int64_t end) {
    if (a.ndim() != 2 || begin < 0 || end < begin || end > a.dim(0)) {
        throw ConfigError("slice_rows: invalid range [" + std::to_string(begin) + "," + std::to_string(end) +
                          ") for " + shape_str(a.shape()));
    }
    int64_t c = a.dim(1);
    Tensor<T> out = Tensor<T>::zeros({end - begin, c});
    std::copy(a.data().begin() + begin * c, a.data().begin() + end * c, out.data().begin());
    detail::record_op<T>({a}, out, [ia = a.impl(), begin, c, n = a.numel()](const std::vector<T>& g) {
        std::vector<T> d(static_cast<size_t>(n), T(0));
        std::copy(g.begin(), g.end(), d.begin() + begin * c);
        detail::accumulate_grad(ia, d);
    });
    return out;
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, int64_t begin, int64_t end) {
    if (a.ndim() != 2 || begin < 0 || end < begin || end > a.dim(1)) {
        throw ConfigError("slice_cols: invalid range [" + std::to_string(begin) + "," + std::to_string(end) +
                          ") for " + shape_str(a.shape()));
    }
    int64_t r = a.dim(0), c = a.dim(1), w = end - begin;
    Tensor<T> out = Tensor<T>::zeros({r, w});
    for (int64_t i = 0; i < r; ++i)
        std::copy(a.data().begin() + i * c + begin, a.data().begin() + i * c + end, out.data().begin() + i * w);
    detail::record_op<T>({a}, out, [ia = a.impl(), begin, r, c, w](const std::vector<T>& g) {
        std::vector<T> d(static_cast<size_t>(r * c), T(0));
        for (int64_t i = 0; i < r; ++i)
            std::copy(g.begin() + i * w, g.begin() + (i + 1) * w, d.begin() + i * c + begin);
        detail::accumulate_grad(ia, d);
    });
    return out;
}

/// Concatenate along an axis; all parts must agree on the other extents.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int64_t axis) {
    if (parts.empty()) throw ConfigError("concat: no operands");
    Shape out_shape = parts[0].shape();
    if (axis < 0 || axis >= static_cast<int64_t>(out_shape.size()))
        throw ConfigError("concat: axis " + std::to_string(axis) + " out of range for " + shape_str(out_shape));
    int64_t axis_total = 0;
    for (const auto& p : parts) {
        Shape s = p.shape();
        if (s.size() != out_shape.size()) throw ConfigError("concat: rank mismatch");
        for (size_t d = 0; d < s.size(); ++d) {
            if (static_cast<int64_t>(d) != axis && s[d] != out_shape[d])
                throw ConfigError("concat: shape mismatch " + shape_str(s) + " vs " + shape_str(out_shape));
        }
        axis_total += s[static_cast<size_t>(axis)];
    }
    out_shape[static_cast<size_t>(axis)] = axis_total;
    Tensor<T> out = Tensor<T>::zeros(out_shape);

    int64_t outer = 1, inner = 1;
    for (int64_t d = 0; d < axis; ++d) outer *= out_shape[static_cast<size_t>(d)];
    for (size_t d = static_cast<size_t>(axis) + 1; d < out_shape.size(); ++d) inner *= out_shape[d];

    int64_t offset = 0;
    std::vector<int64_t> extents, offsets;
    for (const auto& p : parts) {
        int64_t ext = p.dim(axis);
        extents.push_back(ext);
        offsets.push_back(offset);
        for (int64_t o = 0; o < outer; ++o) {
            std::copy(p.data().begin() + o * ext * inner, p.data().begin() + (o + 1) * ext * inner,
                      out.data().begin() + (o * axis_total + offset) * inner);
        }
        offset += ext;
    }

    std::vector<Tensor<T>> inputs = parts;
    std::vector<std::shared_ptr<TensorImpl<T>>> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    detail::record_op<T>(inputs, out, [impls, extents, offsets, outer, inner, axis_total](const std::vector<T>& g) {
        for (size_t k = 0; k < impls.size(); ++k) {
            if (!impls[k]->requires_grad) continue;
            std::vector<T> d(static_cast<size_t>(outer * extents[k] * inner));
            for (int64_t o = 0; o < outer; ++o) {
                std::copy(g.begin() + (o * axis_total + offsets[k]) * inner,
                          g.begin() + (o * axis_total + offsets[k] + extents[k]) * inner,
                          d.begin() + o * extents[k] * inner);
            }
            detail::accumulate_grad(impls[k], d);
        }
    });
    return out;
}

/// Single-element gather by flat index, as a scalar tensor.
template <typename T>
Tensor<T> take(const Tensor<T>& a, int64_t flat_index) {
    if (flat_index < 0 || flat_index >= a.numel())
        throw ConfigError("take: index " + std::to_string(flat_index) + " out of range for " + shape_str(a.shape()));
    Tensor<T> out = Tensor<T>::scalar(a.data()[static_cast<size_t>(flat_index)]);
    detail::record_op<T>({a}, out, [ia = a.impl(), flat_index, n = a.numel()](const std::vector<T>& g) {
        std::vector<T> d(static_cast<size_t>(n), T(0));
        d[static_cast<size_t>(flat_index)] = g[0];
        detail::accumulate_grad(ia, d);
    });
    return out;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
        throw ConfigError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<T> out = Tensor<T>::zeros({m, n});
    const T* pa = a.data().data();
    const T* pb = b.data().data();
    T* po = out.data().data();
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t kk = 0; kk < k; ++kk) {
            T av = pa[i * k + kk];
            const T* pbr = pb + kk * n;
            T* por = po + i * n;
            for (int64_t j = 0; j < n; ++j) por[j] += av * pbr[j];
        }
    }
    detail::record_op<T>({a, b}, out,
                         [ia = a.impl(), ib = b.impl(), va = a.data(), vb = b.data(), m, k, n](const std::vector<T>& g) {
                             if (ia->requires_grad) {
                                 // dA = dC · Bᵀ
                                 std::vector<T> d(static_cast<size_t>(m * k), T(0));
                                 for (int64_t i = 0; i < m; ++i)
                                     for (int64_t j = 0; j < n; ++j) {
                                         T gv = g[i * n + j];
                                         for (int64_t kk = 0; kk < k; ++kk) d[i * k + kk] += gv * vb[kk * n + j];
                                     }
                                 detail::accumulate_grad(ia, d);
                             }
                             if (ib->requires_grad) {
                                 // dB = Aᵀ · dC
                                 std::vector<T> d(static_cast<size_t>(k * n), T(0));
                                 for (int64_t i = 0; i < m; ++i)
                                     for (int64_t kk = 0; kk < k; ++kk) {
                                         T av = va[i * k + kk];
                                         for (int64_t j = 0; j < n; ++j) d[kk * n + j] += av * g[i * n + j];
                                     }
                                 detail::accumulate_grad(ib, d);
                             }
                         });
    return out;
}

/// x[n×m] + b[m] broadcast over rows.
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& b) {
    if (x.ndim() != 2 || b.ndim() != 1 || x.dim(1) != b.dim(0)) {
        throw ConfigError("add_rowvec: incompatible shapes " + shape_str(x.shape()) + " and " + shape_str(b.shape()));
    }
    int64_t n = x.dim(0), m = x.dim(1);
    Tensor<T> out = Tensor<T>::zeros(x.shape());
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < m; ++j) out.data()[i * m + j] = x.data()[i * m + j] + b.data()[j];
    detail::record_op<T>({x, b}, out, [ix = x.impl(), ib = b.impl(), n, m](const std::vector<T>& g) {
        detail::accumulate_grad(ix, g);
        if (ib->requires_grad) {
            std::vector<T> d(static_cast<size_t>(m), T(0));
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < m; ++j) d[j] += g[i * m + j];
            detail::accumulate_grad(ib, d);
        }
    });
    return out;
}

/// y = x · w + b with w stored [in×out].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    return add_rowvec(matmul(x, w), b);
}

// ---------------------------------------------------------------------------
// Normalization and softmax
// ---------------------------------------------------------------------------

/// Per-row normalization of a 2-D tensor to zero mean / unit variance,
/// followed by the affine map gamma·x̂ + beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    if (x.ndim() != 2) throw ConfigError("layer_norm: expected 2-D input, got " + shape_str(x.shape()));
    if (eps <= T(0)) throw ConfigError("layer_norm: eps must be positive");
    int64_t n = x.dim(0), c = x.dim(1);
    if (gamma.numel() != c || beta.numel() != c)
        throw ConfigError("layer_norm: affine parameters do not match feature dim " + std::to_string(c));

    Tensor<T> out = Tensor<T>::zeros(x.shape());
    std::vector<T> xhat(static_cast<size_t>(n * c));
    std::vector<T> inv_std(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        T mu = T(0);
        for (int64_t j = 0; j < c; ++j) mu += x.data()[i * c + j];
        mu /= static_cast<T>(c);
        T var = T(0);
        for (int64_t j = 0; j < c; ++j) {
            T d = x.data()[i * c + j] - mu;
            var += d * d;
        }
        var /= static_cast<T>(c);
        T is = T(1) / std::sqrt(var + eps);
        inv_std[static_cast<size_t>(i)] = is;
        for (int64_t j = 0; j < c; ++j) {
            T xh = (x.data()[i * c + j] - mu) * is;
            xhat[i * c + j] = xh;
            out.data()[i * c + j] = gamma.data()[j] * xh + beta.data()[j];
        }
    }
    detail::record_op<T>({x, gamma, beta}, out,
                         [ix = x.impl(), ig = gamma.impl(), ibt = beta.impl(), vg = gamma.data(), xhat, inv_std, n,
                          c](const std::vector<T>& g) {
                             if (ig->requires_grad) {
                                 std::vector<T> d(static_cast<size_t>(c), T(0));
                                 for (int64_t i = 0; i < n; ++i)
                                     for (int64_t j = 0; j < c; ++j) d[j] += g[i * c + j] * xhat[i * c + j];
                                 detail::accumulate_grad(ig, d);
                             }
                             if (ibt->requires_grad) {
                                 std::vector<T> d(static_cast<size_t>(c), T(0));
                                 for (int64_t i = 0; i < n; ++i)
                                     for (int64_t j = 0; j < c; ++j) d[j] += g[i * c + j];
                                 detail::accumulate_grad(ibt, d);
                             }
                             if (ix->requires_grad) {
                                 std::vector<T> d(static_cast<size_t>(n * c));
                                 for (int64_t i = 0; i < n; ++i) {
                                     T mean_dy = T(0), mean_dy_xhat = T(0);
                                     for (int64_t j = 0; j < c; ++j) {
                                         T dy = g[i * c + j] * vg[j];
                                         mean_dy += dy;
                                         mean_dy_xhat += dy * xhat[i * c + j];
                                     }
                                     mean_dy /= static_cast<T>(c);
                                     mean_dy_xhat /= static_cast<T>(c);
                                     for (int64_t j = 0; j < c; ++j) {
                                         T dy = g[i * c + j] * vg[j];
                                         d[i * c + j] = (dy - mean_dy - xhat[i * c + j] * mean_dy_xhat) *
                                                        inv_std[static_cast<size_t>(i)];
                                     }
                                 }
                                 detail::accumulate_grad(ix, d);
                             }
                         });
    return out;
}

/// Numerically stable softmax along the given axis (max subtraction).
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int64_t axis) {
    if (axis < 0 || axis >= x.ndim())
        throw ConfigError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
    int64_t ext = x.dim(axis);
    int64_t outer = 1, inner = 1;
    for (int64_t d = 0; d < axis; ++d) outer *= x.dim(d);
    for (int64_t d = axis + 1; d < x.ndim(); ++d) inner *= x.dim(d);

    Tensor<T> out = Tensor<T>::zeros(x.shape());
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
            const T* px = x.data().data() + o * ext * inner + in;
            T* po = out.data().data() + o * ext * inner + in;
            T mx = px[0];
            for (int64_t e = 1; e < ext; ++e) mx = std::max(mx, px[e * inner]);
            T denom = T(0);
            for (int64_t e = 0; e < ext; ++e) {
                T v = std::exp(px[e * inner] - mx);
                po[e * inner] = v;
                denom += v;
            }
            for (int64_t e = 0; e < ext; ++e) po[e * inner] /= denom;
        }
    }
    detail::record_op<T>({x}, out, [ix = x.impl(), vo = out.data(), ext, outer, inner](const std::vector<T>& g) {
        std::vector<T> d(vo.size());
        for (int64_t o = 0; o < outer; ++o) {
            for (int64_t in = 0; in < inner; ++in) {
                int64_t base = o * ext * inner + in;
                T dot = T(0);
                for (int64_t e = 0; e < ext; ++e) dot += g[base + e * inner] * vo[base + e * inner];
                for (int64_t e = 0; e < ext; ++e)
                    d[base + e * inner] = vo[base + e * inner] * (g[base + e * inner] - dot);
            }
        }
        detail::accumulate_grad(ix, d);
    });
    return out;
}

// ---------------------------------------------------------------------------
// Spatial ops on [C×H×W] tensors
// ---------------------------------------------------------------------------

/// Cross-correlation (no kernel flip) with zero padding.
/// kernels: [C_out × C_in/groups × kh × kw]; kernel extents must be odd.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int64_t stride, int64_t padding,
                 int64_t groups) {
    if (x.ndim() != 3) throw ConfigError("conv2d: expected [C×H×W] input, got " + shape_str(x.shape()));
    if (w.ndim() != 4) throw ConfigError("conv2d: expected 4-D kernels, got " + shape_str(w.shape()));
    int64_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    int64_t cout = w.dim(0), cin_g = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    if (kh % 2 == 0 || kw % 2 == 0) throw ConfigError("conv2d: kernel extents must be odd");
    if (groups <= 0 || cin % groups != 0 || cout % groups != 0)
        throw ConfigError("conv2d: groups=" + std::to_string(groups) + " must divide C_in=" + std::to_string(cin) +
                          " and C_out=" + std::to_string(cout));
    if (cin_g != cin / groups)
        throw ConfigError("conv2d: kernel channel dim " + std::to_string(cin_g) + " != C_in/groups");
    if (b.numel() != cout) throw ConfigError("conv2d: bias size mismatch");

    int64_t ho = (h + 2 * padding - kh) / stride + 1;
    int64_t wo = (wd + 2 * padding - kw) / stride + 1;
    if (ho <= 0 || wo <= 0) throw ConfigError("conv2d: kernel larger than padded input");

    Tensor<T> out = Tensor<T>::zeros({cout, ho, wo});
    int64_t cout_g = cout / groups;
    for (int64_t co = 0; co < cout; ++co) {
        int64_t gidx = co / cout_g;
        for (int64_t oy = 0; oy < ho; ++oy) {
            for (int64_t ox = 0; ox < wo; ++ox) {
                T acc = b.data()[co];
                for (int64_t ci = 0; ci < cin_g; ++ci) {
                    int64_t cx = gidx * cin_g + ci;
                    for (int64_t ky = 0; ky < kh; ++ky) {
                        int64_t iy = oy * stride - padding + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int64_t kx = 0; kx < kw; ++kx) {
                            int64_t iw = ox * stride - padding + kx;
                            if (iw < 0 || iw >= wd) continue;
                            acc += x.data()[(cx * h + iy) * wd + iw] *
                                   w.data()[((co * cin_g + ci) * kh + ky) * kw + kx];
                        }
                    }
                }
                out.data()[(co * ho + oy) * wo + ox] = acc;
            }
        }
    }
    detail::record_op<T>(
        {x, w, b}, out,
        [ix = x.impl(), iw = w.impl(), ib = b.impl(), vx = x.data(), vw = w.data(), cin, h, wd, cout, cin_g, kh, kw,
         ho, wo, stride, padding, cout_g](const std::vector<T>& g) {
            std::vector<T> dx, dw;
            if (ix->requires_grad) dx.assign(vx.size(), T(0));
            if (iw->requires_grad) dw.assign(vw.size(), T(0));
            for (int64_t co = 0; co < cout; ++co) {
                int64_t gidx = co / cout_g;
                for (int64_t oy = 0; oy < ho; ++oy) {
                    for (int64_t ox = 0; ox < wo; ++ox) {
                        T gv = g[(co * ho + oy) * wo + ox];
                        for (int64_t ci = 0; ci < cin_g; ++ci) {
                            int64_t cx = gidx * cin_g + ci;
                            for (int64_t ky = 0; ky < kh; ++ky) {
                                int64_t iy = oy * stride - padding + ky;
                                if (iy < 0 || iy >= h) continue;
                                for (int64_t kx = 0; kx < kw; ++kx) {
                                    int64_t iw2 = ox * stride - padding + kx;
                                    if (iw2 < 0 || iw2 >= wd) continue;
                                    int64_t xi = (cx * h + iy) * wd + iw2;
                                    int64_t wi = ((co * cin_g + ci) * kh + ky) * kw + kx;
                                    if (!dx.empty()) dx[xi] += gv * vw[wi];
                                    if (!dw.empty()) dw[wi] += gv * vx[xi];
                                }
                            }
                        }
                    }
                }
            }
            if (!dx.empty()) detail::accumulate_grad(ix, dx);
            if (!dw.empty()) detail::accumulate_grad(iw, dw);
            if (ib->requires_grad) {
                std::vector<T> db(static_cast<size_t>(cout), T(0));
                for (int64_t co = 0; co < cout; ++co)
                    for (int64_t i = 0; i < ho * wo; ++i) db[co] += g[co * ho * wo + i];
                detail::accumulate_grad(ib, db);
            }
        });
    return out;
}

enum class PoolKind { max, avg };

/// Per-window max or mean on [C×H×W]. Average pooling divides by the full
/// kernel area (zero padding included); max pooling ignores padded cells.
template <typename T>
Tensor<T> pool2d(const Tensor<T>& x, PoolKind kind, int64_t k, int64_t stride, int64_t padding) {
    if (x.ndim() != 3) throw ConfigError("pool2d: expected [C×H×W] input, got " + shape_str(x.shape()));
    int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    int64_t ho = (h + 2 * padding - k) / stride + 1;
    int64_t wo = (w + 2 * padding - k) / stride + 1;
    if (ho <= 0 || wo <= 0) throw ConfigError("pool2d: kernel larger than padded input");

    Tensor<T> out = Tensor<T>::zeros({c, ho, wo});
    std::vector<int64_t> argmax;
    if (kind == PoolKind::max) argmax.assign(static_cast<size_t>(c * ho * wo), -1);
    for (int64_t ci = 0; ci < c; ++ci) {
        for (int64_t oy = 0; oy < ho; ++oy) {
            for (int64_t ox = 0; ox < wo; ++ox) {
                int64_t oi = (ci * ho + oy) * wo + ox;
                if (kind == PoolKind::max) {
                    T best = T(0);
                    int64_t best_i = -1;
                    for (int64_t ky = 0; ky < k; ++ky) {
                        int64_t iy = oy * stride - padding + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int64_t kx = 0; kx < k; ++kx) {
                            int64_t iw = ox * stride - padding + kx;
                            if (iw < 0 || iw >= w) continue;
                            T v = x.data()[(ci * h + iy) * w + iw];
                            if (best_i < 0 || v > best) {
                                best = v;
                                best_i = (ci * h + iy) * w + iw;
                            }
                        }
                    }
                    out.data()[oi] = best;
                    argmax[static_cast<size_t>(oi)] = best_i;
                } else {
                    T acc = T(0);
                    for (int64_t ky = 0; ky < k; ++ky) {
                        int64_t iy = oy * stride - padding + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int64_t kx = 0; kx < k; ++kx) {
                            int64_t iw = ox * stride - padding + kx;
                            if (iw < 0 || iw >= w) continue;
                            acc += x.data()[(ci * h + iy) * w + iw];
                        }
                    }
                    out.data()[oi] = acc / static_cast<T>(k * k);
                }
            }
        }
    }
    detail::record_op<T>({x}, out,
                         [ix = x.impl(), kind, argmax, c, h, w, ho, wo, k, stride, padding](const std::vector<T>& g) {
                             std::vector<T> d(static_cast<size_t>(c * h * w), T(0));
                             if (kind == PoolKind::max) {
                                 for (size_t oi = 0; oi < g.size(); ++oi)
                                     if (argmax[oi] >= 0) d[static_cast<size_t>(argmax[oi])] += g[oi];
                             } else {
                                 T inv = T(1) / static_cast<T>(k * k);
                                 for (int64_t ci = 0; ci < c; ++ci)
                                     for (int64_t oy = 0; oy < ho; ++oy)
                                         for (int64_t ox = 0; ox < wo; ++ox) {
                                             T gv = g[(ci * ho + oy) * wo + ox] * inv;
                                             for (int64_t ky = 0; ky < k; ++ky) {
                                                 int64_t iy = oy * stride - padding + ky;
                                                 if (iy < 0 || iy >= h) continue;
                                                 for (int64_t kx = 0; kx < k; ++kx) {
                                                     int64_t iw = ox * stride - padding + kx;
                                                     if (iw < 0 || iw >= w) continue;
                                                     d[(ci * h + iy) * w + iw] += gv;
                                                 }
                                             }
                                         }
                             }
                             detail::accumulate_grad(ix, d);
                         });
    return out;
}

/// Each value replicated factor×factor.
template <typename T>
Tensor<T> upsample_nearest2d(const Tensor<T>& x, int64_t factor) {
    if (x.ndim() != 3) throw ConfigError("upsample_nearest2d: expected [C×H×W] input, got " + shape_str(x.shape()));
    if (factor < 1) throw ConfigError("upsample_nearest2d: factor must be >= 1");
    int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor<T> out = Tensor<T>::zeros({c, h * factor, w * factor});
    int64_t ho = h * factor, wo = w * factor;
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t oy = 0; oy < ho; ++oy)
            for (int64_t ox = 0; ox < wo; ++ox)
                out.data()[(ci * ho + oy) * wo + ox] = x.data()[(ci * h + oy / factor) * w + ox / factor];
    detail::record_op<T>({x}, out, [ix = x.impl(), c, h, w, factor](const std::vector<T>& g) {
        int64_t ho = h * factor, wo = w * factor;
        std::vector<T> d(static_cast<size_t>(c * h * w), T(0));
        for (int64_t ci = 0; ci < c; ++ci)
            for (int64_t oy = 0; oy < ho; ++oy)
                for (int64_t ox = 0; ox < wo; ++ox)
                    d[(ci * h + oy / factor) * w + ox / factor] += g[(ci * ho + oy) * wo + ox];
        detail::accumulate_grad(ix, d);
    });
    return out;
}

/// Extract non-overlapping P×P patches of a [C×H×W] image as rows of a
/// [(H/P·W/P) × C·P·P] matrix, in row-major grid order. The row layout is
/// channel-major within a patch: (c, py, px).
template <typename T>
Tensor<T> extract_patches(const Tensor<T>& x, int64_t patch) {
    if (x.ndim() != 3) throw ConfigError("extract_patches: expected [C×H×W] input");
    int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (h % patch != 0 || w % patch != 0)
        throw ConfigError("extract_patches: extents " + shape_str(x.shape()) + " not divisible by patch " +
                          std::to_string(patch));
    int64_t gh = h / patch, gw = w / patch;
    int64_t row_len = c * patch * patch;
    Tensor<T> out = Tensor<T>::zeros({gh * gw, row_len});
    for (int64_t gy = 0; gy < gh; ++gy)
        for (int64_t gx = 0; gx < gw; ++gx) {
            int64_t row = gy * gw + gx;
            int64_t idx = 0;
            for (int64_t ci = 0; ci < c; ++ci)
                for (int64_t py = 0; py < patch; ++py)
                    for (int64_t px = 0; px < patch; ++px)
                        out.data()[row * row_len + idx++] =
                            x.data()[(ci * h + gy * patch + py) * w + gx * patch + px];
        }
    detail::record_op<T>({x}, out, [ix = x.impl(), c, h, w, patch](const std::vector<T>& g) {
        int64_t gh = h / patch, gw = w / patch, row_len = c * patch * patch;
        std::vector<T> d(static_cast<size_t>(c * h * w), T(0));
        for (int64_t gy = 0; gy < gh; ++gy)
            for (int64_t gx = 0; gx < gw; ++gx) {
                int64_t row = gy * gw + gx;
                int64_t idx = 0;
                for (int64_t ci = 0; ci < c; ++ci)
                    for (int64_t py = 0; py < patch; ++py)
                        for (int64_t px = 0; px < patch; ++px)
                            d[(ci * h + gy * patch + py) * w + gx * patch + px] += g[row * row_len + idx++];
            }
        detail::accumulate_grad(ix, d);
    });
    return out;
}

// Operator sugar over the elementwise ops.
template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
    return add(a, b);
}
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
    return sub(a, b);
}
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) {
    return mul(a, b);
}
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, T c) {
    return scale(a, c);
}

}  // namespace patrack
