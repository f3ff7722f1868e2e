#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "rat/graph.hpp"
#include "rat/tensor.hpp"

// Differentiable op set. Every op is a pure function; pass a Graph to record
// for backward, or nullptr for plain evaluation. Broadcasting is limited to
// matmul batch dims and the softmax bias; everything else wants exact shapes.

namespace rat {

namespace detail {

inline Shape batch_dims(const Shape& s) { return Shape(s.begin(), s.end() - 2); }

// right-aligned broadcast of two batch-dim lists (each entry equal or 1)
inline Shape broadcast_batch(const Shape& a, const Shape& b, const char* op) {
    const std::size_t n = std::max(a.size(), b.size());
    Shape out(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        const std::int64_t da = i < n - a.size() ? 1 : a[i - (n - a.size())];
        const std::int64_t db = i < n - b.size() ? 1 : b[i - (n - b.size())];
        if (da != db && da != 1 && db != 1)
            throw DimensionError(std::string(op) + ": batch dims " + shape_str(a) + " and " +
                                 shape_str(b) + " do not broadcast");
        out[i] = std::max(da, db);
    }
    return out;
}

// flat index into `dims` (right-aligned under `out_dims`) for out coordinate
struct BatchIndexer {
    std::vector<std::int64_t> strides;  // aligned to out dims; 0 where broadcast

    BatchIndexer(const Shape& out_dims, const Shape& dims) {
        const std::size_t n = out_dims.size();
        strides.assign(n, 0);
        std::int64_t stride = 1;
        for (std::size_t i = dims.size(); i-- > 0;) {
            const std::size_t oi = i + (n - dims.size());
            strides[oi] = dims[i] == 1 ? 0 : stride;
            stride *= dims[i];
        }
    }

    std::int64_t map(const std::vector<std::int64_t>& coord) const {
        std::int64_t f = 0;
        for (std::size_t i = 0; i < coord.size(); ++i) f += coord[i] * strides[i];
        return f;
    }
};

inline bool advance(std::vector<std::int64_t>& coord, const Shape& dims) {
    for (std::size_t i = coord.size(); i-- > 0;) {
        if (++coord[i] < dims[i]) return true;
        coord[i] = 0;
    }
    return false;
}

// C[m,n] += A[m,k] * B[k,n]
template <class Real>
void mm_acc(const Real* a, const Real* b, Real* c, std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        Real* crow = c + i * n;
        const Real* arow = a + i * k;
        for (std::int64_t p = 0; p < k; ++p) {
            const Real av = arow[p];
            const Real* brow = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// dA[m,k] += gy[m,n] * B[k,n]^T
template <class Real>
void mm_acc_gyBt(const Real* gy, const Real* b, Real* da, std::int64_t m, std::int64_t k,
                 std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const Real* gyrow = gy + i * n;
        Real* darow = da + i * k;
        for (std::int64_t p = 0; p < k; ++p) {
            const Real* brow = b + p * n;
            Real s = 0;
            for (std::int64_t j = 0; j < n; ++j) s += gyrow[j] * brow[j];
            darow[p] += s;
        }
    }
}

// dB[k,n] += A[m,k]^T * gy[m,n]
template <class Real>
void mm_acc_Atgy(const Real* a, const Real* gy, Real* db, std::int64_t m, std::int64_t k,
                 std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const Real* arow = a + i * k;
        const Real* gyrow = gy + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const Real av = arow[p];
            Real* dbrow = db + p * n;
            for (std::int64_t j = 0; j < n; ++j) dbrow[j] += av * gyrow[j];
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// matmul: [.., m, k] x [.., k, n] -> [.., m, n], leading dims broadcast

template <class Real>
Tensor<Real> matmul(Graph<Real>* g, const Tensor<Real>& a, const Tensor<Real>& b) {
    if (a.ndim() < 2 || b.ndim() < 2)
        throw DimensionError("matmul: operands must have >= 2 dims, got " + shape_str(a.shape()) +
                             " and " + shape_str(b.shape()));
    const std::int64_t m = a.dim(-2), k = a.dim(-1);
    const std::int64_t k2 = b.dim(-2), n = b.dim(-1);
    if (k != k2)
        throw DimensionError("matmul: inner dims disagree for " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    const Shape ab = detail::batch_dims(a.shape());
    const Shape bb = detail::batch_dims(b.shape());
    const Shape ob = detail::broadcast_batch(ab, bb, "matmul");

    Shape out_shape = ob;
    out_shape.push_back(m);
    out_shape.push_back(n);
    Tensor<Real> out = Tensor<Real>::zeros(out_shape);

    const detail::BatchIndexer ia(ob, ab), ib(ob, bb);
    std::vector<std::int64_t> coord(ob.size(), 0);
    std::int64_t ofs = 0;
    do {
        detail::mm_acc(a.data() + ia.map(coord) * m * k, b.data() + ib.map(coord) * k * n,
                       out.data() + ofs * m * n, m, k, n);
        ++ofs;
    } while (detail::advance(coord, ob));

    if (g && (g->wants_grad(a) || g->wants_grad(b))) {
        g->record(out, [a, b, out, ob, ab, bb, m, k, n](Graph<Real>& gg) {
            const Tensor<Real>* gy = gg.grad_by_id(out.id());
            if (!gy) return;
            const bool wa = gg.wants_grad(a), wb = gg.wants_grad(b);
            Tensor<Real> ga = wa ? Tensor<Real>::zeros(a.shape()) : Tensor<Real>();
            Tensor<Real> gb = wb ? Tensor<Real>::zeros(b.shape()) : Tensor<Real>();
            const detail::BatchIndexer ia(ob, ab), ib(ob, bb);
            std::vector<std::int64_t> coord(ob.size(), 0);
            std::int64_t ofs = 0;
            do {
                const Real* gyp = gy->data() + ofs * m * n;
                if (wa)
                    detail::mm_acc_gyBt(gyp, b.data() + ib.map(coord) * k * n,
                                        ga.data() + ia.map(coord) * m * k, m, k, n);
                if (wb)
                    detail::mm_acc_Atgy(a.data() + ia.map(coord) * m * k, gyp,
                                        gb.data() + ib.map(coord) * k * n, m, k, n);
                ++ofs;
            } while (detail::advance(coord, ob));
            if (wa) gg.accumulate(a, ga);
            if (wb) gg.accumulate(b, gb);
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// linear: [.., K] x w[K, N] (+ b[N]) -> [.., N]

template <class Real>
Tensor<Real> linear(Graph<Real>* g, const Tensor<Real>& x, const Tensor<Real>& w,
                    const Tensor<Real>& b = Tensor<Real>()) {
    if (x.ndim() < 1 || w.ndim() != 2)
        throw DimensionError("linear: need x[..,K], w[K,N], got " + shape_str(x.shape()) + " and " +
                             shape_str(w.shape()));
    const std::int64_t kdim = x.dim(-1), n = w.dim(1);
    if (w.dim(0) != kdim)
        throw DimensionError("linear: x " + shape_str(x.shape()) + " does not match w " +
                             shape_str(w.shape()));
    if (b.defined() && (b.ndim() != 1 || b.dim(0) != n))
        throw DimensionError("linear: bias " + shape_str(b.shape()) + " does not match w " +
                             shape_str(w.shape()));
    const std::int64_t mrows = x.numel() / kdim;

    Shape out_shape = x.shape();
    out_shape.back() = n;
    Tensor<Real> out = Tensor<Real>::zeros(out_shape);
    if (b.defined()) {
        for (std::int64_t i = 0; i < mrows; ++i)
            std::copy(b.data(), b.data() + n, out.data() + i * n);
    }
    detail::mm_acc(x.data(), w.data(), out.data(), mrows, kdim, n);

    if (g && (g->wants_grad(x) || g->wants_grad(w) || (b.defined() && g->wants_grad(b)))) {
        g->record(out, [x, w, b, out, mrows, kdim, n](Graph<Real>& gg) {
            const Tensor<Real>* gy = gg.grad_by_id(out.id());
            if (!gy) return;
            if (gg.wants_grad(x)) {
                Tensor<Real> gx = Tensor<Real>::zeros(x.shape());
                detail::mm_acc_gyBt(gy->data(), w.data(), gx.data(), mrows, kdim, n);
                gg.accumulate(x, gx);
            }
            if (gg.wants_grad(w)) {
                Tensor<Real> gw = Tensor<Real>::zeros(w.shape());
                detail::mm_acc_Atgy(x.data(), gy->data(), gw.data(), mrows, kdim, n);
                gg.accumulate(w, gw);
            }
            if (b.defined() && gg.wants_grad(b)) {
                Tensor<Real> gb = Tensor<Real>::zeros(b.shape());
                for (std::int64_t i = 0; i < mrows; ++i) {
                    const Real* row = gy->data() + i * n;
                    for (std::int64_t j = 0; j < n; ++j) gb.data()[j] += row[j];
                }
                gg.accumulate(b, gb);
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// conv3x3: x[B,C,H,W], w[O,C,3,3], b[O] -> [B,O,H,W]; zero padding 1, stride 1,
// cross-correlation semantics

template <class Real>
Tensor<Real> conv3x3(Graph<Real>* g, const Tensor<Real>& x, const Tensor<Real>& w,
                     const Tensor<Real>& b) {
    if (x.ndim() != 4) throw DimensionError("conv3x3: input must be 4-d, got " + shape_str(x.shape()));
    if (w.ndim() != 4 || w.dim(2) != 3 || w.dim(3) != 3)
        throw DimensionError("conv3x3: weight must be [O,C,3,3], got " + shape_str(w.shape()));
    if (w.dim(1) != x.dim(1))
        throw DimensionError("conv3x3: channels disagree, input " + shape_str(x.shape()) +
                             " vs weight " + shape_str(w.shape()));
    if (b.ndim() != 1 || b.dim(0) != w.dim(0))
        throw DimensionError("conv3x3: bias " + shape_str(b.shape()) + " does not match weight " +
                             shape_str(w.shape()));
    const std::int64_t bs = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3), co = w.dim(0);
    Tensor<Real> out = Tensor<Real>::zeros({bs, co, h, wd});

    for (std::int64_t bb = 0; bb < bs; ++bb) {
        for (std::int64_t o = 0; o < co; ++o) {
            Real* op = out.data() + ((bb * co + o) * h) * wd;
            const Real bias = b.data()[o];
            for (std::int64_t i = 0; i < h * wd; ++i) op[i] = bias;
            for (std::int64_t c = 0; c < ci; ++c) {
                const Real* ip = x.data() + ((bb * ci + c) * h) * wd;
                for (int ky = 0; ky < 3; ++ky) {
                    const int dy = ky - 1;
                    for (int kx = 0; kx < 3; ++kx) {
                        const int dx = kx - 1;
                        const Real wv = w.data()[((o * ci + c) * 3 + ky) * 3 + kx];
                        const std::int64_t y0 = std::max<std::int64_t>(0, -dy);
                        const std::int64_t y1 = std::min<std::int64_t>(h, h - dy);
                        const std::int64_t x0 = std::max<std::int64_t>(0, -dx);
                        const std::int64_t x1 = std::min<std::int64_t>(wd, wd - dx);
                        for (std::int64_t y = y0; y < y1; ++y) {
                            const Real* src = ip + (y + dy) * wd + (x0 + dx);
                            Real* dst = op + y * wd + x0;
                            for (std::int64_t i = 0; i < x1 - x0; ++i) dst[i] += wv * src[i];
                        }
                    }
                }
            }
        }
    }

    if (g && (g->wants_grad(x) || g->wants_grad(w) || g->wants_grad(b))) {
        g->record(out, [x, w, b, out, bs, ci, co, h, wd](Graph<Real>& gg) {
            const Tensor<Real>* gyp = gg.grad_by_id(out.id());
            if (!gyp) return;
            const Real* gy = gyp->data();
            const bool wx = gg.wants_grad(x), ww = gg.wants_grad(w), wb = gg.wants_grad(b);
            Tensor<Real> gx = wx ? Tensor<Real>::zeros(x.shape()) : Tensor<Real>();
            Tensor<Real> gw = ww ? Tensor<Real>::zeros(w.shape()) : Tensor<Real>();
            Tensor<Real> gb = wb ? Tensor<Real>::zeros(b.shape()) : Tensor<Real>();
            for (std::int64_t bb = 0; bb < bs; ++bb) {
                for (std::int64_t o = 0; o < co; ++o) {
                    const Real* gp = gy + ((bb * co + o) * h) * wd;
                    if (wb) {
                        Real s = 0;
                        for (std::int64_t i = 0; i < h * wd; ++i) s += gp[i];
                        gb.data()[o] += s;
                    }
                    for (std::int64_t c = 0; c < ci; ++c) {
                        const Real* ip = x.data() + ((bb * ci + c) * h) * wd;
                        Real* gxp = wx ? gx.data() + ((bb * ci + c) * h) * wd : nullptr;
                        for (int ky = 0; ky < 3; ++ky) {
                            const int dy = ky - 1;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int dx = kx - 1;
                                const std::int64_t widx = ((o * ci + c) * 3 + ky) * 3 + kx;
                                const Real wv = w.data()[widx];
                                const std::int64_t y0 = std::max<std::int64_t>(0, -dy);
                                const std::int64_t y1 = std::min<std::int64_t>(h, h - dy);
                                const std::int64_t x0 = std::max<std::int64_t>(0, -dx);
                                const std::int64_t x1 = std::min<std::int64_t>(wd, wd - dx);
                                Real ws = 0;
                                for (std::int64_t y = y0; y < y1; ++y) {
                                    const Real* grow = gp + y * wd + x0;
                                    const std::int64_t srcofs = (y + dy) * wd + (x0 + dx);
                                    if (wx) {
                                        Real* dst = gxp + srcofs;
                                        for (std::int64_t i = 0; i < x1 - x0; ++i)
                                            dst[i] += wv * grow[i];
                                    }
                                    if (ww) {
                                        const Real* src = ip + srcofs;
                                        for (std::int64_t i = 0; i < x1 - x0; ++i)
                                            ws += src[i] * grow[i];
                                    }
                                }
                                if (ww) gw.data()[widx] += ws;
                            }
                        }
                    }
                }
            }
            if (wx) gg.accumulate(x, gx);
            if (ww) gg.accumulate(w, gw);
            if (wb) gg.accumulate(b, gb);
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// softmax over the last dim, with an optional additive bias broadcast
// (right-aligned, dims equal or 1). Row max is subtracted before exp.

template <class Real>
Tensor<Real> softmax_lastdim(Graph<Real>* g, const Tensor<Real>& x,
                             const Tensor<Real>& bias = Tensor<Real>()) {
    const std::int64_t n = x.dim(-1);
    const std::int64_t rows = x.numel() / n;
    Shape lead(x.shape().begin(), x.shape().end() - 1);

    detail::BatchIndexer bi({}, {});
    std::vector<std::int64_t> bias_row(static_cast<std::size_t>(rows), 0);
    std::int64_t bias_col_stride = 0;
    if (bias.defined()) {
        if (bias.ndim() > x.ndim())
            throw DimensionError("softmax bias " + shape_str(bias.shape()) +
                                 " has more dims than input " + shape_str(x.shape()));
        for (std::int64_t i = 0; i < bias.ndim(); ++i) {
            const std::int64_t xd = x.dim(x.ndim() - 1 - i), bd = bias.dim(bias.ndim() - 1 - i);
            if (bd != xd && bd != 1)
                throw DimensionError("softmax bias " + shape_str(bias.shape()) +
                                     " does not broadcast to " + shape_str(x.shape()));
        }
        Shape blead(bias.shape().begin(), bias.shape().end() - 1);
        bias_col_stride = bias.dim(-1) == 1 ? 0 : 1;
        const detail::BatchIndexer idx(lead, blead);
        std::vector<std::int64_t> coord(lead.size(), 0);
        std::int64_t r = 0;
        if (rows > 0) do {
                bias_row[static_cast<std::size_t>(r)] = idx.map(coord) * bias.dim(-1);
                ++r;
            } while (detail::advance(coord, lead));
    }

    Tensor<Real> out = Tensor<Real>::zeros(x.shape());
    for (std::int64_t r = 0; r < rows; ++r) {
        const Real* xr = x.data() + r * n;
        Real* yr = out.data() + r * n;
        const Real* br = bias.defined() ? bias.data() + bias_row[static_cast<std::size_t>(r)] : nullptr;
        Real mx = xr[0] + (br ? br[0] : Real(0));
        for (std::int64_t j = 1; j < n; ++j) {
            const Real v = xr[j] + (br ? br[j * bias_col_stride] : Real(0));
            if (v > mx) mx = v;
        }
        Real s = 0;
        for (std::int64_t j = 0; j < n; ++j) {
            const Real v = xr[j] + (br ? br[j * bias_col_stride] : Real(0));
            const Real e = std::exp(v - mx);
            yr[j] = e;
            s += e;
        }
        const Real inv = Real(1) / s;
        for (std::int64_t j = 0; j < n; ++j) yr[j] *= inv;
    }

    if (g && (g->wants_grad(x) || (bias.defined() && g->wants_grad(bias)))) {
        g->record(out, [x, bias, out, rows, n, bias_row, bias_col_stride](Graph<Real>& gg) {
            const Tensor<Real>* gyp = gg.grad_by_id(out.id());
            if (!gyp) return;
            const bool wx = gg.wants_grad(x);
            const bool wb = bias.defined() && gg.wants_grad(bias);
            Tensor<Real> gx = Tensor<Real>::zeros(x.shape());
            for (std::int64_t r = 0; r < rows; ++r) {
                const Real* yr = out.data() + r * n;
                const Real* gr = gyp->data() + r * n;
                Real* dr = gx.data() + r * n;
                Real dot = 0;
                for (std::int64_t j = 0; j < n; ++j) dot += gr[j] * yr[j];
                for (std::int64_t j = 0; j < n; ++j) dr[j] = yr[j] * (gr[j] - dot);
            }
            if (wb) {
                Tensor<Real> gb = Tensor<Real>::zeros(bias.shape());
                for (std::int64_t r = 0; r < rows; ++r) {
                    Real* dst = gb.data() + bias_row[static_cast<std::size_t>(r)];
                    const Real* dr = gx.data() + r * n;
                    for (std::int64_t j = 0; j < n; ++j) dst[j * bias_col_stride] += dr[j];
                }
                gg.accumulate(bias, gb);
            }
            if (wx) gg.accumulate(x, gx);
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// layer norm over the last dim with per-channel affine

template <class Real>
Tensor<Real> layer_norm(Graph<Real>* g, const Tensor<Real>& x, const Tensor<Real>& gain,
                        const Tensor<Real>& shift, Real eps = Real(1e-6)) {
    const std::int64_t c = x.dim(-1);
    if (gain.ndim() != 1 || gain.dim(0) != c || shift.ndim() != 1 || shift.dim(0) != c)
        throw DimensionError("layer_norm: gain/shift " + shape_str(gain.shape()) + "/" +
                             shape_str(shift.shape()) + " do not match channels of " +
                             shape_str(x.shape()));
    if (!(eps > Real(0))) throw ContractError("layer_norm: eps must be > 0");
    const std::int64_t rows = x.numel() / c;
    Tensor<Real> out = Tensor<Real>::zeros(x.shape());
    for (std::int64_t r = 0; r < rows; ++r) {
        const Real* xr = x.data() + r * c;
        Real* yr = out.data() + r * c;
        Real mu = 0;
        for (std::int64_t j = 0; j < c; ++j) mu += xr[j];
        mu /= static_cast<Real>(c);
        Real var = 0;
        for (std::int64_t j = 0; j < c; ++j) {
            const Real d = xr[j] - mu;
            var += d * d;
        }
        var /= static_cast<Real>(c);
        const Real inv = Real(1) / std::sqrt(var + eps);
        for (std::int64_t j = 0; j < c; ++j)
            yr[j] = (xr[j] - mu) * inv * gain.data()[j] + shift.data()[j];
    }

    if (g && (g->wants_grad(x) || g->wants_grad(gain) || g->wants_grad(shift))) {
        g->record(out, [x, gain, shift, out, rows, c, eps](Graph<Real>& gg) {
            const Tensor<Real>* gyp = gg.grad_by_id(out.id());
            if (!gyp) return;
            const bool wx = gg.wants_grad(x), wgn = gg.wants_grad(gain), wsh = gg.wants_grad(shift);
            Tensor<Real> gx = wx ? Tensor<Real>::zeros(x.shape()) : Tensor<Real>();
            Tensor<Real> ggain = wgn ? Tensor<Real>::zeros(gain.shape()) : Tensor<Real>();
            Tensor<Real> gshift = wsh ? Tensor<Real>::zeros(shift.shape()) : Tensor<Real>();
            std::vector<Real> xhat(static_cast<std::size_t>(c));
            for (std::int64_t r = 0; r < rows; ++r) {
                const Real* xr = x.data() + r * c;
                const Real* gr = gyp->data() + r * c;
                Real mu = 0;
                for (std::int64_t j = 0; j < c; ++j) mu += xr[j];
                mu /= static_cast<Real>(c);
                Real var = 0;
                for (std::int64_t j = 0; j < c; ++j) {
                    const Real d = xr[j] - mu;
                    var += d * d;
                }
                var /= static_cast<Real>(c);
                const Real inv = Real(1) / std::sqrt(var + eps);
                for (std::int64_t j = 0; j < c; ++j) xhat[static_cast<std::size_t>(j)] = (xr[j] - mu) * inv;
                if (wx) {
                    Real m1 = 0, m2 = 0;
                    for (std::int64_t j = 0; j < c; ++j) {
                        const Real hj = gain.data()[j] * gr[j];
                        m1 += hj;
                        m2 += hj * xhat[static_cast<std::size_t>(j)];
                    }
                    m1 /= static_cast<Real>(c);
                    m2 /= static_cast<Real>(c);
                    Real* dr = gx.data() + r * c;
                    for (std::int64_t j = 0; j < c; ++j) {
                        const Real hj = gain.data()[j] * gr[j];
                        dr[j] = inv * (hj - m1 - xhat[static_cast<std::size_t>(j)] * m2);
                    }
                }
                if (wgn)
                    for (std::int64_t j = 0; j < c; ++j)
                        ggain.data()[j] += gr[j] * xhat[static_cast<std::size_t>(j)];
                if (wsh)
                    for (std::int64_t j = 0; j < c; ++j) gshift.data()[j] += gr[j];
            }
            if (wx) gg.accumulate(x, gx);
            if (wgn) gg.accumulate(gain, ggain);
            if (wsh) gg.accumulate(shift, gshift);
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// elementwise ops

namespace detail {

template <class Real>
void check_same_shape(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + " differ");
}

}  // namespace detail

template <class Real>
Tensor<Real> add(Graph<Real>* g, const Tensor<Real>& a, const Tensor<Real>& b) {
    detail::check_same_shape(a, b, "add");
    Tensor<Real> out = Tensor<Real>::zeros(a.shape());
    for (std::int64_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
    if (g && (g->wants_grad(a) || g->wants_grad(b))) {
        g->record(out, [a, b, out](Graph<Real>& gg) {
            const Tensor<Real>* gy = gg.grad_by_id(out.id());
            if (!gy) return;
            if (gg.wants_grad(a)) gg.accumulate(a, *gy);
            if (gg.wants_grad(b)) gg.accumulate(b, *gy);
        });
    }
    return out;
}

template <class Real>
Tensor<Real> sub(Graph<Real>* g, const Tensor<Real>& a, const Tensor<Real>& b) {
    detail::check_same_shape(a, b, "sub");
    Tensor<Real> out = Tensor<Real>::zeros(a.shape());
    for (std::int64_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
    if (g && (g->wants_grad(a) || g->wants_grad(b))) {
        g->record(out, [a, b, out](Graph<Real>& gg) {
            const Tensor<Real>* gy = gg.grad_by_id(out.id());
            if (!gy) return;
            if (gg.wants_grad(a)) gg.accumulate(a, *gy);
            if (gg.wants_grad(b)) {
                Tensor<Real> gb = Tensor<Real>::zeros(b.shape());
                for (std::int64_t i = 0; i < b.numel(); ++i) gb.data()[i] = -gy->data()[i];
                gg.accumulate(b, gb);
            }
        });
    }
    return out;
}

template <class Real>
Tensor<Real> mul(Graph<Real>* g, const Tensor<Real>& a, const Tensor<Real>& b) {
    detail::check_same_shape(a, b, "mul");
    Tensor<Real> out = Tensor<Real>::zeros(a.shape());
    for (std::int64_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    if (g && (g->wants_grad(a) || g->wants_grad(b))) {
        g->record(out, [a, b, out](Graph<Real>& gg) {
            const Tensor<Real>* gy = gg.grad_by_id(out.id());
            if (!gy) return;
            if (gg.wants_grad(a)) {
                Tensor<Real> ga = Tensor<Real>::zeros(a.shape());
                for (std::int64_t i = 0; i < a.numel(); ++i)
                    ga.data()[i] = gy->data()[i] * b.data()[i];
                gg.accumulate(a, ga);
            }
            if (gg.wants_grad(b)) {
                Tensor<Real> gb = Tensor<Real>::zeros(b.shape());
                for (std::int64_t i = 0; i < b.numel(); ++i)
                    gb.data()[i] = gy->data()[i] * a.data()[i];
                gg.accumulate(b, gb);
            }
        });
    }
    return out;
}

template <class Real>
Tensor<Real> mul_scalar(Graph<Real>* g, const Tensor<Real>& a, Real s) {
    Tensor<Real> out = Tensor<Real>::zeros(a.shape());
    for (std::int64_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] * s;
    if (g && g->wants_grad(a)) {
        g->record(out, [a, out, s](Graph<Real>& gg) {
            const Tensor<Real>* gy = gg.grad_by_id(out.id());
            if (!gy) return;
            Tensor<Real> ga = Tensor<Real>::zeros(a.shape());
            for (std::int64_t i = 0; i < a.numel(); ++i) ga.data()[i] = gy->data()[i] * s;
            gg.accumulate(a, ga);
        });
    }
    return out;
}

// gelu, tanh approximation
template <class Real>
Tensor<Real> gelu(Graph<Real>* g, const Tensor<Real>& x) {
    constexpr Real kC = Real(0.7978845608028654);  // sqrt(2/pi)
    constexpr Real kA = Real(0.044715);
    Tensor<Real> out = Tensor<Real>::zeros(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const Real v = x.data()[i];
        const Real t = std::tanh(kC * (v + kA * v * v * v));
        out.data()[i] = Real(0.5) * v * (Real(1) + t);
    }
    if (g && g->wants_grad(x)) {
        g->record(out, [x, out](Graph<Real>& gg) {
            const Tensor<Real>* gy = gg.grad_by_id(out.id());
            if (!gy) return;
            Tensor<Real> gx = Tensor<Real>::zeros(x.shape());
            for (std::int64_t i = 0; i < x.numel(); ++i) {
                const Real v = x.data()[i];
                const Real t = std::tanh(kC * (v + kA * v * v * v));
                const Real du = kC * (Real(1) + Real(3) * kA * v * v);
                const Real d = Real(0.5) * (Real(1) + t) + Real(0.5) * v * (Real(1) - t * t) * du;
                gx.data()[i] = gy->data()[i] * d;
            }
            gg.accumulate(x, gx);
        });
    }
    return out;
}

template <class Real>
Tensor<Real> abs_val(Graph<Real>* g, const Tensor<Real>& x) {
    Tensor<Real> out = Tensor<Real>::zeros(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) out.data()[i] = std::abs(x.data()[i]);
    if (g && g->wants_grad(x)) {
        g->record(out, [x, out](Graph<Real>& gg) {
            const Tensor<Real>* gy = gg.grad_by_id(out.id());
            if (!gy) return;
            Tensor<Real> gx = Tensor<Real>::zeros(x.shape());
            for (std::int64_t i = 0; i < x.numel(); ++i) {
                const Real v = x.data()[i];
                const Real s = v > 0 ? Real(1) : (v < 0 ? Real(-1) : Real(0));
                gx.data()[i] = gy->data()[i] * s;
            }
            gg.accumulate(x, gx);
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// reductions (to a scalar of shape [1])

template <class Real>
Tensor<Real> sum(Graph<Real>* g, const Tensor<Real>& x) {
    Real s = 0;
    for (std::int64_t i = 0; i < x.numel(); ++i) s += x.data()[i];
    Tensor<Real> out = Tensor<Real>::scalar(s);
    if (g && g->wants_grad(x)) {
        g->record(out, [x, out](Graph<Real>& gg) {
            const Tensor<Real>* gy = gg.grad_by_id(out.id());
            if (!gy) return;
            gg.accumulate(x, Tensor<Real>::full(x.shape(), gy->item()));
        });
    }
    return out;
}

template <class Real>
Tensor<Real> mean(Graph<Real>* g, const Tensor<Real>& x) {
    const Real inv = Real(1) / static_cast<Real>(x.numel());
    Real s = 0;
    for (std::int64_t i = 0; i < x.numel(); ++i) s += x.data()[i];
    Tensor<Real> out = Tensor<Real>::scalar(s * inv);
    if (g && g->wants_grad(x)) {
        g->record(out, [x, out, inv](Graph<Real>& gg) {
            const Tensor<Real>* gy = gg.grad_by_id(out.id());
            if (!gy) return;
            gg.accumulate(x, Tensor<Real>::full(x.shape(), gy->item() * inv));
        });
    }
    return out;
}

template <class Real>
Tensor<Real> abs_sum(Graph<Real>* g, const Tensor<Real>& x) {
    return sum(g, abs_val(g, x));
}

// ---------------------------------------------------------------------------
// shape ops

template <class Real>
Tensor<Real> reshape(Graph<Real>* g, const Tensor<Real>& x, Shape shape) {
    Tensor<Real> out = Tensor<Real>::alias(x, std::move(shape));
    if (g && g->wants_grad(x)) {
        g->record(out, [x, out](Graph<Real>& gg) {
            const Tensor<Real>* gy = gg.grad_by_id(out.id());
            if (!gy) return;
            gg.accumulate(x, Tensor<Real>::alias(*gy, x.shape()));
        });
    }
    return out;
}

namespace detail {

template <class Real>
Tensor<Real> permute_copy(const Tensor<Real>& x, const std::vector<std::int64_t>& perm) {
    const std::int64_t nd = x.ndim();
    Shape out_shape(static_cast<std::size_t>(nd));
    for (std::int64_t i = 0; i < nd; ++i) out_shape[static_cast<std::size_t>(i)] = x.dim(perm[static_cast<std::size_t>(i)]);
    Tensor<Real> out = Tensor<Real>::zeros(out_shape);
    Shape in_strides(static_cast<std::size_t>(nd), 1);
    for (std::int64_t i = nd - 2; i >= 0; --i)
        in_strides[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(i + 1)] * x.dim(i + 1);
    std::vector<std::int64_t> src_stride(static_cast<std::size_t>(nd));
    for (std::int64_t i = 0; i < nd; ++i)
        src_stride[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    std::vector<std::int64_t> coord(static_cast<std::size_t>(nd), 0);
    std::int64_t dst = 0, src = 0;
    while (true) {
        out.data()[dst++] = x.data()[src];
        std::int64_t i = nd - 1;
        for (; i >= 0; --i) {
            coord[static_cast<std::size_t>(i)]++;
            src += src_stride[static_cast<std::size_t>(i)];
            if (coord[static_cast<std::size_t>(i)] < out_shape[static_cast<std::size_t>(i)]) break;
            src -= src_stride[static_cast<std::size_t>(i)] * out_shape[static_cast<std::size_t>(i)];
            coord[static_cast<std::size_t>(i)] = 0;
        }
        if (i < 0) break;
    }
    return out;
}

}  // namespace detail

template <class Real>
Tensor<Real> permute(Graph<Real>* g, const Tensor<Real>& x, std::vector<std::int64_t> perm) {
    if (static_cast<std::int64_t>(perm.size()) != x.ndim())
        throw DimensionError("permute: order has " + std::to_string(perm.size()) + " entries for " +
                             shape_str(x.shape()));
    std::vector<bool> seen(perm.size(), false);
    for (auto p : perm) {
        if (p < 0 || p >= x.ndim() || seen[static_cast<std::size_t>(p)])
            throw DimensionError("permute: invalid order for " + shape_str(x.shape()));
        seen[static_cast<std::size_t>(p)] = true;
    }
    Tensor<Real> out = detail::permute_copy(x, perm);
    if (g && g->wants_grad(x)) {
        g->record(out, [x, out, perm](Graph<Real>& gg) {
            const Tensor<Real>* gy = gg.grad_by_id(out.id());
            if (!gy) return;
            std::vector<std::int64_t> inv(perm.size());
            for (std::size_t i = 0; i < perm.size(); ++i)
                inv[static_cast<std::size_t>(perm[i])] = static_cast<std::int64_t>(i);
            gg.accumulate(x, detail::permute_copy(*gy, inv));
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// pixel shuffle / unshuffle (space-to-depth and back)
//
// unshuffle: out[b, c*r*r + ry*r + rx, y, x] = in[b, c, y*r + ry, x*r + rx]

namespace detail {

template <class Real>
Tensor<Real> pixel_unshuffle_fwd(const Tensor<Real>& x, std::int64_t r) {
    const std::int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::int64_t h2 = h / r, w2 = w / r;
    Tensor<Real> out = Tensor<Real>::zeros({b, c * r * r, h2, w2});
    for (std::int64_t bb = 0; bb < b; ++bb)
        for (std::int64_t cc = 0; cc < c; ++cc)
            for (std::int64_t ry = 0; ry < r; ++ry)
                for (std::int64_t rx = 0; rx < r; ++rx) {
                    const std::int64_t oc = cc * r * r + ry * r + rx;
                    Real* op = out.data() + ((bb * c * r * r + oc) * h2) * w2;
                    const Real* ip = x.data() + ((bb * c + cc) * h) * w;
                    for (std::int64_t y = 0; y < h2; ++y)
                        for (std::int64_t xx = 0; xx < w2; ++xx)
                            op[y * w2 + xx] = ip[(y * r + ry) * w + (xx * r + rx)];
                }
    return out;
}

template <class Real>
Tensor<Real> pixel_shuffle_fwd(const Tensor<Real>& x, std::int64_t r) {
    const std::int64_t b = x.dim(0), c2 = x.dim(1), h2 = x.dim(2), w2 = x.dim(3);
    const std::int64_t c = c2 / (r * r);
    Tensor<Real> out = Tensor<Real>::zeros({b, c, h2 * r, w2 * r});
    const std::int64_t h = h2 * r, w = w2 * r;
    for (std::int64_t bb = 0; bb < b; ++bb)
        for (std::int64_t cc = 0; cc < c; ++cc)
            for (std::int64_t ry = 0; ry < r; ++ry)
                for (std::int64_t rx = 0; rx < r; ++rx) {
                    const std::int64_t ic = cc * r * r + ry * r + rx;
                    const Real* ip = x.data() + ((bb * c2 + ic) * h2) * w2;
                    Real* op = out.data() + ((bb * c + cc) * h) * w;
                    for (std::int64_t y = 0; y < h2; ++y)
                        for (std::int64_t xx = 0; xx < w2; ++xx)
                            op[(y * r + ry) * w + (xx * r + rx)] = ip[y * w2 + xx];
                }
    return out;
}

}  // namespace detail

template <class Real>
Tensor<Real> pixel_unshuffle(Graph<Real>* g, const Tensor<Real>& x, std::int64_t r) {
    if (x.ndim() != 4)
        throw DimensionError("pixel_unshuffle: input must be 4-d, got " + shape_str(x.shape()));
    if (r < 1 || x.dim(2) % r != 0 || x.dim(3) % r != 0)
        throw DimensionError("pixel_unshuffle: spatial dims of " + shape_str(x.shape()) +
                             " not divisible by " + std::to_string(r));
    Tensor<Real> out = detail::pixel_unshuffle_fwd(x, r);
    if (g && g->wants_grad(x)) {
        g->record(out, [x, out, r](Graph<Real>& gg) {
            const Tensor<Real>* gy = gg.grad_by_id(out.id());
            if (!gy) return;
            gg.accumulate(x, detail::pixel_shuffle_fwd(*gy, r));
        });
    }
    return out;
}

template <class Real>
Tensor<Real> pixel_shuffle(Graph<Real>* g, const Tensor<Real>& x, std::int64_t r) {
    if (x.ndim() != 4)
        throw DimensionError("pixel_shuffle: input must be 4-d, got " + shape_str(x.shape()));
    if (r < 1 || x.dim(1) % (r * r) != 0)
        throw DimensionError("pixel_shuffle: channels of " + shape_str(x.shape()) +
                             " not divisible by " + std::to_string(r * r));
    Tensor<Real> out = detail::pixel_shuffle_fwd(x, r);
    if (g && g->wants_grad(x)) {
        g->record(out, [x, out, r](Graph<Real>& gg) {
            const Tensor<Real>* gy = gg.grad_by_id(out.id());
            if (!gy) return;
            gg.accumulate(x, detail::pixel_unshuffle_fwd(*gy, r));
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// spatial pad (symmetric reflection, repeats for pads beyond the source) and
// crop on [B,C,H,W]

namespace detail {

// mirror index into [0, n) with edge-inclusive reflection, period 2n
inline std::int64_t mirror_index(std::int64_t i, std::int64_t n) {
    const std::int64_t p = 2 * n;
    std::int64_t m = i % p;
    if (m < 0) m += p;
    return m < n ? m : p - 1 - m;
}

}  // namespace detail

template <class Real>
Tensor<Real> pad2d_reflect(Graph<Real>* g, const Tensor<Real>& x, std::int64_t top,
                           std::int64_t bottom, std::int64_t left, std::int64_t right) {
    if (x.ndim() != 4)
        throw DimensionError("pad2d_reflect: input must be 4-d, got " + shape_str(x.shape()));
    const std::int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::int64_t h2 = h + top + bottom, w2 = w + left + right;
    std::vector<std::int64_t> ymap(static_cast<std::size_t>(h2)), xmap(static_cast<std::size_t>(w2));
    for (std::int64_t y = 0; y < h2; ++y) ymap[static_cast<std::size_t>(y)] = detail::mirror_index(y - top, h);
    for (std::int64_t xx = 0; xx < w2; ++xx) xmap[static_cast<std::size_t>(xx)] = detail::mirror_index(xx - left, w);
    Tensor<Real> out = Tensor<Real>::zeros({b, c, h2, w2});
    for (std::int64_t bc = 0; bc < b * c; ++bc) {
        const Real* ip = x.data() + bc * h * w;
        Real* op = out.data() + bc * h2 * w2;
        for (std::int64_t y = 0; y < h2; ++y) {
            const Real* irow = ip + ymap[static_cast<std::size_t>(y)] * w;
            Real* orow = op + y * w2;
            for (std::int64_t xx = 0; xx < w2; ++xx) orow[xx] = irow[xmap[static_cast<std::size_t>(xx)]];
        }
    }
    if (g && g->wants_grad(x)) {
        g->record(out, [x, out, ymap, xmap, b, c, h, w, h2, w2](Graph<Real>& gg) {
            const Tensor<Real>* gy = gg.grad_by_id(out.id());
            if (!gy) return;
            Tensor<Real> gx = Tensor<Real>::zeros(x.shape());
            for (std::int64_t bc = 0; bc < b * c; ++bc) {
                Real* dp = gx.data() + bc * h * w;
                const Real* gp = gy->data() + bc * h2 * w2;
                for (std::int64_t y = 0; y < h2; ++y) {
                    Real* drow = dp + ymap[static_cast<std::size_t>(y)] * w;
                    const Real* grow = gp + y * w2;
                    for (std::int64_t xx = 0; xx < w2; ++xx) drow[xmap[static_cast<std::size_t>(xx)]] += grow[xx];
                }
            }
            gg.accumulate(x, gx);
        });
    }
    return out;
}

template <class Real>
Tensor<Real> crop2d(Graph<Real>* g, const Tensor<Real>& x, std::int64_t y0, std::int64_t x0,
                    std::int64_t h, std::int64_t w) {
    if (x.ndim() != 4)
        throw DimensionError("crop2d: input must be 4-d, got " + shape_str(x.shape()));
    if (y0 < 0 || x0 < 0 || y0 + h > x.dim(2) || x0 + w > x.dim(3))
        throw DimensionError("crop2d: window out of range for " + shape_str(x.shape()));
    const std::int64_t b = x.dim(0), c = x.dim(1), hs = x.dim(2), ws = x.dim(3);
    Tensor<Real> out = Tensor<Real>::zeros({b, c, h, w});
    for (std::int64_t bc = 0; bc < b * c; ++bc)
        for (std::int64_t y = 0; y < h; ++y)
            std::copy(x.data() + (bc * hs + y0 + y) * ws + x0,
                      x.data() + (bc * hs + y0 + y) * ws + x0 + w,
                      out.data() + (bc * h + y) * w);
    if (g && g->wants_grad(x)) {
        g->record(out, [x, out, y0, x0, h, w, b, c, hs, ws](Graph<Real>& gg) {
            const Tensor<Real>* gy = gg.grad_by_id(out.id());
            if (!gy) return;
            Tensor<Real> gx = Tensor<Real>::zeros(x.shape());
            for (std::int64_t bc = 0; bc < b * c; ++bc)
                for (std::int64_t y = 0; y < h; ++y) {
                    const Real* src = gy->data() + (bc * h + y) * w;
                    Real* dst = gx.data() + (bc * hs + y0 + y) * ws + x0;
                    for (std::int64_t xx = 0; xx < w; ++xx) dst[xx] += src[xx];
                }
            gg.accumulate(x, gx);
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// finite-difference oracle: central differences per coordinate

template <class Real, class F>
Tensor<Real> finite_diff_grad(F&& f, const Tensor<Real>& x, Real eps = Real(1e-4)) {
    if (!(eps > Real(0))) throw ContractError("finite_diff_grad: eps must be > 0");
    Tensor<Real> grad = Tensor<Real>::zeros(x.shape());
    std::vector<Real> work(x.data(), x.data() + x.numel());
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const Real orig = work[static_cast<std::size_t>(i)];
        work[static_cast<std::size_t>(i)] = orig + eps;
        const Real fp = f(Tensor<Real>::from(x.shape(), work));
        work[static_cast<std::size_t>(i)] = orig - eps;
        const Real fm = f(Tensor<Real>::from(x.shape(), work));
        work[static_cast<std::size_t>(i)] = orig;
        grad.data()[i] = (fp - fm) / (Real(2) * eps);
    }
    return grad;
}

}  // namespace rat
