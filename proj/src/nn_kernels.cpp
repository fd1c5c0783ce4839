#include <algorithm>
#include <cmath>

#include "gramnet/nn.hpp"

// Parallelization rule used throughout: every output element is written by
// exactly one loop iteration and inner reductions run in a fixed serial
// order, so results do not depend on the OpenMP thread count.

namespace gramnet::nn {

template <class T>
void conv2d_forward(const TensorT<T>& in, const ConvParamsT<T>& p, TensorT<T>& out) {
    if (in.c != p.cin()) {
        throw ShapeMismatchError("conv2d input channels " + std::to_string(in.c) +
                                 " != kernel C_in " + std::to_string(p.cin()));
    }
    const int KH = p.kh(), KW = p.kw(), CI = p.cin(), CO = p.cout();
    const int S = p.stride, P = p.pad;
    const int oh = (in.h + 2 * P - KH) / S + 1;
    const int ow = (in.w + 2 * P - KW) / S + 1;
    if (oh < 1 || ow < 1) throw ShapeMismatchError("conv2d output would be empty");
    out = TensorT<T>(in.b, oh, ow, CO);

    const T* kdata = p.kernel.v.data();
    const T* bias = p.bias.v.data();

#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < in.b; ++b) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                T* orow = out.row(b, oy, ox);
                for (int co = 0; co < CO; ++co) orow[co] = bias[co];
                const int iy0 = oy * S - P, ix0 = ox * S - P;
                for (int ky = 0; ky < KH; ++ky) {
                    const int iy = iy0 + ky;
                    if (iy < 0 || iy >= in.h) continue;
                    for (int kx = 0; kx < KW; ++kx) {
                        const int ix = ix0 + kx;
                        if (ix < 0 || ix >= in.w) continue;
                        const T* irow = in.row(b, iy, ix);
                        const T* kpos = kdata + static_cast<std::size_t>((ky * KW + kx) * CI) * CO;
                        for (int ci = 0; ci < CI; ++ci) {
                            const T a = irow[ci];
                            const T* kk = kpos + static_cast<std::size_t>(ci) * CO;
                            for (int co = 0; co < CO; ++co) orow[co] += a * kk[co];
                        }
                    }
                }
            }
        }
    }
}

template <class T>
void conv2d_backward(const TensorT<T>& in, const ConvParamsT<T>& p, const TensorT<T>& dout,
                     TensorT<T>* din, ConvParamsT<T>* grads) {
    const int KH = p.kh(), KW = p.kw(), CI = p.cin(), CO = p.cout();
    const int S = p.stride, P = p.pad;
    const int oh = dout.h, ow = dout.w;
    if (dout.c != CO || dout.b != in.b) throw ShapeMismatchError("conv2d_backward dout");

    if (din) {
        if (!din->same_shape(in)) throw ShapeMismatchError("conv2d_backward din");
        const T* kdata = p.kernel.v.data();
#pragma omp parallel for collapse(2) schedule(static)
        for (int b = 0; b < in.b; ++b) {
            for (int iy = 0; iy < in.h; ++iy) {
                for (int ix = 0; ix < in.w; ++ix) {
                    T* drow = din->row(b, iy, ix);
                    for (int ky = 0; ky < KH; ++ky) {
                        const int ny = iy + P - ky;
                        if (ny < 0 || ny % S != 0) continue;
                        const int oy = ny / S;
                        if (oy >= oh) continue;
                        for (int kx = 0; kx < KW; ++kx) {
                            const int nx = ix + P - kx;
                            if (nx < 0 || nx % S != 0) continue;
                            const int ox = nx / S;
                            if (ox >= ow) continue;
                            const T* grow = dout.row(b, oy, ox);
                            const T* kpos =
                                kdata + static_cast<std::size_t>((ky * KW + kx) * CI) * CO;
                            for (int ci = 0; ci < CI; ++ci) {
                                const T* kk = kpos + static_cast<std::size_t>(ci) * CO;
                                T acc = T(0);
                                for (int co = 0; co < CO; ++co) acc += grow[co] * kk[co];
                                drow[ci] += acc;
                            }
                        }
                    }
                }
            }
        }
    }

    if (grads) {
        T* gk = grads->kernel.v.data();
#pragma omp parallel for collapse(3) schedule(static)
        for (int ky = 0; ky < KH; ++ky) {
            for (int kx = 0; kx < KW; ++kx) {
                for (int ci = 0; ci < CI; ++ci) {
                    T* gslice = gk + static_cast<std::size_t>((ky * KW + kx) * CI + ci) * CO;
                    for (int b = 0; b < in.b; ++b) {
                        for (int oy = 0; oy < oh; ++oy) {
                            const int iy = oy * S - P + ky;
                            if (iy < 0 || iy >= in.h) continue;
                            for (int ox = 0; ox < ow; ++ox) {
                                const int ix = ox * S - P + kx;
                                if (ix < 0 || ix >= in.w) continue;
                                const T a = in.at(b, iy, ix, ci);
                                const T* grow = dout.row(b, oy, ox);
                                for (int co = 0; co < CO; ++co) gslice[co] += a * grow[co];
                            }
                        }
                    }
                }
            }
        }
        T* gb = grads->bias.v.data();
        for (int b = 0; b < dout.b; ++b) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    const T* grow = dout.row(b, oy, ox);
                    for (int co = 0; co < CO; ++co) gb[co] += grow[co];
                }
            }
        }
    }
}

template <class T>
void relu_forward(const TensorT<T>& in, TensorT<T>& out) {
    out = in;
    for (T& x : out.v) x = x > T(0) ? x : T(0);
}

template <class T>
void relu_backward(const TensorT<T>& pre, const TensorT<T>& dout, TensorT<T>& din) {
    if (!pre.same_shape(dout) || !pre.same_shape(din)) throw ShapeMismatchError("relu_backward");
    for (std::size_t i = 0; i < pre.size(); ++i) {
        if (pre.v[i] > T(0)) din.v[i] += dout.v[i];
    }
}

template <class T>
void avg_pool3_forward(const TensorT<T>& in, TensorT<T>& out) {
    out = TensorT<T>(in.b, in.h, in.w, in.c);
    const T inv = T(1) / T(9);
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < in.b; ++b) {
        for (int y = 0; y < in.h; ++y) {
            for (int x = 0; x < in.w; ++x) {
                T* orow = out.row(b, y, x);
                for (int dy = -1; dy <= 1; ++dy) {
                    const int iy = y + dy;
                    if (iy < 0 || iy >= in.h) continue;
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int ix = x + dx;
                        if (ix < 0 || ix >= in.w) continue;
                        const T* irow = in.row(b, iy, ix);
                        for (int c = 0; c < in.c; ++c) orow[c] += irow[c];
                    }
                }
                for (int c = 0; c < in.c; ++c) orow[c] *= inv;
            }
        }
    }
}

template <class T>
void avg_pool3_backward(const TensorT<T>& dout, TensorT<T>& din) {
    if (!dout.same_shape(din)) throw ShapeMismatchError("avg_pool3_backward");
    const T inv = T(1) / T(9);
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < dout.b; ++b) {
        for (int y = 0; y < dout.h; ++y) {
            for (int x = 0; x < dout.w; ++x) {
                T* drow = din.row(b, y, x);
                for (int dy = -1; dy <= 1; ++dy) {
                    const int oy = y + dy;
                    if (oy < 0 || oy >= dout.h) continue;
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int ox = x + dx;
                        if (ox < 0 || ox >= dout.w) continue;
                        const T* grow = dout.row(b, oy, ox);
                        for (int c = 0; c < dout.c; ++c) drow[c] += grow[c] * inv;
                    }
                }
            }
        }
    }
}

template <class T>
void channel_affine_forward(const TensorT<T>& in, const AffineParamsT<T>& p, TensorT<T>& out) {
    if (static_cast<int>(p.scale.size()) != in.c) throw ShapeMismatchError("channel_affine");
    out = TensorT<T>(in.b, in.h, in.w, in.c);
    const T* scale = p.scale.v.data();
    const T* shift = p.shift.v.data();
    const std::size_t positions = in.size() / in.c;
    for (std::size_t pos = 0; pos < positions; ++pos) {
        const T* irow = in.v.data() + pos * in.c;
        T* orow = out.v.data() + pos * in.c;
        for (int c = 0; c < in.c; ++c) orow[c] = irow[c] * scale[c] + shift[c];
    }
}

template <class T>
void channel_affine_backward(const TensorT<T>& in, const AffineParamsT<T>& p,
                             const TensorT<T>& dout, TensorT<T>& din, AffineParamsT<T>& grads) {
    if (!in.same_shape(dout) || !in.same_shape(din)) throw ShapeMismatchError("affine_backward");
    const T* scale = p.scale.v.data();
    T* gs = grads.scale.v.data();
    T* gh = grads.shift.v.data();
    const std::size_t positions = in.size() / in.c;
    for (std::size_t pos = 0; pos < positions; ++pos) {
        const T* irow = in.v.data() + pos * in.c;
        const T* grow = dout.v.data() + pos * in.c;
        T* drow = din.v.data() + pos * in.c;
        for (int c = 0; c < in.c; ++c) {
            drow[c] += grow[c] * scale[c];
            gs[c] += grow[c] * irow[c];
            gh[c] += grow[c];
        }
    }
}

template <class T>
void concat_channels(const TensorT<T>& a, const TensorT<T>& b, TensorT<T>& out) {
    if (a.b != b.b || a.h != b.h || a.w != b.w) throw ShapeMismatchError("concat_channels");
    out = TensorT<T>(a.b, a.h, a.w, a.c + b.c);
    const std::size_t positions = static_cast<std::size_t>(a.b) * a.h * a.w;
    for (std::size_t pos = 0; pos < positions; ++pos) {
        const T* arow = a.v.data() + pos * a.c;
        const T* brow = b.v.data() + pos * b.c;
        T* orow = out.v.data() + pos * out.c;
        std::copy(arow, arow + a.c, orow);
        std::copy(brow, brow + b.c, orow + a.c);
    }
}

template <class T>
void concat_channels_backward(const TensorT<T>& dout, TensorT<T>& da, TensorT<T>& db) {
    if (dout.c != da.c + db.c) throw ShapeMismatchError("concat_channels_backward");
    const std::size_t positions = static_cast<std::size_t>(dout.b) * dout.h * dout.w;
    for (std::size_t pos = 0; pos < positions; ++pos) {
        const T* grow = dout.v.data() + pos * dout.c;
        T* arow = da.v.data() + pos * da.c;
        T* brow = db.v.data() + pos * db.c;
        for (int c = 0; c < da.c; ++c) arow[c] += grow[c];
        for (int c = 0; c < db.c; ++c) brow[c] += grow[da.c + c];
    }
}

template <class T>
void global_avg_pool_forward(const TensorT<T>& in, TensorT<T>& out) {
    out = TensorT<T>(in.b, 1, 1, in.c);
    const T inv = T(1) / static_cast<T>(in.h * in.w);
    for (int b = 0; b < in.b; ++b) {
        T* orow = out.row(b, 0, 0);
        for (int y = 0; y < in.h; ++y) {
            for (int x = 0; x < in.w; ++x) {
                const T* irow = in.row(b, y, x);
                for (int c = 0; c < in.c; ++c) orow[c] += irow[c];
            }
        }
        for (int c = 0; c < in.c; ++c) orow[c] *= inv;
    }
}

template <class T>
void global_avg_pool_backward(const TensorT<T>& dout, TensorT<T>& din) {
    if (dout.c != din.c || dout.b != din.b) throw ShapeMismatchError("global_avg_pool_backward");
    const T inv = T(1) / static_cast<T>(din.h * din.w);
    for (int b = 0; b < din.b; ++b) {
        const T* grow = dout.row(b, 0, 0);
        for (int y = 0; y < din.h; ++y) {
            for (int x = 0; x < din.w; ++x) {
                T* drow = din.row(b, y, x);
                for (int c = 0; c < din.c; ++c) drow[c] += grow[c] * inv;
            }
        }
    }
}

template <class T>
T softmax_cross_entropy(std::span<const T> logits, int label, std::span<T> grad_logits) {
    const int k = static_cast<int>(logits.size());
    if (label < 0 || label >= k) throw ConfigError("label outside logit range");
    if (grad_logits.size() != logits.size()) throw ShapeMismatchError("softmax_cross_entropy");

    T max_logit = logits[0];
    for (int i = 1; i < k; ++i) max_logit = std::max(max_logit, logits[i]);
    T denom = T(0);
    for (int i = 0; i < k; ++i) denom += std::exp(logits[i] - max_logit);
    const T log_denom = std::log(denom);
    for (int i = 0; i < k; ++i) {
        grad_logits[i] = std::exp(logits[i] - max_logit) / denom;
    }
    const T loss = -(logits[label] - max_logit - log_denom);
    grad_logits[label] -= T(1);
    return loss;
}

#define GRAMNET_INSTANTIATE_KERNELS(T)                                                            \
    template void conv2d_forward<T>(const TensorT<T>&, const ConvParamsT<T>&, TensorT<T>&);       \
    template void conv2d_backward<T>(const TensorT<T>&, const ConvParamsT<T>&, const TensorT<T>&, \
                                     TensorT<T>*, ConvParamsT<T>*);                               \
    template void relu_forward<T>(const TensorT<T>&, TensorT<T>&);                                \
    template void relu_backward<T>(const TensorT<T>&, const TensorT<T>&, TensorT<T>&);            \
    template void avg_pool3_forward<T>(const TensorT<T>&, TensorT<T>&);                           \
    template void avg_pool3_backward<T>(const TensorT<T>&, TensorT<T>&);                          \
    template void channel_affine_forward<T>(const TensorT<T>&, const AffineParamsT<T>&,           \
                                            TensorT<T>&);                                         \
    template void channel_affine_backward<T>(const TensorT<T>&, const AffineParamsT<T>&,          \
                                             const TensorT<T>&, TensorT<T>&, AffineParamsT<T>&);  \
    template void concat_channels<T>(const TensorT<T>&, const TensorT<T>&, TensorT<T>&);          \
    template void concat_channels_backward<T>(const TensorT<T>&, TensorT<T>&, TensorT<T>&);       \
    template void global_avg_pool_forward<T>(const TensorT<T>&, TensorT<T>&);                     \
    template void global_avg_pool_backward<T>(const TensorT<T>&, TensorT<T>&);                    \
    template T softmax_cross_entropy<T>(std::span<const T>, int, std::span<T>);

GRAMNET_INSTANTIATE_KERNELS(float)
GRAMNET_INSTANTIATE_KERNELS(double)

} // namespace gramnet::nn
