#include <cmath>
#include <vector>

#include "gramnet/nn.hpp"

namespace gramnet::nn {

namespace {

// head index per value channel: contiguous channel blocks share one head.
std::vector<int> head_map(int channels, int head_channels) {
    std::vector<int> head(channels);
    for (int c = 0; c < channels; ++c) {
        head[c] = static_cast<int>((static_cast<long long>(c) * head_channels) / channels);
    }
    return head;
}

// Softmax over the neighborhood axis o for every position and head.
// Channel layout of logits/weights: o * Ch + h.
template <class T>
void neighborhood_softmax(const TensorT<T>& logits, int k2, int ch, TensorT<T>& weights) {
    weights = TensorT<T>(logits.b, logits.h, logits.w, logits.c);
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < logits.b; ++b) {
        for (int y = 0; y < logits.h; ++y) {
            for (int x = 0; x < logits.w; ++x) {
                const T* lrow = logits.row(b, y, x);
                T* wrow = weights.row(b, y, x);
                for (int h = 0; h < ch; ++h) {
                    T max_logit = lrow[h];
                    for (int o = 1; o < k2; ++o) max_logit = std::max(max_logit, lrow[o * ch + h]);
                    T denom = T(0);
                    for (int o = 0; o < k2; ++o) {
                        const T e = std::exp(lrow[o * ch + h] - max_logit);
                        wrow[o * ch + h] = e;
                        denom += e;
                    }
                    const T inv = T(1) / denom;
                    for (int o = 0; o < k2; ++o) wrow[o * ch + h] *= inv;
                }
            }
        }
    }
}

} // namespace

template <class T>
TensorT<T> cot_forward(const TensorT<T>& x, const CotParamsT<T>& p, CotCacheT<T>& cache) {
    const int k = p.k, k2 = k * k, ch = p.head_channels, c = x.c;
    if (p.key_embed.cin() != c || p.attn_expand.cout() != k2 * ch) {
        throw ShapeMismatchError("cot_forward parameter shapes");
    }
    const auto head = head_map(c, ch);

    cache.input = x;
    conv2d_forward(x, p.key_embed, cache.stat);
    concat_channels(cache.stat, x, cache.qk);
    conv2d_forward(cache.qk, p.attn_reduce, cache.a1_pre);
    relu_forward(cache.a1_pre, cache.a1);
    TensorT<T> logits;
    conv2d_forward(cache.a1, p.attn_expand, logits);
    neighborhood_softmax(logits, k2, ch, cache.weights);
    conv2d_forward(x, p.value_embed, cache.value);

    cache.dynamic = TensorT<T>(x.b, x.h, x.w, c);
    const int r = k / 2;
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < x.b; ++b) {
        for (int y = 0; y < x.h; ++y) {
            for (int xx = 0; xx < x.w; ++xx) {
                const T* wrow = cache.weights.row(b, y, xx);
                T* drow = cache.dynamic.row(b, y, xx);
                for (int o = 0; o < k2; ++o) {
                    const int iy = y + o / k - r;
                    const int ix = xx + o % k - r;
                    if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue; // zero padding
                    const T* vrow = cache.value.row(b, iy, ix);
                    const T* wo = wrow + o * ch;
                    for (int ci = 0; ci < c; ++ci) drow[ci] += wo[head[ci]] * vrow[ci];
                }
            }
        }
    }

    concat_channels(cache.stat, cache.dynamic, cache.cat2);
    TensorT<T> out;
    conv2d_forward(cache.cat2, p.fuse, out);
    ensure_finite(out, "cot_forward");
    return out;
}

template <class T>
TensorT<T> cot_forward(const TensorT<T>& x, const CotParamsT<T>& p) {
    CotCacheT<T> cache;
    return cot_forward(x, p, cache);
}

template <class T>
void cot_backward(const CotParamsT<T>& p, const CotCacheT<T>& cache, const TensorT<T>& dy,
                  TensorT<T>& dx, CotParamsT<T>& grads) {
    const TensorT<T>& x = cache.input;
    const int k = p.k, k2 = k * k, ch = p.head_channels, c = x.c, r = k / 2;
    const auto head = head_map(c, ch);

    TensorT<T> dcat2(x.b, x.h, x.w, 2 * c);
    conv2d_backward(cache.cat2, p.fuse, dy, &dcat2, &grads.fuse);

    TensorT<T> dstat(x.b, x.h, x.w, c);
    TensorT<T> ddyn(x.b, x.h, x.w, c);
    concat_channels_backward(dcat2, dstat, ddyn);

    // Local aggregation backward. dvalue gathers the weights that consumed
    // each value position; dweights gathers over the channels of each head.
    TensorT<T> dvalue(x.b, x.h, x.w, c);
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < x.b; ++b) {
        for (int qy = 0; qy < x.h; ++qy) {
            for (int qx = 0; qx < x.w; ++qx) {
                T* dvrow = dvalue.row(b, qy, qx);
                for (int o = 0; o < k2; ++o) {
                    const int py = qy - (o / k - r);
                    const int px = qx - (o % k - r);
                    if (py < 0 || py >= x.h || px < 0 || px >= x.w) continue;
                    const T* wrow = cache.weights.row(b, py, px) + o * ch;
                    const T* drow = ddyn.row(b, py, px);
                    for (int ci = 0; ci < c; ++ci) dvrow[ci] += wrow[head[ci]] * drow[ci];
                }
            }
        }
    }

    TensorT<T> dweights(x.b, x.h, x.w, k2 * ch);
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < x.b; ++b) {
        for (int py = 0; py < x.h; ++py) {
            for (int px = 0; px < x.w; ++px) {
                T* dwrow = dweights.row(b, py, px);
                const T* drow = ddyn.row(b, py, px);
                for (int o = 0; o < k2; ++o) {
                    const int qy = py + o / k - r;
                    const int qx = px + o % k - r;
                    if (qy < 0 || qy >= x.h || qx < 0 || qx >= x.w) continue;
                    const T* vrow = cache.value.row(b, qy, qx);
                    T* dwo = dwrow + o * ch;
                    for (int ci = 0; ci < c; ++ci) dwo[head[ci]] += drow[ci] * vrow[ci];
                }
            }
        }
    }

    // Softmax jacobian per position and head.
    TensorT<T> dlogits(x.b, x.h, x.w, k2 * ch);
#pragma omp parallel for collapse(2) schedule(static)
    for (int b = 0; b < x.b; ++b) {
        for (int y = 0; y < x.h; ++y) {
            for (int xx = 0; xx < x.w; ++xx) {
                const T* wrow = cache.weights.row(b, y, xx);
                const T* gw = dweights.row(b, y, xx);
                T* dl = dlogits.row(b, y, xx);
                for (int h = 0; h < ch; ++h) {
                    T dot = T(0);
                    for (int o = 0; o < k2; ++o) dot += wrow[o * ch + h] * gw[o * ch + h];
                    for (int o = 0; o < k2; ++o) {
                        dl[o * ch + h] = wrow[o * ch + h] * (gw[o * ch + h] - dot);
                    }
                }
            }
        }
    }

    conv2d_backward(x, p.value_embed, dvalue, &dx, &grads.value_embed);

    TensorT<T> da1(x.b, x.h, x.w, p.attn_reduce.cout());
    conv2d_backward(cache.a1, p.attn_expand, dlogits, &da1, &grads.attn_expand);
    TensorT<T> da1_pre(x.b, x.h, x.w, p.attn_reduce.cout());
    relu_backward(cache.a1_pre, da1, da1_pre);
    TensorT<T> dqk(x.b, x.h, x.w, 2 * c);
    conv2d_backward(cache.qk, p.attn_reduce, da1_pre, &dqk, &grads.attn_reduce);
    concat_channels_backward(dqk, dstat, dx);

    conv2d_backward(x, p.key_embed, dstat, &dx, &grads.key_embed);
}

#define GRAMNET_INSTANTIATE_COT(T)                                                           \
    template TensorT<T> cot_forward<T>(const TensorT<T>&, const CotParamsT<T>&,              \
                                       CotCacheT<T>&);                                       \
    template TensorT<T> cot_forward<T>(const TensorT<T>&, const CotParamsT<T>&);             \
    template void cot_backward<T>(const CotParamsT<T>&, const CotCacheT<T>&,                 \
                                  const TensorT<T>&, TensorT<T>&, CotParamsT<T>&);

GRAMNET_INSTANTIATE_COT(float)
GRAMNET_INSTANTIATE_COT(double)

} // namespace gramnet::nn
