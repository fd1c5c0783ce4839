#include "gramnet/ref.hpp"

#include <cmath>

#include "gramnet/error.hpp"

namespace gramnet::ref {

gaf::GafImage gasf_trig(const gaf::ScaledSeries& series) {
    const int n = static_cast<int>(series.values.size());
    std::vector<double> theta(n);
    for (int i = 0; i < n; ++i) {
        double s = series.values[i];
        if (s > 1.0) s = 1.0;
        if (s < -1.0) s = -1.0;
        theta[i] = std::acos(s);
    }
    gaf::GafImage img(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            img.at(i, j) = std::cos(theta[i] + theta[j]);
        }
    }
    return img;
}

template <class T>
nn::TensorT<T> conv2d_naive(const nn::TensorT<T>& in, const nn::ConvParamsT<T>& p) {
    const int kh = p.kh(), kw = p.kw(), ci = p.cin(), co = p.cout();
    if (in.c != ci) throw ShapeMismatchError("conv2d_naive");
    const int oh = (in.h + 2 * p.pad - kh) / p.stride + 1;
    const int ow = (in.w + 2 * p.pad - kw) / p.stride + 1;
    nn::TensorT<T> out(in.b, oh, ow, co);
    for (int b = 0; b < in.b; ++b)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                for (int f = 0; f < co; ++f) {
                    T acc = p.bias.v[f];
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx)
                            for (int c = 0; c < ci; ++c) {
                                const int iy = oy * p.stride - p.pad + ky;
                                const int ix = ox * p.stride - p.pad + kx;
                                if (iy < 0 || iy >= in.h || ix < 0 || ix >= in.w) continue;
                                acc += in.at(b, iy, ix, c) *
                                       p.kernel.v[((ky * kw + kx) * ci + c) * co + f];
                            }
                    out.at(b, oy, ox, f) = acc;
                }
    return out;
}

template <class T>
nn::TensorT<T> avg_pool3_naive(const nn::TensorT<T>& in) {
    nn::TensorT<T> out(in.b, in.h, in.w, in.c);
    for (int b = 0; b < in.b; ++b)
        for (int y = 0; y < in.h; ++y)
            for (int x = 0; x < in.w; ++x)
                for (int c = 0; c < in.c; ++c) {
                    T acc = T(0);
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int iy = y + dy, ix = x + dx;
                            if (iy < 0 || iy >= in.h || ix < 0 || ix >= in.w) continue;
                            acc += in.at(b, iy, ix, c);
                        }
                    out.at(b, y, x, c) = acc / T(9);
                }
    return out;
}

template <class T>
nn::TensorT<T> cot_dynamic_naive(const nn::TensorT<T>& logits, const nn::TensorT<T>& value,
                                 int k, int head_channels) {
    const int k2 = k * k, r = k / 2, c = value.c;
    if (logits.c != k2 * head_channels) throw ShapeMismatchError("cot_dynamic_naive");
    nn::TensorT<T> out(value.b, value.h, value.w, c);
    std::vector<T> weights(k2);
    for (int b = 0; b < value.b; ++b)
        for (int y = 0; y < value.h; ++y)
            for (int x = 0; x < value.w; ++x)
                for (int ci = 0; ci < c; ++ci) {
                    const int h =
                        static_cast<int>((static_cast<long long>(ci) * head_channels) / c);
                    T max_logit = logits.at(b, y, x, h);
                    for (int o = 1; o < k2; ++o) {
                        max_logit = std::max(max_logit, logits.at(b, y, x, o * head_channels + h));
                    }
                    T denom = T(0);
                    for (int o = 0; o < k2; ++o) {
                        weights[o] = std::exp(logits.at(b, y, x, o * head_channels + h) - max_logit);
                        denom += weights[o];
                    }
                    T acc = T(0);
                    for (int o = 0; o < k2; ++o) {
                        const int iy = y + o / k - r;
                        const int ix = x + o % k - r;
                        if (iy < 0 || iy >= value.h || ix < 0 || ix >= value.w) continue;
                        acc += (weights[o] / denom) * value.at(b, iy, ix, ci);
                    }
                    out.at(b, y, x, ci) = acc;
                }
    return out;
}

template nn::TensorT<float> conv2d_naive<float>(const nn::TensorT<float>&,
                                                const nn::ConvParamsT<float>&);
template nn::TensorT<double> conv2d_naive<double>(const nn::TensorT<double>&,
                                                  const nn::ConvParamsT<double>&);
template nn::TensorT<float> avg_pool3_naive<float>(const nn::TensorT<float>&);
template nn::TensorT<double> avg_pool3_naive<double>(const nn::TensorT<double>&);
template nn::TensorT<float> cot_dynamic_naive<float>(const nn::TensorT<float>&,
                                                     const nn::TensorT<float>&, int, int);
template nn::TensorT<double> cot_dynamic_naive<double>(const nn::TensorT<double>&,
                                                       const nn::TensorT<double>&, int, int);

} // namespace gramnet::ref
