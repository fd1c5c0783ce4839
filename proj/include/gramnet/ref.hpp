#pragma once

// Serial reference implementations. These are deliberately naive loops kept
// independent of the production kernels: the test suites compare the two
// paths and the benchmark binary measures the gap. Nothing here is linked
// into the CLI.

#include <span>
#include <vector>

#include "gramnet/gaf.hpp"
#include "gramnet/nn.hpp"

namespace gramnet::ref {

// Trigonometric construction of the summation field: arccos each element,
// then cos(theta_i + theta_j) per pair. The production encoder uses the
// algebraic inner product instead.
gaf::GafImage gasf_trig(const gaf::ScaledSeries& series);

// Direct cross-correlation, one scalar at a time.
template <class T>
nn::TensorT<T> conv2d_naive(const nn::TensorT<T>& in, const nn::ConvParamsT<T>& p);

template <class T>
nn::TensorT<T> avg_pool3_naive(const nn::TensorT<T>& in);

// Per-position softmax over the k*k neighborhood and weighted value sum,
// straight from the attention-logit tensor. Matches the layout documented
// in CotParamsT.
template <class T>
nn::TensorT<T> cot_dynamic_naive(const nn::TensorT<T>& logits, const nn::TensorT<T>& value,
                                 int k, int head_channels);

} // namespace gramnet::ref
