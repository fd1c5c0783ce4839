#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "gramnet/nn.hpp"

namespace gramnet::nn {

// ---------------------------------------------------------------------------
// ModelConfig
// ---------------------------------------------------------------------------

int ModelConfig::fused_channels() const {
    int c = 0;
    if (num_res_units > 0) c += resolved_local_width();
    if (num_cot_layers > 0) c += stem_channels;
    return c > 0 ? c : stem_channels;
}

int ModelConfig::inception_out_channels() const {
    return std::accumulate(inception_widths.begin(), inception_widths.end(), 0);
}

void ModelConfig::validate() const {
    if (height < 1 || width < 1 || in_channels < 1) throw ConfigError("input size must be positive");
    if (stem_channels < 1) throw ConfigError("stem_channels must be positive");
    if (num_res_units < 0 || num_cot_layers < 0) throw ConfigError("layer counts must be >= 0");
    if (inception_widths.size() != 4) throw ConfigError("inception needs exactly 4 branch widths");
    for (int w : inception_widths) {
        if (w < 1) throw ConfigError("inception branch widths must be positive");
    }
    if (mlp_hidden < 1) throw ConfigError("mlp_hidden must be positive");
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (cot_kernel < 1 || cot_kernel % 2 == 0) throw ConfigError("cot_kernel must be odd");
    if (cot_reduction < 1) throw ConfigError("cot_reduction must be positive");
    if (resolved_head_channels() > stem_channels) {
        throw ConfigError("cot_head_channels cannot exceed stem_channels");
    }
    if (local_width < 0) throw ConfigError("local_width must be >= 0");
}

std::string ModelConfig::to_text() const {
    std::ostringstream out;
    out << "height = " << height << "\n";
    out << "width = " << width << "\n";
    out << "in_channels = " << in_channels << "\n";
    out << "stem_channels = " << stem_channels << "\n";
    out << "num_res_units = " << num_res_units << "\n";
    out << "num_cot_layers = " << num_cot_layers << "\n";
    out << "local_width = " << local_width << "\n";
    out << "inception_widths = ";
    for (std::size_t i = 0; i < inception_widths.size(); ++i) {
        if (i) out << ",";
        out << inception_widths[i];
    }
    out << "\n";
    out << "mlp_hidden = " << mlp_hidden << "\n";
    out << "num_classes = " << num_classes << "\n";
    out << "cot_kernel = " << cot_kernel << "\n";
    out << "cot_reduction = " << cot_reduction << "\n";
    out << "cot_head_channels = " << cot_head_channels << "\n";
    out << "seed = " << seed << "\n";
    return out.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
    ModelConfig cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "height") cfg.height = std::stoi(value);
            else if (key == "width") cfg.width = std::stoi(value);
            else if (key == "in_channels") cfg.in_channels = std::stoi(value);
            else if (key == "stem_channels") cfg.stem_channels = std::stoi(value);
            else if (key == "num_res_units") cfg.num_res_units = std::stoi(value);
            else if (key == "num_cot_layers") cfg.num_cot_layers = std::stoi(value);
            else if (key == "local_width") cfg.local_width = std::stoi(value);
            else if (key == "mlp_hidden") cfg.mlp_hidden = std::stoi(value);
            else if (key == "num_classes") cfg.num_classes = std::stoi(value);
            else if (key == "cot_kernel") cfg.cot_kernel = std::stoi(value);
            else if (key == "cot_reduction") cfg.cot_reduction = std::stoi(value);
            else if (key == "cot_head_channels") cfg.cot_head_channels = std::stoi(value);
            else if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "inception_widths") {
                cfg.inception_widths.clear();
                std::istringstream ws(value);
                std::string tok;
                while (std::getline(ws, tok, ',')) cfg.inception_widths.push_back(std::stoi(tok));
            }
        } catch (const std::exception&) {
            throw ConfigError("bad model config value for '" + key + "': " + value);
        }
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Residual unit
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> residual_unit(const TensorT<T>& x, const ResUnitParamsT<T>& p, ResUnitCacheT<T>& cache) {
    cache.input = x;
    conv2d_forward(x, p.conv1, cache.a1);
    relu_forward(cache.a1, cache.t);
    conv2d_forward(cache.t, p.conv2, cache.sum_pre);
    if (p.has_proj) {
        TensorT<T> skip;
        conv2d_forward(x, p.proj, skip);
        if (!skip.same_shape(cache.sum_pre)) throw ShapeMismatchError("residual projection");
        for (std::size_t i = 0; i < skip.size(); ++i) cache.sum_pre.v[i] += skip.v[i];
    } else {
        if (!x.same_shape(cache.sum_pre)) throw ShapeMismatchError("residual identity skip");
        for (std::size_t i = 0; i < x.size(); ++i) cache.sum_pre.v[i] += x.v[i];
    }
    TensorT<T> y;
    relu_forward(cache.sum_pre, y);
    ensure_finite(y, "residual_unit");
    return y;
}

template <class T>
void residual_unit_backward(const ResUnitParamsT<T>& p, const ResUnitCacheT<T>& cache,
                            const TensorT<T>& dy, TensorT<T>& dx, ResUnitParamsT<T>& grads) {
    TensorT<T> dsum(dy.b, dy.h, dy.w, dy.c);
    relu_backward(cache.sum_pre, dy, dsum);

    TensorT<T> dt(cache.t.b, cache.t.h, cache.t.w, cache.t.c);
    conv2d_backward(cache.t, p.conv2, dsum, &dt, &grads.conv2);
    TensorT<T> da1(cache.a1.b, cache.a1.h, cache.a1.w, cache.a1.c);
    relu_backward(cache.a1, dt, da1);
    conv2d_backward(cache.input, p.conv1, da1, &dx, &grads.conv1);

    if (p.has_proj) {
        conv2d_backward(cache.input, p.proj, dsum, &dx, &grads.proj);
    } else {
        for (std::size_t i = 0; i < dsum.size(); ++i) dx.v[i] += dsum.v[i];
    }
}

// ---------------------------------------------------------------------------
// Inception block
// ---------------------------------------------------------------------------

namespace {

template <class T>
void concat4(const TensorT<T>& a, const TensorT<T>& b, const TensorT<T>& c, const TensorT<T>& d,
             TensorT<T>& out) {
    out = TensorT<T>(a.b, a.h, a.w, a.c + b.c + c.c + d.c);
    const std::size_t positions = static_cast<std::size_t>(a.b) * a.h * a.w;
    for (std::size_t pos = 0; pos < positions; ++pos) {
        T* orow = out.v.data() + pos * out.c;
        const TensorT<T>* parts[4] = {&a, &b, &c, &d};
        int off = 0;
        for (const auto* t : parts) {
            std::copy(t->v.data() + pos * t->c, t->v.data() + (pos + 1) * t->c, orow + off);
            off += t->c;
        }
    }
}

template <class T>
void split4(const TensorT<T>& dout, TensorT<T>& da, TensorT<T>& db, TensorT<T>& dc,
            TensorT<T>& dd) {
    const std::size_t positions = static_cast<std::size_t>(dout.b) * dout.h * dout.w;
    for (std::size_t pos = 0; pos < positions; ++pos) {
        const T* grow = dout.v.data() + pos * dout.c;
        TensorT<T>* parts[4] = {&da, &db, &dc, &dd};
        int off = 0;
        for (auto* t : parts) {
            T* drow = t->v.data() + pos * t->c;
            for (int ch = 0; ch < t->c; ++ch) drow[ch] += grow[off + ch];
            off += t->c;
        }
    }
}

} // namespace

template <class T>
TensorT<T> inception_block(const TensorT<T>& x, const InceptionParamsT<T>& p,
                           InceptionCacheT<T>& cache) {
    cache.input = x;
    conv2d_forward(x, p.b1, cache.b1_pre);
    relu_forward(cache.b1_pre, cache.b1);

    conv2d_forward(x, p.b2a, cache.b2a_pre);
    relu_forward(cache.b2a_pre, cache.b2a);
    conv2d_forward(cache.b2a, p.b2b, cache.b2b_pre);
    relu_forward(cache.b2b_pre, cache.b2b);

    conv2d_forward(x, p.b3a, cache.b3a_pre);
    relu_forward(cache.b3a_pre, cache.b3a);
    conv2d_forward(cache.b3a, p.b3b, cache.b3b_pre);
    relu_forward(cache.b3b_pre, cache.b3b);
    conv2d_forward(cache.b3b, p.b3c, cache.b3c_pre);
    relu_forward(cache.b3c_pre, cache.b3c);

    avg_pool3_forward(x, cache.pool);
    conv2d_forward(cache.pool, p.b4, cache.b4_pre);
    relu_forward(cache.b4_pre, cache.b4);

    TensorT<T> out;
    concat4(cache.b1, cache.b2b, cache.b3c, cache.b4, out);
    ensure_finite(out, "inception_block");
    return out;
}

template <class T>
void inception_block_backward(const InceptionParamsT<T>& p, const InceptionCacheT<T>& cache,
                              const TensorT<T>& dy, TensorT<T>& dx, InceptionParamsT<T>& grads) {
    const TensorT<T>& x = cache.input;
    TensorT<T> db1(x.b, x.h, x.w, cache.b1.c);
    TensorT<T> db2(x.b, x.h, x.w, cache.b2b.c);
    TensorT<T> db3(x.b, x.h, x.w, cache.b3c.c);
    TensorT<T> db4(x.b, x.h, x.w, cache.b4.c);
    split4(dy, db1, db2, db3, db4);

    // branch 1
    TensorT<T> d1pre(x.b, x.h, x.w, cache.b1.c);
    relu_backward(cache.b1_pre, db1, d1pre);
    conv2d_backward(x, p.b1, d1pre, &dx, &grads.b1);

    // branch 2
    TensorT<T> d2b(x.b, x.h, x.w, cache.b2b.c);
    relu_backward(cache.b2b_pre, db2, d2b);
    TensorT<T> d2a_post(x.b, x.h, x.w, cache.b2a.c);
    conv2d_backward(cache.b2a, p.b2b, d2b, &d2a_post, &grads.b2b);
    TensorT<T> d2a(x.b, x.h, x.w, cache.b2a.c);
    relu_backward(cache.b2a_pre, d2a_post, d2a);
    conv2d_backward(x, p.b2a, d2a, &dx, &grads.b2a);

    // branch 3
    TensorT<T> d3c(x.b, x.h, x.w, cache.b3c.c);
    relu_backward(cache.b3c_pre, db3, d3c);
    TensorT<T> d3b_post(x.b, x.h, x.w, cache.b3b.c);
    conv2d_backward(cache.b3b, p.b3c, d3c, &d3b_post, &grads.b3c);
    TensorT<T> d3b(x.b, x.h, x.w, cache.b3b.c);
    relu_backward(cache.b3b_pre, d3b_post, d3b);
    TensorT<T> d3a_post(x.b, x.h, x.w, cache.b3a.c);
    conv2d_backward(cache.b3a, p.b3b, d3b, &d3a_post, &grads.b3b);
    TensorT<T> d3a(x.b, x.h, x.w, cache.b3a.c);
    relu_backward(cache.b3a_pre, d3a_post, d3a);
    conv2d_backward(x, p.b3a, d3a, &dx, &grads.b3a);

    // branch 4
    TensorT<T> d4pre(x.b, x.h, x.w, cache.b4.c);
    relu_backward(cache.b4_pre, db4, d4pre);
    TensorT<T> dpool(x.b, x.h, x.w, x.c);
    conv2d_backward(cache.pool, p.b4, d4pre, &dpool, &grads.b4);
    avg_pool3_backward(dpool, dx);
}

// ---------------------------------------------------------------------------
// Classifier head
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> mlp_head(const TensorT<T>& x, const ConvParamsT<T>& fc1, const ConvParamsT<T>& fc2,
                    MlpCacheT<T>& cache) {
    cache.input = x;
    global_avg_pool_forward(x, cache.pooled);
    conv2d_forward(cache.pooled, fc1, cache.h1_pre);
    relu_forward(cache.h1_pre, cache.h1);
    conv2d_forward(cache.h1, fc2, cache.logits);
    ensure_finite(cache.logits, "mlp_head");
    return cache.logits;
}

template <class T>
void mlp_head_backward(const ConvParamsT<T>& fc1, const ConvParamsT<T>& fc2,
                       const MlpCacheT<T>& cache, const TensorT<T>& dlogits, TensorT<T>& dx,
                       ConvParamsT<T>& fc1_grads, ConvParamsT<T>& fc2_grads) {
    TensorT<T> dh1(cache.h1.b, 1, 1, cache.h1.c);
    conv2d_backward(cache.h1, fc2, dlogits, &dh1, &fc2_grads);
    TensorT<T> dh1_pre(cache.h1.b, 1, 1, cache.h1.c);
    relu_backward(cache.h1_pre, dh1, dh1_pre);
    TensorT<T> dpooled(cache.pooled.b, 1, 1, cache.pooled.c);
    conv2d_backward(cache.pooled, fc1, dh1_pre, &dpooled, &fc1_grads);
    global_avg_pool_backward(dpooled, dx);
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

namespace {

template <class T>
CotParamsT<T> make_cot_shape(const ModelConfig& cfg) {
    const int c = cfg.stem_channels;
    const int k = cfg.cot_kernel;
    const int ch = cfg.resolved_head_channels();
    const int reduced = std::max(1, 2 * c / cfg.cot_reduction);
    CotParamsT<T> p;
    p.k = k;
    p.head_channels = ch;
    p.key_embed = ConvParamsT<T>(3, 3, c, c, 1, 1);
    p.value_embed = ConvParamsT<T>(1, 1, c, c);
    p.attn_reduce = ConvParamsT<T>(1, 1, 2 * c, reduced);
    p.attn_expand = ConvParamsT<T>(1, 1, reduced, k * k * ch);
    p.fuse = ConvParamsT<T>(1, 1, 2 * c, c);
    return p;
}

} // namespace

template <class T>
ModelT<T>::ModelT(const ModelConfig& config) : cfg(config) {
    cfg.validate();
    const int c = cfg.stem_channels;
    const int lw = cfg.resolved_local_width();

    stem = ConvParamsT<T>(3, 3, cfg.in_channels, c, 1, 1);
    stem_affine = AffineParamsT<T>(c);

    for (int i = 0; i < cfg.num_res_units; ++i) {
        const int cin = (i == 0) ? c : lw;
        ResUnitParamsT<T> ru;
        ru.conv1 = ConvParamsT<T>(3, 3, cin, lw, 1, 1);
        ru.conv2 = ConvParamsT<T>(3, 3, lw, lw, 1, 1);
        ru.has_proj = (cin != lw);
        if (ru.has_proj) ru.proj = ConvParamsT<T>(1, 1, cin, lw);
        res_units.push_back(std::move(ru));
    }
    for (int i = 0; i < cfg.num_cot_layers; ++i) {
        cot_layers.push_back(make_cot_shape<T>(cfg));
    }

    const int cf = cfg.fused_channels();
    const auto& w = cfg.inception_widths;
    inception.b1 = ConvParamsT<T>(1, 1, cf, w[0]);
    inception.b2a = ConvParamsT<T>(1, 1, cf, w[1]);
    inception.b2b = ConvParamsT<T>(3, 3, w[1], w[1], 1, 1);
    inception.b3a = ConvParamsT<T>(1, 1, cf, w[2]);
    inception.b3b = ConvParamsT<T>(3, 3, w[2], w[2], 1, 1);
    inception.b3c = ConvParamsT<T>(3, 3, w[2], w[2], 1, 1);
    inception.b4 = ConvParamsT<T>(1, 1, cf, w[3]);

    fc1 = ConvParamsT<T>(1, 1, cfg.inception_out_channels(), cfg.mlp_hidden);
    fc2 = ConvParamsT<T>(1, 1, cfg.mlp_hidden, cfg.num_classes);

    // Fan-in-scaled uniform init, biases zero, affine scale one.
    std::mt19937_64 rng(cfg.seed);
    for (auto& [name, arr] : named_params()) {
        if (arr->dims.size() == 4) {
            const double fan_in = static_cast<double>(arr->dims[0]) * arr->dims[1] * arr->dims[2];
            const double bound = std::sqrt(6.0 / fan_in);
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (T& x : arr->v) x = static_cast<T>(dist(rng));
        } else if (name.ends_with("scale")) {
            std::fill(arr->v.begin(), arr->v.end(), T(1));
        } else {
            arr->zero();
        }
    }
}

template <class T>
ModelT<T> ModelT<T>::like_zeros() const {
    ModelT<T> z(cfg);
    for (auto& [name, arr] : z.named_params()) arr->zero();
    return z;
}

template <class T>
std::vector<std::pair<std::string, Array<T>*>> ModelT<T>::named_params() {
    std::vector<std::pair<std::string, Array<T>*>> out;
    auto add_conv = [&out](const std::string& prefix, ConvParamsT<T>& p) {
        out.emplace_back(prefix + ".kernel", &p.kernel);
        out.emplace_back(prefix + ".bias", &p.bias);
    };
    add_conv("stem", stem);
    out.emplace_back("stem_affine.scale", &stem_affine.scale);
    out.emplace_back("stem_affine.shift", &stem_affine.shift);
    for (std::size_t i = 0; i < res_units.size(); ++i) {
        const std::string base = "ru" + std::to_string(i);
        add_conv(base + ".conv1", res_units[i].conv1);
        add_conv(base + ".conv2", res_units[i].conv2);
        if (res_units[i].has_proj) add_conv(base + ".proj", res_units[i].proj);
    }
    for (std::size_t i = 0; i < cot_layers.size(); ++i) {
        const std::string base = "cot" + std::to_string(i);
        add_conv(base + ".key", cot_layers[i].key_embed);
        add_conv(base + ".value", cot_layers[i].value_embed);
        add_conv(base + ".reduce", cot_layers[i].attn_reduce);
        add_conv(base + ".expand", cot_layers[i].attn_expand);
        add_conv(base + ".fuse", cot_layers[i].fuse);
    }
    add_conv("incep.b1", inception.b1);
    add_conv("incep.b2a", inception.b2a);
    add_conv("incep.b2b", inception.b2b);
    add_conv("incep.b3a", inception.b3a);
    add_conv("incep.b3b", inception.b3b);
    add_conv("incep.b3c", inception.b3c);
    add_conv("incep.b4", inception.b4);
    add_conv("fc1", fc1);
    add_conv("fc2", fc2);
    return out;
}

template <class T>
std::vector<std::pair<std::string, const Array<T>*>> ModelT<T>::named_params() const {
    auto mut = const_cast<ModelT<T>*>(this)->named_params();
    std::vector<std::pair<std::string, const Array<T>*>> out;
    out.reserve(mut.size());
    for (auto& [name, arr] : mut) out.emplace_back(name, arr);
    return out;
}

template <class T>
std::size_t ModelT<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, arr] : named_params()) n += arr->size();
    return n;
}

template <class T>
std::vector<T> forward_item(const ModelT<T>& m, const TensorT<T>& x, ItemCacheT<T>& cache) {
    if (x.b != 1 || x.h != m.cfg.height || x.w != m.cfg.width || x.c != m.cfg.in_channels) {
        throw ShapeMismatchError("forward_item input");
    }
    cache.input = x;
    conv2d_forward(x, m.stem, cache.stem_pre);
    channel_affine_forward(cache.stem_pre, m.stem_affine, cache.stem_aff);
    relu_forward(cache.stem_aff, cache.x0);
    ensure_finite(cache.x0, "stem");

    const bool has_local = !m.res_units.empty();
    const bool has_global = !m.cot_layers.empty();

    if (has_local) {
        cache.rus.resize(m.res_units.size());
        TensorT<T> cur = cache.x0;
        for (std::size_t i = 0; i < m.res_units.size(); ++i) {
            cur = residual_unit(cur, m.res_units[i], cache.rus[i]);
        }
        cache.local_out = std::move(cur);
    }
    if (has_global) {
        cache.cots.resize(m.cot_layers.size());
        TensorT<T> cur = cache.x0;
        for (std::size_t i = 0; i < m.cot_layers.size(); ++i) {
            cur = cot_forward(cur, m.cot_layers[i], cache.cots[i]);
        }
        cache.global_out = std::move(cur);
    }

    if (has_local && has_global) {
        concat_channels(cache.local_out, cache.global_out, cache.paths);
    } else if (has_local) {
        cache.paths = cache.local_out;
    } else if (has_global) {
        cache.paths = cache.global_out;
    } else {
        cache.paths = cache.x0;
    }

    cache.features = inception_block(cache.paths, m.inception, cache.incep);
    TensorT<T> logits_t = mlp_head(cache.features, m.fc1, m.fc2, cache.mlp);
    return std::vector<T>(logits_t.v.begin(), logits_t.v.end());
}

template <class T>
void backward_item(const ModelT<T>& m, const ItemCacheT<T>& cache, std::span<const T> dlogits,
                   ModelT<T>& grads) {
    const int k = m.cfg.num_classes;
    if (static_cast<int>(dlogits.size()) != k) throw ShapeMismatchError("backward_item dlogits");
    TensorT<T> dl(1, 1, 1, k);
    std::copy(dlogits.begin(), dlogits.end(), dl.v.begin());

    TensorT<T> dfeatures(1, cache.features.h, cache.features.w, cache.features.c);
    mlp_head_backward(m.fc1, m.fc2, cache.mlp, dl, dfeatures, grads.fc1, grads.fc2);

    TensorT<T> dpaths(1, cache.paths.h, cache.paths.w, cache.paths.c);
    inception_block_backward(m.inception, cache.incep, dfeatures, dpaths, grads.inception);

    const bool has_local = !m.res_units.empty();
    const bool has_global = !m.cot_layers.empty();

    TensorT<T> dx0(1, cache.x0.h, cache.x0.w, cache.x0.c);

    TensorT<T> dlocal, dglobal;
    if (has_local && has_global) {
        dlocal = TensorT<T>(1, cache.local_out.h, cache.local_out.w, cache.local_out.c);
        dglobal = TensorT<T>(1, cache.global_out.h, cache.global_out.w, cache.global_out.c);
        concat_channels_backward(dpaths, dlocal, dglobal);
    } else if (has_local) {
        dlocal = std::move(dpaths);
    } else if (has_global) {
        dglobal = std::move(dpaths);
    } else {
        dx0 = std::move(dpaths);
    }

    if (has_local) {
        TensorT<T> dcur = std::move(dlocal);
        for (std::size_t i = m.res_units.size(); i-- > 0;) {
            if (i == 0) {
                residual_unit_backward(m.res_units[i], cache.rus[i], dcur, dx0,
                                       grads.res_units[i]);
            } else {
                TensorT<T> dprev(1, cache.rus[i].input.h, cache.rus[i].input.w,
                                 cache.rus[i].input.c);
                residual_unit_backward(m.res_units[i], cache.rus[i], dcur, dprev,
                                       grads.res_units[i]);
                dcur = std::move(dprev);
            }
        }
    }
    if (has_global) {
        TensorT<T> dcur = std::move(dglobal);
        for (std::size_t i = m.cot_layers.size(); i-- > 0;) {
            if (i == 0) {
                cot_backward(m.cot_layers[i], cache.cots[i], dcur, dx0, grads.cot_layers[i]);
            } else {
                TensorT<T> dprev(1, cache.cots[i].input.h, cache.cots[i].input.w,
                                 cache.cots[i].input.c);
                cot_backward(m.cot_layers[i], cache.cots[i], dcur, dprev, grads.cot_layers[i]);
                dcur = std::move(dprev);
            }
        }
    }

    TensorT<T> dstem_aff(1, cache.stem_aff.h, cache.stem_aff.w, cache.stem_aff.c);
    relu_backward(cache.stem_aff, dx0, dstem_aff);
    TensorT<T> dstem_pre(1, cache.stem_pre.h, cache.stem_pre.w, cache.stem_pre.c);
    channel_affine_backward(cache.stem_pre, m.stem_affine, dstem_aff, dstem_pre,
                            grads.stem_affine);
    conv2d_backward(cache.input, m.stem, dstem_pre, nullptr, &grads.stem);
}

template <class T>
std::vector<T> forward(const ModelT<T>& m, const TensorT<T>& batch) {
    std::vector<T> logits(static_cast<std::size_t>(batch.b) * m.cfg.num_classes);
    ItemCacheT<T> cache;
    for (int b = 0; b < batch.b; ++b) {
        const auto item_logits = forward_item(m, batch.slice(b), cache);
        std::copy(item_logits.begin(), item_logits.end(),
                  logits.begin() + static_cast<std::size_t>(b) * m.cfg.num_classes);
    }
    return logits;
}

template <class T>
StepStats forward_backward(const ModelT<T>& m, const TensorT<T>& batch,
                           const std::vector<int>& labels, ModelT<T>& grads) {
    if (static_cast<int>(labels.size()) != batch.b) throw ShapeMismatchError("labels vs batch");
    for (auto& [name, arr] : grads.named_params()) arr->zero();

    StepStats stats;
    const int k = m.cfg.num_classes;
    ItemCacheT<T> cache;
    std::vector<T> dlogits(k);
    for (int b = 0; b < batch.b; ++b) {
        const auto logits = forward_item(m, batch.slice(b), cache);
        const T loss = softmax_cross_entropy<T>(logits, labels[b], dlogits);
        stats.loss_sum += static_cast<double>(loss);
        const int pred = static_cast<int>(
            std::max_element(logits.begin(), logits.end()) - logits.begin());
        if (pred == labels[b]) ++stats.correct;
        ++stats.count;
        backward_item(m, cache, dlogits, grads);
    }
    return stats;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[8] = {'G', 'N', 'E', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void write_le(std::ostream& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    if constexpr (std::endian::native == std::endian::big) {
        auto* bytes = reinterpret_cast<unsigned char*>(&value);
        std::reverse(bytes, bytes + sizeof(T));
    }
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
bool read_le(std::istream& in, T& value) {
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) return false;
    if constexpr (std::endian::native == std::endian::big) {
        auto* bytes = reinterpret_cast<unsigned char*>(&value);
        std::reverse(bytes, bytes + sizeof(T));
    }
    return true;
}

} // namespace

void save_checkpoint(const ModelT<float>& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw WriteError(path.string());
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    write_le(out, kCheckpointVersion);
    const std::string cfg_text = m.cfg.to_text();
    write_le(out, static_cast<std::uint32_t>(cfg_text.size()));
    out.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));
    for (const auto& [name, arr] : m.named_params()) {
        write_le(out, static_cast<std::uint32_t>(arr->dims.size()));
        for (int d : arr->dims) write_le(out, static_cast<std::uint32_t>(d));
        for (float x : arr->v) write_le(out, static_cast<double>(x));
    }
    if (!out) throw WriteError(path.string());
}

ModelT<float> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ReadError(path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw IncompatibleCheckpointError("bad magic in " + path.string());
    }
    std::uint32_t version = 0;
    if (!read_le(in, version) || version != kCheckpointVersion) {
        throw IncompatibleCheckpointError("unsupported version in " + path.string());
    }
    std::uint32_t cfg_len = 0;
    if (!read_le(in, cfg_len)) throw ReadError(path.string(), "truncated config header");
    std::string cfg_text(cfg_len, '\0');
    in.read(cfg_text.data(), cfg_len);
    if (!in) throw ReadError(path.string(), "truncated config block");

    ModelT<float> m(ModelConfig::from_text(cfg_text));
    for (auto& [name, arr] : m.named_params()) {
        std::uint32_t rank = 0;
        if (!read_le(in, rank) || rank != arr->dims.size()) {
            throw IncompatibleCheckpointError("array rank for " + name);
        }
        for (std::size_t d = 0; d < rank; ++d) {
            std::uint32_t dim = 0;
            if (!read_le(in, dim) || dim != static_cast<std::uint32_t>(arr->dims[d])) {
                throw IncompatibleCheckpointError("array shape for " + name);
            }
        }
        for (float& x : arr->v) {
            double value = 0;
            if (!read_le(in, value)) throw ReadError(path.string(), "truncated data for " + name);
            x = static_cast<float>(value);
        }
    }
    return m;
}

// ---------------------------------------------------------------------------

#define GRAMNET_INSTANTIATE_MODEL(T)                                                             \
    template TensorT<T> residual_unit<T>(const TensorT<T>&, const ResUnitParamsT<T>&,            \
                                         ResUnitCacheT<T>&);                                     \
    template void residual_unit_backward<T>(const ResUnitParamsT<T>&, const ResUnitCacheT<T>&,   \
                                            const TensorT<T>&, TensorT<T>&, ResUnitParamsT<T>&); \
    template TensorT<T> inception_block<T>(const TensorT<T>&, const InceptionParamsT<T>&,        \
                                           InceptionCacheT<T>&);                                 \
    template void inception_block_backward<T>(const InceptionParamsT<T>&,                        \
                                              const InceptionCacheT<T>&, const TensorT<T>&,      \
                                              TensorT<T>&, InceptionParamsT<T>&);                \
    template TensorT<T> mlp_head<T>(const TensorT<T>&, const ConvParamsT<T>&,                    \
                                    const ConvParamsT<T>&, MlpCacheT<T>&);                       \
    template void mlp_head_backward<T>(const ConvParamsT<T>&, const ConvParamsT<T>&,             \
                                       const MlpCacheT<T>&, const TensorT<T>&, TensorT<T>&,      \
                                       ConvParamsT<T>&, ConvParamsT<T>&);                        \
    template struct ModelT<T>;                                                                   \
    template std::vector<T> forward_item<T>(const ModelT<T>&, const TensorT<T>&,                 \
                                            ItemCacheT<T>&);                                     \
    template void backward_item<T>(const ModelT<T>&, const ItemCacheT<T>&, std::span<const T>,   \
                                   ModelT<T>&);                                                  \
    template std::vector<T> forward<T>(const ModelT<T>&, const TensorT<T>&);                     \
    template StepStats forward_backward<T>(const ModelT<T>&, const TensorT<T>&,                  \
                                           const std::vector<int>&, ModelT<T>&);

GRAMNET_INSTANTIATE_MODEL(float)
GRAMNET_INSTANTIATE_MODEL(double)

} // namespace gramnet::nn
