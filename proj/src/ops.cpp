#include "fan/ops.hpp"

#include <algorithm>
#include <cmath>

namespace fan {

namespace {

std::size_t leading_pad(Padding padding, std::size_t k) { return padding == Padding::same ? (k - 1) / 2 : 0; }

void require_cache(bool valid, const char* op) {
  if (!valid) throw std::logic_error(std::string(op) + ": backward called without a forward cache");
}

}  // namespace

template <typename T>
Shape4 conv2d_output_shape(const Shape4& in, const ConvParams<T>& p) {
  const Shape4& ws = p.weight.shape();
  if (ws.n == 0 || ws.h == 0 || ws.w == 0) throw ShapeError("conv2d: empty kernel " + to_string(ws));
  if (in.c != ws.c) {
    throw ShapeError("conv2d: input " + to_string(in) + " has " + std::to_string(in.c) + " channels, kernel " +
                     to_string(ws) + " expects " + std::to_string(ws.c));
  }
  if (p.bias.size() != ws.n) {
    throw ShapeError("conv2d: bias length " + std::to_string(p.bias.size()) + " != c_out " + std::to_string(ws.n));
  }
  if (p.stride == 0) throw ShapeError("conv2d: stride must be positive");
  std::size_t ph = 0;
  std::size_t pw = 0;
  if (p.padding == Padding::same) {
    if (ws.h % 2 == 0 || ws.w % 2 == 0) throw ShapeError("conv2d: same padding needs odd kernel, got " + to_string(ws));
    ph = 2 * leading_pad(p.padding, ws.h);
    pw = 2 * leading_pad(p.padding, ws.w);
  }
  if (in.h + ph < ws.h || in.w + pw < ws.w) {
    throw ShapeError("conv2d: input " + to_string(in) + " smaller than kernel " + to_string(ws));
  }
  return Shape4{in.n, ws.n, (in.h + ph - ws.h) / p.stride + 1, (in.w + pw - ws.w) / p.stride + 1};
}

template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const ConvParams<T>& p) {
  const Shape4 os = conv2d_output_shape(x.shape(), p);
  Tensor4<T> out(os);
  const std::size_t kh = p.k_h();
  const std::size_t kw = p.k_w();
  const std::size_t pad_h = leading_pad(p.padding, kh);
  const std::size_t pad_w = leading_pad(p.padding, kw);
  const std::size_t s = p.stride;
  const std::size_t in_h = x.h();
  const std::size_t in_w = x.w();

  for (std::size_t n = 0; n < os.n; ++n) {
    for (std::size_t co = 0; co < os.c; ++co) {
      auto o = out.plane(n, co);
      std::fill(o.begin(), o.end(), p.bias[co]);
      for (std::size_t ci = 0; ci < x.c(); ++ci) {
        const auto in = x.plane(n, ci);
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const T wv = p.weight.at(co, ci, ky, kx);
            for (std::size_t oy = 0; oy < os.h; ++oy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ky) - static_cast<std::ptrdiff_t>(pad_h);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in_h)) continue;
              T* orow = o.data() + oy * os.w;
              const T* irow = in.data() + static_cast<std::size_t>(iy) * in_w;
              if (s == 1) {
                // ix = ox + kx - pad_w must lie in [0, in_w)
                const std::size_t ox0 = kx < pad_w ? pad_w - kx : 0;
                const std::size_t ox1 = std::min(os.w, in_w + pad_w - kx);
                if (ox1 <= ox0) continue;
                const T* src = irow + (ox0 + kx - pad_w);
                T* dst = orow + ox0;
                for (std::size_t t = 0; t < ox1 - ox0; ++t) dst[t] += wv * src[t];
              } else {
                for (std::size_t ox = 0; ox < os.w; ++ox) {
                  const std::ptrdiff_t ix =
                      static_cast<std::ptrdiff_t>(ox * s + kx) - static_cast<std::ptrdiff_t>(pad_w);
                  if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(in_w)) orow[ox] += wv * irow[ix];
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const ConvParams<T>& p, ConvCache<T>& cache) {
  Tensor4<T> out = conv2d(x, p);
  cache.input = x;
  cache.params = p;
  cache.valid = true;
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& grad_out, const Tensor4<T>& x, const ConvParams<T>& p) {
  const Shape4 os = conv2d_output_shape(x.shape(), p);
  if (grad_out.shape() != os) {
    throw ShapeError("conv2d_backward: grad_out " + to_string(grad_out.shape()) + " != forward output " +
                     to_string(os));
  }
  ConvGrads<T> g;
  g.input = Tensor4<T>(x.shape());
  g.weight = Tensor4<T>(p.weight.shape());
  g.bias.assign(os.c, T(0));

  const std::size_t kh = p.k_h();
  const std::size_t kw = p.k_w();
  const std::size_t pad_h = leading_pad(p.padding, kh);
  const std::size_t pad_w = leading_pad(p.padding, kw);
  const std::size_t s = p.stride;
  const std::size_t in_h = x.h();
  const std::size_t in_w = x.w();

  for (std::size_t n = 0; n < os.n; ++n) {
    for (std::size_t co = 0; co < os.c; ++co) {
      const auto go = grad_out.plane(n, co);
      double bsum = 0.0;
      for (T v : go) bsum += v;
      g.bias[co] += static_cast<T>(bsum);
      for (std::size_t ci = 0; ci < x.c(); ++ci) {
        const auto in = x.plane(n, ci);
        auto gi = g.input.plane(n, ci);
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const T wv = p.weight.at(co, ci, ky, kx);
            T wsum = 0;
            for (std::size_t oy = 0; oy < os.h; ++oy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ky) - static_cast<std::ptrdiff_t>(pad_h);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in_h)) continue;
              const T* grow = go.data() + oy * os.w;
              const std::size_t ioff = static_cast<std::size_t>(iy) * in_w;
              if (s == 1) {
                const std::size_t ox0 = kx < pad_w ? pad_w - kx : 0;
                const std::size_t ox1 = std::min(os.w, in_w + pad_w - kx);
                if (ox1 <= ox0) continue;
                const T* src = in.data() + ioff + (ox0 + kx - pad_w);
                T* dst = gi.data() + ioff + (ox0 + kx - pad_w);
                const T* gsrc = grow + ox0;
                for (std::size_t t = 0; t < ox1 - ox0; ++t) {
                  wsum += gsrc[t] * src[t];
                  dst[t] += wv * gsrc[t];
                }
              } else {
                for (std::size_t ox = 0; ox < os.w; ++ox) {
                  const std::ptrdiff_t ix =
                      static_cast<std::ptrdiff_t>(ox * s + kx) - static_cast<std::ptrdiff_t>(pad_w);
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in_w)) continue;
                  wsum += grow[ox] * in[ioff + static_cast<std::size_t>(ix)];
                  gi[ioff + static_cast<std::size_t>(ix)] += wv * grow[ox];
                }
              }
            }
            g.weight.at(co, ci, ky, kx) += wsum;
          }
        }
      }
    }
  }
  return g;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& grad_out, const ConvCache<T>& cache) {
  require_cache(cache.valid, "conv2d_backward");
  return conv2d_backward(grad_out, cache.input, cache.params);
}

template <typename T>
BatchStats batch_stats(const Tensor4<T>& y) {
  const std::size_t count = y.n() * y.h() * y.w();
  if (count == 0 || y.c() == 0) throw ShapeError("batch_stats: empty tensor " + to_string(y.shape()));
  BatchStats st;
  st.mean.assign(y.c(), 0.0);
  st.var.assign(y.c(), 0.0);
  for (std::size_t c = 0; c < y.c(); ++c) {
    double sum = 0.0;
    for (std::size_t n = 0; n < y.n(); ++n)
      for (T v : y.plane(n, c)) sum += v;
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (std::size_t n = 0; n < y.n(); ++n)
      for (T v : y.plane(n, c)) ss += (v - mean) * (v - mean);
    st.mean[c] = mean;
    st.var[c] = ss / static_cast<double>(count);
  }
  return st;
}

template <typename T>
Tensor4<T> standardize(const Tensor4<T>& y, const BatchStats& stats, double eps) {
  if (stats.mean.size() != y.c()) throw ShapeError("standardize: statistics do not match " + to_string(y.shape()));
  Tensor4<T> out(y.shape());
  for (std::size_t c = 0; c < y.c(); ++c) {
    const double inv = 1.0 / std::sqrt(stats.var[c] + eps);
    for (std::size_t n = 0; n < y.n(); ++n) {
      const auto src = y.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>((src[i] - stats.mean[c]) * inv);
    }
  }
  return out;
}

template <typename T>
Tensor4<T> standardize_backward(const Tensor4<T>& grad_out, const Tensor4<T>& xhat, const BatchStats& stats,
                                double eps) {
  if (grad_out.shape() != xhat.shape()) {
    throw ShapeError("standardize_backward: " + to_string(grad_out.shape()) + " vs " + to_string(xhat.shape()));
  }
  const double count = static_cast<double>(xhat.n() * xhat.h() * xhat.w());
  Tensor4<T> gx(xhat.shape());
  for (std::size_t c = 0; c < xhat.c(); ++c) {
    double gsum = 0.0;
    double gdot = 0.0;
    for (std::size_t n = 0; n < xhat.n(); ++n) {
      const auto g = grad_out.plane(n, c);
      const auto xh = xhat.plane(n, c);
      for (std::size_t i = 0; i < g.size(); ++i) {
        gsum += g[i];
        gdot += static_cast<double>(g[i]) * xh[i];
      }
    }
    const double inv = 1.0 / std::sqrt(stats.var[c] + eps);
    const double gmean = gsum / count;
    const double dmean = gdot / count;
    for (std::size_t n = 0; n < xhat.n(); ++n) {
      const auto g = grad_out.plane(n, c);
      const auto xh = xhat.plane(n, c);
      auto dst = gx.plane(n, c);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] = static_cast<T>(inv * (g[i] - gmean - xh[i] * dmean));
    }
  }
  return gx;
}

template <typename T>
Tensor4<T> upsample(const Tensor4<T>& z, std::size_t target_h, std::size_t target_w) {
  if (target_h == 0 || target_w == 0) throw ShapeError("upsample: zero target dims");
  if (target_h < z.h() || target_w < z.w()) {
    throw ShapeError("upsample: target " + std::to_string(target_h) + "x" + std::to_string(target_w) +
                     " smaller than source " + to_string(z.shape()));
  }
  Tensor4<T> out(z.n(), z.c(), target_h, target_w);
  std::vector<std::size_t> col(target_w);
  for (std::size_t j = 0; j < target_w; ++j) col[j] = j * z.w() / target_w;
  for (std::size_t n = 0; n < z.n(); ++n) {
    for (std::size_t c = 0; c < z.c(); ++c) {
      const auto src = z.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t i = 0; i < target_h; ++i) {
        const T* srow = src.data() + (i * z.h() / target_h) * z.w();
        T* drow = dst.data() + i * target_w;
        for (std::size_t j = 0; j < target_w; ++j) drow[j] = srow[col[j]];
      }
    }
  }
  return out;
}

template <typename T>
Tensor4<T> upsample_backward(const Tensor4<T>& grad_out, const Shape4& source) {
  if (grad_out.n() != source.n || grad_out.c() != source.c || grad_out.h() < source.h || grad_out.w() < source.w) {
    throw ShapeError("upsample_backward: " + to_string(grad_out.shape()) + " is not an upsampling of " +
                     to_string(source));
  }
  Tensor4<T> g(source);
  const std::size_t th = grad_out.h();
  const std::size_t tw = grad_out.w();
  for (std::size_t n = 0; n < source.n; ++n) {
    for (std::size_t c = 0; c < source.c; ++c) {
      const auto src = grad_out.plane(n, c);
      auto dst = g.plane(n, c);
      for (std::size_t i = 0; i < th; ++i) {
        T* drow = dst.data() + (i * source.h / th) * source.w;
        const T* srow = src.data() + i * tw;
        for (std::size_t j = 0; j < tw; ++j) drow[j * source.w / tw] += srow[j];
      }
    }
  }
  return g;
}

template <typename T>
Tensor4<T> sigmoid(const Tensor4<T>& x) {
  Tensor4<T> out(x.shape());
  auto o = out.data();
  const auto in = x.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const T v = in[i];
    if (v >= 0) {
      o[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      o[i] = e / (T(1) + e);
    }
  }
  return out;
}

template <typename T>
Tensor4<T> sigmoid_backward(const Tensor4<T>& grad_out, const Tensor4<T>& out) {
  if (grad_out.shape() != out.shape()) throw ShapeError("sigmoid_backward: shape mismatch");
  Tensor4<T> g(out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const T s = out.data()[i];
    g.data()[i] = grad_out.data()[i] * s * (T(1) - s);
  }
  return g;
}

template <typename T>
Tensor4<T> relu(const Tensor4<T>& x) {
  Tensor4<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = std::max(x.data()[i], T(0));
  return out;
}

template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& grad_out, const Tensor4<T>& out) {
  if (grad_out.shape() != out.shape()) throw ShapeError("relu_backward: shape mismatch");
  Tensor4<T> g(out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] = out.data()[i] > T(0) ? grad_out.data()[i] : T(0);
  return g;
}

template <typename T>
Tensor4<T> maxpool2(const Tensor4<T>& x) {
  if (x.h() % 2 != 0 || x.w() % 2 != 0) throw ShapeError("maxpool2: odd spatial dims " + to_string(x.shape()));
  Tensor4<T> out(x.n(), x.c(), x.h() / 2, x.w() / 2);
  for (std::size_t n = 0; n < x.n(); ++n) {
    for (std::size_t c = 0; c < x.c(); ++c) {
      for (std::size_t i = 0; i < out.h(); ++i) {
        for (std::size_t j = 0; j < out.w(); ++j) {
          const T a = x.at(n, c, 2 * i, 2 * j);
          const T b = x.at(n, c, 2 * i, 2 * j + 1);
          const T d = x.at(n, c, 2 * i + 1, 2 * j);
          const T e = x.at(n, c, 2 * i + 1, 2 * j + 1);
          out.at(n, c, i, j) = std::max(std::max(a, b), std::max(d, e));
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor4<T> maxpool2_backward(const Tensor4<T>& grad_out, const Tensor4<T>& x) {
  if (x.h() % 2 != 0 || x.w() % 2 != 0) throw ShapeError("maxpool2_backward: odd spatial dims");
  if (grad_out.shape() != Shape4{x.n(), x.c(), x.h() / 2, x.w() / 2}) {
    throw ShapeError("maxpool2_backward: grad_out " + to_string(grad_out.shape()) + " does not match input " +
                     to_string(x.shape()));
  }
  Tensor4<T> g(x.shape());
  for (std::size_t n = 0; n < x.n(); ++n) {
    for (std::size_t c = 0; c < x.c(); ++c) {
      for (std::size_t i = 0; i < grad_out.h(); ++i) {
        for (std::size_t j = 0; j < grad_out.w(); ++j) {
          // first maximum in row-major window order receives the gradient
          std::size_t by = 2 * i;
          std::size_t bx = 2 * j;
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx)
              if (x.at(n, c, 2 * i + dy, 2 * j + dx) > x.at(n, c, by, bx)) {
                by = 2 * i + dy;
                bx = 2 * j + dx;
              }
          g.at(n, c, by, bx) += grad_out.at(n, c, i, j);
        }
      }
    }
  }
  return g;
}

template <typename T>
Tensor4<T> crop(const Tensor4<T>& x, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
  if (top + h > x.h() || left + w > x.w()) {
    throw ShapeError("crop: window top=" + std::to_string(top) + " left=" + std::to_string(left) + " " +
                     std::to_string(h) + "x" + std::to_string(w) + " exceeds " + to_string(x.shape()));
  }
  Tensor4<T> out(x.n(), x.c(), h, w);
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < x.c(); ++c) {
      const auto src = x.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::size_t i = 0; i < h; ++i)
        std::copy_n(src.data() + (top + i) * x.w() + left, w, dst.data() + i * w);
    }
  return out;
}

template <typename T>
Tensor4<T> crop_backward(const Tensor4<T>& grad_out, const Shape4& full, std::size_t top, std::size_t left) {
  if (grad_out.n() != full.n || grad_out.c() != full.c || top + grad_out.h() > full.h ||
      left + grad_out.w() > full.w) {
    throw ShapeError("crop_backward: " + to_string(grad_out.shape()) + " does not fit in " + to_string(full));
  }
  Tensor4<T> g(full);
  for (std::size_t n = 0; n < full.n; ++n)
    for (std::size_t c = 0; c < full.c; ++c) {
      const auto src = grad_out.plane(n, c);
      auto dst = g.plane(n, c);
      for (std::size_t i = 0; i < grad_out.h(); ++i)
        std::copy_n(src.data() + i * grad_out.w(), grad_out.w(), dst.data() + (top + i) * full.w + left);
    }
  return g;
}

template <typename T>
double mse(const Tensor4<T>& a, const Tensor4<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("mse: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  if (a.empty()) throw ShapeError("mse: empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - b.data()[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

template <typename T>
Tensor4<T> mse_backward(const Tensor4<T>& a, const Tensor4<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("mse_backward: shape mismatch");
  Tensor4<T> g(a.shape());
  const double scale = 2.0 / static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    g.data()[i] = static_cast<T>(scale * (static_cast<double>(a.data()[i]) - b.data()[i]));
  return g;
}

#define FAN_INSTANTIATE_OPS(T)                                                                              \
  template Shape4 conv2d_output_shape(const Shape4&, const ConvParams<T>&);                                \
  template Tensor4<T> conv2d(const Tensor4<T>&, const ConvParams<T>&);                                     \
  template Tensor4<T> conv2d(const Tensor4<T>&, const ConvParams<T>&, ConvCache<T>&);                      \
  template ConvGrads<T> conv2d_backward(const Tensor4<T>&, const Tensor4<T>&, const ConvParams<T>&);       \
  template ConvGrads<T> conv2d_backward(const Tensor4<T>&, const ConvCache<T>&);                           \
  template BatchStats batch_stats(const Tensor4<T>&);                                                      \
  template Tensor4<T> standardize(const Tensor4<T>&, const BatchStats&, double);                           \
  template Tensor4<T> standardize_backward(const Tensor4<T>&, const Tensor4<T>&, const BatchStats&, double); \
  template Tensor4<T> upsample(const Tensor4<T>&, std::size_t, std::size_t);                               \
  template Tensor4<T> upsample_backward(const Tensor4<T>&, const Shape4&);                                 \
  template Tensor4<T> sigmoid(const Tensor4<T>&);                                                          \
  template Tensor4<T> sigmoid_backward(const Tensor4<T>&, const Tensor4<T>&);                              \
  template Tensor4<T> relu(const Tensor4<T>&);                                                             \
  template Tensor4<T> relu_backward(const Tensor4<T>&, const Tensor4<T>&);                                 \
  template Tensor4<T> maxpool2(const Tensor4<T>&);                                                         \
  template Tensor4<T> maxpool2_backward(const Tensor4<T>&, const Tensor4<T>&);                             \
  template Tensor4<T> crop(const Tensor4<T>&, std::size_t, std::size_t, std::size_t, std::size_t);         \
  template Tensor4<T> crop_backward(const Tensor4<T>&, const Shape4&, std::size_t, std::size_t);           \
  template double mse(const Tensor4<T>&, const Tensor4<T>&);                                               \
  template Tensor4<T> mse_backward(const Tensor4<T>&, const Tensor4<T>&);

FAN_INSTANTIATE_OPS(float)
FAN_INSTANTIATE_OPS(double)

#undef FAN_INSTANTIATE_OPS

}  // namespace fan
