#include "intent/kernels.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "intent/errors.hpp"

extern "C" void openblas_set_num_threads(int);

namespace intent {

void BnStats::validate() const {
  if (mean.size() != var.size()) throw ShapeError("BnStats: mean/var length mismatch");
  for (float v : var) {
    if (!(v >= 0.0f)) throw ShapeError("BnStats: negative or NaN variance");
  }
}

namespace kernels {
namespace {

// Parallelism comes from OpenMP over samples/channels; BLAS stays single-threaded so that
// concurrent calls never oversubscribe and results stay bit-stable.
struct BlasSerial {
  BlasSerial() { openblas_set_num_threads(1); }
};
const BlasSerial blas_serial_init;

constexpr std::size_t kParallelMin = 1 << 14;

void im2col(const float* in, int cin, int h, int w, int k, int stride, int pad, int ho, int wo,
            float* col) {
  for (int c = 0; c < cin; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* row = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          float* dst = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            for (int ox = 0; ox < wo; ++ox) dst[ox] = 0.0f;
            continue;
          }
          const float* src = in + (static_cast<std::size_t>(c) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im(const float* col, int cin, int h, int w, int k, int stride, int pad, int ho, int wo,
            float* out) {
  for (int c = 0; c < cin; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* row = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          float* dst = out + (static_cast<std::size_t>(c) * h + iy) * w;
          const float* src = row + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

struct ConvGeom {
  int n, cin, h, w, cout, k, ho, wo;
};

ConvGeom conv_geometry(const Tensor& input, const Tensor& weight, int stride, int padding) {
  require_rank(input, 4, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  if (weight.dim(1) != input.dim(1)) {
    throw ShapeError("conv2d: weight " + shape_str(weight.shape()) + " expects " +
                     std::to_string(weight.dim(1)) + " input channels, input is " +
                     shape_str(input.shape()));
  }
  if (weight.dim(2) != weight.dim(3)) throw ShapeError("conv2d: kernel must be square");
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: invalid stride/padding");
  ConvGeom g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), weight.dim(0), weight.dim(2), 0, 0};
  const int span_h = g.h + 2 * padding - g.k;
  const int span_w = g.w + 2 * padding - g.k;
  if (span_h < 0 || span_w < 0) {
    throw ShapeError("conv2d: kernel " + std::to_string(g.k) + " larger than padded input " +
                     shape_str(input.shape()));
  }
  g.ho = span_h / stride + 1;
  g.wo = span_w / stride + 1;
  return g;
}

void require_channels(const Tensor& h, std::size_t c, const char* what) {
  require_rank(h, 4, what);
  if (static_cast<std::size_t>(h.dim(1)) != c) {
    throw ShapeError(std::string(what) + ": tensor has " + std::to_string(h.dim(1)) +
                     " channels, parameters have " + std::to_string(c));
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, std::span<const float> bias, int stride,
              int padding) {
  const ConvGeom g = conv_geometry(input, weight, stride, padding);
  if (!bias.empty() && bias.size() != static_cast<std::size_t>(g.cout)) {
    throw ShapeError("conv2d: bias length " + std::to_string(bias.size()) + " != out channels " +
                     std::to_string(g.cout));
  }
  Tensor out({g.n, g.cout, g.ho, g.wo});
  const int kk = g.cin * g.k * g.k;
  const int p = g.ho * g.wo;
  const std::size_t in_plane = static_cast<std::size_t>(g.cin) * g.h * g.w;
  const std::size_t out_plane = static_cast<std::size_t>(g.cout) * p;

#pragma omp parallel for schedule(static) if (g.n > 1)
  for (int n = 0; n < g.n; ++n) {
    std::vector<float> col(static_cast<std::size_t>(kk) * p);
    im2col(input.data() + n * in_plane, g.cin, g.h, g.w, g.k, stride, padding, g.ho, g.wo, col.data());
    float* dst = out.data() + n * out_plane;
    for (int co = 0; co < g.cout; ++co) {
      const float b = bias.empty() ? 0.0f : bias[co];
      for (int i = 0; i < p; ++i) dst[static_cast<std::size_t>(co) * p + i] = b;
    }
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, g.cout, p, kk, 1.0f, weight.data(), kk,
                col.data(), p, 1.0f, dst, p);
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& dout, int stride,
                          int padding, bool need_dinput, bool need_dparams) {
  const ConvGeom g = conv_geometry(input, weight, stride, padding);
  if (dout.shape() != Shape{g.n, g.cout, g.ho, g.wo}) {
    throw ShapeError("conv2d_backward: dout shape " + shape_str(dout.shape()));
  }
  const int kk = g.cin * g.k * g.k;
  const int p = g.ho * g.wo;
  const std::size_t in_plane = static_cast<std::size_t>(g.cin) * g.h * g.w;
  const std::size_t out_plane = static_cast<std::size_t>(g.cout) * p;

  ConvGrads grads;
  if (need_dinput) grads.dinput = Tensor(input.shape());
  std::vector<Tensor> dw_per_sample;
  if (need_dparams) dw_per_sample.assign(static_cast<std::size_t>(g.n), Tensor(weight.shape()));

#pragma omp parallel for schedule(static) if (g.n > 1)
  for (int n = 0; n < g.n; ++n) {
    const float* dy = dout.data() + n * out_plane;
    std::vector<float> col(static_cast<std::size_t>(kk) * p);
    if (need_dparams) {
      im2col(input.data() + n * in_plane, g.cin, g.h, g.w, g.k, stride, padding, g.ho, g.wo, col.data());
      cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, g.cout, kk, p, 1.0f, dy, p, col.data(), p,
                  0.0f, dw_per_sample[n].data(), kk);
    }
    if (need_dinput) {
      cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, kk, p, g.cout, 1.0f, weight.data(), kk, dy,
                  p, 0.0f, col.data(), p);
      col2im(col.data(), g.cin, g.h, g.w, g.k, stride, padding, g.ho, g.wo,
             grads.dinput.data() + n * in_plane);
    }
  }

  if (need_dparams) {
    grads.dweight = Tensor(weight.shape());
    for (int n = 0; n < g.n; ++n) {
      const float* src = dw_per_sample[n].data();
      float* dst = grads.dweight.data();
      for (std::size_t i = 0; i < grads.dweight.size(); ++i) dst[i] += src[i];
    }
    grads.dbias.assign(static_cast<std::size_t>(g.cout), 0.0f);
    for (int co = 0; co < g.cout; ++co) {
      double acc = 0.0;
      for (int n = 0; n < g.n; ++n) {
        const float* dy = dout.data() + n * out_plane + static_cast<std::size_t>(co) * p;
        for (int i = 0; i < p; ++i) acc += dy[i];
      }
      grads.dbias[co] = static_cast<float>(acc);
    }
  }
  return grads;
}

BnStats instant_stats(const Tensor& h) {
  require_rank(h, 4, "instant_stats");
  const int n = h.dim(0), c = h.dim(1);
  const std::size_t plane = static_cast<std::size_t>(h.dim(2)) * h.dim(3);
  const std::size_t count = plane * n;
  if (count < 2) throw ShapeError("instant_stats: fewer than 2 elements per channel");
  BnStats s{std::vector<float>(c), std::vector<float>(c)};
#pragma omp parallel for schedule(static) if (h.size() > kParallelMin)
  for (int ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const float* src = h.data() + (static_cast<std::size_t>(i) * c + ch) * plane;
      for (std::size_t j = 0; j < plane; ++j) sum += src[j];
    }
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const float* src = h.data() + (static_cast<std::size_t>(i) * c + ch) * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        const double d = src[j] - mean;
        sq += d * d;
      }
    }
    s.mean[ch] = static_cast<float>(mean);
    s.var[ch] = static_cast<float>(sq / static_cast<double>(count));
  }
  return s;
}

BnStats mix_stats(const BnStats& tracked, const BnStats& instant, double lambda) {
  if (tracked.channels() != instant.channels()) throw ShapeError("mix_stats: channel mismatch");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("mix_stats: lambda outside [0,1]");
  if (lambda == 1.0) return tracked;
  if (lambda == 0.0) return instant;
  BnStats out{std::vector<float>(tracked.channels()), std::vector<float>(tracked.channels())};
  for (std::size_t c = 0; c < tracked.channels(); ++c) {
    out.mean[c] = static_cast<float>(lambda * tracked.mean[c] + (1.0 - lambda) * instant.mean[c]);
    out.var[c] = static_cast<float>(lambda * tracked.var[c] + (1.0 - lambda) * instant.var[c]);
  }
  return out;
}

Tensor batchnorm_apply(const Tensor& h, const BnStats& stats, std::span<const float> gamma,
                       std::span<const float> beta, float eps) {
  require_channels(h, stats.channels(), "batchnorm_apply");
  if (stats.var.size() != stats.channels() || gamma.size() != stats.channels() ||
      beta.size() != stats.channels()) {
    throw ShapeError("batchnorm_apply: gamma/beta/stats channel mismatch");
  }
  const int n = h.dim(0), c = h.dim(1);
  const std::size_t plane = static_cast<std::size_t>(h.dim(2)) * h.dim(3);
  Tensor out(h.shape());
#pragma omp parallel for collapse(2) schedule(static) if (h.size() > kParallelMin)
  for (int i = 0; i < n; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const float scale = gamma[ch] / std::sqrt(stats.var[ch] + eps);
      const float mean = stats.mean[ch];
      const float shift = beta[ch];
      const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * plane;
      const float* src = h.data() + off;
      float* dst = out.data() + off;
      for (std::size_t j = 0; j < plane; ++j) dst[j] = scale * (src[j] - mean) + shift;
    }
  }
  return out;
}

BnGrads batchnorm_backward(const Tensor& h, const BnStats& applied, const BnStats& instant,
                           std::span<const float> gamma, double lambda, float eps, const Tensor& dy,
                           bool need_dh) {
  require_same_shape(h, dy, "batchnorm_backward");
  require_channels(h, applied.channels(), "batchnorm_backward");
  const int n = h.dim(0), c = h.dim(1);
  const std::size_t plane = static_cast<std::size_t>(h.dim(2)) * h.dim(3);
  const double count = static_cast<double>(plane) * n;
  BnGrads g;
  g.dgamma.assign(static_cast<std::size_t>(c), 0.0f);
  g.dbeta.assign(static_cast<std::size_t>(c), 0.0f);
  if (need_dh) g.dh = Tensor(h.shape());
  const bool through_stats = lambda != 1.0;

#pragma omp parallel for schedule(static) if (h.size() > kParallelMin)
  for (int ch = 0; ch < c; ++ch) {
    const double mean = applied.mean[ch];
    const double inv_std = 1.0 / std::sqrt(static_cast<double>(applied.var[ch]) + eps);
    double sum_dy = 0.0, sum_dy_xc = 0.0;
    for (int i = 0; i < n; ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        const double d = dy[off + j];
        sum_dy += d;
        sum_dy_xc += d * (h[off + j] - mean);
      }
    }
    g.dbeta[ch] = static_cast<float>(sum_dy);
    g.dgamma[ch] = static_cast<float>(sum_dy_xc * inv_std);
    if (!need_dh) continue;

    const double gam = gamma[ch];
    // Gradients w.r.t. the applied mean and variance, then routed into the instant part.
    const double d_mean = -gam * inv_std * sum_dy;
    const double d_var = -0.5 * gam * sum_dy_xc * inv_std * inv_std * inv_std;
    const double w_inst = through_stats ? (1.0 - lambda) : 0.0;
    const double inst_mean = instant.mean.empty() ? 0.0 : instant.mean[ch];
    const double c_mean = w_inst * d_mean / count;
    const double c_var = w_inst * d_var * 2.0 / count;
    for (int i = 0; i < n; ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        const double x = h[off + j];
        g.dh[off + j] = static_cast<float>(gam * inv_std * dy[off + j] + c_mean + c_var * (x - inst_mean));
      }
    }
  }
  return g;
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  const float* src = x.data();
  float* dst = out.data();
  const std::size_t n = x.size();
#pragma omp parallel for schedule(static) if (n > kParallelMin)
  for (std::size_t i = 0; i < n; ++i) dst[i] = src[i] > 0.0f ? src[i] : 0.0f;
  return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  require_same_shape(x, dy, "relu_backward");
  Tensor out(x.shape());
  const std::size_t n = x.size();
#pragma omp parallel for schedule(static) if (n > kParallelMin)
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0f ? dy[i] : 0.0f;
  return out;
}

Tensor maxpool2(const Tensor& x, std::vector<std::int32_t>* argmax) {
  require_rank(x, 4, "maxpool2");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 || w % 2) throw ShapeError("maxpool2: odd spatial size " + shape_str(x.shape()));
  const int ho = h / 2, wo = w / 2;
  Tensor out({n, c, ho, wo});
  if (argmax) argmax->assign(out.size(), 0);
  const int planes = n * c;
#pragma omp parallel for schedule(static) if (x.size() > kParallelMin)
  for (int pl = 0; pl < planes; ++pl) {
    const std::size_t in_off = static_cast<std::size_t>(pl) * h * w;
    const std::size_t out_off = static_cast<std::size_t>(pl) * ho * wo;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        std::size_t best = in_off + static_cast<std::size_t>(2 * oy) * w + 2 * ox;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t idx = in_off + static_cast<std::size_t>(2 * oy + dy) * w + 2 * ox + dx;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t o = out_off + static_cast<std::size_t>(oy) * wo + ox;
        out[o] = x[best];
        if (argmax) (*argmax)[o] = static_cast<std::int32_t>(best);
      }
    }
  }
  return out;
}

Tensor maxpool2_backward(const Shape& input_shape, const std::vector<std::int32_t>& argmax,
                         const Tensor& dy) {
  if (argmax.size() != dy.size()) throw ShapeError("maxpool2_backward: argmax/dy size mismatch");
  Tensor dx(input_shape);
  // Windows do not overlap, so every input index receives at most one contribution.
  for (std::size_t i = 0; i < dy.size(); ++i) dx[static_cast<std::size_t>(argmax[i])] += dy[i];
  return dx;
}

Tensor upsample2(const Tensor& x) {
  require_rank(x, 4, "upsample2");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out({n, c, 2 * h, 2 * w});
  const int planes = n * c;
#pragma omp parallel for schedule(static) if (out.size() > kParallelMin)
  for (int pl = 0; pl < planes; ++pl) {
    const float* src = x.data() + static_cast<std::size_t>(pl) * h * w;
    float* dst = out.data() + static_cast<std::size_t>(pl) * 4 * h * w;
    for (int oy = 0; oy < 2 * h; ++oy) {
      for (int ox = 0; ox < 2 * w; ++ox) dst[static_cast<std::size_t>(oy) * 2 * w + ox] = src[(oy / 2) * w + ox / 2];
    }
  }
  return out;
}

Tensor upsample2_backward(const Tensor& dy) {
  require_rank(dy, 4, "upsample2_backward");
  const int n = dy.dim(0), c = dy.dim(1), h2 = dy.dim(2), w2 = dy.dim(3);
  if (h2 % 2 || w2 % 2) throw ShapeError("upsample2_backward: odd gradient size");
  const int h = h2 / 2, w = w2 / 2;
  Tensor dx({n, c, h, w});
  const int planes = n * c;
#pragma omp parallel for schedule(static) if (dy.size() > kParallelMin)
  for (int pl = 0; pl < planes; ++pl) {
    const float* src = dy.data() + static_cast<std::size_t>(pl) * h2 * w2;
    float* dst = dx.data() + static_cast<std::size_t>(pl) * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const float* s = src + static_cast<std::size_t>(2 * y) * w2 + 2 * x;
        dst[y * w + x] = (s[0] + s[1]) + (s[w2] + s[w2 + 1]);
      }
    }
  }
  return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank(a, 4, "concat_channels");
  require_rank(b, 4, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const std::size_t plane = static_cast<std::size_t>(a.dim(2)) * a.dim(3);
  Tensor out({n, ca + cb, a.dim(2), a.dim(3)});
  for (int i = 0; i < n; ++i) {
    float* dst = out.data() + static_cast<std::size_t>(i) * (ca + cb) * plane;
    std::copy_n(a.data() + static_cast<std::size_t>(i) * ca * plane, ca * plane, dst);
    std::copy_n(b.data() + static_cast<std::size_t>(i) * cb * plane, cb * plane, dst + ca * plane);
  }
  return out;
}

void split_channels(const Tensor& dy, int channels_a, Tensor& da, Tensor& db) {
  require_rank(dy, 4, "split_channels");
  const int n = dy.dim(0), c = dy.dim(1), cb = c - channels_a;
  if (channels_a <= 0 || cb <= 0) throw ShapeError("split_channels: invalid split");
  const std::size_t plane = static_cast<std::size_t>(dy.dim(2)) * dy.dim(3);
  da = Tensor({n, channels_a, dy.dim(2), dy.dim(3)});
  db = Tensor({n, cb, dy.dim(2), dy.dim(3)});
  for (int i = 0; i < n; ++i) {
    const float* src = dy.data() + static_cast<std::size_t>(i) * c * plane;
    std::copy_n(src, channels_a * plane, da.data() + static_cast<std::size_t>(i) * channels_a * plane);
    std::copy_n(src + channels_a * plane, cb * plane, db.data() + static_cast<std::size_t>(i) * cb * plane);
  }
}

Tensor sigmoid(const Tensor& z) {
  Tensor out(z.shape());
  const std::size_t n = z.size();
#pragma omp parallel for schedule(static) if (n > kParallelMin)
  for (std::size_t i = 0; i < n; ++i) {
    const double v = z[i];
    out[i] = static_cast<float>(v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)));
  }
  return out;
}

Tensor sigmoid_backward(const Tensor& z, const Tensor& dy) {
  require_same_shape(z, dy, "sigmoid_backward");
  Tensor out(z.shape());
  const std::size_t n = z.size();
#pragma omp parallel for schedule(static) if (n > kParallelMin)
  for (std::size_t i = 0; i < n; ++i) {
    const double e = std::exp(-std::fabs(static_cast<double>(z[i])));
    out[i] = static_cast<float>(dy[i] * e / ((1.0 + e) * (1.0 + e)));
  }
  return out;
}

}  // namespace kernels
}  // namespace intent
