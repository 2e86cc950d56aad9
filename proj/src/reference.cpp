#include "intent/reference.hpp"

#include <algorithm>
#include <cmath>

#include "intent/errors.hpp"

namespace intent::reference {

Tensor conv2d(const Tensor& input, const Tensor& weight, std::span<const float> bias, int stride,
              int padding) {
  require_rank(input, 4, "reference::conv2d");
  require_rank(weight, 4, "reference::conv2d");
  if (weight.dim(1) != input.dim(1)) throw ShapeError("reference::conv2d: channel mismatch");
  const int n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int cout = weight.dim(0), k = weight.dim(2);
  const int ho = (h + 2 * padding - k) / stride + 1;
  const int wo = (w + 2 * padding - k) / stride + 1;
  Tensor out({n, cout, ho, wo});
  for (int b = 0; b < n; ++b)
    for (int co = 0; co < cout; ++co)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[co];
          for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * stride - padding + ky;
                const int ix = ox * stride - padding + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += static_cast<double>(input.at(b, ci, iy, ix)) * weight.at(co, ci, ky, kx);
              }
          out.at(b, co, oy, ox) = static_cast<float>(acc);
        }
  return out;
}

BnStats instant_stats(const Tensor& h) {
  require_rank(h, 4, "reference::instant_stats");
  const int n = h.dim(0), c = h.dim(1), hh = h.dim(2), ww = h.dim(3);
  const double count = static_cast<double>(n) * hh * ww;
  if (count < 2) throw ShapeError("reference::instant_stats: fewer than 2 elements");
  BnStats s{std::vector<float>(c), std::vector<float>(c)};
  for (int ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (int b = 0; b < n; ++b)
      for (int y = 0; y < hh; ++y)
        for (int x = 0; x < ww; ++x) sum += h.at(b, ch, y, x);
    const double mean = sum / count;
    double sq = 0.0;
    for (int b = 0; b < n; ++b)
      for (int y = 0; y < hh; ++y)
        for (int x = 0; x < ww; ++x) sq += (h.at(b, ch, y, x) - mean) * (h.at(b, ch, y, x) - mean);
    s.mean[ch] = static_cast<float>(mean);
    s.var[ch] = static_cast<float>(sq / count);
  }
  return s;
}

Tensor batchnorm_apply(const Tensor& h, const BnStats& stats, std::span<const float> gamma,
                       std::span<const float> beta, float eps) {
  require_rank(h, 4, "reference::batchnorm_apply");
  if (static_cast<std::size_t>(h.dim(1)) != stats.channels()) {
    throw ShapeError("reference::batchnorm_apply: channel mismatch");
  }
  Tensor out(h.shape());
  for (int b = 0; b < h.dim(0); ++b)
    for (int c = 0; c < h.dim(1); ++c)
      for (int y = 0; y < h.dim(2); ++y)
        for (int x = 0; x < h.dim(3); ++x) {
          const double v = gamma[c] * (h.at(b, c, y, x) - static_cast<double>(stats.mean[c])) /
                               std::sqrt(static_cast<double>(stats.var[c]) + eps) +
                           beta[c];
          out.at(b, c, y, x) = static_cast<float>(v);
        }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::max(x[i], 0.0f);
  return out;
}

Tensor maxpool2(const Tensor& x) {
  require_rank(x, 4, "reference::maxpool2");
  Tensor out({x.dim(0), x.dim(1), x.dim(2) / 2, x.dim(3) / 2});
  for (int b = 0; b < out.dim(0); ++b)
    for (int c = 0; c < out.dim(1); ++c)
      for (int y = 0; y < out.dim(2); ++y)
        for (int xx = 0; xx < out.dim(3); ++xx)
          out.at(b, c, y, xx) = std::max({x.at(b, c, 2 * y, 2 * xx), x.at(b, c, 2 * y, 2 * xx + 1),
                                          x.at(b, c, 2 * y + 1, 2 * xx), x.at(b, c, 2 * y + 1, 2 * xx + 1)});
  return out;
}

Tensor upsample2(const Tensor& x) {
  require_rank(x, 4, "reference::upsample2");
  Tensor out({x.dim(0), x.dim(1), x.dim(2) * 2, x.dim(3) * 2});
  for (int b = 0; b < out.dim(0); ++b)
    for (int c = 0; c < out.dim(1); ++c)
      for (int y = 0; y < out.dim(2); ++y)
        for (int xx = 0; xx < out.dim(3); ++xx) out.at(b, c, y, xx) = x.at(b, c, y / 2, xx / 2);
  return out;
}

Tensor sigmoid(const Tensor& z) {
  Tensor out(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(z[i]))));
  return out;
}

}  // namespace intent::reference
