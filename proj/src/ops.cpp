#include "pses/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "gemm.hpp"

namespace pses {

namespace {

template <typename S>
bool recording(std::initializer_list<const Tensor<S>*> inputs) {
  if (!Tape<S>::current()) return false;
  for (const Tensor<S>* t : inputs) {
    if (t && t->defined() && t->tracks_grad()) return true;
  }
  return false;
}

template <typename S>
void record(Tensor<S>& out, std::function<void()> fn) {
  out.ensure_grad();
  Tape<S>::current()->record(out, std::move(fn));
}

int64_t conv_out_extent(int64_t in, int64_t k, int64_t stride, int64_t padding, int64_t dilation) {
  return (in + 2 * padding - dilation * (k - 1) - 1) / stride + 1;
}

// Valid output range [lo, hi] so that o*stride + off lands inside [0, in).
void valid_range(int64_t out, int64_t in, int64_t stride, int64_t off, int64_t& lo, int64_t& hi) {
  lo = 0;
  if (off < 0) lo = (-off + stride - 1) / stride;
  hi = out - 1;
  // floor division; the numerator is negative when the tap starts past the
  // right edge and the range must come out empty.
  const int64_t num = in - 1 - off;
  const int64_t max_o = num < 0 ? -1 : num / stride;
  if (max_o < hi) hi = max_o;
}

// col [IC*KH*KW, OH*OW]; col must be zero-initialized.
template <typename S>
void im2col(const S* in, int64_t ic, int64_t h, int64_t w, int64_t kh, int64_t kw,
            int64_t stride, int64_t padding, int64_t dilation, int64_t oh, int64_t ow, S* col) {
  int64_t r = 0;
  for (int64_t c = 0; c < ic; ++c) {
    const S* plane = in + c * h * w;
    for (int64_t ky = 0; ky < kh; ++ky) {
      for (int64_t kx = 0; kx < kw; ++kx, ++r) {
        S* crow = col + r * oh * ow;
        const int64_t off_y = ky * dilation - padding;
        const int64_t off_x = kx * dilation - padding;
        int64_t xlo, xhi;
        valid_range(ow, w, stride, off_x, xlo, xhi);
        for (int64_t oy = 0; oy < oh; ++oy) {
          const int64_t iy = oy * stride + off_y;
          if (iy < 0 || iy >= h) continue;
          const S* inrow = plane + iy * w + off_x;
          S* dst = crow + oy * ow;
          if (stride == 1) {
            for (int64_t ox = xlo; ox <= xhi; ++ox) dst[ox] = inrow[ox];
          } else {
            for (int64_t ox = xlo; ox <= xhi; ++ox) dst[ox] = inrow[ox * stride];
          }
        }
      }
    }
  }
}

template <typename S>
void col2im_acc(const S* col, int64_t ic, int64_t h, int64_t w, int64_t kh, int64_t kw,
                int64_t stride, int64_t padding, int64_t dilation, int64_t oh, int64_t ow, S* din) {
  int64_t r = 0;
  for (int64_t c = 0; c < ic; ++c) {
    S* plane = din + c * h * w;
    for (int64_t ky = 0; ky < kh; ++ky) {
      for (int64_t kx = 0; kx < kw; ++kx, ++r) {
        const S* crow = col + r * oh * ow;
        const int64_t off_y = ky * dilation - padding;
        const int64_t off_x = kx * dilation - padding;
        int64_t xlo, xhi;
        valid_range(ow, w, stride, off_x, xlo, xhi);
        for (int64_t oy = 0; oy < oh; ++oy) {
          const int64_t iy = oy * stride + off_y;
          if (iy < 0 || iy >= h) continue;
          S* inrow = plane + iy * w + off_x;
          const S* src = crow + oy * ow;
          if (stride == 1) {
            for (int64_t ox = xlo; ox <= xhi; ++ox) inrow[ox] += src[ox];
          } else {
            for (int64_t ox = xlo; ox <= xhi; ++ox) inrow[ox * stride] += src[ox];
          }
        }
      }
    }
  }
}

void check_conv_args(int64_t stride, int64_t padding, int64_t dilation) {
  if (stride < 1) throw ContractError("stride must be positive");
  if (padding < 0) throw ContractError("padding must be nonnegative");
  if (dilation < 1) throw ContractError("dilation must be positive");
}

struct LinTap {
  int64_t i0, i1;
  double f;
};

std::vector<LinTap> resize_taps(int64_t in, int64_t out) {
  std::vector<LinTap> taps(static_cast<size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (int64_t o = 0; o < out; ++o) {
    double s = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (s < 0.0) s = 0.0;
    const double hi = static_cast<double>(in - 1);
    if (s > hi) s = hi;
    const int64_t i0 = static_cast<int64_t>(std::floor(s));
    taps[o].i0 = i0;
    taps[o].i1 = std::min(i0 + 1, in - 1);
    taps[o].f = s - static_cast<double>(i0);
  }
  return taps;
}

}  // namespace

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> conv2d(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias,
                 int64_t stride, int64_t padding, int64_t dilation) {
  check_conv_args(stride, padding, dilation);
  if (input.rank() != 4) throw ShapeError("conv2d input must be NCHW, got " + shape_str(input.shape()));
  if (weight.rank() != 4) throw ShapeError("conv2d weight must be OIKK, got " + shape_str(weight.shape()));
  const int64_t n = input.extent(0), ic = input.extent(1), h = input.extent(2), w = input.extent(3);
  const int64_t oc = weight.extent(0), kh = weight.extent(2), kw = weight.extent(3);
  if (weight.extent(1) != ic) {
    throw ShapeError("conv2d channel mismatch: input has " + std::to_string(ic) + " channels, weight expects " +
                     std::to_string(weight.extent(1)));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.extent(0) != oc)) {
    throw ShapeError("conv2d bias must have shape (" + std::to_string(oc) + ")");
  }
  const int64_t oh = conv_out_extent(h, kh, stride, padding, dilation);
  const int64_t ow = conv_out_extent(w, kw, stride, padding, dilation);
  if (oh < 1 || ow < 1) {
    throw GeometryError("conv2d output extent is nonpositive for input " + shape_str(input.shape()));
  }

  const int64_t ickk = ic * kh * kw;
  const int64_t ohw = oh * ow;
  Tensor<S> y = Tensor<S>::zeros({n, oc, oh, ow});
  std::vector<S> col(static_cast<size_t>(ickk * ohw));
  for (int64_t b = 0; b < n; ++b) {
    std::fill(col.begin(), col.end(), S(0));
    im2col(input.data() + b * ic * h * w, ic, h, w, kh, kw, stride, padding, dilation, oh, ow, col.data());
    detail::gemm(weight.data(), col.data(), y.data() + b * oc * ohw, oc, ickk, ohw);
  }
  if (bias.defined()) {
    for (int64_t b = 0; b < n; ++b) {
      for (int64_t o = 0; o < oc; ++o) {
        S* row = y.data() + (b * oc + o) * ohw;
        const S bv = bias.data()[o];
        for (int64_t i = 0; i < ohw; ++i) row[i] += bv;
      }
    }
  }

  if (recording<S>({&input, &weight, &bias})) {
    auto xi = input.impl();
    auto wi = weight.impl();
    auto bi = bias.defined() ? bias.impl() : nullptr;
    auto yi = y.impl();
    const bool need_x = input.tracks_grad();
    const bool need_w = weight.tracks_grad();
    const bool need_b = bias.defined() && bias.tracks_grad();
    record(y, [=]() {
      const S* dy = yi->grad.data();
      std::vector<S> col_b(static_cast<size_t>(ickk * ohw));
      std::vector<S> dcol(static_cast<size_t>(ickk * ohw));
      for (int64_t b = 0; b < n; ++b) {
        const S* dy_b = dy + b * oc * ohw;
        if (need_w) {
          std::fill(col_b.begin(), col_b.end(), S(0));
          im2col(xi->value.data() + b * ic * h * w, ic, h, w, kh, kw, stride, padding, dilation, oh, ow,
                 col_b.data());
          detail::gemm_nt(dy_b, col_b.data(), wi->grad.data(), oc, ohw, ickk);
        }
        if (need_x) {
          std::fill(dcol.begin(), dcol.end(), S(0));
          detail::gemm_tn(wi->value.data(), dy_b, dcol.data(), ickk, oc, ohw);
          col2im_acc(dcol.data(), ic, h, w, kh, kw, stride, padding, dilation, oh, ow,
                     xi->grad.data() + b * ic * h * w);
        }
        if (need_b) {
          for (int64_t o = 0; o < oc; ++o) {
            S acc = 0;
            const S* row = dy_b + o * ohw;
            for (int64_t i = 0; i < ohw; ++i) acc += row[i];
            bi->grad[o] += acc;
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// depthwise_conv2d
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> depthwise_conv2d(const Tensor<S>& input, const Tensor<S>& weight, const Tensor<S>& bias,
                           int64_t stride, int64_t padding) {
  check_conv_args(stride, padding, 1);
  if (input.rank() != 4) throw ShapeError("depthwise_conv2d input must be NCHW");
  if (weight.rank() != 4 || weight.extent(1) != 1) {
    throw ShapeError("depthwise_conv2d weight must be [C,1,KH,KW], got " + shape_str(weight.shape()));
  }
  const int64_t n = input.extent(0), c = input.extent(1), h = input.extent(2), w = input.extent(3);
  const int64_t kh = weight.extent(2), kw = weight.extent(3);
  if (weight.extent(0) != c) {
    throw ShapeError("depthwise_conv2d channel mismatch: input has " + std::to_string(c) + " channels");
  }
  if (bias.defined() && (bias.rank() != 1 || bias.extent(0) != c)) {
    throw ShapeError("depthwise_conv2d bias must have shape (" + std::to_string(c) + ")");
  }
  const int64_t oh = conv_out_extent(h, kh, stride, padding, 1);
  const int64_t ow = conv_out_extent(w, kw, stride, padding, 1);
  if (oh < 1 || ow < 1) throw GeometryError("depthwise_conv2d output extent is nonpositive");

  Tensor<S> y = Tensor<S>::zeros({n, c, oh, ow});
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t ch = 0; ch < c; ++ch) {
      const S* plane = input.data() + (b * c + ch) * h * w;
      S* out = y.data() + (b * c + ch) * oh * ow;
      for (int64_t ky = 0; ky < kh; ++ky) {
        for (int64_t kx = 0; kx < kw; ++kx) {
          const S wv = weight.data()[(ch * kh + ky) * kw + kx];
          const int64_t off_y = ky - padding;
          const int64_t off_x = kx - padding;
          int64_t xlo, xhi;
          valid_range(ow, w, stride, off_x, xlo, xhi);
          for (int64_t oy = 0; oy < oh; ++oy) {
            const int64_t iy = oy * stride + off_y;
            if (iy < 0 || iy >= h) continue;
            const S* inrow = plane + iy * w + off_x;
            S* orow = out + oy * ow;
            if (stride == 1) {
              for (int64_t ox = xlo; ox <= xhi; ++ox) orow[ox] += wv * inrow[ox];
            } else {
              for (int64_t ox = xlo; ox <= xhi; ++ox) orow[ox] += wv * inrow[ox * stride];
            }
          }
        }
      }
      if (bias.defined()) {
        const S bv = bias.data()[ch];
        for (int64_t i = 0; i < oh * ow; ++i) out[i] += bv;
      }
    }
  }

  if (recording<S>({&input, &weight, &bias})) {
    auto xi = input.impl();
    auto wi = weight.impl();
    auto bi = bias.defined() ? bias.impl() : nullptr;
    auto yi = y.impl();
    const bool need_x = input.tracks_grad();
    const bool need_w = weight.tracks_grad();
    const bool need_b = bias.defined() && bias.tracks_grad();
    record(y, [=]() {
      const S* dy = yi->grad.data();
      for (int64_t b = 0; b < n; ++b) {
        for (int64_t ch = 0; ch < c; ++ch) {
          const S* plane = xi->value.data() + (b * c + ch) * h * w;
          S* dplane = need_x ? xi->grad.data() + (b * c + ch) * h * w : nullptr;
          const S* dout = dy + (b * c + ch) * oh * ow;
          for (int64_t ky = 0; ky < kh; ++ky) {
            for (int64_t kx = 0; kx < kw; ++kx) {
              const int64_t widx = (ch * kh + ky) * kw + kx;
              const S wv = wi->value[widx];
              const int64_t off_y = ky - padding;
              const int64_t off_x = kx - padding;
              int64_t xlo, xhi;
              valid_range(ow, w, stride, off_x, xlo, xhi);
              S wacc = 0;
              for (int64_t oy = 0; oy < oh; ++oy) {
                const int64_t iy = oy * stride + off_y;
                if (iy < 0 || iy >= h) continue;
                const S* inrow = plane + iy * w + off_x;
                const S* drow = dout + oy * ow;
                if (need_w) {
                  for (int64_t ox = xlo; ox <= xhi; ++ox) wacc += drow[ox] * inrow[ox * stride];
                }
                if (need_x) {
                  S* dinrow = dplane + iy * w + off_x;
                  for (int64_t ox = xlo; ox <= xhi; ++ox) dinrow[ox * stride] += wv * drow[ox];
                }
              }
              if (need_w) wi->grad[widx] += wacc;
            }
          }
          if (need_b) {
            S acc = 0;
            for (int64_t i = 0; i < oh * ow; ++i) acc += dout[i];
            bi->grad[ch] += acc;
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// avg_pool2d
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> avg_pool2d(const Tensor<S>& input, int64_t kernel, int64_t stride, int64_t padding) {
  if (input.rank() != 4) throw ShapeError("avg_pool2d input must be NCHW");
  if (kernel < 1) throw ContractError("avg_pool2d kernel must be positive");
  check_conv_args(stride, padding, 1);
  const int64_t n = input.extent(0), c = input.extent(1), h = input.extent(2), w = input.extent(3);
  const int64_t oh = conv_out_extent(h, kernel, stride, padding, 1);
  const int64_t ow = conv_out_extent(w, kernel, stride, padding, 1);
  if (oh < 1 || ow < 1) throw GeometryError("avg_pool2d output extent is nonpositive");

  const S inv = S(1) / static_cast<S>(kernel * kernel);
  Tensor<S> y = Tensor<S>::zeros({n, c, oh, ow});
  for (int64_t p = 0; p < n * c; ++p) {
    const S* plane = input.data() + p * h * w;
    S* out = y.data() + p * oh * ow;
    for (int64_t oy = 0; oy < oh; ++oy) {
      const int64_t y0 = oy * stride - padding;
      for (int64_t ox = 0; ox < ow; ++ox) {
        const int64_t x0 = ox * stride - padding;
        S acc = 0;
        for (int64_t ky = std::max<int64_t>(0, -y0); ky < kernel && y0 + ky < h; ++ky) {
          const S* row = plane + (y0 + ky) * w;
          for (int64_t kx = std::max<int64_t>(0, -x0); kx < kernel && x0 + kx < w; ++kx) {
            acc += row[x0 + kx];
          }
        }
        out[oy * ow + ox] = acc * inv;
      }
    }
  }

  if (recording<S>({&input})) {
    auto xi = input.impl();
    auto yi = y.impl();
    record(y, [=]() {
      for (int64_t p = 0; p < n * c; ++p) {
        S* dplane = xi->grad.data() + p * h * w;
        const S* dout = yi->grad.data() + p * oh * ow;
        for (int64_t oy = 0; oy < oh; ++oy) {
          const int64_t y0 = oy * stride - padding;
          for (int64_t ox = 0; ox < ow; ++ox) {
            const int64_t x0 = ox * stride - padding;
            const S g = dout[oy * ow + ox] * inv;
            for (int64_t ky = std::max<int64_t>(0, -y0); ky < kernel && y0 + ky < h; ++ky) {
              S* row = dplane + (y0 + ky) * w;
              for (int64_t kx = std::max<int64_t>(0, -x0); kx < kernel && x0 + kx < w; ++kx) {
                row[x0 + kx] += g;
              }
            }
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// bilinear_resize
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> bilinear_resize(const Tensor<S>& input, int64_t out_h, int64_t out_w) {
  if (input.rank() != 4) throw ShapeError("bilinear_resize input must be NCHW");
  if (out_h < 1 || out_w < 1) throw ContractError("bilinear_resize target extents must be positive");
  const int64_t n = input.extent(0), c = input.extent(1), h = input.extent(2), w = input.extent(3);

  Tensor<S> y = Tensor<S>::zeros({n, c, out_h, out_w});
  const bool identity = (out_h == h && out_w == w);
  const auto ytaps = resize_taps(h, out_h);
  const auto xtaps = resize_taps(w, out_w);
  if (identity) {
    std::memcpy(y.data(), input.data(), sizeof(S) * static_cast<size_t>(input.numel()));
  } else {
    for (int64_t p = 0; p < n * c; ++p) {
      const S* plane = input.data() + p * h * w;
      S* out = y.data() + p * out_h * out_w;
      for (int64_t oy = 0; oy < out_h; ++oy) {
        const auto& ty = ytaps[oy];
        const S fy = static_cast<S>(ty.f);
        const S* r0 = plane + ty.i0 * w;
        const S* r1 = plane + ty.i1 * w;
        S* orow = out + oy * out_w;
        for (int64_t ox = 0; ox < out_w; ++ox) {
          const auto& tx = xtaps[ox];
          const S fx = static_cast<S>(tx.f);
          const S top = r0[tx.i0] + fx * (r0[tx.i1] - r0[tx.i0]);
          const S bot = r1[tx.i0] + fx * (r1[tx.i1] - r1[tx.i0]);
          orow[ox] = top + fy * (bot - top);
        }
      }
    }
  }

  if (recording<S>({&input})) {
    auto xi = input.impl();
    auto yi = y.impl();
    record(y, [=]() {
      if (identity) {
        for (size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += yi->grad[i];
        return;
      }
      for (int64_t p = 0; p < n * c; ++p) {
        S* dplane = xi->grad.data() + p * h * w;
        const S* dout = yi->grad.data() + p * out_h * out_w;
        for (int64_t oy = 0; oy < out_h; ++oy) {
          const auto& ty = ytaps[oy];
          const S fy = static_cast<S>(ty.f);
          for (int64_t ox = 0; ox < out_w; ++ox) {
            const auto& tx = xtaps[ox];
            const S fx = static_cast<S>(tx.f);
            const S g = dout[oy * out_w + ox];
            dplane[ty.i0 * w + tx.i0] += g * (S(1) - fy) * (S(1) - fx);
            dplane[ty.i0 * w + tx.i1] += g * (S(1) - fy) * fx;
            dplane[ty.i1 * w + tx.i0] += g * fy * (S(1) - fx);
            dplane[ty.i1 * w + tx.i1] += g * fy * fx;
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// batch_norm
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     Tensor<S>& running_mean, Tensor<S>& running_var, bool training,
                     double momentum, double eps) {
  if (x.rank() != 4) throw ShapeError("batch_norm input must be NCHW");
  const int64_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  for (const Tensor<S>* t : std::initializer_list<const Tensor<S>*>{&gamma, &beta, &running_mean, &running_var}) {
    if (t->rank() != 1 || t->extent(0) != c) {
      throw ShapeError("batch_norm parameter shape must be (" + std::to_string(c) + ")");
    }
  }
  const int64_t m = n * h * w;
  const int64_t hw = h * w;

  std::vector<S> mean_c(static_cast<size_t>(c)), invstd_c(static_cast<size_t>(c));
  if (training) {
    if (m == 1) {
      throw ContractError("batch_norm: degenerate statistics, a single value per channel in training mode");
    }
    for (int64_t ch = 0; ch < c; ++ch) {
      S acc = 0;
      for (int64_t b = 0; b < n; ++b) {
        const S* plane = x.data() + (b * c + ch) * hw;
        for (int64_t i = 0; i < hw; ++i) acc += plane[i];
      }
      const S mu = acc / static_cast<S>(m);
      S vacc = 0;
      for (int64_t b = 0; b < n; ++b) {
        const S* plane = x.data() + (b * c + ch) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          const S d = plane[i] - mu;
          vacc += d * d;
        }
      }
      const S var = vacc / static_cast<S>(m);
      mean_c[ch] = mu;
      invstd_c[ch] = S(1) / std::sqrt(var + static_cast<S>(eps));
      running_mean.data()[ch] =
          static_cast<S>(1.0 - momentum) * running_mean.data()[ch] + static_cast<S>(momentum) * mu;
      const S var_unbiased = var * static_cast<S>(m) / static_cast<S>(m - 1);
      running_var.data()[ch] =
          static_cast<S>(1.0 - momentum) * running_var.data()[ch] + static_cast<S>(momentum) * var_unbiased;
    }
  } else {
    for (int64_t ch = 0; ch < c; ++ch) {
      mean_c[ch] = running_mean.data()[ch];
      invstd_c[ch] = S(1) / std::sqrt(running_var.data()[ch] + static_cast<S>(eps));
    }
  }

  Tensor<S> y = Tensor<S>::zeros({n, c, h, w});
  auto xhat = std::make_shared<std::vector<S>>(static_cast<size_t>(x.numel()));
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t ch = 0; ch < c; ++ch) {
      const S* plane = x.data() + (b * c + ch) * hw;
      S* out = y.data() + (b * c + ch) * hw;
      S* xh = xhat->data() + (b * c + ch) * hw;
      const S mu = mean_c[ch], is = invstd_c[ch];
      const S g = gamma.data()[ch], bt = beta.data()[ch];
      for (int64_t i = 0; i < hw; ++i) {
        xh[i] = (plane[i] - mu) * is;
        out[i] = g * xh[i] + bt;
      }
    }
  }

  if (recording<S>({&x, &gamma, &beta})) {
    auto xi = x.impl();
    auto gi = gamma.impl();
    auto bi = beta.impl();
    auto yi = y.impl();
    const bool need_x = x.tracks_grad();
    const bool need_g = gamma.tracks_grad();
    const bool need_b = beta.tracks_grad();
    record(y, [=]() {
      for (int64_t ch = 0; ch < c; ++ch) {
        S sum_dy = 0, sum_dy_xhat = 0;
        for (int64_t b = 0; b < n; ++b) {
          const int64_t base = (b * c + ch) * hw;
          const S* dy = yi->grad.data() + base;
          const S* xh = xhat->data() + base;
          for (int64_t i = 0; i < hw; ++i) {
            sum_dy += dy[i];
            sum_dy_xhat += dy[i] * xh[i];
          }
        }
        if (need_g) gi->grad[ch] += sum_dy_xhat;
        if (need_b) bi->grad[ch] += sum_dy;
        if (need_x) {
          const S g = gi->value[ch], is = invstd_c[ch];
          if (training) {
            const S inv_m = S(1) / static_cast<S>(m);
            for (int64_t b = 0; b < n; ++b) {
              const int64_t base = (b * c + ch) * hw;
              const S* dy = yi->grad.data() + base;
              const S* xh = xhat->data() + base;
              S* dx = xi->grad.data() + base;
              for (int64_t i = 0; i < hw; ++i) {
                dx[i] += g * is * (dy[i] - inv_m * (sum_dy + xh[i] * sum_dy_xhat));
              }
            }
          } else {
            for (int64_t b = 0; b < n; ++b) {
              const int64_t base = (b * c + ch) * hw;
              const S* dy = yi->grad.data() + base;
              S* dx = xi->grad.data() + base;
              for (int64_t i = 0; i < hw; ++i) dx[i] += g * is * dy[i];
            }
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// layer_norm_chw
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> layer_norm_chw(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta, double eps) {
  if (x.rank() != 4) throw ShapeError("layer_norm_chw input must be NCHW");
  const int64_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  for (const Tensor<S>* t : {&gamma, &beta}) {
    if (t->rank() != 1 || t->extent(0) != c) {
      throw ShapeError("layer_norm_chw parameter shape must be (" + std::to_string(c) + ")");
    }
  }
  const int64_t hw = h * w;

  Tensor<S> y = Tensor<S>::zeros({n, c, h, w});
  auto xhat = std::make_shared<std::vector<S>>(static_cast<size_t>(x.numel()));
  auto invstd = std::make_shared<std::vector<S>>(static_cast<size_t>(n * hw));
  for (int64_t b = 0; b < n; ++b) {
    const S* base = x.data() + b * c * hw;
    S* ybase = y.data() + b * c * hw;
    S* xhbase = xhat->data() + b * c * hw;
    for (int64_t i = 0; i < hw; ++i) {
      S acc = 0;
      for (int64_t ch = 0; ch < c; ++ch) acc += base[ch * hw + i];
      const S mu = acc / static_cast<S>(c);
      S vacc = 0;
      for (int64_t ch = 0; ch < c; ++ch) {
        const S d = base[ch * hw + i] - mu;
        vacc += d * d;
      }
      const S is = S(1) / std::sqrt(vacc / static_cast<S>(c) + static_cast<S>(eps));
      (*invstd)[b * hw + i] = is;
      for (int64_t ch = 0; ch < c; ++ch) {
        const S xh = (base[ch * hw + i] - mu) * is;
        xhbase[ch * hw + i] = xh;
        ybase[ch * hw + i] = gamma.data()[ch] * xh + beta.data()[ch];
      }
    }
  }

  if (recording<S>({&x, &gamma, &beta})) {
    auto xi = x.impl();
    auto gi = gamma.impl();
    auto bi = beta.impl();
    auto yi = y.impl();
    const bool need_x = x.tracks_grad();
    const bool need_g = gamma.tracks_grad();
    const bool need_b = beta.tracks_grad();
    record(y, [=]() {
      for (int64_t b = 0; b < n; ++b) {
        const int64_t pbase = b * c * hw;
        const S* dy = yi->grad.data() + pbase;
        const S* xh = xhat->data() + pbase;
        for (int64_t i = 0; i < hw; ++i) {
          if (need_x) {
            S m1 = 0, m2 = 0;
            for (int64_t ch = 0; ch < c; ++ch) {
              const S dxh = dy[ch * hw + i] * gi->value[ch];
              m1 += dxh;
              m2 += dxh * xh[ch * hw + i];
            }
            m1 /= static_cast<S>(c);
            m2 /= static_cast<S>(c);
            const S is = (*invstd)[b * hw + i];
            S* dx = xi->grad.data() + pbase;
            for (int64_t ch = 0; ch < c; ++ch) {
              const S dxh = dy[ch * hw + i] * gi->value[ch];
              dx[ch * hw + i] += is * (dxh - m1 - xh[ch * hw + i] * m2);
            }
          }
          if (need_g || need_b) {
            for (int64_t ch = 0; ch < c; ++ch) {
              if (need_g) gi->grad[ch] += dy[ch * hw + i] * xh[ch * hw + i];
              if (need_b) bi->grad[ch] += dy[ch * hw + i];
            }
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// matmul / linear / transpose
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != b.rank() || (a.rank() != 2 && a.rank() != 3)) {
    throw ShapeError("matmul requires two rank-2 or two rank-3 tensors");
  }
  const bool batched = a.rank() == 3;
  const int64_t nb = batched ? a.extent(0) : 1;
  if (batched && b.extent(0) != nb) throw ShapeError("matmul batch extents disagree");
  const int64_t m = a.extent(batched ? 1 : 0), k = a.extent(batched ? 2 : 1);
  const int64_t k2 = b.extent(batched ? 1 : 0), nn = b.extent(batched ? 2 : 1);
  if (k != k2) {
    throw ShapeError("matmul inner extents disagree: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }

  Tensor<S> y = batched ? Tensor<S>::zeros({nb, m, nn}) : Tensor<S>::zeros({m, nn});
  for (int64_t i = 0; i < nb; ++i) {
    detail::gemm(a.data() + i * m * k, b.data() + i * k * nn, y.data() + i * m * nn, m, k, nn);
  }

  if (recording<S>({&a, &b})) {
    auto ai = a.impl();
    auto bi = b.impl();
    auto yi = y.impl();
    const bool need_a = a.tracks_grad();
    const bool need_b = b.tracks_grad();
    record(y, [=]() {
      for (int64_t i = 0; i < nb; ++i) {
        const S* dy = yi->grad.data() + i * m * nn;
        if (need_a) detail::gemm_nt(dy, bi->value.data() + i * k * nn, ai->grad.data() + i * m * k, m, nn, k);
        if (need_b) detail::gemm_tn(ai->value.data() + i * m * k, dy, bi->grad.data() + i * k * nn, k, m, nn);
      }
    });
  }
  return y;
}

template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias) {
  if (x.rank() != 2 && x.rank() != 3) throw ShapeError("linear input must have rank 2 or 3");
  if (w.rank() != 2) throw ShapeError("linear weight must have rank 2");
  const int64_t in = x.extent(x.rank() - 1);
  if (w.extent(0) != in) {
    throw ShapeError("linear: input width " + std::to_string(in) + " does not match weight " +
                     shape_str(w.shape()));
  }
  const int64_t out = w.extent(1);
  const int64_t rows = x.numel() / in;
  if (bias.defined() && (bias.rank() != 1 || bias.extent(0) != out)) {
    throw ShapeError("linear bias must have shape (" + std::to_string(out) + ")");
  }

  Shape oshape = x.shape();
  oshape.back() = out;
  Tensor<S> y = Tensor<S>::zeros(oshape);
  detail::gemm(x.data(), w.data(), y.data(), rows, in, out);
  if (bias.defined()) {
    for (int64_t r = 0; r < rows; ++r) {
      S* row = y.data() + r * out;
      for (int64_t j = 0; j < out; ++j) row[j] += bias.data()[j];
    }
  }

  if (recording<S>({&x, &w, &bias})) {
    auto xi = x.impl();
    auto wi = w.impl();
    auto bi = bias.defined() ? bias.impl() : nullptr;
    auto yi = y.impl();
    const bool need_x = x.tracks_grad();
    const bool need_w = w.tracks_grad();
    const bool need_b = bias.defined() && bias.tracks_grad();
    record(y, [=]() {
      const S* dy = yi->grad.data();
      if (need_x) detail::gemm_nt(dy, wi->value.data(), xi->grad.data(), rows, out, in);
      if (need_w) detail::gemm_tn(xi->value.data(), dy, wi->grad.data(), in, rows, out);
      if (need_b) {
        for (int64_t r = 0; r < rows; ++r) {
          for (int64_t j = 0; j < out; ++j) bi->grad[j] += dy[r * out + j];
        }
      }
    });
  }
  return y;
}

template <typename S>
Tensor<S> transpose_last2(const Tensor<S>& t) {
  if (t.rank() < 2) throw ShapeError("transpose_last2 requires rank >= 2");
  Shape oshape = t.shape();
  const int64_t a = oshape[oshape.size() - 2], b = oshape[oshape.size() - 1];
  std::swap(oshape[oshape.size() - 2], oshape[oshape.size() - 1]);
  const int64_t outer = t.numel() / (a * b);

  Tensor<S> y = Tensor<S>::zeros(oshape);
  for (int64_t o = 0; o < outer; ++o) {
    const S* src = t.data() + o * a * b;
    S* dst = y.data() + o * a * b;
    for (int64_t i = 0; i < a; ++i) {
      for (int64_t j = 0; j < b; ++j) dst[j * a + i] = src[i * b + j];
    }
  }

  if (recording<S>({&t})) {
    auto xi = t.impl();
    auto yi = y.impl();
    record(y, [=]() {
      for (int64_t o = 0; o < outer; ++o) {
        const S* dy = yi->grad.data() + o * a * b;
        S* dx = xi->grad.data() + o * a * b;
        for (int64_t i = 0; i < a; ++i) {
          for (int64_t j = 0; j < b; ++j) dx[i * b + j] += dy[j * a + i];
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// layout ops
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> reshape(const Tensor<S>& t, Shape shape) {
  if (shape_numel(shape) != t.numel()) {
    throw ShapeError("reshape to " + shape_str(shape) + " does not preserve element count of " +
                     shape_str(t.shape()));
  }
  Tensor<S> y = Tensor<S>::from(std::move(shape), t.values());
  if (recording<S>({&t})) {
    auto xi = t.impl();
    auto yi = y.impl();
    record(y, [=]() {
      for (size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += yi->grad[i];
    });
  }
  return y;
}

template <typename S>
Tensor<S> concat(std::span<const Tensor<S>> ts, int64_t axis) {
  if (ts.empty()) throw ShapeError("concat requires at least one tensor");
  const int64_t rank = ts[0].rank();
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw ShapeError("concat axis out of range");
  int64_t axis_total = 0;
  for (const Tensor<S>& t : ts) {
    if (t.rank() != rank) throw ShapeError("concat rank mismatch");
    for (int64_t d = 0; d < rank; ++d) {
      if (d != axis && t.extent(d) != ts[0].extent(d)) {
        throw ShapeError("concat non-axis extents disagree: " + shape_str(t.shape()) + " vs " +
                         shape_str(ts[0].shape()));
      }
    }
    axis_total += t.extent(axis);
  }
  Shape oshape = ts[0].shape();
  oshape[axis] = axis_total;

  int64_t outer = 1, inner = 1;
  for (int64_t d = 0; d < axis; ++d) outer *= oshape[d];
  for (int64_t d = axis + 1; d < rank; ++d) inner *= oshape[d];

  Tensor<S> y = Tensor<S>::zeros(oshape);
  int64_t offset = 0;
  for (const Tensor<S>& t : ts) {
    const int64_t block = t.extent(axis) * inner;
    for (int64_t o = 0; o < outer; ++o) {
      std::memcpy(y.data() + o * axis_total * inner + offset, t.data() + o * block,
                  sizeof(S) * static_cast<size_t>(block));
    }
    offset += block;
  }

  bool any = false;
  for (const Tensor<S>& t : ts) any = any || t.tracks_grad();
  if (Tape<S>::current() && any) {
    std::vector<std::shared_ptr<TensorData<S>>> impls;
    std::vector<int64_t> blocks;
    std::vector<bool> needs;
    for (const Tensor<S>& t : ts) {
      impls.push_back(t.impl());
      blocks.push_back(t.extent(axis) * inner);
      needs.push_back(t.tracks_grad());
    }
    auto yi = y.impl();
    record(y, [=]() {
      int64_t off = 0;
      for (size_t i = 0; i < impls.size(); ++i) {
        if (needs[i]) {
          for (int64_t o = 0; o < outer; ++o) {
            const S* dy = yi->grad.data() + o * axis_total * inner + off;
            S* dx = impls[i]->grad.data() + o * blocks[i];
            for (int64_t j = 0; j < blocks[i]; ++j) dx[j] += dy[j];
          }
        }
        off += blocks[i];
      }
    });
  }
  return y;
}

template <typename S>
Tensor<S> concat(std::initializer_list<Tensor<S>> ts, int64_t axis) {
  std::vector<Tensor<S>> v(ts);
  return concat(std::span<const Tensor<S>>(v.data(), v.size()), axis);
}

template <typename S>
Tensor<S> slice(const Tensor<S>& t, int64_t axis, int64_t start, int64_t len) {
  const int64_t rank = t.rank();
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw ShapeError("slice axis out of range");
  if (len < 1 || start < 0 || start + len > t.extent(axis)) {
    throw ShapeError("slice range [" + std::to_string(start) + "," + std::to_string(start + len) +
                     ") out of bounds for extent " + std::to_string(t.extent(axis)));
  }
  Shape oshape = t.shape();
  oshape[axis] = len;
  int64_t outer = 1, inner = 1;
  for (int64_t d = 0; d < axis; ++d) outer *= t.extent(d);
  for (int64_t d = axis + 1; d < rank; ++d) inner *= t.extent(d);
  const int64_t in_axis = t.extent(axis);

  Tensor<S> y = Tensor<S>::zeros(oshape);
  for (int64_t o = 0; o < outer; ++o) {
    std::memcpy(y.data() + o * len * inner, t.data() + (o * in_axis + start) * inner,
                sizeof(S) * static_cast<size_t>(len * inner));
  }

  if (recording<S>({&t})) {
    auto xi = t.impl();
    auto yi = y.impl();
    record(y, [=]() {
      for (int64_t o = 0; o < outer; ++o) {
        const S* dy = yi->grad.data() + o * len * inner;
        S* dx = xi->grad.data() + (o * in_axis + start) * inner;
        for (int64_t j = 0; j < len * inner; ++j) dx[j] += dy[j];
      }
    });
  }
  return y;
}

template <typename S>
Tensor<S> gather_rows(const Tensor<S>& t, const std::vector<int64_t>& rows) {
  if (t.rank() != 2) throw ShapeError("gather_rows requires a rank-2 tensor");
  if (rows.empty()) throw ShapeError("gather_rows requires a nonempty selection");
  const int64_t r = t.extent(0), c = t.extent(1);
  for (int64_t idx : rows) {
    if (idx < 0 || idx >= r) throw ShapeError("gather_rows index out of range");
  }

  Tensor<S> y = Tensor<S>::zeros({static_cast<int64_t>(rows.size()), c});
  for (size_t i = 0; i < rows.size(); ++i) {
    std::memcpy(y.data() + i * c, t.data() + rows[i] * c, sizeof(S) * static_cast<size_t>(c));
  }

  if (recording<S>({&t})) {
    auto xi = t.impl();
    auto yi = y.impl();
    record(y, [=]() {
      for (size_t i = 0; i < rows.size(); ++i) {
        const S* dy = yi->grad.data() + i * c;
        S* dx = xi->grad.data() + rows[i] * c;
        for (int64_t j = 0; j < c; ++j) dx[j] += dy[j];
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// pointwise
// ---------------------------------------------------------------------------

namespace {

template <typename S, typename Fwd, typename Bwd>
Tensor<S> unary_op(const Tensor<S>& t, Fwd fwd, Bwd bwd) {
  Tensor<S> y = Tensor<S>::zeros_like(t);
  const S* x = t.data();
  S* out = y.data();
  const int64_t n = t.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = fwd(x[i]);
  if (recording<S>({&t})) {
    auto xi = t.impl();
    auto yi = y.impl();
    record(y, [=]() {
      for (int64_t i = 0; i < n; ++i) {
        xi->grad[i] += bwd(xi->value[i], yi->value[i]) * yi->grad[i];
      }
    });
  }
  return y;
}

template <typename S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (!same_shape(a.shape(), b.shape())) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// dfa(a, b, y_grad) accumulated into a's grad, dfb likewise for b.
template <typename S, typename Fwd, typename Da, typename Db>
Tensor<S> binary_op(const Tensor<S>& a, const Tensor<S>& b, const char* name, Fwd fwd, Da dfa, Db dfb) {
  check_same_shape(a, b, name);
  Tensor<S> y = Tensor<S>::zeros_like(a);
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) y.data()[i] = fwd(a.data()[i], b.data()[i]);
  if (recording<S>({&a, &b})) {
    auto ai = a.impl();
    auto bi = b.impl();
    auto yi = y.impl();
    const bool need_a = a.tracks_grad();
    const bool need_b = b.tracks_grad();
    record(y, [=]() {
      for (int64_t i = 0; i < n; ++i) {
        const S g = yi->grad[i];
        if (need_a) ai->grad[i] += dfa(ai->value[i], bi->value[i]) * g;
        if (need_b) bi->grad[i] += dfb(ai->value[i], bi->value[i]) * g;
      }
    });
  }
  return y;
}

}  // namespace

template <typename S>
Tensor<S> relu(const Tensor<S>& t) {
  return unary_op(
      t, [](S x) { return x > S(0) ? x : S(0); }, [](S x, S) { return x > S(0) ? S(1) : S(0); });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& t) {
  return unary_op(
      t,
      [](S x) {
        if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
        const S e = std::exp(x);
        return e / (S(1) + e);
      },
      [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
Tensor<S> log(const Tensor<S>& t) {
  for (int64_t i = 0; i < t.numel(); ++i) {
    if (!(t.data()[i] > S(0))) throw ContractError("log requires strictly positive inputs");
  }
  return unary_op(
      t, [](S x) { return std::log(x); }, [](S x, S) { return S(1) / x; });
}

template <typename S>
Tensor<S> clamp(const Tensor<S>& t, S lo, S hi) {
  if (!(lo <= hi)) throw ContractError("clamp requires lo <= hi");
  return unary_op(
      t, [lo, hi](S x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](S x, S) { return (x >= lo && x <= hi) ? S(1) : S(0); });
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(
      a, b, "add", [](S x, S y) { return x + y; }, [](S, S) { return S(1); }, [](S, S) { return S(1); });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(
      a, b, "sub", [](S x, S y) { return x - y; }, [](S, S) { return S(1); }, [](S, S) { return S(-1); });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(
      a, b, "mul", [](S x, S y) { return x * y; }, [](S, S y) { return y; }, [](S x, S) { return x; });
}

template <typename S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(
      a, b, "div", [](S x, S y) { return x / y; }, [](S, S y) { return S(1) / y; },
      [](S x, S y) { return -x / (y * y); });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& t, S s) {
  return unary_op(
      t, [s](S x) { return s * x; }, [s](S, S) { return s; });
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& t, S s) {
  return unary_op(
      t, [s](S x) { return x + s; }, [](S, S) { return S(1); });
}

template <typename S>
Tensor<S> scale_map(const Tensor<S>& x, const Tensor<S>& gate) {
  if (x.rank() != 4 || gate.rank() != 4) throw ShapeError("scale_map operands must be NCHW");
  const int64_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  if (gate.extent(0) != n || gate.extent(1) != 1 || gate.extent(2) != h || gate.extent(3) != w) {
    throw ShapeError("scale_map gate must have shape (" + std::to_string(n) + ",1," + std::to_string(h) + "," +
                     std::to_string(w) + "), got " + shape_str(gate.shape()));
  }
  const int64_t hw = h * w;

  Tensor<S> y = Tensor<S>::zeros_like(x);
  for (int64_t b = 0; b < n; ++b) {
    const S* g = gate.data() + b * hw;
    for (int64_t ch = 0; ch < c; ++ch) {
      const S* xp = x.data() + (b * c + ch) * hw;
      S* yp = y.data() + (b * c + ch) * hw;
      for (int64_t i = 0; i < hw; ++i) yp[i] = xp[i] * g[i];
    }
  }

  if (recording<S>({&x, &gate})) {
    auto xi = x.impl();
    auto gi = gate.impl();
    auto yi = y.impl();
    const bool need_x = x.tracks_grad();
    const bool need_g = gate.tracks_grad();
    record(y, [=]() {
      for (int64_t b = 0; b < n; ++b) {
        const S* g = gi->value.data() + b * hw;
        S* dg = need_g ? gi->grad.data() + b * hw : nullptr;
        for (int64_t ch = 0; ch < c; ++ch) {
          const int64_t base = (b * c + ch) * hw;
          const S* dy = yi->grad.data() + base;
          if (need_x) {
            S* dx = xi->grad.data() + base;
            for (int64_t i = 0; i < hw; ++i) dx[i] += dy[i] * g[i];
          }
          if (need_g) {
            const S* xp = xi->value.data() + base;
            for (int64_t i = 0; i < hw; ++i) dg[i] += dy[i] * xp[i];
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// softmax
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> softmax(const Tensor<S>& t, int64_t axis) {
  const int64_t rank = t.rank();
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw ShapeError("softmax axis out of range for " + shape_str(t.shape()));
  int64_t outer = 1, inner = 1;
  const int64_t n = t.extent(axis);
  for (int64_t d = 0; d < axis; ++d) outer *= t.extent(d);
  for (int64_t d = axis + 1; d < rank; ++d) inner *= t.extent(d);

  Tensor<S> y = Tensor<S>::zeros_like(t);
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t i = 0; i < inner; ++i) {
      const S* x = t.data() + o * n * inner + i;
      S* out = y.data() + o * n * inner + i;
      S mx = x[0];
      for (int64_t j = 1; j < n; ++j) mx = std::max(mx, x[j * inner]);
      S denom = 0;
      for (int64_t j = 0; j < n; ++j) {
        const S e = std::exp(x[j * inner] - mx);
        out[j * inner] = e;
        denom += e;
      }
      const S inv = S(1) / denom;
      for (int64_t j = 0; j < n; ++j) out[j * inner] *= inv;
    }
  }

  if (recording<S>({&t})) {
    auto xi = t.impl();
    auto yi = y.impl();
    record(y, [=]() {
      for (int64_t o = 0; o < outer; ++o) {
        for (int64_t i = 0; i < inner; ++i) {
          const int64_t base = o * n * inner + i;
          const S* yv = yi->value.data() + base;
          const S* dy = yi->grad.data() + base;
          S dot = 0;
          for (int64_t j = 0; j < n; ++j) dot += dy[j * inner] * yv[j * inner];
          S* dx = xi->grad.data() + base;
          for (int64_t j = 0; j < n; ++j) {
            dx[j * inner] += yv[j * inner] * (dy[j * inner] - dot);
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// channel pooling
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> channel_max(const Tensor<S>& x) {
  if (x.rank() != 4) throw ShapeError("channel_max input must be NCHW");
  const int64_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  const int64_t hw = h * w;

  Tensor<S> y = Tensor<S>::zeros({n, 1, h, w});
  auto argmax = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(n * hw));
  for (int64_t b = 0; b < n; ++b) {
    const S* base = x.data() + b * c * hw;
    S* out = y.data() + b * hw;
    for (int64_t i = 0; i < hw; ++i) {
      S best = base[i];
      int32_t bc = 0;
      for (int64_t ch = 1; ch < c; ++ch) {
        const S v = base[ch * hw + i];
        if (v > best) {
          best = v;
          bc = static_cast<int32_t>(ch);
        }
      }
      out[i] = best;
      (*argmax)[b * hw + i] = bc;
    }
  }

  if (recording<S>({&x})) {
    auto xi = x.impl();
    auto yi = y.impl();
    record(y, [=]() {
      for (int64_t b = 0; b < n; ++b) {
        const S* dy = yi->grad.data() + b * hw;
        S* dx = xi->grad.data() + b * c * hw;
        for (int64_t i = 0; i < hw; ++i) {
          dx[(*argmax)[b * hw + i] * hw + i] += dy[i];
        }
      }
    });
  }
  return y;
}

template <typename S>
Tensor<S> channel_mean(const Tensor<S>& x) {
  if (x.rank() != 4) throw ShapeError("channel_mean input must be NCHW");
  const int64_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  const int64_t hw = h * w;
  const S inv = S(1) / static_cast<S>(c);

  Tensor<S> y = Tensor<S>::zeros({n, 1, h, w});
  for (int64_t b = 0; b < n; ++b) {
    const S* base = x.data() + b * c * hw;
    S* out = y.data() + b * hw;
    for (int64_t ch = 0; ch < c; ++ch) {
      for (int64_t i = 0; i < hw; ++i) out[i] += base[ch * hw + i];
    }
    for (int64_t i = 0; i < hw; ++i) out[i] *= inv;
  }

  if (recording<S>({&x})) {
    auto xi = x.impl();
    auto yi = y.impl();
    record(y, [=]() {
      for (int64_t b = 0; b < n; ++b) {
        const S* dy = yi->grad.data() + b * hw;
        S* dx = xi->grad.data() + b * c * hw;
        for (int64_t ch = 0; ch < c; ++ch) {
          for (int64_t i = 0; i < hw; ++i) dx[ch * hw + i] += dy[i] * inv;
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> sum(const Tensor<S>& t) {
  S acc = 0;
  for (int64_t i = 0; i < t.numel(); ++i) acc += t.data()[i];
  Tensor<S> y = Tensor<S>::scalar(acc);
  if (recording<S>({&t})) {
    auto xi = t.impl();
    auto yi = y.impl();
    record(y, [=]() {
      const S g = yi->grad[0];
      for (size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += g;
    });
  }
  return y;
}

template <typename S>
Tensor<S> mean(const Tensor<S>& t) {
  const S inv = S(1) / static_cast<S>(t.numel());
  S acc = 0;
  for (int64_t i = 0; i < t.numel(); ++i) acc += t.data()[i];
  Tensor<S> y = Tensor<S>::scalar(acc * inv);
  if (recording<S>({&t})) {
    auto xi = t.impl();
    auto yi = y.impl();
    record(y, [=]() {
      const S g = yi->grad[0] * inv;
      for (size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += g;
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// instantiation
// ---------------------------------------------------------------------------

#define PSES_INSTANTIATE_OPS(S)                                                                              \
  template Tensor<S> conv2d<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, int64_t, int64_t,      \
                               int64_t);                                                                     \
  template Tensor<S> depthwise_conv2d<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, int64_t,     \
                                         int64_t);                                                           \
  template Tensor<S> avg_pool2d<S>(const Tensor<S>&, int64_t, int64_t, int64_t);                            \
  template Tensor<S> bilinear_resize<S>(const Tensor<S>&, int64_t, int64_t);                                \
  template Tensor<S> batch_norm<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, Tensor<S>&,        \
                                   Tensor<S>&, bool, double, double);                                       \
  template Tensor<S> layer_norm_chw<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, double);       \
  template Tensor<S> matmul<S>(const Tensor<S>&, const Tensor<S>&);                                         \
  template Tensor<S> linear<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);                       \
  template Tensor<S> transpose_last2<S>(const Tensor<S>&);                                                  \
  template Tensor<S> reshape<S>(const Tensor<S>&, Shape);                                                   \
  template Tensor<S> concat<S>(std::span<const Tensor<S>>, int64_t);                                        \
  template Tensor<S> concat<S>(std::initializer_list<Tensor<S>>, int64_t);                                  \
  template Tensor<S> slice<S>(const Tensor<S>&, int64_t, int64_t, int64_t);                                 \
  template Tensor<S> gather_rows<S>(const Tensor<S>&, const std::vector<int64_t>&);                         \
  template Tensor<S> relu<S>(const Tensor<S>&);                                                             \
  template Tensor<S> sigmoid<S>(const Tensor<S>&);                                                          \
  template Tensor<S> log<S>(const Tensor<S>&);                                                              \
  template Tensor<S> clamp<S>(const Tensor<S>&, S, S);                                                      \
  template Tensor<S> add<S>(const Tensor<S>&, const Tensor<S>&);                                            \
  template Tensor<S> sub<S>(const Tensor<S>&, const Tensor<S>&);                                            \
  template Tensor<S> mul<S>(const Tensor<S>&, const Tensor<S>&);                                            \
  template Tensor<S> div<S>(const Tensor<S>&, const Tensor<S>&);                                            \
  template Tensor<S> scale<S>(const Tensor<S>&, S);                                                         \
  template Tensor<S> add_scalar<S>(const Tensor<S>&, S);                                                    \
  template Tensor<S> scale_map<S>(const Tensor<S>&, const Tensor<S>&);                                      \
  template Tensor<S> softmax<S>(const Tensor<S>&, int64_t);                                                 \
  template Tensor<S> channel_max<S>(const Tensor<S>&);                                                      \
  template Tensor<S> channel_mean<S>(const Tensor<S>&);                                                     \
  template Tensor<S> sum<S>(const Tensor<S>&);                                                              \
  template Tensor<S> mean<S>(const Tensor<S>&);

PSES_INSTANTIATE_OPS(float)
PSES_INSTANTIATE_OPS(double)

}  // namespace pses
