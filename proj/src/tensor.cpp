#include "dnet/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cstring>

#include "dnet/error.hpp"
#include "dnet/parallel.hpp"

namespace dnet {

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(h) + "," + std::to_string(w) + "," +
         std::to_string(c) + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.size(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape_.size()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_.str());
  }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

ConvParams::ConvParams(std::size_t c_in, std::size_t c_out)
    : weights(Shape{3, 3, c_in, c_out}), bias(c_out, 0.0) {}

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

struct ConvGeometry {
  std::size_t n, h, w, ci, co;
  std::size_t oh, ow;
  std::ptrdiff_t off;  // 1 for Same, 0 for Valid

  std::size_t out_rows() const { return n * oh * ow; }
  std::size_t in_rows() const { return n * h * w; }
};

ConvGeometry conv_geometry(const Shape& in, const ConvParams& params, Padding padding) {
  const Shape& ws = params.weights.shape();
  if (ws.n != 3 || ws.h != 3) throw ShapeError("conv kernel must be 3x3, got " + ws.str());
  if (params.bias.size() != ws.c) throw ShapeError("conv bias length does not match c_out");
  if (in.c != ws.w) {
    throw ShapeError("conv input has " + std::to_string(in.c) + " channels, kernel expects " +
                     std::to_string(ws.w));
  }
  if (in.n == 0 || in.h == 0 || in.w == 0 || in.c == 0) throw ShapeError("empty conv input " + in.str());
  ConvGeometry g{in.n, in.h, in.w, in.c, ws.c, in.h, in.w, 1};
  if (padding == Padding::Valid) {
    if (in.h < 3 || in.w < 3) throw ShapeError("valid conv needs at least 3x3 input, got " + in.str());
    g.oh = in.h - 2;
    g.ow = in.w - 2;
    g.off = 0;
  }
  return g;
}

// Patch matrix for rows [row0, row0+rows) of a target grid (tn, th, tw).
// Column (ky*3+kx)*sc + ch of a row at target (b,y,x) holds
// src[b, y + sign*ky + shift, x + sign*kx + shift, ch], or zero outside src.
struct PatchSpec {
  const double* src;
  std::size_t sh, sw, sc;
  std::size_t th, tw;
  int sign;
  std::ptrdiff_t shift;
};

void im2col(const PatchSpec& p, std::size_t row0, std::size_t rows, double* cols) {
  const std::size_t k = 9 * p.sc;
  const std::size_t plane = p.th * p.tw;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t t = row0 + r;
    const std::size_t b = t / plane;
    const std::size_t rem = t % plane;
    const auto y = static_cast<std::ptrdiff_t>(rem / p.tw);
    const auto x = static_cast<std::ptrdiff_t>(rem % p.tw);
    double* dst = cols + r * k;
    for (int ky = 0; ky < 3; ++ky) {
      const std::ptrdiff_t sy = y + p.sign * ky + p.shift;
      for (int kx = 0; kx < 3; ++kx) {
        const std::ptrdiff_t sx = x + p.sign * kx + p.shift;
        double* block = dst + static_cast<std::size_t>(ky * 3 + kx) * p.sc;
        if (sy < 0 || sx < 0 || sy >= static_cast<std::ptrdiff_t>(p.sh) ||
            sx >= static_cast<std::ptrdiff_t>(p.sw)) {
          std::memset(block, 0, p.sc * sizeof(double));
        } else {
          const double* s = p.src + ((b * p.sh + static_cast<std::size_t>(sy)) * p.sw +
                                     static_cast<std::size_t>(sx)) *
                                        p.sc;
          std::memcpy(block, s, p.sc * sizeof(double));
        }
      }
    }
  }
}

// Rows per GEMM chunk; depends only on the patch width so that the
// reduction order of weight gradients is independent of thread count.
std::size_t chunk_rows(std::size_t k) {
  constexpr std::size_t kBudgetBytes = std::size_t{8} << 20;
  return std::max<std::size_t>(64, kBudgetBytes / (k * sizeof(double)));
}

std::size_t chunk_count(std::size_t rows, std::size_t per_chunk) {
  return (rows + per_chunk - 1) / per_chunk;
}

Tensor conv_forward_direct(const Tensor& input, const ConvParams& params, const ConvGeometry& g) {
  Tensor out(Shape{g.n, g.oh, g.ow, g.co});
  const Tensor& wt = params.weights;
  for (std::size_t b = 0; b < g.n; ++b) {
    for (std::size_t y = 0; y < g.oh; ++y) {
      for (std::size_t x = 0; x < g.ow; ++x) {
        for (std::size_t o = 0; o < g.co; ++o) {
          double acc = params.bias[o];
          for (std::size_t ky = 0; ky < 3; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - g.off;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kx) - g.off;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
              for (std::size_t i = 0; i < g.ci; ++i) {
                acc += input.at(b, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), i) *
                       wt.at(ky, kx, i, o);
              }
            }
          }
          out.at(b, y, x, o) = acc;
        }
      }
    }
  }
  return out;
}

ConvGradients conv_backward_direct(const Tensor& input, const ConvParams& params,
                                   const Tensor& grad_out, const ConvGeometry& g,
                                   bool need_input_grad) {
  ConvGradients grads;
  grads.params = ConvParams(g.ci, g.co);
  if (need_input_grad) grads.input = Tensor(input.shape());
  for (std::size_t b = 0; b < g.n; ++b) {
    for (std::size_t y = 0; y < g.oh; ++y) {
      for (std::size_t x = 0; x < g.ow; ++x) {
        for (std::size_t o = 0; o < g.co; ++o) {
          const double go = grad_out.at(b, y, x, o);
          grads.params.bias[o] += go;
          for (std::size_t ky = 0; ky < 3; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - g.off;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kx) - g.off;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
              const auto uy = static_cast<std::size_t>(iy);
              const auto ux = static_cast<std::size_t>(ix);
              for (std::size_t i = 0; i < g.ci; ++i) {
                grads.params.weights.at(ky, kx, i, o) += input.at(b, uy, ux, i) * go;
                if (need_input_grad) grads.input.at(b, uy, ux, i) += params.weights.at(ky, kx, i, o) * go;
              }
            }
          }
        }
      }
    }
  }
  return grads;
}

Tensor conv_forward_gemm(const Tensor& input, const ConvParams& params, const ConvGeometry& g) {
  Tensor out(Shape{g.n, g.oh, g.ow, g.co});
  const std::size_t k = 9 * g.ci;
  const std::size_t rows = g.out_rows();
  const std::size_t per_chunk = chunk_rows(k);
  const PatchSpec spec{input.data(), g.h, g.w, g.ci, g.oh, g.ow, +1, -g.off};
  const ConstMap weights(params.weights.data(), static_cast<Eigen::Index>(k),
                         static_cast<Eigen::Index>(g.co));
  const Eigen::Map<const Eigen::RowVectorXd> bias(params.bias.data(), static_cast<Eigen::Index>(g.co));

  parallel_for(chunk_count(rows, per_chunk), [&](std::size_t chunk) {
    const std::size_t row0 = chunk * per_chunk;
    const std::size_t n_rows = std::min(per_chunk, rows - row0);
    std::vector<double> cols(n_rows * k);
    im2col(spec, row0, n_rows, cols.data());
    const ConstMap patches(cols.data(), static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(k));
    MutMap result(out.data() + row0 * g.co, static_cast<Eigen::Index>(n_rows),
                  static_cast<Eigen::Index>(g.co));
    result.noalias() = patches * weights;
    result.rowwise() += bias;
  });
  return out;
}

ConvGradients conv_backward_gemm(const Tensor& input, const ConvParams& params,
                                 const Tensor& grad_out, const ConvGeometry& g,
                                 bool need_input_grad) {
  ConvGradients grads;
  grads.params = ConvParams(g.ci, g.co);
  const std::size_t k = 9 * g.ci;
  const std::size_t rows = g.out_rows();

  // Weight gradient: sum over chunks, in chunk order.
  {
    const std::size_t per_chunk = chunk_rows(k);
    const std::size_t chunks = chunk_count(rows, per_chunk);
    const PatchSpec spec{input.data(), g.h, g.w, g.ci, g.oh, g.ow, +1, -g.off};
    std::vector<RowMat> partial(chunks);
    parallel_for(chunks, [&](std::size_t chunk) {
      const std::size_t row0 = chunk * per_chunk;
      const std::size_t n_rows = std::min(per_chunk, rows - row0);
      std::vector<double> cols(n_rows * k);
      im2col(spec, row0, n_rows, cols.data());
      const ConstMap patches(cols.data(), static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(k));
      const ConstMap go(grad_out.data() + row0 * g.co, static_cast<Eigen::Index>(n_rows),
                        static_cast<Eigen::Index>(g.co));
      partial[chunk].noalias() = patches.transpose() * go;
    });
    MutMap gw(grads.params.weights.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(g.co));
    for (const auto& p : partial) gw += p;

    const double* go = grad_out.data();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t o = 0; o < g.co; ++o) grads.params.bias[o] += go[r * g.co + o];
    }
  }

  if (!need_input_grad) return grads;

  // Input gradient as a gather: grad_in[y,x,i] = sum grad_out[y-ky+off, x-kx+off, o] * w[ky,kx,i,o].
  grads.input = Tensor(input.shape());
  const std::size_t k2 = 9 * g.co;
  RowMat rotated(static_cast<Eigen::Index>(k2), static_cast<Eigen::Index>(g.ci));
  for (std::size_t tap = 0; tap < 9; ++tap) {
    for (std::size_t o = 0; o < g.co; ++o) {
      for (std::size_t i = 0; i < g.ci; ++i) {
        rotated(static_cast<Eigen::Index>(tap * g.co + o), static_cast<Eigen::Index>(i)) =
            params.weights.data()[(tap * g.ci + i) * g.co + o];
      }
    }
  }
  const std::size_t in_rows = g.in_rows();
  const std::size_t per_chunk = chunk_rows(k2);
  const PatchSpec spec{grad_out.data(), g.oh, g.ow, g.co, g.h, g.w, -1, g.off};
  parallel_for(chunk_count(in_rows, per_chunk), [&](std::size_t chunk) {
    const std::size_t row0 = chunk * per_chunk;
    const std::size_t n_rows = std::min(per_chunk, in_rows - row0);
    std::vector<double> cols(n_rows * k2);
    im2col(spec, row0, n_rows, cols.data());
    const ConstMap patches(cols.data(), static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(k2));
    MutMap result(grads.input.data() + row0 * g.ci, static_cast<Eigen::Index>(n_rows),
                  static_cast<Eigen::Index>(g.ci));
    result.noalias() = patches * rotated;
  });
  return grads;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape " + a.shape().str() + " vs " + b.shape().str());
  }
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const ConvParams& params, Padding padding, ConvAlgorithm algo) {
  const ConvGeometry g = conv_geometry(input.shape(), params, padding);
  return algo == ConvAlgorithm::Direct ? conv_forward_direct(input, params, g)
                                       : conv_forward_gemm(input, params, g);
}

ConvGradients conv2d_backward(const Tensor& input, const ConvParams& params, const Tensor& grad_out,
                              Padding padding, bool need_input_grad, ConvAlgorithm algo) {
  const ConvGeometry g = conv_geometry(input.shape(), params, padding);
  const Shape expected{g.n, g.oh, g.ow, g.co};
  if (grad_out.shape() != expected) {
    throw ShapeError("conv grad_out shape " + grad_out.shape().str() + ", expected " + expected.str());
  }
  return algo == ConvAlgorithm::Direct ? conv_backward_direct(input, params, grad_out, g, need_input_grad)
                                       : conv_backward_gemm(input, params, grad_out, g, need_input_grad);
}

Tensor relu_forward(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? input[i] : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
  require_same_shape(input, grad_out, "relu_backward");
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? grad_out[i] : 0.0;
  return out;
}

Tensor pad_symmetric(const Tensor& image, std::size_t margin) {
  const Shape& s = image.shape();
  if (margin >= std::min(s.h, s.w)) {
    throw ShapeError("pad margin " + std::to_string(margin) + " must be smaller than " + s.str());
  }
  if (margin == 0) return image;
  const Shape out_shape{s.n, s.h + 2 * margin, s.w + 2 * margin, s.c};
  Tensor out(out_shape);
  auto reflect = [](std::ptrdiff_t i, std::size_t n) {
    const auto last = static_cast<std::ptrdiff_t>(n) - 1;
    if (i < 0) return static_cast<std::size_t>(-i);
    if (i > last) return static_cast<std::size_t>(2 * last - i);
    return static_cast<std::size_t>(i);
  };
  const auto m = static_cast<std::ptrdiff_t>(margin);
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t y = 0; y < out_shape.h; ++y) {
      const std::size_t sy = reflect(static_cast<std::ptrdiff_t>(y) - m, s.h);
      for (std::size_t x = 0; x < out_shape.w; ++x) {
        const std::size_t sx = reflect(static_cast<std::ptrdiff_t>(x) - m, s.w);
        std::memcpy(&out.at(b, y, x, 0), image.data() + image.index(b, sy, sx, 0), s.c * sizeof(double));
      }
    }
  }
  return out;
}

Tensor crop_center(const Tensor& t, std::size_t margin) {
  const Shape& s = t.shape();
  if (2 * margin >= std::min(s.h, s.w)) {
    throw ShapeError("crop margin " + std::to_string(margin) + " too large for " + s.str());
  }
  if (margin == 0) return t;
  const Shape out_shape{s.n, s.h - 2 * margin, s.w - 2 * margin, s.c};
  Tensor out(out_shape);
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t y = 0; y < out_shape.h; ++y) {
      std::memcpy(&out.at(b, y, 0, 0), t.data() + t.index(b, y + margin, margin, 0),
                  out_shape.w * s.c * sizeof(double));
    }
  }
  return out;
}

Tensor flip_horizontal(const Tensor& t) {
  const Shape& s = t.shape();
  Tensor out(s);
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t y = 0; y < s.h; ++y) {
      for (std::size_t x = 0; x < s.w; ++x) {
        std::memcpy(&out.at(b, y, x, 0), t.data() + t.index(b, y, s.w - 1 - x, 0), s.c * sizeof(double));
      }
    }
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Tensor subtract(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "subtract");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

void add_inplace(Tensor& acc, const Tensor& b) {
  require_same_shape(acc, b, "add_inplace");
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += b[i];
}

Tensor slice_channels(const Tensor& t, std::size_t first, std::size_t count) {
  const Shape& s = t.shape();
  if (first + count > s.c) throw ShapeError("channel slice out of range for " + s.str());
  Tensor out(Shape{s.n, s.h, s.w, count});
  const std::size_t pixels = s.n * s.h * s.w;
  for (std::size_t p = 0; p < pixels; ++p) {
    std::memcpy(out.data() + p * count, t.data() + p * s.c + first, count * sizeof(double));
  }
  return out;
}

Tensor slice_batch(const Tensor& t, std::size_t first, std::size_t count) {
  const Shape& s = t.shape();
  if (first + count > s.n) throw ShapeError("batch slice out of range for " + s.str());
  const std::size_t item = s.h * s.w * s.c;
  std::vector<double> values(t.data() + first * item, t.data() + (first + count) * item);
  return Tensor(Shape{count, s.h, s.w, s.c}, std::move(values));
}

}  // namespace dnet
