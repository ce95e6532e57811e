#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dnet {

// Extents of a 4-D tensor in (batch, height, width, channels) order.
// Convolution kernels reuse the same struct as (ky, kx, c_in, c_out).
struct Shape {
  std::size_t n = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t c = 0;

  std::size_t size() const noexcept { return n * h * w * c; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Dense row-major NHWC tensor of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  std::size_t index(std::size_t b, std::size_t y, std::size_t x, std::size_t ch) const noexcept {
    return ((b * shape_.h + y) * shape_.w + x) * shape_.c + ch;
  }
  double& at(std::size_t b, std::size_t y, std::size_t x, std::size_t ch) noexcept {
    return data_[index(b, y, x, ch)];
  }
  double at(std::size_t b, std::size_t y, std::size_t x, std::size_t ch) const noexcept {
    return data_[index(b, y, x, ch)];
  }
  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  void fill(double v);
  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// 3x3 stride-1 convolution parameters. weights has shape (3, 3, c_in, c_out).
struct ConvParams {
  Tensor weights;
  std::vector<double> bias;

  ConvParams() = default;
  ConvParams(std::size_t c_in, std::size_t c_out);

  std::size_t c_in() const noexcept { return weights.shape().w; }
  std::size_t c_out() const noexcept { return weights.shape().c; }
  std::size_t parameter_count() const noexcept { return weights.size() + bias.size(); }
  bool operator==(const ConvParams&) const = default;
};

// Named view of one parameter array (weights or bias) of a model.
struct ParamView {
  std::string name;
  std::span<double> values;
};
struct ConstParamView {
  std::string name;
  std::span<const double> values;
};

enum class Padding { Same, Valid };

// Direct is the loop reference; Gemm is im2col + matrix product and must
// agree with Direct to within 1e-12 relative.
enum class ConvAlgorithm { Direct, Gemm };

Tensor conv2d_forward(const Tensor& input, const ConvParams& params, Padding padding,
                      ConvAlgorithm algo = ConvAlgorithm::Gemm);

struct ConvGradients {
  Tensor input;  // empty when the input gradient was not requested
  ConvParams params;
};

// Gradients of sum(grad_out * conv2d_forward(input, params)).
ConvGradients conv2d_backward(const Tensor& input, const ConvParams& params, const Tensor& grad_out,
                              Padding padding, bool need_input_grad = true,
                              ConvAlgorithm algo = ConvAlgorithm::Gemm);

Tensor relu_forward(const Tensor& input);
// Subgradient at exactly zero is zero.
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

// Reflection about the edge sample: row [a b c] with margin 1 -> [b a b c b].
Tensor pad_symmetric(const Tensor& image, std::size_t margin);
Tensor crop_center(const Tensor& t, std::size_t margin);

// Mirror about the vertical axis (x -> w-1-x).
Tensor flip_horizontal(const Tensor& t);

Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);
void add_inplace(Tensor& acc, const Tensor& b);

// Copies channels [first, first+count) into a new tensor.
Tensor slice_channels(const Tensor& t, std::size_t first, std::size_t count);
// Stacks batch items [first, first+count).
Tensor slice_batch(const Tensor& t, std::size_t first, std::size_t count);

}  // namespace dnet
