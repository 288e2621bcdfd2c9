#pragma once

#include <utility>

#include "gmcnn/tensor.hpp"

namespace gmcnn {

enum class Padding {
    same,   // zero padding, output = ceil(input / stride)
    valid,  // no padding
};

// Kernel geometry. Weights are stored as a Tensor4 with dims
// (kh, kw, c_in, c_out); bias as (1, 1, 1, c_out).
struct ConvSpec {
    int kh = 1;
    int kw = 1;
    int c_in = 1;
    int c_out = 1;
    int stride_h = 1;
    int stride_w = 1;
    int dilation_h = 1;
    int dilation_w = 1;
    Padding padding = Padding::same;

    Shape weight_shape() const { return {kh, kw, c_in, c_out}; }
    Shape bias_shape() const { return {1, 1, 1, c_out}; }
    // Input extent covered by one kernel application along each axis.
    int extent_h() const { return (kh - 1) * dilation_h + 1; }
    int extent_w() const { return (kw - 1) * dilation_w + 1; }
    std::pair<int, int> output_dims(int in_h, int in_w) const;
    void validate() const;
};

// Resolved geometry for one input size.
struct ConvGeometry {
    ConvSpec spec;
    int in_h = 0, in_w = 0;
    int out_h = 0, out_w = 0;
    int pad_top = 0, pad_left = 0;

    static ConvGeometry make(const ConvSpec& spec, int in_h, int in_w);
};

// 2-D cross-correlation over NHWC input. `bias` may be undefined.
Tensor conv2d(const Tensor& input, const ConvSpec& spec, const Tensor& weights,
              const Tensor& bias = {});

// Adjoints of conv2d, exposed for testing; both are differentiable.
Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& weights, const ConvGeometry& geo,
                         int batch);
Tensor conv2d_weight_grad(const Tensor& input, const Tensor& grad_out, const ConvGeometry& geo);

}  // namespace gmcnn
