#pragma once

#include <memory>
#include <vector>

#include "gmcnn/tensor.hpp"

namespace gmcnn {

// Elementwise binary ops. Operands must have equal shapes, or broadcast
// along dimensions of extent 1 (a 1x1x1x1 tensor acts as a scalar).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);

// abs uses subgradient 0 at 0.
Tensor abs(const Tensor& x);
Tensor square(const Tensor& x);
// sqrt with gradient 0 where the result is 0.
Tensor sqrt(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
// 1/x with value and gradient 0 where x == 0.
Tensor reciprocal_or_zero(const Tensor& x);
Tensor clamp_min(const Tensor& x, double lo);

enum class Activation { identity, leaky_relu, elu, tanh, sigmoid, softplus };

Tensor leaky_relu(const Tensor& x, double slope = 0.2);
Tensor elu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor activate(const Tensor& x, Activation act);
double activate(double x, Activation act);

// Broadcasting helpers; mutual adjoints.
Tensor broadcast_to(const Tensor& x, const Shape& target);
Tensor sum_to(const Tensor& x, const Shape& target);

Tensor reshape(const Tensor& x, const Shape& target);

enum class ReduceKind { sum, mean, l1_norm, l2_norm };

// Full reductions to a 1x1x1x1 tensor. Summation is sequential over the
// row-major index, so results are bit-stable.
Tensor reduce(const Tensor& x, ReduceKind kind);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor l1_norm(const Tensor& x);
Tensor l2_norm(const Tensor& x);

Tensor concat_channels(const std::vector<Tensor>& parts);
Tensor slice_channels(const Tensor& x, int begin, int count);
Tensor slice_batch(const Tensor& x, int begin, int count);

// Matrices are stored as (1, rows, cols, 1) tensors.
Shape matrix_shape(int rows, int cols);
int rows(const Tensor& m);
int cols(const Tensor& m);
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

// Sparse linear map acting on contiguous blocks of `unit` values:
// out_block[i] = sum_k weight[k] * in_block[col[k]] for k in [row_ptr[i], row_ptr[i+1]).
// Gathers, crops, patch extraction and bilinear resampling are all instances.
struct SparseMap {
    Shape in_shape;
    Shape out_shape;
    int unit = 1;
    std::vector<std::size_t> row_ptr;
    std::vector<std::size_t> col;
    std::vector<double> weight;

    std::size_t in_blocks() const { return in_shape.numel() / unit; }
    std::size_t out_blocks() const { return out_shape.numel() / unit; }
    // Adjoint map, built in gather form so application stays parallel-safe.
    std::shared_ptr<const SparseMap> transposed() const;
    void validate() const;
};

Tensor apply_sparse(const Tensor& x, std::shared_ptr<const SparseMap> map);

// Gathers elements x[index[i]] into a tensor of the given shape.
Tensor gather(const Tensor& x, const std::vector<std::size_t>& index, const Shape& out_shape);

// Bilinear resampling with align_corners=false semantics.
Tensor bilinear_resize(const Tensor& x, int target_h, int target_w);
// As bilinear_resize, but rejects targets smaller than the source.
Tensor bilinear_upsample(const Tensor& x, int target_h, int target_w);

struct CropBox {
    int top = 0;
    int left = 0;
    int height = 1;
    int width = 1;
};

// Crops box[b] from batch element b and bilinearly resizes it to out_h x out_w.
Tensor crop_resize(const Tensor& x, const std::vector<CropBox>& boxes, int out_h, int out_w);

}  // namespace gmcnn
