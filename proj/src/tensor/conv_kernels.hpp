#pragma once

#include "uar/tensor.hpp"

namespace uar::ad::kernels {

// Raw-buffer convolution kernels (im2col + GEMM). Shapes follow ConvShape;
// outputs are overwritten.
void conv_forward(const ConvShape& cs, const double* input, const double* weights, const double* bias,
                  double* out);
void conv_input_grad(const ConvShape& cs, const double* grad_out, const double* weights, double* grad_in);
void conv_weight_grad(const ConvShape& cs, const double* input, const double* grad_out, double* grad_w);

}  // namespace uar::ad::kernels
