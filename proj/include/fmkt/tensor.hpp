#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fmkt/common.hpp"

namespace fmkt {

// Dense row-major tensor of doubles. Shapes are small at desk scale, so the
// storage is a plain vector and kernels are explicit loops.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> shape_, std::vector<double> data_)
        : shape(std::move(shape_)), data(std::move(data_)) {}

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double v);
    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor row(std::vector<double> v);  // shape [n]

    int size() const { return static_cast<int>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    double& at(int i) { return data[static_cast<size_t>(i)]; }
    double at(int i) const { return data[static_cast<size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;
    double item() const;  // requires size() == 1

    std::string shape_str() const;
};

int shape_numel(const std::vector<int>& shape);

// Elementwise helpers shared by value-level code and autograd kernels.
Tensor t_add(const Tensor& a, const Tensor& b);
Tensor t_sub(const Tensor& a, const Tensor& b);
Tensor t_mul(const Tensor& a, const Tensor& b);
Tensor t_scale(const Tensor& a, double s);
Tensor t_axpy(double alpha, const Tensor& x, double beta, const Tensor& y);  // alpha*x + beta*y

double t_l2(const Tensor& a);
double t_max_abs_diff(const Tensor& a, const Tensor& b);
bool t_bit_equal(const Tensor& a, const Tensor& b);

// Round every element to the nearest binary32 value (parameters live on the
// float grid so checkpoints encoded as f32 round-trip exactly).
void quantize_f32(Tensor& t);

void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace fmkt
