#include "fmkt/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

namespace fmkt {

int shape_numel(const std::vector<int>& shape) {
    int n = 1;
    for (int d : shape) n *= d;
    return n;
}

Tensor Tensor::zeros(std::vector<int> shape) {
    int n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
}

Tensor Tensor::full(std::vector<int> shape, double v) {
    int n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), v));
}

Tensor Tensor::row(std::vector<double> v) {
    int n = static_cast<int>(v.size());
    return Tensor({n}, std::move(v));
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::item() const {
    if (size() != 1) throw shape_error("item() on tensor of size " + std::to_string(size()));
    return data[0];
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw shape_error(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

Tensor t_add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

Tensor t_sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

Tensor t_mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
    return out;
}

Tensor t_scale(const Tensor& a, double s) {
    Tensor out = a;
    for (double& v : out.data) v *= s;
    return out;
}

Tensor t_axpy(double alpha, const Tensor& x, double beta, const Tensor& y) {
    require_same_shape(x, y, "axpy");
    Tensor out = x;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = alpha * x.data[i] + beta * y.data[i];
    return out;
}

double t_l2(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data) s += v * v;
    return std::sqrt(s);
}

double t_max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

bool t_bit_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (size_t i = 0; i < a.data.size(); ++i) {
        // bit-level compare; treats -0.0 != 0.0 and NaN == NaN deliberately
        uint64_t x, y;
        static_assert(sizeof(double) == sizeof(uint64_t));
        std::memcpy(&x, &a.data[i], 8);
        std::memcpy(&y, &b.data[i], 8);
        if (x != y) return false;
    }
    return true;
}

void quantize_f32(Tensor& t) {
    for (double& v : t.data) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace fmkt
