#ifndef SIENET_TENSOR_HPP
#define SIENET_TENSOR_HPP

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace sienet {

/// Error raised for any contract violation (shape mismatch, non-finite data, bad arguments).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// (batch, channels, height, width).
struct Shape {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    std::int64_t numel() const { return std::int64_t(n) * c * h * w; }
    std::int64_t plane() const { return std::int64_t(h) * w; }
    friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

/// Dense rank-4 NCHW array. Storage is an Eigen column vector in row-major NCHW order.
template <typename Scalar>
class Tensor {
public:
    using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
    using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using MatrixMap = Eigen::Map<RowMatrix>;
    using ConstMatrixMap = Eigen::Map<const RowMatrix>;

    Tensor() = default;
    explicit Tensor(Shape shape) : shape_(shape), data_(Array::Zero(checked_numel(shape))) {}
    Tensor(Shape shape, Scalar fill) : shape_(shape), data_(Array::Constant(checked_numel(shape), fill)) {}
    Tensor(Shape shape, Array data) : shape_(shape), data_(std::move(data))
    {
        if (data_.size() != shape_.numel()) {
            throw Error("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                        to_string(shape_));
        }
    }

    static Tensor zeros(Shape s) { return Tensor(s); }
    static Tensor constant(Shape s, Scalar v) { return Tensor(s, v); }

    const Shape& shape() const { return shape_; }
    std::int64_t size() const { return data_.size(); }
    bool empty() const { return data_.size() == 0; }

    Array& array() { return data_; }
    const Array& array() const { return data_; }
    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }

    Scalar& operator[](std::int64_t i) { return data_[i]; }
    Scalar operator[](std::int64_t i) const { return data_[i]; }

    std::int64_t index(int n, int c, int y, int x) const
    {
        return ((std::int64_t(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }
    Scalar& operator()(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
    Scalar operator()(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

    /// Channels of sample n as a (C x H*W) row-major matrix.
    MatrixMap sample(int n)
    {
        return MatrixMap(data_.data() + std::int64_t(n) * shape_.c * shape_.plane(), shape_.c, shape_.plane());
    }
    ConstMatrixMap sample(int n) const
    {
        return ConstMatrixMap(data_.data() + std::int64_t(n) * shape_.c * shape_.plane(), shape_.c,
                              shape_.plane());
    }

    Scalar item() const
    {
        if (data_.size() != 1) throw Error("item() requires a single-element tensor, got " + to_string(shape_));
        return data_[0];
    }

    bool all_finite() const { return data_.allFinite(); }

    template <typename Other>
    Tensor<Other> cast() const
    {
        return Tensor<Other>(shape_, data_.template cast<Other>());
    }

    void fill_normal(std::mt19937_64& rng, Scalar mean, Scalar stddev)
    {
        std::normal_distribution<double> dist{double(mean), double(stddev)};
        for (Eigen::Index i = 0; i < data_.size(); ++i) data_[i] = Scalar(dist(rng));
    }
    void fill_uniform(std::mt19937_64& rng, Scalar lo, Scalar hi)
    {
        std::uniform_real_distribution<double> dist{double(lo), double(hi)};
        for (Eigen::Index i = 0; i < data_.size(); ++i) data_[i] = Scalar(dist(rng));
    }

private:
    static Eigen::Index checked_numel(const Shape& s)
    {
        if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) throw Error("negative tensor dimension in " + to_string(s));
        return Eigen::Index(s.numel());
    }

    Shape shape_;
    Array data_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

inline Shape scalar_shape() { return {1, 1, 1, 1}; }

template <typename Scalar>
void require_finite(const Tensor<Scalar>& t, const char* what)
{
    if (!t.all_finite()) throw Error(std::string(what) + ": non-finite value in tensor of shape " + to_string(t.shape()));
}

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* what)
{
    if (a.shape() != b.shape()) {
        throw Error(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
}

}  // namespace sienet

#endif  // SIENET_TENSOR_HPP
