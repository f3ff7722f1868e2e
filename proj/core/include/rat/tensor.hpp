#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rat/error.hpp"

namespace rat {

using Shape = std::vector<std::int64_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) {
        if (d < 1) throw DimensionError("invalid shape " + shape_str(s) + ": entries must be >= 1");
        n *= d;
    }
    return n;
}

namespace detail {
inline std::int64_t next_tensor_id() {
    static std::atomic<std::int64_t> counter{0};
    return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

// Dense row-major tensor. Storage is shared between copies and treated as
// immutable once a tensor has been handed to an op; gradient state lives in
// the Graph, keyed by the tensor id assigned at construction. Copies keep
// the id (they are the same logical tensor); alias() mints a new identity
// over the same buffer (used by reshape).
template <class Real>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape) {
        return Tensor(std::move(shape), Real(0));
    }

    static Tensor full(Shape shape, Real value) {
        return Tensor(std::move(shape), value);
    }

    static Tensor from(Shape shape, std::vector<Real> values) {
        Tensor t;
        t.shape_ = std::move(shape);
        t.numel_ = shape_numel(t.shape_);
        if (static_cast<std::int64_t>(values.size()) != t.numel_)
            throw DimensionError("data length " + std::to_string(values.size()) +
                                 " does not match shape " + shape_str(t.shape_));
        t.storage_ = std::make_shared<std::vector<Real>>(std::move(values));
        t.id_ = detail::next_tensor_id();
        return t;
    }

    static Tensor scalar(Real value) { return full({1}, value); }

    // new identity over the same buffer, reinterpreted with `shape`
    static Tensor alias(const Tensor& src, Shape shape) {
        if (shape_numel(shape) != src.numel_)
            throw DimensionError("cannot view " + shape_str(src.shape_) + " as " + shape_str(shape));
        Tensor t;
        t.shape_ = std::move(shape);
        t.numel_ = src.numel_;
        t.storage_ = src.storage_;
        t.id_ = detail::next_tensor_id();
        return t;
    }

    bool defined() const { return storage_ != nullptr; }
    const Shape& shape() const { return shape_; }
    std::int64_t ndim() const { return static_cast<std::int64_t>(shape_.size()); }
    std::int64_t dim(std::int64_t i) const {
        if (i < 0) i += ndim();
        return shape_[static_cast<std::size_t>(i)];
    }
    std::int64_t numel() const { return numel_; }
    std::int64_t id() const { return id_; }

    const Real* data() const { return storage_->data(); }
    Real* data() { return storage_->data(); }

    Real item() const {
        if (numel_ != 1) throw ContractError("item() on tensor of shape " + shape_str(shape_));
        return (*storage_)[0];
    }

    bool requires_grad() const { return requires_grad_; }
    Tensor& set_requires_grad(bool b) {
        requires_grad_ = b;
        return *this;
    }

private:
    Tensor(Shape shape, Real fill) {
        shape_ = std::move(shape);
        numel_ = shape_numel(shape_);
        storage_ = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(numel_), fill);
        id_ = detail::next_tensor_id();
    }

    Shape shape_;
    std::int64_t numel_ = 0;
    std::shared_ptr<std::vector<Real>> storage_;
    std::int64_t id_ = -1;
    bool requires_grad_ = false;
};

}  // namespace rat
