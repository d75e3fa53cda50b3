#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "gdt/errors.hpp"
#include "gdt/rng.hpp"

namespace gdt {

using Shape = std::vector<int>;

inline size_t shape_numel(const Shape& s) {
    size_t n = 1;
    for (int d : s) n *= static_cast<size_t>(d);
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

inline void check_shape_valid(const Shape& s) {
    for (int d : s)
        if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(s));
}

// Dense row-major tensor. A Tensor is a cheap handle to shared storage; data
// is mutated only through explicit accessors, grad only accumulates.
template <typename T>
class Tensor {
    struct Storage {
        Shape shape;
        std::vector<T> data;
        std::vector<T> grad;  // empty until first accumulation
        bool requires_grad = false;
    };

public:
    Tensor() = default;

    explicit Tensor(Shape shape, bool requires_grad = false) {
        check_shape_valid(shape);
        s_ = std::make_shared<Storage>();
        s_->shape = std::move(shape);
        s_->data.assign(shape_numel(s_->shape), T(0));
        s_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, T value) {
        Tensor t(std::move(shape));
        std::fill(t.s_->data.begin(), t.s_->data.end(), value);
        return t;
    }

    static Tensor from(Shape shape, std::vector<T> values) {
        check_shape_valid(shape);
        if (shape_numel(shape) != values.size())
            throw ShapeError("value count " + std::to_string(values.size()) +
                             " does not fill shape " + shape_str(shape));
        Tensor t;
        t.s_ = std::make_shared<Storage>();
        t.s_->shape = std::move(shape);
        t.s_->data = std::move(values);
        return t;
    }

    static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0) {
        Tensor t(std::move(shape));
        rng.fill_normal(t.data(), t.numel(), stddev);
        return t;
    }

    bool defined() const { return static_cast<bool>(s_); }
    const Shape& shape() const { return s_->shape; }
    int dim(int i) const { return s_->shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(s_->shape.size()); }
    size_t numel() const { return s_->data.size(); }

    // Handle constness does not protect the shared storage (shared_ptr
    // semantics): data() and grad() hand out mutable pointers so backward
    // closures holding copies of the handle can accumulate.
    T* data() const { return s_->data.data(); }
    T at(size_t i) const { return s_->data[i]; }

    bool requires_grad() const { return s_ && s_->requires_grad; }
    void set_requires_grad(bool rg) { s_->requires_grad = rg; }

    bool grad_allocated() const { return !s_->grad.empty(); }
    void ensure_grad() const {
        if (s_->grad.empty()) s_->grad.assign(s_->data.size(), T(0));
    }
    T* grad() const {
        ensure_grad();
        return s_->grad.data();
    }
    void zero_grad() const {
        if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), T(0));
    }

    // Deep copy of data (fresh storage, grad not copied).
    Tensor clone() const {
        Tensor t;
        t.s_ = std::make_shared<Storage>();
        t.s_->shape = s_->shape;
        t.s_->data = s_->data;
        t.s_->requires_grad = s_->requires_grad;
        return t;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(s_->data.size());
        for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(s_->data[i]);
        return Tensor<U>::from(s_->shape, std::move(out));
    }

    bool same_storage(const Tensor& other) const { return s_ == other.s_; }
    std::weak_ptr<void> weak_handle() const { return s_; }
    const void* key() const { return s_.get(); }

private:
    std::shared_ptr<Storage> s_;
};

// ---------------------------------------------------------------------------
// Binary tensor container: magic "GDT0", u8 dtype code, u32 rank, u64 dims,
// raw little-endian buffer. Used by checkpoints and test fixtures.
// ---------------------------------------------------------------------------

template <typename T>
struct dtype_code;
template <>
struct dtype_code<float> {
    static constexpr uint8_t value = 0;
};
template <>
struct dtype_code<double> {
    static constexpr uint8_t value = 1;
};

namespace detail {
template <typename V>
void write_le(std::ostream& os, V v) {
    unsigned char buf[sizeof(V)];
    std::memcpy(buf, &v, sizeof(V));  // x86: already little-endian
    os.write(reinterpret_cast<const char*>(buf), sizeof(V));
}

template <typename V>
V read_le(std::istream& is) {
    unsigned char buf[sizeof(V)];
    is.read(reinterpret_cast<char*>(buf), sizeof(V));
    V v;
    std::memcpy(&v, buf, sizeof(V));
    return v;
}
}  // namespace detail

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
    os.write("GDT0", 4);
    detail::write_le<uint8_t>(os, dtype_code<T>::value);
    detail::write_le<uint32_t>(os, static_cast<uint32_t>(t.shape().size()));
    for (int d : t.shape()) detail::write_le<uint64_t>(os, static_cast<uint64_t>(d));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(T)));
}

template <typename T>
Tensor<T> read_tensor(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "GDT0", 4) != 0)
        throw LoadError("bad tensor container magic");
    uint8_t code = detail::read_le<uint8_t>(is);
    if (code != dtype_code<T>::value)
        throw LoadError("tensor container dtype code " + std::to_string(code) +
                        " does not match requested element type");
    uint32_t rank = detail::read_le<uint32_t>(is);
    if (rank > 16) throw LoadError("implausible tensor rank " + std::to_string(rank));
    Shape shape(rank);
    for (uint32_t i = 0; i < rank; ++i)
        shape[i] = static_cast<int>(detail::read_le<uint64_t>(is));
    Tensor<T> t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(T)));
    if (!is) throw LoadError("truncated tensor container");
    return t;
}

template <typename T>
size_t tensor_container_bytes(const Tensor<T>& t) {
    return 4 + 1 + 4 + 8 * t.shape().size() + t.numel() * sizeof(T);
}

}  // namespace gdt
