#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "qbcat/rng.hpp"

namespace qbcat {

// Row-major dense matrix. Vectors are 1×n or handled as std::vector<T>.
template <typename T>
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), data(r * c, fill) {}

    T* row(std::size_t i) { return data.data() + i * cols; }
    const T* row(std::size_t i) const { return data.data() + i * cols; }
    T& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    const T& at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

template <typename T>
inline void require_shape(const Mat<T>& m, std::size_t r, std::size_t c, const char* what) {
    if (m.rows != r || m.cols != c)
        throw std::invalid_argument(std::string(what) + ": shape mismatch, got " +
                                    std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                                    ", want " + std::to_string(r) + "x" + std::to_string(c));
}

template <typename T>
inline bool all_finite(const T* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(p[i])) return false;
    return true;
}

// NaN/Inf anywhere is a hard error; called at layer/loss/step boundaries.
template <typename T>
inline void check_finite(const Mat<T>& m, const char* what) {
    if (!all_finite(m.data.data(), m.data.size()))
        throw std::runtime_error(std::string("non-finite values in ") + what);
}

template <typename T>
inline void check_finite(const std::vector<T>& v, const char* what) {
    if (!all_finite(v.data(), v.size()))
        throw std::runtime_error(std::string("non-finite values in ") + what);
}

// C = A * B^T, A: m×k, B: n×k, C: m×n.
template <typename T>
inline void matmul_nt(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {
    if (a.cols != b.cols) throw std::invalid_argument("matmul_nt: inner dim mismatch");
    c = Mat<T>(a.rows, b.rows);
    const std::size_t k = a.cols;
    for (std::size_t i = 0; i < a.rows; ++i) {
        const T* ai = a.row(i);
        T* ci = c.row(i);
        for (std::size_t j = 0; j < b.rows; ++j) {
            const T* bj = b.row(j);
            T acc = T(0);
            for (std::size_t t = 0; t < k; ++t) acc += ai[t] * bj[t];
            ci[j] = acc;
        }
    }
}

// C = A * B, A: m×k, B: k×n, C: m×n.
template <typename T>
inline void matmul_nn(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul_nn: inner dim mismatch");
    c = Mat<T>(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const T* ai = a.row(i);
        T* ci = c.row(i);
        for (std::size_t t = 0; t < a.cols; ++t) {
            const T av = ai[t];
            const T* bt = b.row(t);
            for (std::size_t j = 0; j < b.cols; ++j) ci[j] += av * bt[j];
        }
    }
}

// C += A^T * B, A: k×m, B: k×n, C: m×n (accumulating, for weight gradients).
template <typename T>
inline void matmul_tn_acc(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {
    if (a.rows != b.rows) throw std::invalid_argument("matmul_tn_acc: outer dim mismatch");
    if (c.rows != a.cols || c.cols != b.cols) throw std::invalid_argument("matmul_tn_acc: bad output shape");
    for (std::size_t t = 0; t < a.rows; ++t) {
        const T* at = a.row(t);
        const T* bt = b.row(t);
        for (std::size_t i = 0; i < a.cols; ++i) {
            const T av = at[i];
            T* ci = c.row(i);
            for (std::size_t j = 0; j < b.cols; ++j) ci[j] += av * bt[j];
        }
    }
}

template <typename T>
inline std::uint64_t hash_bytes(const std::vector<T>& v, std::uint64_t h) {
    return fnv1a64(v.data(), v.size() * sizeof(T), h);
}

}  // namespace qbcat
