#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace keygate {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. All model arithmetic is 64-bit.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {
        if (r < 0 || c < 0) throw std::invalid_argument("Matrix: negative shape");
    }

    double& operator()(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }

    double* row(int i) { return data.data() + static_cast<size_t>(i) * cols; }
    const double* row(int i) const { return data.data() + static_cast<size_t>(i) * cols; }

    Vec row_vec(int i) const { return Vec(row(i), row(i) + cols); }
    void set_row(int i, const Vec& v) {
        if (static_cast<int>(v.size()) != cols) throw std::invalid_argument("set_row: size mismatch");
        std::copy(v.begin(), v.end(), row(i));
    }

    size_t size() const { return data.size(); }
    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline void check_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

// out(n x p) += a(n x k) * b(k x p). Row-major saxpy kernel.
void matmul_nn_acc(const Matrix& a, const Matrix& b, Matrix& out);

// out(n x p) += a(n x k) * b(p x k)^T. Dot-product kernel, 4-column blocked.
void matmul_nt_acc(const Matrix& a, const Matrix& b, Matrix& out);

// out(p x k) += a(n x p)^T * b(n x k). Accumulated outer products.
void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out);

inline Matrix matmul_nn(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows, b.cols);
    matmul_nn_acc(a, b, out);
    return out;
}
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows, b.rows);
    matmul_nt_acc(a, b, out);
    return out;
}
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    Matrix out(a.cols, b.cols);
    matmul_tn_acc(a, b, out);
    return out;
}

// Vector helpers.
double dot(const Vec& a, const Vec& b);
double norm2(const Vec& a);            // squared Euclidean norm
inline double norm(const Vec& a) { return std::sqrt(norm2(a)); }
void axpy(double s, const Vec& x, Vec& y);  // y += s*x
Vec scaled(const Vec& x, double s);

// Matrix(m x d) times vector(d) -> vector(m), and the transposed product.
Vec matvec(const Matrix& a, const Vec& x);
Vec matvec_t(const Matrix& a, const Vec& x);

double frobenius2(const Matrix& a);

}  // namespace keygate
