#include "keygate/matrix.hpp"

namespace keygate {

void matmul_nn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
    if (a.cols != b.rows || out.rows != a.rows || out.cols != b.cols)
        throw std::invalid_argument("matmul_nn: shape mismatch");
    for (int i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        double* oi = out.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double av = ai[k];
            const double* bk = b.row(k);
            for (int j = 0; j < b.cols; ++j) oi[j] += av * bk[j];
        }
    }
}

void matmul_nt_acc(const Matrix& a, const Matrix& b, Matrix& out) {
    if (a.cols != b.cols || out.rows != a.rows || out.cols != b.rows)
        throw std::invalid_argument("matmul_nt: shape mismatch");
    const int kdim = a.cols;
    for (int i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        double* oi = out.row(i);
        int j = 0;
        for (; j + 4 <= b.rows; j += 4) {
            const double* b0 = b.row(j);
            const double* b1 = b.row(j + 1);
            const double* b2 = b.row(j + 2);
            const double* b3 = b.row(j + 3);
            double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
            for (int k = 0; k < kdim; ++k) {
                const double av = ai[k];
                s0 += av * b0[k];
                s1 += av * b1[k];
                s2 += av * b2[k];
                s3 += av * b3[k];
            }
            oi[j] += s0;
            oi[j + 1] += s1;
            oi[j + 2] += s2;
            oi[j + 3] += s3;
        }
        for (; j < b.rows; ++j) {
            const double* bj = b.row(j);
            double s = 0.0;
            for (int k = 0; k < kdim; ++k) s += ai[k] * bj[k];
            oi[j] += s;
        }
    }
}

void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
    if (a.rows != b.rows || out.rows != a.cols || out.cols != b.cols)
        throw std::invalid_argument("matmul_tn: shape mismatch");
    for (int n = 0; n < a.rows; ++n) {
        const double* an = a.row(n);
        const double* bn = b.row(n);
        for (int i = 0; i < a.cols; ++i) {
            const double av = an[i];
            if (av == 0.0) continue;
            double* oi = out.row(i);
            for (int j = 0; j < b.cols; ++j) oi[j] += av * bn[j];
        }
    }
}

double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const Vec& a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return s;
}

void axpy(double s, const Vec& x, Vec& y) {
    if (x.size() != y.size()) throw std::invalid_argument("axpy: size mismatch");
    for (size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

Vec scaled(const Vec& x, double s) {
    Vec out(x);
    for (double& v : out) v *= s;
    return out;
}

Vec matvec(const Matrix& a, const Vec& x) {
    if (a.cols != static_cast<int>(x.size())) throw std::invalid_argument("matvec: size mismatch");
    Vec out(a.rows, 0.0);
    for (int i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        double s = 0.0;
        for (int j = 0; j < a.cols; ++j) s += ai[j] * x[j];
        out[i] = s;
    }
    return out;
}

Vec matvec_t(const Matrix& a, const Vec& x) {
    if (a.rows != static_cast<int>(x.size())) throw std::invalid_argument("matvec_t: size mismatch");
    Vec out(a.cols, 0.0);
    for (int i = 0; i < a.rows; ++i) {
        const double* ai = a.row(i);
        const double xv = x[i];
        for (int j = 0; j < a.cols; ++j) out[j] += xv * ai[j];
    }
    return out;
}

double frobenius2(const Matrix& a) {
    double s = 0.0;
    for (double v : a.data) s += v * v;
    return s;
}

}  // namespace keygate
