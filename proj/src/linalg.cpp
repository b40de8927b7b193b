#include "dislab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dislab {

Lu Lu::factor(const double* a, std::size_t n) {
    Lu f;
    f.n = n;
    f.lu.assign(a, a + n * n);
    f.piv.resize(n);
    std::iota(f.piv.begin(), f.piv.end(), 0);
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t p = c;
        double best = std::fabs(f.lu[c * n + c]);
        for (std::size_t r = c + 1; r < n; ++r) {
            double v = std::fabs(f.lu[r * n + c]);
            if (v > best) {
                best = v;
                p = r;
            }
        }
        if (best < 1e-300) {
            f.singular = true;
            return f;
        }
        if (p != c) {
            for (std::size_t j = 0; j < n; ++j) std::swap(f.lu[p * n + j], f.lu[c * n + j]);
            std::swap(f.piv[p], f.piv[c]);
            f.sign = -f.sign;
        }
        double pivot = f.lu[c * n + c];
        for (std::size_t r = c + 1; r < n; ++r) {
            double m = f.lu[r * n + c] / pivot;
            f.lu[r * n + c] = m;
            for (std::size_t j = c + 1; j < n; ++j) f.lu[r * n + j] -= m * f.lu[c * n + j];
        }
    }
    return f;
}

double Lu::det() const {
    if (singular) return 0.0;
    double d = sign;
    for (std::size_t i = 0; i < n; ++i) d *= lu[i * n + i];
    return d;
}

void Lu::solve(double* b) const {
    if (singular) fail(ErrorCode::numeric, "Lu::solve: singular matrix");
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = b[piv[i]];
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) y[i] -= lu[i * n + j] * y[j];
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t j = i + 1; j < n; ++j) y[i] -= lu[i * n + j] * y[j];
        y[i] /= lu[i * n + i];
    }
    std::copy(y.begin(), y.end(), b);
}

static void check_square(const Tensor& a, const char* who) {
    if (a.rank() != 2 || a.dim(0) != a.dim(1))
        fail(ErrorCode::shape_mismatch,
             std::string(who) + ": needs a square matrix, got " + shape_str(a.shape()));
}

double det(const Tensor& a) {
    check_square(a, "det");
    return Lu::factor(a.data(), a.dim(0)).det();
}

Tensor inverse(const Tensor& a) {
    check_square(a, "inverse");
    std::size_t n = a.dim(0);
    Lu f = Lu::factor(a.data(), n);
    if (f.singular) fail(ErrorCode::numeric, "inverse: singular matrix");
    Tensor inv = Tensor::zeros({n, n});
    std::vector<double> e(n);
    for (std::size_t c = 0; c < n; ++c) {
        std::fill(e.begin(), e.end(), 0.0);
        e[c] = 1.0;
        f.solve(e.data());
        for (std::size_t r = 0; r < n; ++r) inv.at(r, c) = e[r];
    }
    return inv;
}

std::vector<double> singular_values(const Tensor& a) {
    if (a.rank() != 2)
        fail(ErrorCode::shape_mismatch, "singular_values: needs rank 2, got " + shape_str(a.shape()));
    // Work on the taller orientation so columns are the short side.
    std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<double> w;
    bool transpose = m < n;
    std::size_t rows = transpose ? n : m, cols = transpose ? m : n;
    w.resize(rows * cols);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double v = a.at(i, j);
            if (transpose) w[j * cols + i] = v;
            else w[i * cols + j] = v;
        }
    // One-sided Jacobi: rotate column pairs until all are mutually orthogonal.
    const int max_sweeps = 60;
    const double eps = 1e-14;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p + 1 < cols; ++p)
            for (std::size_t q = p + 1; q < cols; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t i = 0; i < rows; ++i) {
                    double vp = w[i * cols + p], vq = w[i * cols + q];
                    app += vp * vp;
                    aqq += vq * vq;
                    apq += vp * vq;
                }
                if (std::fabs(apq) <= eps * std::sqrt(app * aqq) || apq == 0.0) continue;
                off += std::fabs(apq);
                double tau = (aqq - app) / (2.0 * apq);
                double t = (tau >= 0 ? 1.0 : -1.0) / (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = c * t;
                for (std::size_t i = 0; i < rows; ++i) {
                    double vp = w[i * cols + p], vq = w[i * cols + q];
                    w[i * cols + p] = c * vp - s * vq;
                    w[i * cols + q] = s * vp + c * vq;
                }
            }
        if (off == 0.0) break;
    }
    std::vector<double> sv(cols);
    for (std::size_t j = 0; j < cols; ++j) {
        double nrm = 0.0;
        for (std::size_t i = 0; i < rows; ++i) nrm += w[i * cols + j] * w[i * cols + j];
        sv[j] = std::sqrt(nrm);
    }
    std::sort(sv.begin(), sv.end(), std::greater<double>());
    return sv;
}

std::size_t numeric_rank(const std::vector<double>& sv, double rel_tol) {
    if (sv.empty() || sv[0] == 0.0) return 0;
    std::size_t r = 0;
    for (double s : sv)
        if (s > rel_tol * sv[0]) ++r;
    return r;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.empty())
        fail(ErrorCode::invalid_argument, "pearson: size mismatch or empty");
    double n = static_cast<double>(x.size());
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

static std::vector<double> average_ranks(const std::vector<double>& x) {
    std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    return pearson(average_ranks(x), average_ranks(y));
}

std::vector<std::size_t> max_assignment(const Tensor& score) {
    check_square(score, "max_assignment");
    std::size_t n = score.dim(0);
    // Potential-based Hungarian method on the minimization problem with
    // negated scores; deterministic given the input.
    const double INF = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, n), way(n + 1, n);
    for (std::size_t i = 0; i < n; ++i) {
        p[n] = i;
        std::size_t j0 = n;
        std::vector<double> minv(n + 1, INF);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            std::size_t i0 = p[j0], j1 = n;
            double delta = INF;
            for (std::size_t j = 0; j < n; ++j) {
                if (used[j]) continue;
                double cur = -score.at(i0, j) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != n);
        do {
            std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != n);
    }
    std::vector<std::size_t> col_of_row(n);
    for (std::size_t j = 0; j < n; ++j)
        if (p[j] < n) col_of_row[p[j]] = j;
    return col_of_row;
}

} // namespace dislab
