#ifndef DISLAB_LINALG_HPP
#define DISLAB_LINALG_HPP

#include <vector>

#include "dislab/tensor.hpp"

namespace dislab {

/// LU factorization with partial pivoting of a square matrix (row-major).
/// Factors are stored packed; `singular` is set when a pivot underflows.
struct Lu {
    std::size_t n = 0;
    std::vector<double> lu;      // packed L\U
    std::vector<std::size_t> piv;
    int sign = 1;
    bool singular = false;

    static Lu factor(const double* a, std::size_t n);
    double det() const;
    /// Solves A x = b in place (b has n entries).
    void solve(double* b) const;
};

double det(const Tensor& a);
/// Dense inverse via LU; throws on singular input.
Tensor inverse(const Tensor& a);

/// Singular values (descending) of an m x n matrix via one-sided Jacobi.
std::vector<double> singular_values(const Tensor& a);

/// Numeric rank: count of singular values > rel_tol * largest.
std::size_t numeric_rank(const std::vector<double>& sv, double rel_tol);

/// Pearson correlation of two equally sized samples; 0 when either side has
/// zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y);
/// Spearman rank correlation (average ranks on ties).
double spearman(const std::vector<double>& x, const std::vector<double>& y);

/// Maximum-weight perfect assignment on a square score matrix (Hungarian
/// method with potentials, O(n^3)). Returns col_of_row.
std::vector<std::size_t> max_assignment(const Tensor& score);

} // namespace dislab

#endif
