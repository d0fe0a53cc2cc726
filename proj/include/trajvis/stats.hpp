#ifndef TRAJVIS_STATS_HPP
#define TRAJVIS_STATS_HPP

#include <cstddef>
#include <vector>

namespace trajvis::stats {

/** Regularized incomplete beta I_x(a, b). */
double incomplete_beta(double a, double b, double x);

/** Regularized lower incomplete gamma P(a, x). */
double gamma_p(double a, double x);

/** Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x), evaluated without cancellation. */
double gamma_q(double a, double x);

/** P(|T| >= |t|) for Student's t with `df` degrees of freedom. */
double student_t_two_sided(double t, double df);

/** P(X >= x) for a chi-square variable with `df` degrees of freedom. */
double chi_square_survival(double x, double df);

struct TTest {
    double t = 0;
    double df = 0;
    double p = 1;
};

/**
 * Welch's unequal-variance t test, two-sided.
 * Needs at least two values per sample. When both samples have zero variance the result is
 * t = 0, p = 1 for equal means and t = ±inf, p = 0 otherwise, with df = n_a + n_b - 2.
 */
TTest welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

struct ChiSquareTest {
    double statistic = 0;
    double df = 0;
    double p = 1;
};

/** Pearson chi-square test of independence on an r x c table of counts (row-major `table[r][c]`). */
ChiSquareTest chi_square_test(const std::vector<std::vector<double>>& table);

/** Benjamini-Hochberg step-up adjusted p-values, returned in input order. */
std::vector<double> bh_fdr(const std::vector<double>& p_values);

double mean(const std::vector<double>& values);

/** Unbiased sample variance. */
double variance(const std::vector<double>& values);

} // namespace trajvis::stats

#endif
