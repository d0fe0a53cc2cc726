#include "trajvis/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace trajvis::stats {

namespace {

constexpr double kEpsilon = 1e-16;
constexpr double kTiny = 1e-300;
constexpr int kMaxTerms = 100000;

/** Continued fraction for I_x(a, b) (modified Lentz). Converges quickly for x < (a + 1) / (a + b + 2). */
double beta_fraction(double a, double b, double x) {
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxTerms; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEpsilon) {
            return h;
        }
    }
    throw std::runtime_error("incomplete beta continued fraction did not converge");
}

double gamma_series(double a, double x) {
    double sum = 1.0 / a;
    double term = sum;
    for (int n = 1; n <= kMaxTerms; ++n) {
        term *= x / (a + n);
        sum += term;
        if (std::abs(term) < std::abs(sum) * kEpsilon) {
            return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
        }
    }
    throw std::runtime_error("incomplete gamma series did not converge");
}

double gamma_fraction(double a, double x) {
    double b = x + 1.0 - a;
    double c = 1.0 / kTiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kMaxTerms; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEpsilon) {
            return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
        }
    }
    throw std::runtime_error("incomplete gamma continued fraction did not converge");
}

} // namespace

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0) || !(b > 0)) {
        throw std::invalid_argument("incomplete beta needs positive shape parameters");
    }
    if (!(x >= 0 && x <= 1)) {
        throw std::invalid_argument("incomplete beta argument must lie in [0, 1]");
    }
    if (x == 0 || x == 1) {
        return x;
    }
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    // Evaluate the fraction on whichever side of the mean it converges fastest, using I_x(a,b) = 1 - I_{1-x}(b,a).
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * beta_fraction(a, b, x) / a;
    }
    return 1.0 - front * beta_fraction(b, a, 1.0 - x) / b;
}

double gamma_p(double a, double x) {
    if (!(a > 0) || !(x >= 0)) {
        throw std::invalid_argument("incomplete gamma needs a > 0 and x >= 0");
    }
    if (x == 0) {
        return 0.0;
    }
    // Series below a + 1, continued fraction above.
    return x < a + 1.0 ? gamma_series(a, x) : 1.0 - gamma_fraction(a, x);
}

double gamma_q(double a, double x) {
    if (!(a > 0) || !(x >= 0)) {
        throw std::invalid_argument("incomplete gamma needs a > 0 and x >= 0");
    }
    if (x == 0) {
        return 1.0;
    }
    return x < a + 1.0 ? 1.0 - gamma_series(a, x) : gamma_fraction(a, x);
}

double student_t_two_sided(double t, double df) {
    if (!(df > 0)) {
        throw std::invalid_argument("degrees of freedom must be positive");
    }
    if (std::isnan(t)) {
        throw std::invalid_argument("t statistic is NaN");
    }
    if (std::isinf(t)) {
        return 0.0;
    }
    return incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

double chi_square_survival(double x, double df) {
    if (!(df > 0)) {
        throw std::invalid_argument("degrees of freedom must be positive");
    }
    if (x <= 0) {
        return 1.0;
    }
    return gamma_q(0.5 * df, 0.5 * x);
}

double mean(const std::vector<double>& values) {
    if (values.empty()) {
        throw std::invalid_argument("mean of an empty sample");
    }
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double variance(const std::vector<double>& values) {
    if (values.size() < 2) {
        throw std::invalid_argument("variance needs at least two values");
    }
    const double m = mean(values);
    double ss = 0;
    for (double v : values) {
        ss += (v - m) * (v - m);
    }
    return ss / static_cast<double>(values.size() - 1);
}

TTest welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2) {
        throw std::invalid_argument("Welch's t test needs at least two values per sample");
    }
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double ma = mean(a), mb = mean(b);
    const double va = variance(a) / na;
    const double vb = variance(b) / nb;
    TTest out;
    if (va == 0 && vb == 0) {
        out.df = na + nb - 2.0;
        if (ma == mb) {
            out.t = 0;
            out.p = 1;
        } else {
            out.t = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
            out.p = 0;
        }
        return out;
    }
    const double se2 = va + vb;
    out.t = (ma - mb) / std::sqrt(se2);
    out.df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    out.p = student_t_two_sided(out.t, out.df);
    return out;
}

ChiSquareTest chi_square_test(const std::vector<std::vector<double>>& table) {
    const std::size_t rows = table.size();
    if (rows == 0 || table[0].empty()) {
        throw std::invalid_argument("contingency table is empty");
    }
    const std::size_t cols = table[0].size();
    std::vector<double> row_total(rows, 0.0), col_total(cols, 0.0);
    double total = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (table[r].size() != cols) {
            throw std::invalid_argument("contingency table rows differ in length");
        }
        for (std::size_t c = 0; c < cols; ++c) {
            const double v = table[r][c];
            if (!(v >= 0) || !std::isfinite(v)) {
                throw std::invalid_argument("contingency counts must be finite and nonnegative");
            }
            row_total[r] += v;
            col_total[c] += v;
            total += v;
        }
    }
    for (std::size_t r = 0; r < rows; ++r) {
        if (row_total[r] == 0) {
            throw std::invalid_argument("contingency row " + std::to_string(r) + " has a zero marginal");
        }
    }
    for (std::size_t c = 0; c < cols; ++c) {
        if (col_total[c] == 0) {
            throw std::invalid_argument("contingency column " + std::to_string(c) + " has a zero marginal");
        }
    }
    if (rows < 2 || cols < 2) {
        throw std::invalid_argument("contingency table needs at least two rows and two columns");
    }
    ChiSquareTest out;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const double expected = row_total[r] * col_total[c] / total;
            const double diff = table[r][c] - expected;
            out.statistic += diff * diff / expected;
        }
    }
    out.df = static_cast<double>((rows - 1) * (cols - 1));
    out.p = chi_square_survival(out.statistic, out.df);
    return out;
}

std::vector<double> bh_fdr(const std::vector<double>& p_values) {
    const std::size_t m = p_values.size();
    for (double p : p_values) {
        if (!(p >= 0 && p <= 1)) {
            throw std::invalid_argument("p-values must lie in [0, 1]");
        }
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
    std::vector<double> q(m);
    double running = 1.0;
    for (std::size_t k = m; k-- > 0;) {
        const std::size_t i = order[k];
        running = std::min(running, static_cast<double>(m) * p_values[i] / static_cast<double>(k + 1));
        q[i] = running;
    }
    return q;
}

} // namespace trajvis::stats
