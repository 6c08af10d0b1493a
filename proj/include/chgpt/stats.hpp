#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace chgpt {

// Pairwise summation: a deterministic reduction whose result does not depend
// on how the work was partitioned across workers.
inline double pairwise_sum(std::span<const double> xs) {
    if (xs.size() <= 32) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    std::size_t half = xs.size() / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};

inline MeanSe mean_se(std::span<const double> xs) {
    if (xs.empty()) throw std::invalid_argument("mean_se: empty sample");
    const auto n = xs.size();
    MeanSe out;
    out.n = n;
    out.mean = pairwise_sum(xs) / static_cast<double>(n);
    if (n > 1) {
        std::vector<double> sq(n);
        for (std::size_t i = 0; i < n; ++i) {
            double d = xs[i] - out.mean;
            sq[i] = d * d;
        }
        double var = pairwise_sum(sq) / static_cast<double>(n - 1);
        out.se = std::sqrt(var / static_cast<double>(n));
    }
    return out;
}

inline double sample_variance(std::span<const double> xs) {
    MeanSe m = mean_se(xs);
    return m.se * m.se * static_cast<double>(m.n);
}

// Weighted mean with standard error of the ratio estimator sum(w*x)/sum(w).
struct WeightedMeanSe {
    double mean = 0.0;
    double se = 0.0;
};

inline WeightedMeanSe weighted_mean_se(std::span<const double> xs,
                                       std::span<const double> ws) {
    if (xs.size() != ws.size() || xs.empty())
        throw std::invalid_argument("weighted_mean_se: bad sample");
    const auto n = xs.size();
    std::vector<double> wx(n);
    for (std::size_t i = 0; i < n; ++i) wx[i] = ws[i] * xs[i];
    double sw = pairwise_sum(ws);
    double swx = pairwise_sum(wx);
    WeightedMeanSe out;
    out.mean = swx / sw;
    std::vector<double> dev(n);
    for (std::size_t i = 0; i < n; ++i) {
        double d = ws[i] * (xs[i] - out.mean);
        dev[i] = d * d;
    }
    out.se = std::sqrt(pairwise_sum(dev)) / sw;
    return out;
}

inline double median(std::vector<double> xs) {
    if (xs.empty()) throw std::invalid_argument("median: empty sample");
    std::size_t mid = xs.size() / 2;
    std::nth_element(xs.begin(), xs.begin() + mid, xs.end());
    double hi = xs[mid];
    if (xs.size() % 2 == 1) return hi;
    std::nth_element(xs.begin(), xs.begin() + mid - 1, xs.begin() + mid);
    return 0.5 * (hi + xs[mid - 1]);
}

inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

// Acklam's rational approximation of the standard normal quantile, refined
// with one Halley step.
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::invalid_argument("normal_quantile: p must lie in (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1.0 - plow;
    double x;
    if (p < plow) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= phigh) {
        double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
            q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
              c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    double e = normal_cdf(x) - p;
    double u = e * std::sqrt(2.0 * 3.14159265358979323846) *
               std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

// Kolmogorov-Smirnov statistic of a sample against a reference cdf.
template <typename Cdf>
double ks_statistic(std::vector<double> xs, Cdf&& cdf) {
    if (xs.empty()) throw std::invalid_argument("ks_statistic: empty sample");
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double f = cdf(xs[i]);
        d = std::max(d, std::abs(f - static_cast<double>(i) / n));
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
    }
    return d;
}

// Slope of the least-squares line y = a + b x.
inline double regression_slope(std::span<const double> x,
                               std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("regression_slope: need >= 2 points");
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace chgpt
