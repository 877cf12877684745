#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aum/errors.hpp"

namespace aum {

/// Margins of one sample, one entry per logged epoch (epoch t at index t-1).
using MarginTrace = std::vector<double>;

/// Assigned logit minus the largest other logit.
///
/// Positive exactly when `assigned` is the strict argmax of `logits`.
inline double margin(std::span<const double> logits, std::size_t assigned) {
    if (logits.size() < 2) throw std::invalid_argument("margin: need at least two logits");
    if (assigned >= logits.size())
        throw std::invalid_argument("margin: assigned class " + std::to_string(assigned) +
                                    " out of range for " + std::to_string(logits.size()) + " logits");
    double largest_other = -INFINITY;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (!std::isfinite(logits[i]))
            throw std::invalid_argument("margin: non-finite logit at index " + std::to_string(i));
        if (i != assigned) largest_other = std::max(largest_other, logits[i]);
    }
    return logits[assigned] - largest_other;
}

/// Area under the margin: the mean margin over the trace.
inline double aum(std::span<const double> trace) {
    if (trace.empty()) throw std::invalid_argument("aum: empty margin trace");
    double sum = 0.0;
    for (double m : trace) sum += m;
    return sum / static_cast<double>(trace.size());
}

/// Prefix means; the last element equals aum(trace).
inline MarginTrace running_average(std::span<const double> trace) {
    if (trace.empty()) throw std::invalid_argument("running_average: empty margin trace");
    MarginTrace out(trace.size());
    double sum = 0.0;
    for (std::size_t t = 0; t < trace.size(); ++t) {
        sum += trace[t];
        out[t] = sum / static_cast<double>(t + 1);
    }
    return out;
}

/// Nearest-rank percentile: the ceil(q/100 * n)-th smallest value (1-indexed).
/// No interpolation between order statistics.
inline double percentile_nearest_rank(std::span<const double> values, double q) {
    if (values.empty()) throw std::invalid_argument("percentile: empty value list");
    if (!(q > 0.0 && q <= 100.0))
        throw std::invalid_argument("percentile: q must lie in (0, 100], got " + std::to_string(q));
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<double>(sorted.size());
    auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * n));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    return sorted[rank - 1];
}

/// 1-based ranks with ties sharing their average rank.
inline std::vector<double> midranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i + 1;
        while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
        i = j;
    }
    return ranks;
}

/// Spearman rank correlation (Pearson correlation of midranks).
inline double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("spearman: length mismatch (" + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()) + ")");
    if (a.size() < 2) throw std::invalid_argument("spearman: need at least two observations");
    const auto ra = midranks(a);
    const auto rb = midranks(b);
    const double mean = 0.5 * static_cast<double>(a.size() + 1);  // same for any midrank vector
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        const double da = ra[i] - mean;
        const double db = rb[i] - mean;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) throw undefined_correlation("spearman: zero rank variance");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

}  // namespace aum
