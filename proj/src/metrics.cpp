#include "hdm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace hdm {

double compensated_sum(const std::vector<double>& values) {
    double sum = 0.0;
    double carry = 0.0;
    for (double v : values) {
        const double t = sum + v;
        carry += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
        sum = t;
    }
    return sum + carry;
}

namespace {

void check_sets(const std::vector<Vec>& a, const std::vector<Vec>& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("energy distance: empty sample set");
    const auto d = a.front().size();
    for (const auto& v : a)
        if (v.size() != d) throw std::invalid_argument("energy distance: dimension mismatch");
    for (const auto& v : b)
        if (v.size() != d) throw std::invalid_argument("energy distance: dimension mismatch");
}

double mean_pairwise(const std::vector<Vec>& a, const std::vector<Vec>& b) {
    std::vector<double> rows(a.size());
    std::vector<double> row(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) row[j] = (a[i] - b[j]).norm();
        rows[i] = compensated_sum(row);
    }
    return compensated_sum(rows) / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

}  // namespace

double energy_distance(const std::vector<Vec>& a, const std::vector<Vec>& b) {
    check_sets(a, b);
    const double stat = 2.0 * mean_pairwise(a, b) - mean_pairwise(a, a) - mean_pairwise(b, b);
    return std::max(0.0, stat);
}

TwoSampleResult energy_two_sample_test(const std::vector<Vec>& a, const std::vector<Vec>& b, int permutations,
                                       double quantile, std::uint64_t seed) {
    check_sets(a, b);
    if (permutations < 1) throw std::invalid_argument("two-sample test: permutations must be >= 1");
    TwoSampleResult result;
    result.statistic = energy_distance(a, b);
    result.permutations = permutations;

    std::vector<const Vec*> pooled;
    for (const auto& v : a) pooled.push_back(&v);
    for (const auto& v : b) pooled.push_back(&v);
    const std::size_t N = pooled.size();
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    std::vector<double> dist(N * N);
    for (std::size_t i = 0; i < N; ++i) {
        dist[i * N + i] = 0.0;
        for (std::size_t j = i + 1; j < N; ++j) {
            const double d = (*pooled[i] - *pooled[j]).norm();
            dist[i * N + j] = d;
            dist[j * N + i] = d;
        }
    }

    Eigen::VectorXd row_sums(static_cast<Eigen::Index>(N));
    for (std::size_t i = 0; i < N; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < N; ++j) s += dist[i * N + j];
        row_sums[static_cast<Eigen::Index>(i)] = s;
    }
    const Eigen::Map<const Eigen::MatrixXd> D(dist.data(), static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));

    Rng rng(splitmix64(seed ^ 0x7065726dULL));
    std::vector<std::size_t> order(N);
    Eigen::VectorXd mask(static_cast<Eigen::Index>(N));
    std::vector<double> null_stats;
    null_stats.reserve(static_cast<std::size_t>(permutations));
    const double nn = static_cast<double>(n);
    const double mm = static_cast<double>(m);
    for (int p = 0; p < permutations; ++p) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = N; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
        mask.setZero();
        for (std::size_t k = 0; k < n; ++k) mask[static_cast<Eigen::Index>(order[k])] = 1.0;
        // D is symmetric, so D * mask gives each point's summed distance to group A.
        const Eigen::VectorXd to_a = D * mask;
        double s_aa = 0.0, s_ab = 0.0, s_bb = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            const double a_part = to_a[ii];
            const double b_part = row_sums[ii] - a_part;
            if (mask[ii] > 0.5) {
                s_aa += a_part;
                s_ab += b_part;
            } else {
                s_bb += b_part;
            }
        }
        null_stats.push_back(2.0 * s_ab / (nn * mm) - s_aa / (nn * nn) - s_bb / (mm * mm));
    }
    std::sort(null_stats.begin(), null_stats.end());
    const auto idx = std::min(null_stats.size() - 1,
                              static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(null_stats.size()))) - 1);
    result.noise_floor = null_stats[idx];
    result.pass = result.statistic < result.noise_floor;
    return result;
}

std::optional<double> jaccard(const std::vector<int>& pred, const std::vector<int>& truth, int K) {
    if (pred.size() != truth.size()) throw std::invalid_argument("jaccard: masks differ in pixel count");
    double total = 0.0;
    int counted = 0;
    for (int c = 1; c < K; ++c) {
        std::size_t inter = 0, uni = 0;
        for (std::size_t p = 0; p < pred.size(); ++p) {
            const bool a = pred[p] == c;
            const bool b = truth[p] == c;
            inter += (a && b) ? 1 : 0;
            uni += (a || b) ? 1 : 0;
        }
        if (uni == 0) continue;
        total += static_cast<double>(inter) / static_cast<double>(uni);
        ++counted;
    }
    if (counted == 0) return std::nullopt;
    return total / counted;
}

double mean_jaccard(const std::vector<std::vector<int>>& pred, const std::vector<std::vector<int>>& truth, int K) {
    if (pred.size() != truth.size()) throw std::invalid_argument("mean_jaccard: sample count mismatch");
    double total = 0.0;
    std::size_t counted = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (auto j = jaccard(pred[i], truth[i], K)) {
            total += *j;
            ++counted;
        }
    }
    return counted == 0 ? 1.0 : total / static_cast<double>(counted);
}

double accuracy(const std::vector<std::vector<int>>& pred, const std::vector<std::vector<int>>& truth) {
    if (pred.size() != truth.size() || pred.empty()) throw std::invalid_argument("accuracy: sample count mismatch");
    std::size_t hits = 0, total = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i].size() != truth[i].size()) throw std::invalid_argument("accuracy: pixel count mismatch");
        for (std::size_t p = 0; p < pred[i].size(); ++p) {
            hits += pred[i][p] == truth[i][p] ? 1 : 0;
            ++total;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace hdm
