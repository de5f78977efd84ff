#pragma once

#include "hdm/common.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace hdm {

/// 2 mean|a - b| - mean|a - a'| - mean|b - b'| over all ordered pairs
/// (V-statistic, so identical multisets give exactly 0).
double energy_distance(const std::vector<Vec>& a, const std::vector<Vec>& b);

struct TwoSampleResult {
    double statistic = 0.0;
    double noise_floor = 0.0;  // permutation quantile of the null distribution
    bool pass = false;         // statistic < noise_floor
    int permutations = 0;
};

/// Energy distance with a permutation-calibrated threshold at `quantile`.
TwoSampleResult energy_two_sample_test(const std::vector<Vec>& a, const std::vector<Vec>& b, int permutations,
                                       double quantile, std::uint64_t seed);

/// Mean IoU over foreground classes 1..K-1 whose union is nonempty;
/// nullopt when no foreground class appears in either mask.
std::optional<double> jaccard(const std::vector<int>& pred, const std::vector<int>& truth, int K);

/// Per-sample Jaccard averaged over samples where it is defined. Samples
/// with no foreground anywhere are skipped; returns 1 if every sample is.
double mean_jaccard(const std::vector<std::vector<int>>& pred, const std::vector<std::vector<int>>& truth, int K);

double accuracy(const std::vector<std::vector<int>>& pred, const std::vector<std::vector<int>>& truth);

/// Neumaier-compensated sum.
double compensated_sum(const std::vector<double>& values);

}  // namespace hdm
