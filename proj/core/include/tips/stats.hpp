#pragma once

#include <span>
#include <vector>

namespace tips {

/// 1-based ranks with ties sharing their average rank.
std::vector<double> average_ranks(std::span<const double> values);

/// Spearman rank correlation (Pearson on average ranks). Returns 0 when
/// either side is constant. Throws DimensionError on a length mismatch.
double spearman(std::span<const double> x, std::span<const double> y);

double pearson(std::span<const double> x, std::span<const double> y);

double mean(std::span<const double> values);

}  // namespace tips
