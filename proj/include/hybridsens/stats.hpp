#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace hybridsens {

/// Worker count: HYBRIDSENS_THREADS if set (>= 1), else the hardware count.
std::size_t worker_count();

/// Runs fn(0..n-1) on up to worker_count() threads. Results must be written
/// by index; the first exception (lowest index) is rethrown after joining.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Pairwise (tree) sum; the order depends only on the input length.
double pairwise_sum(std::span<const double> v);

struct SummaryStats {
  double mean = 0.0;
  double variance = 0.0;  // unbiased sample variance
  double std_error = 0.0;
  std::size_t count = 0;

  static SummaryStats of(std::span<const double> v);
};

struct Histogram {
  std::vector<double> edges;  // edges.size() == counts.size() + 1
  std::vector<std::size_t> counts;
  std::size_t total() const;
  std::vector<double> probabilities() const;
};

/// Unit-width bins centred on the integers lo..hi; out-of-range samples go to
/// the end bins so the counts always sum to the sample count.
Histogram integer_histogram(std::span<const double> v, long lo, long hi);
Histogram histogram(std::span<const double> v, std::vector<double> edges);

double total_variation(std::span<const double> p, std::span<const double> q);

/// |a - b| / sqrt(sa^2 + sb^2), 0 when both are exactly equal.
double z_score(double a, double sa, double b, double sb);

}  // namespace hybridsens
