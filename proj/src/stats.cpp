#include "hybridsens/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <string>
#include <thread>

namespace hybridsens {

std::size_t worker_count() {
  if (const char* env = std::getenv("HYBRIDSENS_THREADS")) {
    try {
      long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_at = std::numeric_limits<std::size_t>::max();
  std::exception_ptr error;
  auto body = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_at) {
          failed_at = i;
          error = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

SummaryStats SummaryStats::of(std::span<const double> v) {
  SummaryStats s;
  s.count = v.size();
  if (v.empty()) return s;
  // Constant samples (deterministic models) get exactly that value and zero
  // spread, which summation rounding would otherwise blur.
  if (std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; })) {
    s.mean = v[0];
    return s;
  }
  s.mean = pairwise_sum(v) / static_cast<double>(v.size());
  if (v.size() > 1) {
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - s.mean) * (v[i] - s.mean);
    s.variance = pairwise_sum(sq) / static_cast<double>(v.size() - 1);
    s.std_error = std::sqrt(s.variance / static_cast<double>(v.size()));
  }
  return s;
}

std::size_t Histogram::total() const {
  std::size_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

std::vector<double> Histogram::probabilities() const {
  std::vector<double> p(counts.size(), 0.0);
  const double t = static_cast<double>(total());
  if (t > 0)
    for (std::size_t i = 0; i < counts.size(); ++i) p[i] = counts[i] / t;
  return p;
}

Histogram integer_histogram(std::span<const double> v, long lo, long hi) {
  Histogram h;
  for (long b = lo; b <= hi + 1; ++b) h.edges.push_back(b - 0.5);
  h.counts.assign(static_cast<std::size_t>(hi - lo + 1), 0);
  for (double x : v) {
    long b = std::lround(x);
    b = std::clamp(b, lo, hi);
    ++h.counts[static_cast<std::size_t>(b - lo)];
  }
  return h;
}

Histogram histogram(std::span<const double> v, std::vector<double> edges) {
  Histogram h;
  h.edges = std::move(edges);
  h.counts.assign(h.edges.size() - 1, 0);
  for (double x : v) {
    auto it = std::upper_bound(h.edges.begin(), h.edges.end(), x);
    std::size_t b = it == h.edges.begin() ? 0 : static_cast<std::size_t>(it - h.edges.begin()) - 1;
    b = std::min(b, h.counts.size() - 1);
    ++h.counts[b];
  }
  return h;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  const std::size_t n = std::max(p.size(), q.size());
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double a = i < p.size() ? p[i] : 0.0;
    double b = i < q.size() ? q[i] : 0.0;
    s += std::abs(a - b);
  }
  return 0.5 * s;
}

double z_score(double a, double sa, double b, double sb) {
  const double d = std::abs(a - b);
  if (d == 0.0) return 0.0;
  const double s = std::sqrt(sa * sa + sb * sb);
  if (s == 0.0) return std::numeric_limits<double>::infinity();
  return d / s;
}

}  // namespace hybridsens
