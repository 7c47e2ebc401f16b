#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mfg {

// Global worker count for parallel loops. Results never depend on it:
// every parallel_for writes to disjoint output slots.
void set_thread_count(int n);
int thread_count();

// Chunked parallel loop over [begin, end). The body must only touch
// state owned by index i.
void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& body);

// Neumaier compensated sum, fixed left-to-right order.
class NeumaierSum {
 public:
  void add(double v) {
    double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v))
      comp_ += (sum_ - t) + v;
    else
      comp_ += (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double neumaier_total(const std::vector<double>& v) {
  NeumaierSum s;
  for (double x : v) s.add(x);
  return s.value();
}

// Fixed 17-significant-digit decimal formatting used by every CSV writer.
std::string format_g17(double v);

inline double sqr(double v) { return v * v; }

inline double clamp(double v, double lo, double hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

}  // namespace mfg
