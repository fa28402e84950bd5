#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace oracle {

std::vector<int> collapse(const std::vector<int>& path) {
  std::vector<int> merged;
  for (std::size_t t = 0; t < path.size(); ++t)
    if (t == 0 || path[t] != path[t - 1]) merged.push_back(path[t]);
  std::vector<int> out;
  std::copy_if(merged.begin(), merged.end(), std::back_inserter(out), [](int c) { return c != 0; });
  return out;
}

double brute_force_ctc_probability(const std::vector<double>& log_probs, std::size_t steps,
                                   std::size_t classes, const std::vector<int>& label) {
  std::vector<int> path(steps, 0);
  double total = 0.0;
  while (true) {
    if (collapse(path) == label) {
      double lp = 0.0;
      for (std::size_t t = 0; t < steps; ++t) lp += log_probs[t * classes + static_cast<std::size_t>(path[t])];
      total += std::exp(lp);
    }
    // odometer increment
    std::size_t t = 0;
    while (t < steps && ++path[t] == static_cast<int>(classes)) path[t++] = 0;
    if (t == steps) break;
  }
  return total;
}

std::vector<std::vector<bool>> local_mask(std::size_t h, std::size_t w, std::size_t wh, std::size_t ww) {
  const long rh = static_cast<long>(wh / 2), rw = static_cast<long>(ww / 2);
  std::vector<std::vector<bool>> mask(h * w, std::vector<bool>(h * w, false));
  for (std::size_t q = 0; q < h * w; ++q)
    for (std::size_t k = 0; k < h * w; ++k) {
      const long qr = static_cast<long>(q / w), qc = static_cast<long>(q % w);
      const long kr = static_cast<long>(k / w), kc = static_cast<long>(k % w);
      mask[q][k] = std::labs(qr - kr) <= rh && std::labs(qc - kc) <= rw;
    }
  return mask;
}

std::vector<int> argmax_path(const std::vector<float>& logits, std::size_t steps, std::size_t classes) {
  std::vector<int> path;
  for (std::size_t t = 0; t < steps; ++t) {
    int best = 0;
    for (std::size_t k = 0; k < classes; ++k)
      if (logits[t * classes + k] > logits[t * classes + static_cast<std::size_t>(best)]) best = static_cast<int>(k);
    path.push_back(best);
  }
  return path;
}

std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                     std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    x[i] = xi + 2 * h;
    const double f2 = f(x);
    x[i] = xi + h;
    const double f1 = f(x);
    x[i] = xi - h;
    const double fm1 = f(x);
    x[i] = xi - 2 * h;
    const double fm2 = f(x);
    x[i] = xi;
    g[i] = (-f2 + 8 * f1 - 8 * fm1 + fm2) / (12 * h);
  }
  return g;
}

double relative_error(double analytic, double numeric, double floor) {
  return std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), floor});
}

std::size_t levenshtein(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] != b[j - 1])});
  return d[a.size()][b.size()];
}

}  // namespace oracle
