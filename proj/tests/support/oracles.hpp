#pragma once

// Reference implementations used only by tests. They share no code with the
// library beyond plain data types.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

namespace oracle {

/// Merge runs, then drop zeros.
std::vector<int> collapse(const std::vector<int>& path);

/// sum over all N^T paths that collapse to `label` of prod_t exp(lp[t][path_t]).
/// `log_probs` is row-major [T, N].
double brute_force_ctc_probability(const std::vector<double>& log_probs, std::size_t steps,
                                   std::size_t classes, const std::vector<int>& label);

/// mask[q][k] by direct comparison of grid coordinates.
std::vector<std::vector<bool>> local_mask(std::size_t h, std::size_t w, std::size_t wh,
                                          std::size_t ww);

/// Argmax with ties to the lower index, per row of a [T, N] block.
std::vector<int> argmax_path(const std::vector<float>& logits, std::size_t steps, std::size_t classes);

/// Five-point central difference of f at every coordinate of x.
std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                     std::vector<double> x, double h = 1e-3);

/// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor);

std::size_t levenshtein(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace oracle
