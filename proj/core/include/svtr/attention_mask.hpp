#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace svtr {

/// Boolean [rows, cols] matrix; true means the query (row) may attend to the
/// key (column).
class AttentionMask {
 public:
  AttentionMask(std::size_t rows, std::size_t cols, bool value = true)
      : rows_(rows), cols_(cols), allowed_(rows * cols, value ? 1 : 0) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool allowed(std::size_t query, std::size_t key) const {
    return allowed_[query * cols_ + key] != 0;
  }
  void set(std::size_t query, std::size_t key, bool value) {
    allowed_[query * cols_ + key] = value ? 1 : 0;
  }
  const std::uint8_t* row(std::size_t query) const { return allowed_.data() + query * cols_; }
  std::size_t degree(std::size_t query) const;
  bool saturated() const;

  friend bool operator==(const AttentionMask&, const AttentionMask&) = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<std::uint8_t> allowed_;
};

/// Sliding-window mask over an h x w token grid (row-major token order). A
/// query at (r, c) sees keys with |dr| <= (wh-1)/2 and |dc| <= (ww-1)/2; the
/// window is clipped at the grid border. Window sides must be odd.
AttentionMask local_attention_mask(std::size_t h, std::size_t w, std::size_t wh, std::size_t ww);

}  // namespace svtr
