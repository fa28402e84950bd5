#include "svtr/attention_mask.hpp"

#include <algorithm>
#include <string>

#include "svtr/error.hpp"

namespace svtr {

std::size_t AttentionMask::degree(std::size_t query) const {
  const auto* r = row(query);
  return static_cast<std::size_t>(std::count(r, r + cols_, std::uint8_t{1}));
}

bool AttentionMask::saturated() const {
  return std::all_of(allowed_.begin(), allowed_.end(), [](std::uint8_t v) { return v != 0; });
}

AttentionMask local_attention_mask(std::size_t h, std::size_t w, std::size_t wh,
                                   std::size_t ww) {
  SVTR_REQUIRE(h >= 1 && w >= 1 && wh >= 1 && ww >= 1, ErrorKind::kContract,
          "local mask needs positive grid and window sizes");
  SVTR_REQUIRE(wh % 2 == 1 && ww % 2 == 1, ErrorKind::kContract,
          "local window must have odd sides, got " + std::to_string(wh) + "x" +
              std::to_string(ww));
  const std::size_t n = h * w;
  const std::size_t rh = (wh - 1) / 2;
  const std::size_t rw = (ww - 1) / 2;
  AttentionMask mask(n, n, false);
  for (std::size_t qr = 0; qr < h; ++qr) {
    const std::size_t r0 = qr > rh ? qr - rh : 0;
    const std::size_t r1 = std::min(h - 1, qr + rh);
    for (std::size_t qc = 0; qc < w; ++qc) {
      const std::size_t c0 = qc > rw ? qc - rw : 0;
      const std::size_t c1 = std::min(w - 1, qc + rw);
      const std::size_t q = qr * w + qc;
      for (std::size_t kr = r0; kr <= r1; ++kr)
        for (std::size_t kc = c0; kc <= c1; ++kc) mask.set(q, kr * w + kc, true);
    }
  }
  return mask;
}

}  // namespace svtr
