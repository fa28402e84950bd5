#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "svtr/charset.hpp"
#include "svtr/ctc.hpp"
#include "svtr/tensor.hpp"

namespace svtr {

inline constexpr std::size_t kGlyphRows = 7;
inline constexpr std::size_t kGlyphCols = 5;

/// Row bitmaps, bit 4 = leftmost column.
using Glyph = std::array<std::uint8_t, kGlyphRows>;

/// Built-in glyph for a digit or ASCII letter (either case), if any.
std::optional<Glyph> glyph_for(std::string_view symbol);

struct RenderStyle {
  std::size_t scale = 0;  // 0 picks the largest scale that fits
  std::size_t x_jitter = 2;
  std::size_t y_jitter = 1;
  double contrast = 0.7;
  double noise_sigma = 0.02;
};

/// Dark glyphs on a light background, [3, height, width] with values k/255.
/// Throws a render error when the text does not fit at scale 1 (or at the
/// requested scale).
Tensor render_text(std::string_view text, std::size_t height, std::size_t width,
                   const RenderStyle& style, std::uint64_t seed);

struct LabeledSample {
  Tensor image;  // [3, H, W]
  LabelSeq label;
  std::string text;
  std::string id;
};

struct GenOptions {
  std::size_t count = 0;
  std::size_t min_len = 1;
  std::size_t max_len = 5;
  std::size_t height = 32;
  std::size_t width = 128;
  std::uint64_t seed = 42;
  RenderStyle style;
};

/// Uniform lengths in [min_len, max_len] and uniform symbols; a pure function
/// of (options, charset).
std::vector<LabeledSample> gen_dataset(const GenOptions& options, const Charset& charset);

}  // namespace svtr
