#include "svtr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "svtr/error.hpp"
#include "svtr/random.hpp"

namespace svtr {
namespace {

// 5x7 dot-matrix shapes: digits, then A-Z.
constexpr std::array<Glyph, 36> kFont = {{
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}, {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}, {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}, {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}, {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}, {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},
    {0x0E, 0x11, 0x11, 0x11, 0x1F, 0x11, 0x11}, {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E},
    {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}, {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C},
    {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}, {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10},
    {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}, {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11},
    {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}, {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C},
    {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}, {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F},
    {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}, {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11},
    {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10},
    {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}, {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11},
    {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}, {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04},
    {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04},
    {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}, {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11},
    {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}, {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F},
}};

std::size_t row_width(std::size_t glyphs, std::size_t scale) {
  return glyphs == 0 ? 0 : (glyphs * (kGlyphCols + 1) - 1) * scale;
}

float quantize(double v) {
  const long level = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<float>(level) / 255.0f;
}

}  // namespace

std::optional<Glyph> glyph_for(std::string_view symbol) {
  if (symbol.size() != 1) return std::nullopt;
  const char c = symbol[0];
  if (c >= '0' && c <= '9') return kFont[static_cast<std::size_t>(c - '0')];
  if (c >= 'a' && c <= 'z') return kFont[10 + static_cast<std::size_t>(c - 'a')];
  if (c >= 'A' && c <= 'Z') return kFont[10 + static_cast<std::size_t>(c - 'A')];
  return std::nullopt;
}

Tensor render_text(std::string_view text, std::size_t height, std::size_t width,
                   const RenderStyle& style, std::uint64_t seed) {
  SVTR_REQUIRE(height > 0 && width > 0, ErrorKind::kRender, "image size must be positive");
  SVTR_REQUIRE(style.contrast >= 0.0 && style.contrast <= 1.0 && style.noise_sigma >= 0.0,
               ErrorKind::kRender, "contrast must lie in [0,1] and noise_sigma be non-negative");
  std::vector<Glyph> glyphs;
  for (const auto& s : utf8_symbols(text)) {
    auto g = glyph_for(s);
    SVTR_REQUIRE(g.has_value(), ErrorKind::kRender, "no glyph for '" + s + "'");
    glyphs.push_back(*g);
  }

  std::size_t scale = style.scale;
  if (scale == 0) {
    scale = 1;
    while (kGlyphRows * (scale + 1) <= height && row_width(glyphs.size(), scale + 1) <= width) ++scale;
  }
  SVTR_REQUIRE(kGlyphRows * scale <= height && row_width(glyphs.size(), scale) <= width,
               ErrorKind::kRender,
               "\"" + std::string(text) + "\" needs " + std::to_string(row_width(glyphs.size(), scale)) +
                   "x" + std::to_string(kGlyphRows * scale) + " pixels at scale " +
                   std::to_string(scale) + ", image is " + std::to_string(width) + "x" +
                   std::to_string(height));

  Rng rng(seed);
  std::array<double, 3> background{};
  const double base = 0.85 + 0.1 * rng.uniform();
  for (auto& b : background) b = std::clamp(base + 0.04 * (rng.uniform() - 0.5), 0.0, 1.0);

  const std::size_t text_w = row_width(glyphs.size(), scale);
  const std::size_t text_h = kGlyphRows * scale;
  auto offset = [&rng](std::size_t slack, std::size_t jitter) {
    const long centre = static_cast<long>(slack / 2);
    const long j = static_cast<long>(jitter);
    const long shift = j == 0 ? 0 : static_cast<long>(rng.index(static_cast<std::size_t>(2 * j + 1))) - j;
    return static_cast<std::size_t>(std::clamp(centre + shift, 0L, static_cast<long>(slack)));
  };
  const std::size_t x0 = offset(width - text_w, style.x_jitter);
  const std::size_t y0 = offset(height - text_h, style.y_jitter);

  std::vector<std::uint8_t> ink(height * width, 0);
  for (std::size_t g = 0; g < glyphs.size(); ++g) {
    const std::size_t gx = x0 + g * (kGlyphCols + 1) * scale;
    for (std::size_t r = 0; r < kGlyphRows; ++r)
      for (std::size_t c = 0; c < kGlyphCols; ++c) {
        if (((glyphs[g][r] >> (kGlyphCols - 1 - c)) & 1u) == 0) continue;
        for (std::size_t dy = 0; dy < scale; ++dy)
          for (std::size_t dx = 0; dx < scale; ++dx)
            ink[(y0 + r * scale + dy) * width + gx + c * scale + dx] = 1;
      }
  }

  Tensor out(Shape{3, height, width});
  auto d = out.mutable_data();
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t p = 0; p < height * width; ++p) {
      double v = background[ch] - (ink[p] ? style.contrast : 0.0);
      if (style.noise_sigma > 0.0) v += style.noise_sigma * rng.normal();
      d[ch * height * width + p] = quantize(v);
    }
  return out;
}

std::vector<LabeledSample> gen_dataset(const GenOptions& options, const Charset& charset) {
  SVTR_REQUIRE(options.min_len >= 1 && options.min_len <= options.max_len, ErrorKind::kContract,
               "length range [" + std::to_string(options.min_len) + "," +
                   std::to_string(options.max_len) + "] is empty or starts below 1");
  for (const auto& s : charset.symbols())
    SVTR_REQUIRE(glyph_for(s).has_value(), ErrorKind::kRender, "no glyph for charset symbol '" + s + "'");
  Rng rng(options.seed);
  std::vector<LabeledSample> out;
  out.reserve(options.count);
  const std::size_t span = options.max_len - options.min_len + 1;
  for (std::size_t i = 0; i < options.count; ++i) {
    LabeledSample sample;
    const std::size_t len = options.min_len + rng.index(span);
    for (std::size_t k = 0; k < len; ++k) {
      const int c = 1 + static_cast<int>(rng.index(charset.symbols().size()));
      sample.label.indices.push_back(c);
      sample.text += charset.symbol(c);
    }
    char id[32];
    std::snprintf(id, sizeof id, "%06zu", i);
    sample.id = id;
    sample.image = render_text(sample.text, options.height, options.width, options.style,
                               splitmix64(options.seed ^ (0x9E3779B97F4A7C15ull * (i + 1))));
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace svtr
