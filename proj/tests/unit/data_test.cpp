#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "svtr/charset.hpp"
#include "svtr/dataset.hpp"
#include "svtr/error.hpp"
#include "svtr/image.hpp"
#include "svtr/synth.hpp"
#include "temp_dir.hpp"

using namespace svtr;

namespace {

RenderStyle clean_style() {
  RenderStyle s;
  s.scale = 2;
  s.x_jitter = 0;
  s.y_jitter = 0;
  s.noise_sigma = 0.0;
  return s;
}

// Pixels noticeably darker than the background in channel 0.
std::size_t ink_pixels(const Tensor& img) {
  const std::size_t plane = img.dim(1) * img.dim(2);
  std::size_t n = 0;
  for (std::size_t i = 0; i < plane; ++i) n += img.data()[i] < 0.5f ? 1 : 0;
  return n;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

template <typename Fn>
std::string expect_error(Fn fn, ErrorKind kind) {
  try {
    fn();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
    return e.what();
  }
  ADD_FAILURE() << "no error thrown";
  return {};
}

}  // namespace

TEST(Font, CoversAlphanumericsWithDistinctGlyphs) {
  std::set<Glyph> seen;
  const Charset cs = Charset::english();
  for (const auto& s : cs.symbols()) {
    const auto g = glyph_for(s);
    ASSERT_TRUE(g.has_value()) << s;
    EXPECT_TRUE(seen.insert(*g).second) << s;
  }
  EXPECT_EQ(glyph_for("Q"), glyph_for("q"));
  EXPECT_FALSE(glyph_for("-").has_value());
}

TEST(Render, BlankTextGivesPlainBackground) {
  const Tensor img = render_text("", 16, 64, clean_style(), 3);
  EXPECT_EQ(img.shape(), (Shape{3, 16, 64}));
  EXPECT_EQ(ink_pixels(img), 0u);
  for (std::size_t c = 0; c < 3; ++c) {
    const float first = img.data()[c * 16 * 64];
    for (std::size_t i = 0; i < 16 * 64; ++i) ASSERT_EQ(img.data()[c * 16 * 64 + i], first);
  }
}

TEST(Render, DeterministicBoundedAndQuantized) {
  RenderStyle style;
  const Tensor a = render_text("ab12", 32, 128, style, 9), b = render_text("ab12", 32, 128, style, 9);
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  for (float v : a.data()) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
    const float k = v * 255.0f;
    ASSERT_NEAR(k, std::round(k), 1e-3f);
  }
  const Tensor c = render_text("ab13", 32, 128, style, 9);
  EXPECT_FALSE(std::equal(a.data().begin(), a.data().end(), c.data().begin()));
}

TEST(Render, NarrowGlyphsUseLessInk) {
  const RenderStyle s = clean_style();
  EXPECT_LT(ink_pixels(render_text("iii", 32, 128, s, 1)), ink_pixels(render_text("mmm", 32, 128, s, 1)));
}

TEST(Render, TooLongTextIsRenderError) {
  expect_error([] { render_text(std::string(30, 'a'), 16, 64, RenderStyle{}, 1); }, ErrorKind::kRender);
  RenderStyle big = clean_style();
  big.scale = 4;
  expect_error([&] { render_text("abcd", 32, 64, big, 1); }, ErrorKind::kRender);
}

TEST(Generate, ReproducibleAndCoversCharset) {
  const Charset cs = Charset::english();
  GenOptions o;
  o.height = 16;
  o.width = 64;
  o.max_len = 5;
  o.count = 0;
  EXPECT_TRUE(gen_dataset(o, cs).empty());

  o.count = 20;
  const auto a = gen_dataset(o, cs), b = gen_dataset(o, cs);
  o.seed += 1;
  const auto c = gen_dataset(o, cs);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].text, b[i].text);
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_TRUE(std::equal(a[i].image.data().begin(), a[i].image.data().end(), b[i].image.data().begin()));
    differs |= a[i].text != c[i].text;
    EXPECT_GE(a[i].label.size(), 1u);
    EXPECT_LE(a[i].label.size(), 5u);
    EXPECT_EQ(cs.encode(a[i].text), a[i].label);
  }
  EXPECT_TRUE(differs);

  o.count = 1000;
  o.seed = 42;
  std::set<int> symbols;
  for (const auto& s : gen_dataset(o, cs)) symbols.insert(s.label.indices.begin(), s.label.indices.end());
  EXPECT_EQ(symbols.size(), 36u);
}

TEST(Pnm, RoundTripsAllFormats) {
  oracle::TempDir dir("pnm");
  Image8 rgb{3, 2, 3, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 255}};
  write_pnm(dir / "a.ppm", rgb);
  const Image8 back = read_pnm(dir / "a.ppm");
  EXPECT_EQ(back.pixels, rgb.pixels);
  EXPECT_EQ(back.channels, 3u);

  write_text(dir / "b.pgm", "P2\n# comment\n2 2\n255\n0 64\n128 255\n");
  const Image8 gray = read_pnm(dir / "b.pgm");
  EXPECT_EQ(gray.pixels, (std::vector<std::uint8_t>{0, 64, 128, 255}));
  const Tensor t = image_to_tensor(gray, 2, 2);
  EXPECT_EQ(t.shape(), (Shape{3, 2, 2}));
  EXPECT_FLOAT_EQ(t.data()[4 + 1], 64.0f / 255.0f);

  write_text(dir / "c.pgm", "P5\n2 2\n65535\n");
  expect_error([&] { read_pnm(dir / "c.pgm"); }, ErrorKind::kParse);
  expect_error([&] { read_pnm(dir / "missing.pgm"); }, ErrorKind::kIo);
}

TEST(Dataset, SaveLoadRoundTripIsExact) {
  const Charset cs = Charset::english();
  GenOptions o;
  o.count = 8;
  o.height = 16;
  o.width = 64;
  const auto samples = gen_dataset(o, cs);
  oracle::TempDir dir("ds");
  save_dataset(dir.path(), samples);
  const auto loaded = load_dataset(dir.path(), cs, LoadOptions{16, 64, 7});
  ASSERT_EQ(loaded.size(), samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    EXPECT_EQ(loaded[i].label, samples[i].label);
    EXPECT_EQ(loaded[i].id, samples[i].id);
    EXPECT_TRUE(std::equal(loaded[i].image.data().begin(), loaded[i].image.data().end(),
                           samples[i].image.data().begin()));
  }
}

TEST(Dataset, EmptyAndMalformedInputs) {
  const Charset cs = Charset::english();
  oracle::TempDir dir("bad");
  write_text(dir / "labels.tsv", "");
  EXPECT_TRUE(load_dataset(dir.path(), cs, LoadOptions{16, 64, 7}).empty());

  write_pnm(dir / "x.pgm", Image8{4, 4, 1, std::vector<std::uint8_t>(16, 200)});
  write_text(dir / "labels.tsv", "x.pgm\th\xc3\xa9llo\n");
  const std::string msg = expect_error([&] { load_dataset(dir.path(), cs, LoadOptions{16, 64, 7}); },
                                       ErrorKind::kParse);
  EXPECT_NE(msg.find("\xc3\xa9"), std::string::npos) << msg;
  EXPECT_NE(msg.find("labels.tsv:1:"), std::string::npos) << msg;

  write_text(dir / "labels.tsv", "x.pgm\tabc\nno tab here\n");
  EXPECT_NE(expect_error([&] { load_dataset(dir.path(), cs, LoadOptions{16, 64, 7}); }, ErrorKind::kParse)
                .find("labels.tsv:2:"),
            std::string::npos);
  write_text(dir / "labels.tsv", "x.pgm\tabcdefgh\n");
  expect_error([&] { load_dataset(dir.path(), cs, LoadOptions{16, 64, 7}); }, ErrorKind::kParse);
  write_text(dir / "labels.tsv", "y.pgm\tabc\n");
  expect_error([&] { load_dataset(dir.path(), cs, LoadOptions{16, 64, 7}); }, ErrorKind::kIo);
  write_text(dir / "labels.tsv", "x.pgm\tAbC\n");
  const auto ok = load_dataset(dir.path(), cs, LoadOptions{16, 64, 7});
  ASSERT_EQ(ok.size(), 1u);
  EXPECT_EQ(cs.decode(ok[0].label), "abc");
  EXPECT_EQ(ok[0].image.shape(), (Shape{3, 16, 64}));
  for (float v : ok[0].image.data()) EXPECT_FLOAT_EQ(v, 200.0f / 255.0f);
}

TEST(Charset, FromFile) {
  oracle::TempDir dir("cs");
  write_text(dir / "cs.txt", "x\ny\n\xc3\xa9\n");
  const Charset cs = Charset::from_file(dir / "cs.txt");
  EXPECT_EQ(cs.size(), 4u);
  EXPECT_EQ(cs.encode("y\xc3\xa9").indices, (std::vector<int>{2, 3}));
  write_text(dir / "dup.txt", "x\nx\n");
  expect_error([&] { Charset::from_file(dir / "dup.txt"); }, ErrorKind::kContract);
}
