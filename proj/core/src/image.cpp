#include "svtr/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "svtr/error.hpp"

namespace svtr {
namespace {

class PnmReader {
 public:
  PnmReader(std::vector<char> bytes, std::string name) : bytes_(std::move(bytes)), name_(std::move(name)) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number() {
    skip_space_and_comments();
    SVTR_REQUIRE(pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_])),
                 ErrorKind::kParse, name_ + ": expected a number in the header");
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      v = v * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      SVTR_REQUIRE(v <= (1u << 24), ErrorKind::kParse, name_ + ": header value too large");
      ++pos_;
    }
    return v;
  }

  std::string magic() {
    SVTR_REQUIRE(bytes_.size() >= 2 && bytes_[0] == 'P', ErrorKind::kParse, name_ + ": not a PNM file");
    pos_ = 2;
    return std::string(bytes_.data(), 2);
  }

  // Exactly one whitespace byte separates the header from binary data.
  void end_header() {
    SVTR_REQUIRE(pos_ < bytes_.size() && std::isspace(static_cast<unsigned char>(bytes_[pos_])),
                 ErrorKind::kParse, name_ + ": malformed header");
    ++pos_;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  const char* cursor() const { return bytes_.data() + pos_; }

 private:
  std::vector<char> bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace

Image8 read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  SVTR_REQUIRE(in.good(), ErrorKind::kIo, "cannot open image " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  PnmReader reader(std::move(bytes), path.string());
  const std::string magic = reader.magic();
  SVTR_REQUIRE(magic == "P2" || magic == "P3" || magic == "P5" || magic == "P6", ErrorKind::kParse,
               path.string() + ": unsupported PNM type " + magic);
  Image8 img;
  img.channels = (magic == "P3" || magic == "P6") ? 3 : 1;
  img.width = reader.number();
  img.height = reader.number();
  const std::size_t maxval = reader.number();
  SVTR_REQUIRE(img.width > 0 && img.height > 0, ErrorKind::kParse, path.string() + ": empty image");
  SVTR_REQUIRE(maxval >= 1 && maxval <= 255, ErrorKind::kParse,
               path.string() + ": only 8-bit images are supported (maxval " +
                   std::to_string(maxval) + ")");
  const std::size_t count = img.width * img.height * img.channels;
  img.pixels.resize(count);
  auto rescale = [maxval](std::size_t v) {
    return static_cast<std::uint8_t>(maxval == 255 ? v : (v * 255 + maxval / 2) / maxval);
  };
  if (magic == "P5" || magic == "P6") {
    reader.end_header();
    SVTR_REQUIRE(reader.remaining() >= count, ErrorKind::kParse, path.string() + ": truncated pixel data");
    for (std::size_t i = 0; i < count; ++i)
      img.pixels[i] = rescale(static_cast<unsigned char>(reader.cursor()[i]));
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t v = reader.number();
      SVTR_REQUIRE(v <= maxval, ErrorKind::kParse, path.string() + ": sample exceeds maxval");
      img.pixels[i] = rescale(v);
    }
  }
  return img;
}

void write_pnm(const std::filesystem::path& path, const Image8& image) {
  SVTR_REQUIRE(image.channels == 1 || image.channels == 3, ErrorKind::kContract,
               "PNM output needs 1 or 3 channels");
  SVTR_REQUIRE(image.pixels.size() == image.width * image.height * image.channels,
               ErrorKind::kContract, "pixel buffer does not match image size");
  std::ofstream out(path, std::ios::binary);
  SVTR_REQUIRE(out.good(), ErrorKind::kIo, "cannot write image " + path.string());
  out << (image.channels == 1 ? "P5" : "P6") << '\n'
      << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  SVTR_REQUIRE(out.good(), ErrorKind::kIo, "failed writing " + path.string());
}

Tensor image_to_tensor(const Image8& image, std::size_t height, std::size_t width) {
  SVTR_REQUIRE(image.width > 0 && image.height > 0, ErrorKind::kContract, "empty image");
  Tensor out(Shape{3, height, width});
  auto d = out.mutable_data();
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = y * image.height / height;
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sx = x * image.width / width;
      for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t sc = image.channels == 1 ? 0 : c;
        d[(c * height + y) * width + x] = static_cast<float>(image.at(sy, sx, sc)) / 255.0f;
      }
    }
  }
  return out;
}

Image8 tensor_to_image(const Tensor& chw) {
  SVTR_REQUIRE(chw.rank() == 3 && (chw.dim(0) == 1 || chw.dim(0) == 3), ErrorKind::kShape,
               "expected [1|3, H, W], got " + shape_str(chw.shape()));
  Image8 img;
  img.channels = chw.dim(0);
  img.height = chw.dim(1);
  img.width = chw.dim(2);
  img.pixels.resize(chw.numel());
  auto d = chw.data();
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) {
        const float v = std::clamp(d[(c * img.height + y) * img.width + x], 0.0f, 1.0f);
        img.pixels[(y * img.width + x) * img.channels + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
  return img;
}

}  // namespace svtr
