#include "svtr/dataset.hpp"

#include <fstream>
#include <string>

#include "svtr/error.hpp"
#include "svtr/image.hpp"

namespace svtr {

std::vector<LabeledSample> load_dataset(const std::filesystem::path& dir, const Charset& charset,
                                        const LoadOptions& options) {
  const auto tsv = dir / "labels.tsv";
  std::ifstream in(tsv);
  SVTR_REQUIRE(in.good(), ErrorKind::kIo, "cannot open " + tsv.string());
  std::vector<LabeledSample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = tsv.string() + ":" + std::to_string(line_no) + ": ";
    const auto tab = line.find('\t');
    SVTR_REQUIRE(tab != std::string::npos && tab > 0 && line.find('\t', tab + 1) == std::string::npos,
                 ErrorKind::kParse, where + "expected <image path> TAB <text>");
    const std::string rel = line.substr(0, tab);
    const std::string text = line.substr(tab + 1);
    SVTR_REQUIRE(!text.empty(), ErrorKind::kParse, where + "empty label");

    const auto missing = charset.unknown(text);
    if (!missing.empty()) {
      std::string list;
      for (const auto& s : missing) list += (list.empty() ? "'" : ", '") + s + "'";
      fail(ErrorKind::kParse, where + "label \"" + text + "\" has unknown characters " + list);
    }
    LabeledSample sample;
    sample.label = charset.encode(text);
    SVTR_REQUIRE(sample.label.size() <= options.max_label_len, ErrorKind::kParse,
                 where + "label length " + std::to_string(sample.label.size()) +
                     " exceeds the maximum of " + std::to_string(options.max_label_len));
    sample.text = charset.decode(sample.label);
    const auto image_path = dir / rel;
    SVTR_REQUIRE(std::filesystem::exists(image_path), ErrorKind::kIo,
                 where + "missing image " + image_path.string());
    sample.image = image_to_tensor(read_pnm(image_path), options.height, options.width);
    sample.id = std::filesystem::path(rel).stem().string();
    out.push_back(std::move(sample));
  }
  return out;
}

void save_dataset(const std::filesystem::path& dir, const std::vector<LabeledSample>& samples) {
  std::filesystem::create_directories(dir / "images");
  std::ofstream tsv(dir / "labels.tsv");
  SVTR_REQUIRE(tsv.good(), ErrorKind::kIo, "cannot write " + (dir / "labels.tsv").string());
  for (const auto& s : samples) {
    const std::string rel = "images/" + s.id + ".ppm";
    write_pnm(dir / rel, tensor_to_image(s.image));
    tsv << rel << '\t' << s.text << '\n';
  }
  SVTR_REQUIRE(tsv.good(), ErrorKind::kIo, "failed writing " + (dir / "labels.tsv").string());
}

}  // namespace svtr
