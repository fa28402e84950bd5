#include "svtr/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "svtr/error.hpp"

namespace svtr {
namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::size_t parse_size(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  SVTR_REQUIRE(ec == std::errc() && ptr == t.data() + t.size() && !t.empty(), ErrorKind::kParse,
               "config key '" + std::string(key) + "': expected a non-negative integer, got '" +
                   t + "'");
  return value;
}

double parse_double(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  // Accept "a/b" so rational ratios can be written exactly.
  if (auto slash = t.find('/'); slash != std::string::npos) {
    const double num = parse_double(key, t.substr(0, slash));
    const double den = parse_double(key, t.substr(slash + 1));
    SVTR_REQUIRE(den != 0.0, ErrorKind::kParse,
                 "config key '" + std::string(key) + "': zero denominator");
    return num / den;
  }
  std::istringstream in(t);
  double value = 0.0;
  in >> value;
  SVTR_REQUIRE(!in.fail() && in.eof(), ErrorKind::kParse,
               "config key '" + std::string(key) + "': expected a number, got '" + t + "'");
  return value;
}

std::array<std::size_t, 3> parse_triple(std::string_view key, std::string_view text) {
  std::string t = trim(text);
  if (!t.empty() && t.front() == '[' && t.back() == ']') t = t.substr(1, t.size() - 2);
  std::array<std::size_t, 3> out{};
  std::size_t count = 0, start = 0;
  while (start <= t.size()) {
    std::size_t comma = t.find(',', start);
    if (comma == std::string::npos) comma = t.size();
    SVTR_REQUIRE(count < 3, ErrorKind::kParse,
                 "config key '" + std::string(key) + "': expected exactly 3 values");
    out[count++] = parse_size(key, std::string_view(t).substr(start, comma - start));
    start = comma + 1;
  }
  SVTR_REQUIRE(count == 3, ErrorKind::kParse,
               "config key '" + std::string(key) + "': expected exactly 3 values");
  return out;
}

std::string format_triple(const std::array<std::size_t, 3>& v) {
  return std::to_string(v[0]) + "," + std::to_string(v[1]) + "," + std::to_string(v[2]);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

SvtrConfig make_preset(std::string name, std::array<std::size_t, 3> dims,
                       std::array<std::size_t, 3> depths, std::array<std::size_t, 3> heads,
                       std::size_t d3, std::string_view permutation) {
  SvtrConfig c;
  c.name = std::move(name);
  c.embed_dims = dims;
  c.depths = depths;
  c.heads = heads;
  c.combined_dim = d3;
  c.permutation = parse_permutation(permutation);
  return c;
}

}  // namespace

void SvtrConfig::validate() const {
  SVTR_REQUIRE(input_h % 4 == 0 && input_w % 4 == 0 && input_h > 0 && input_w > 0,
               ErrorKind::kGeometry,
               "input size " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                   " must be divisible by 4");
  // Both merging steps halve an even height, so H/4 must be divisible by 4.
  SVTR_REQUIRE(input_h % 16 == 0, ErrorKind::kGeometry,
               "input height " + std::to_string(input_h) +
                   " must be divisible by 16 so every merging step sees an even height");
  SVTR_REQUIRE(input_w / 4 >= max_label_len, ErrorKind::kGeometry,
               "input width " + std::to_string(input_w) + " gives " +
                   std::to_string(input_w / 4) + " positions, fewer than max_label_len " +
                   std::to_string(max_label_len));
  SVTR_REQUIRE(permutation.size() == total_blocks(), ErrorKind::kContract,
               "permutation has " + std::to_string(permutation.size()) +
                   " blocks but depths sum to " + std::to_string(total_blocks()));
  for (std::size_t s = 0; s < 3; ++s) {
    SVTR_REQUIRE(embed_dims[s] > 0 && heads[s] > 0 && embed_dims[s] % heads[s] == 0,
                 ErrorKind::kContract,
                 "stage " + std::to_string(s + 1) + ": dim " + std::to_string(embed_dims[s]) +
                     " is not divisible by " + std::to_string(heads[s]) + " heads");
    const double hidden = mlp_ratio * static_cast<double>(embed_dims[s]);
    SVTR_REQUIRE(mlp_ratio > 0.0 && std::abs(hidden - std::round(hidden)) < 1e-9,
                 ErrorKind::kContract,
                 "mlp_ratio " + format_double(mlp_ratio) + " times dim " +
                     std::to_string(embed_dims[s]) + " is not an integer");
  }
  SVTR_REQUIRE(embed_dims[0] % 2 == 0, ErrorKind::kContract,
               "embed_dims[0] must be even (patch embedding ramps through D0/2)");
  SVTR_REQUIRE(combined_dim > 0, ErrorKind::kContract, "combined_dim must be positive");
  SVTR_REQUIRE(charset_size >= 2, ErrorKind::kContract,
               "charset_size must be at least 2 (blank + one symbol)");
  SVTR_REQUIRE(max_label_len >= 1, ErrorKind::kContract, "max_label_len must be positive");
  SVTR_REQUIRE(window_h % 2 == 1 && window_w % 2 == 1, ErrorKind::kContract,
               "local window sides must be odd");
  SVTR_REQUIRE(dropout_rate >= 0.0 && dropout_rate < 1.0 && attn_dropout_rate >= 0.0 &&
                   attn_dropout_rate < 1.0,
               ErrorKind::kContract, "dropout rates must be in [0,1)");
}

std::size_t SvtrConfig::first_block(std::size_t stage) const {
  std::size_t start = 0;
  for (std::size_t s = 0; s < stage; ++s) start += depths[s];
  return start;
}

std::size_t SvtrConfig::mlp_hidden(std::size_t stage) const {
  return static_cast<std::size_t>(
      std::llround(mlp_ratio * static_cast<double>(embed_dims[stage])));
}

std::array<StageGeometry, 3> stage_geometry(const SvtrConfig& config) {
  const std::size_t w = config.input_w / 4;
  std::size_t h = config.input_h / 4;
  std::array<StageGeometry, 3> out{};
  for (std::size_t s = 0; s < 3; ++s) {
    out[s] = {h, w, config.embed_dims[s]};
    h = (h + 1) / 2;
  }
  return out;
}

std::vector<BlockKind> parse_permutation(std::string_view text) {
  std::vector<BlockKind> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(text[i])));
    if (c == ',' || c == ' ' || c == '[' || c == ']') {
      ++i;
      continue;
    }
    SVTR_REQUIRE(c == 'L' || c == 'G', ErrorKind::kParse,
                 "permutation '" + std::string(text) + "': unexpected character '" +
                     std::string(1, text[i]) + "'");
    ++i;
    std::size_t count = 0;
    bool has_count = false;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
      count = count * 10 + static_cast<std::size_t>(text[i] - '0');
      has_count = true;
      ++i;
    }
    if (!has_count) count = 1;
    out.insert(out.end(), count, c == 'L' ? BlockKind::kLocal : BlockKind::kGlobal);
  }
  return out;
}

std::string format_permutation(const std::vector<BlockKind>& permutation) {
  std::string out;
  std::size_t i = 0;
  while (i < permutation.size()) {
    std::size_t j = i;
    while (j < permutation.size() && permutation[j] == permutation[i]) ++j;
    out += permutation[i] == BlockKind::kLocal ? 'L' : 'G';
    out += std::to_string(j - i);
    i = j;
  }
  return out;
}

std::vector<std::string> preset_names() {
  return {"svtr-t", "svtr-s", "svtr-b", "svtr-l", "svtr-micro"};
}

SvtrConfig preset(std::string_view name) {
  if (name == "svtr-t") return make_preset("svtr-t", {64, 128, 256}, {3, 6, 3}, {2, 4, 8}, 192, "L6G6");
  if (name == "svtr-s") return make_preset("svtr-s", {96, 192, 256}, {3, 6, 6}, {3, 6, 8}, 192, "L8G7");
  if (name == "svtr-b")
    return make_preset("svtr-b", {128, 256, 384}, {3, 6, 9}, {4, 8, 12}, 256, "L8G10");
  if (name == "svtr-l")
    return make_preset("svtr-l", {192, 256, 512}, {3, 9, 9}, {6, 8, 16}, 384, "L10G11");
  if (name == "svtr-micro") {
    SvtrConfig c = make_preset("svtr-micro", {16, 32, 48}, {1, 1, 1}, {2, 2, 2}, 64, "L1G2");
    c.input_h = 16;
    c.input_w = 64;
    c.max_label_len = 7;
    c.dropout_rate = 0.0;
    c.attn_dropout_rate = 0.0;
    return c;
  }
  fail(ErrorKind::kUsage, "unknown preset '" + std::string(name) + "'");
}

SvtrConfig parse_config(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::string base = "svtr-t";
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    SVTR_REQUIRE(eq != std::string::npos, ErrorKind::kParse,
                 "config line " + std::to_string(line_no) + ": expected 'key = value'");
    std::string key = trim(std::string_view(stripped).substr(0, eq));
    std::string value = trim(std::string_view(stripped).substr(eq + 1));
    if (key == "preset") {
      base = value;
    } else {
      entries.emplace_back(std::move(key), std::move(value));
    }
  }

  SvtrConfig c = preset(base);
  using Setter = std::function<void(SvtrConfig&, const std::string&)>;
  const std::map<std::string, Setter, std::less<>> setters{
      {"name", [](SvtrConfig& c, const std::string& v) { c.name = v; }},
      {"embed_dims", [](SvtrConfig& c, const std::string& v) { c.embed_dims = parse_triple("embed_dims", v); }},
      {"depths", [](SvtrConfig& c, const std::string& v) { c.depths = parse_triple("depths", v); }},
      {"heads", [](SvtrConfig& c, const std::string& v) { c.heads = parse_triple("heads", v); }},
      {"combined_dim", [](SvtrConfig& c, const std::string& v) { c.combined_dim = parse_size("combined_dim", v); }},
      {"permutation", [](SvtrConfig& c, const std::string& v) { c.permutation = parse_permutation(v); }},
      {"window_h", [](SvtrConfig& c, const std::string& v) { c.window_h = parse_size("window_h", v); }},
      {"window_w", [](SvtrConfig& c, const std::string& v) { c.window_w = parse_size("window_w", v); }},
      {"mlp_ratio", [](SvtrConfig& c, const std::string& v) { c.mlp_ratio = parse_double("mlp_ratio", v); }},
      {"charset_size", [](SvtrConfig& c, const std::string& v) { c.charset_size = parse_size("charset_size", v); }},
      {"input_h", [](SvtrConfig& c, const std::string& v) { c.input_h = parse_size("input_h", v); }},
      {"input_w", [](SvtrConfig& c, const std::string& v) { c.input_w = parse_size("input_w", v); }},
      {"max_label_len", [](SvtrConfig& c, const std::string& v) { c.max_label_len = parse_size("max_label_len", v); }},
      {"dropout_rate", [](SvtrConfig& c, const std::string& v) { c.dropout_rate = parse_double("dropout_rate", v); }},
      {"attn_dropout_rate", [](SvtrConfig& c, const std::string& v) { c.attn_dropout_rate = parse_double("attn_dropout_rate", v); }},
  };
  for (const auto& [key, value] : entries) {
    auto it = setters.find(key);
    SVTR_REQUIRE(it != setters.end(), ErrorKind::kParse, "unknown config key '" + key + "'");
    it->second(c, value);
  }
  return c;
}

std::string format_config(const SvtrConfig& c) {
  std::ostringstream out;
  out << "name = " << c.name << "\n"
      << "embed_dims = " << format_triple(c.embed_dims) << "\n"
      << "depths = " << format_triple(c.depths) << "\n"
      << "heads = " << format_triple(c.heads) << "\n"
      << "combined_dim = " << c.combined_dim << "\n"
      << "permutation = " << format_permutation(c.permutation) << "\n"
      << "window_h = " << c.window_h << "\n"
      << "window_w = " << c.window_w << "\n"
      << "mlp_ratio = " << format_double(c.mlp_ratio) << "\n"
      << "charset_size = " << c.charset_size << "\n"
      << "input_h = " << c.input_h << "\n"
      << "input_w = " << c.input_w << "\n"
      << "max_label_len = " << c.max_label_len << "\n"
      << "dropout_rate = " << format_double(c.dropout_rate) << "\n"
      << "attn_dropout_rate = " << format_double(c.attn_dropout_rate) << "\n";
  return out.str();
}

SvtrConfig load_config(const std::string& preset_or_path) {
  SvtrConfig config;
  const auto names = preset_names();
  if (std::find(names.begin(), names.end(), preset_or_path) != names.end()) {
    config = preset(preset_or_path);
  } else {
    SVTR_REQUIRE(std::filesystem::is_regular_file(preset_or_path), ErrorKind::kUsage,
                 "'" + preset_or_path + "' is neither a preset nor a readable config file");
    std::ifstream in(preset_or_path);
    SVTR_REQUIRE(in.good(), ErrorKind::kIo, "cannot open config file '" + preset_or_path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    config = parse_config(buffer.str());
  }
  config.validate();
  return config;
}

std::vector<std::string> config_differences(const SvtrConfig& a, const SvtrConfig& b) {
  std::vector<std::string> diff;
  auto check = [&diff](bool same, const char* field) {
    if (!same) diff.emplace_back(field);
  };
  check(a.embed_dims == b.embed_dims, "embed_dims");
  check(a.depths == b.depths, "depths");
  check(a.heads == b.heads, "heads");
  check(a.combined_dim == b.combined_dim, "combined_dim");
  check(a.permutation == b.permutation, "permutation");
  check(a.window_h == b.window_h, "window_h");
  check(a.window_w == b.window_w, "window_w");
  check(a.mlp_ratio == b.mlp_ratio, "mlp_ratio");
  check(a.charset_size == b.charset_size, "charset_size");
  check(a.input_h == b.input_h, "input_h");
  check(a.input_w == b.input_w, "input_w");
  check(a.max_label_len == b.max_label_len, "max_label_len");
  check(a.dropout_rate == b.dropout_rate, "dropout_rate");
  check(a.attn_dropout_rate == b.attn_dropout_rate, "attn_dropout_rate");
  return diff;
}

}  // namespace svtr
