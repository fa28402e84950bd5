#include "svtr/charset.hpp"

#include <algorithm>
#include <fstream>

#include "svtr/error.hpp"

namespace svtr {

std::vector<std::string> utf8_symbols(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (lead >= 0xF0 && lead < 0xF8) len = 4;
    else if (lead >= 0xE0) len = 3;
    else if (lead >= 0xC0) len = 2;
    else if (lead >= 0x80) fail(ErrorKind::kParse, "malformed UTF-8 at byte " + std::to_string(i));
    SVTR_REQUIRE(i + len <= text.size(), ErrorKind::kParse, "truncated UTF-8 sequence");
    for (std::size_t k = 1; k < len; ++k)
      SVTR_REQUIRE((static_cast<unsigned char>(text[i + k]) & 0xC0) == 0x80, ErrorKind::kParse,
                   "malformed UTF-8 at byte " + std::to_string(i + k));
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

Charset Charset::english() {
  std::vector<std::string> symbols;
  for (char c = '0'; c <= '9'; ++c) symbols.emplace_back(1, c);
  for (char c = 'a'; c <= 'z'; ++c) symbols.emplace_back(1, c);
  return Charset(std::move(symbols));
}

Charset Charset::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  SVTR_REQUIRE(in.good(), ErrorKind::kIo, "cannot open charset file " + path.string());
  std::vector<std::string> symbols;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    SVTR_REQUIRE(utf8_symbols(line).size() == 1, ErrorKind::kParse,
                 path.string() + ":" + std::to_string(line_no) + ": expected exactly one symbol");
    symbols.push_back(line);
  }
  return Charset(std::move(symbols));
}

Charset::Charset(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
  SVTR_REQUIRE(!symbols_.empty(), ErrorKind::kContract, "charset needs at least one symbol");
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    SVTR_REQUIRE(utf8_symbols(symbols_[i]).size() == 1, ErrorKind::kContract,
                 "charset entry '" + symbols_[i] + "' is not a single symbol");
    const bool inserted = index_.emplace(symbols_[i], static_cast<int>(i) + 1).second;
    SVTR_REQUIRE(inserted, ErrorKind::kContract, "duplicate charset symbol '" + symbols_[i] + "'");
  }
}

const std::string& Charset::symbol(int index) const {
  SVTR_REQUIRE(index >= 1 && static_cast<std::size_t>(index) <= symbols_.size(), ErrorKind::kIndex,
               "class index " + std::to_string(index) + " outside [1," +
                   std::to_string(symbols_.size()) + "]");
  return symbols_[static_cast<std::size_t>(index) - 1];
}

bool Charset::contains(std::string_view symbol) const {
  return index_.count(std::string(symbol)) != 0;
}

namespace {

std::string fold(std::string s) {
  if (s.size() == 1 && s[0] >= 'A' && s[0] <= 'Z') s[0] = static_cast<char>(s[0] - 'A' + 'a');
  return s;
}

}  // namespace

std::vector<std::string> Charset::unknown(std::string_view text) const {
  std::vector<std::string> out;
  for (auto& s : utf8_symbols(text)) {
    if (contains(fold(s))) continue;
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  }
  return out;
}

LabelSeq Charset::encode(std::string_view text) const {
  const auto missing = unknown(text);
  if (!missing.empty()) {
    std::string list;
    for (const auto& s : missing) list += (list.empty() ? "'" : ", '") + s + "'";
    fail(ErrorKind::kParse, "unknown characters " + list + " in \"" + std::string(text) + "\"");
  }
  LabelSeq out;
  for (auto& s : utf8_symbols(text)) out.indices.push_back(index_.at(fold(s)));
  return out;
}

std::string Charset::decode(const LabelSeq& label) const {
  std::string out;
  for (int c : label.indices) out += symbol(c);
  return out;
}

}  // namespace svtr
