#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "svtr/ctc.hpp"

namespace svtr {

/// Splits UTF-8 text into one string per code point. Malformed bytes are a
/// parse error.
std::vector<std::string> utf8_symbols(std::string_view text);

/// Ordered symbol table; index 0 is the implicit blank.
class Charset {
 public:
  /// blank, 0-9, a-z (37 classes).
  static Charset english();
  /// One symbol per line, index order starting at 1.
  static Charset from_file(const std::filesystem::path& path);
  explicit Charset(std::vector<std::string> symbols);

  /// Class count including the blank.
  std::size_t size() const { return symbols_.size() + 1; }
  const std::string& symbol(int index) const;
  const std::vector<std::string>& symbols() const { return symbols_; }

  bool contains(std::string_view symbol) const;
  /// Lowercases ASCII input. Throws a parse error listing unknown symbols.
  LabelSeq encode(std::string_view text) const;
  std::string decode(const LabelSeq& label) const;
  /// Symbols of `text` that are not in the table, in order of first appearance.
  std::vector<std::string> unknown(std::string_view text) const;

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace svtr
