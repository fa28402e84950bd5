#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "svtr/charset.hpp"
#include "svtr/synth.hpp"

namespace svtr {

struct LoadOptions {
  std::size_t height = 32;
  std::size_t width = 128;
  std::size_t max_label_len = 25;
};

/// Reads `dir/labels.tsv` (image path TAB text per line, paths relative to
/// dir) and the referenced PGM/PPM files, in file order.
std::vector<LabeledSample> load_dataset(const std::filesystem::path& dir, const Charset& charset,
                                        const LoadOptions& options);

/// Writes `dir/images/<id>.ppm` plus `dir/labels.tsv`, the layout
/// load_dataset reads.
void save_dataset(const std::filesystem::path& dir, const std::vector<LabeledSample>& samples);

}  // namespace svtr
