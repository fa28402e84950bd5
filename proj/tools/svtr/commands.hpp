#pragma once

#include <CLI11.hpp>

#include <cstdint>
#include <string>

#include "svtr/charset.hpp"
#include "svtr/config.hpp"

namespace svtr::cli {

void add_params_command(CLI::App& app);
void add_flops_command(CLI::App& app);
void add_gen_data_command(CLI::App& app);
void add_train_command(CLI::App& app);
void add_eval_command(CLI::App& app);
void add_infer_command(CLI::App& app);
void add_attn_dump_command(CLI::App& app);
void add_gradcheck_command(CLI::App& app);

/// Default English set, or the file's symbols; must agree with the config's
/// class count.
Charset load_charset(const std::string& path, const SvtrConfig& config);

inline constexpr std::uint64_t kDefaultSeed = 42;

}  // namespace svtr::cli
