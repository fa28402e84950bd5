#include <cstdio>
#include <map>
#include <memory>
#include <string>

#include "commands.hpp"
#include "svtr/audit.hpp"
#include "svtr/gradcheck.hpp"

namespace svtr::cli {
namespace {

std::string grouped(std::uint64_t n) {
  std::string digits = std::to_string(n), out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i > 0 && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

void print_header(const SvtrConfig& c) {
  std::printf("config: %s (input %zux%zu, %zu classes, permutation %s)\n", c.name.c_str(),
              c.input_h, c.input_w, c.charset_size, format_permutation(c.permutation).c_str());
}

}  // namespace

void add_params_command(CLI::App& app) {
  auto* cmd = app.add_subcommand("params", "Per-module parameter counts");
  auto config = std::make_shared<std::string>("svtr-t");
  cmd->add_option("-c,--config", *config, "Preset name or config file")->capture_default_str();
  cmd->callback([config] {
    const SvtrConfig c = load_config(*config);
    const ParamBreakdown b = param_breakdown(c);
    print_header(c);
    std::printf("%-26s %14s\n", "module", "params");
    for (const auto& [module, count] : b.modules)
      std::printf("%-26s %14s\n", module.c_str(), grouped(count).c_str());
    std::printf("%-26s %14s  (%.3f M)\n", "total w/o classifier", grouped(b.total).c_str(),
                static_cast<double>(b.total) / 1e6);
    std::printf("%-26s %14s\n", "classifier", grouped(b.classifier).c_str());
    std::printf("%-26s %14s  (%.3f M)\n", "total with classifier",
                grouped(b.total_with_classifier()).c_str(),
                static_cast<double>(b.total_with_classifier()) / 1e6);
    if (const auto ref = reference_size(c.name)) {
      const double m = static_cast<double>(b.total) / 1e6;
      std::printf("reference %.2f M, delta %+.2f%%\n", ref->params_m,
                  100.0 * (m - ref->params_m) / ref->params_m);
    }
  });
}

void add_flops_command(CLI::App& app) {
  auto* cmd = app.add_subcommand("flops", "Per-module multiply-accumulate counts");
  auto config = std::make_shared<std::string>("svtr-t");
  auto input_h = std::make_shared<std::size_t>(0);
  auto input_w = std::make_shared<std::size_t>(0);
  auto per_layer = std::make_shared<bool>(false);
  cmd->add_option("-c,--config", *config, "Preset name or config file")->capture_default_str();
  cmd->add_option("--input-h", *input_h, "Override the input height");
  cmd->add_option("--input-w", *input_w, "Override the input width");
  cmd->add_flag("--per-layer", *per_layer, "List every layer");
  cmd->callback([=] {
    SvtrConfig c = load_config(*config);
    if (*input_h) c.input_h = *input_h;
    if (*input_w) c.input_w = *input_w;
    c.validate();
    const FlopReport r = count_flops(c);
    print_header(c);
    std::map<std::string, std::uint64_t> by_module;
    std::vector<std::string> order;
    for (const auto& e : r.entries) {
      if (!by_module.count(e.module)) order.push_back(e.module);
      by_module[e.module] += e.macs;
      if (*per_layer)
        std::printf("  %-12s %-28s %-9s %14s\n", e.module.c_str(), e.layer.c_str(),
                    std::string(to_string(e.kind)).c_str(), grouped(e.macs).c_str());
    }
    std::printf("%-26s %16s\n", "module", "MACs");
    for (const auto& m : order) std::printf("%-26s %16s\n", m.c_str(), grouped(by_module[m]).c_str());
    std::printf("%-26s %16s\n", "attention (quadratic)", grouped(r.attention_macs).c_str());
    std::printf("%-26s %16s\n", "classifier (excluded)", grouped(r.classifier_macs).c_str());
    std::printf("total, 1 MAC = 1 FLOP:     %.4f G\n", static_cast<double>(r.total_macs) / 1e9);
    std::printf("total, 1 MAC = 2 FLOPs:    %.4f G\n", static_cast<double>(r.total_flops()) / 1e9);
    if (const auto ref = reference_size(c.name))
      std::printf("reference %.2f G (convention unstated)\n", ref->flops_g);
  });
}

void add_gradcheck_command(CLI::App& app) {
  auto* cmd = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  auto seed = std::make_shared<std::uint64_t>(kDefaultSeed);
  auto step = std::make_shared<double>(1e-3);
  cmd->add_option("--seed", *seed, "Random seed")->capture_default_str();
  cmd->add_option("--step", *step, "Central-difference step")->capture_default_str();
  cmd->callback([=] {
    GradCheckOptions opt;
    opt.seed = *seed;
    opt.step = *step;
    std::printf("%-24s %12s %12s %8s  %s\n", "op", "rel_err_f64", "rel_err_f32", "probes", "status");
    std::size_t failed = 0;
    for (const auto& r : gradcheck_suite(opt)) {
      const bool ok = r.passed();
      failed += ok ? 0 : 1;
      std::printf("%-24s %12.3e %12.3e %8zu  %s\n", r.name.c_str(), r.max_rel_f64, r.max_rel_f32,
                  r.checked, ok ? "ok" : "FAIL");
    }
    std::fflush(stdout);
    if (failed) fail(ErrorKind::kContract, std::to_string(failed) + " gradient checks failed");
  });
}

}  // namespace svtr::cli
