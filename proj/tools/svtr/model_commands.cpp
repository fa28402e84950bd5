#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "commands.hpp"
#include "svtr/checkpoint.hpp"
#include "svtr/ctc.hpp"
#include "svtr/image.hpp"
#include "svtr/model.hpp"

namespace svtr::cli {
namespace {

SvtrModel load_for_inference(const SvtrConfig& config, const std::string& checkpoint) {
  const Checkpoint ck = read_checkpoint(checkpoint);
  SvtrModel model(config, kDefaultSeed);
  restore_checkpoint(model, ck);
  model.set_mode(Mode::kEval);
  return model;
}

Tensor load_image(const std::string& path, const SvtrConfig& c) {
  return image_to_tensor(read_pnm(path), c.input_h, c.input_w);
}

// Step at which the index-th character of the collapsed path starts.
std::size_t character_step(const std::vector<int>& path, std::size_t index) {
  std::size_t seen = 0;
  int previous = -1;
  for (std::size_t t = 0; t < path.size(); ++t) {
    if (path[t] != previous && path[t] != kBlank) {
      if (seen == index) return t;
      ++seen;
    }
    previous = path[t];
  }
  fail(ErrorKind::kIndex, "character " + std::to_string(index) + " out of range, the prediction has " +
                              std::to_string(seen) + " characters");
}

}  // namespace

void add_infer_command(CLI::App& app) {
  auto* cmd = app.add_subcommand("infer", "Decode images with a trained checkpoint");
  struct Args {
    std::string config = "svtr-t";
    std::string charset;
    std::string checkpoint;
    std::vector<std::string> images;
    std::string dump_logits;
  };
  auto a = std::make_shared<Args>();
  cmd->add_option("-c,--config", a->config, "Preset name or config file")->capture_default_str();
  cmd->add_option("--charset", a->charset, "Charset file, one symbol per line");
  cmd->add_option("-k,--checkpoint", a->checkpoint, "Checkpoint file")->required();
  cmd->add_option("-i,--image", a->images, "PGM/PPM image(s)")->required();
  cmd->add_option("--dump-logits", a->dump_logits, "Write per-step logits as TSV");
  cmd->callback([a] {
    const SvtrConfig c = load_config(a->config);
    const Charset charset = load_charset(a->charset, c);
    SvtrModel model = load_for_inference(c, a->checkpoint);
    std::vector<Tensor> images;
    for (const auto& path : a->images) images.push_back(load_image(path, c));

    std::vector<std::string> lines;
    std::string logits_tsv;
    for (std::size_t i = 0; i < images.size(); ++i) {
      const Tensor& img = images[i];
      const Tensor logits = model.forward(Tensor(Shape{1, 3, c.input_h, c.input_w},
                                                 std::vector<float>(img.data().begin(), img.data().end())));
      const std::string id = std::filesystem::path(a->images[i]).stem().string();
      lines.push_back(id + "\t" + charset.decode(greedy_decode(logits)[0]));
      const std::size_t steps = logits.dim(1), classes = logits.dim(2);
      for (std::size_t t = 0; t < steps && !a->dump_logits.empty(); ++t) {
        logits_tsv += id + "\t" + std::to_string(t);
        for (std::size_t k = 0; k < classes; ++k) {
          char buf[32];
          std::snprintf(buf, sizeof buf, "\t%.9g", static_cast<double>(logits.data()[t * classes + k]));
          logits_tsv += buf;
        }
        logits_tsv += '\n';
      }
    }
    if (!a->dump_logits.empty()) {
      std::ofstream out(a->dump_logits);
      SVTR_REQUIRE(out.good(), ErrorKind::kIo, "cannot write " + a->dump_logits);
      out << logits_tsv;
    }
    for (const auto& line : lines) std::printf("%s\n", line.c_str());
  });
}

void add_attn_dump_command(CLI::App& app) {
  auto* cmd = app.add_subcommand("attn-dump", "Write attention maps of one block as PGM heatmaps");
  struct Args {
    std::string config = "svtr-t";
    std::string checkpoint;
    std::string image;
    std::string out = ".";
    std::size_t stage = 1;
    std::size_t block = 0;
    std::optional<std::size_t> head;
    std::optional<std::size_t> query;
    std::optional<std::size_t> character;
  };
  auto a = std::make_shared<Args>();
  cmd->add_option("-c,--config", a->config, "Preset name or config file")->capture_default_str();
  cmd->add_option("-k,--checkpoint", a->checkpoint, "Checkpoint file")->required();
  cmd->add_option("-i,--image", a->image, "PGM/PPM image")->required();
  cmd->add_option("-o,--out", a->out, "Output directory")->capture_default_str();
  cmd->add_option("--stage", a->stage, "Stage, 1..3")->capture_default_str();
  cmd->add_option("--block", a->block, "Block within the stage, from 0")->capture_default_str();
  cmd->add_option("--head", a->head, "Head, from 0; all heads when omitted");
  auto* q = cmd->add_option("--query", a->query, "Query token, row-major in the stage grid");
  auto* ch = cmd->add_option("--char", a->character,
                             "Use the middle-row query under the n-th predicted character (from 0)");
  q->excludes(ch);
  ch->excludes(q);
  cmd->callback([a] {
    SVTR_REQUIRE(a->query || a->character, ErrorKind::kUsage, "one of --query or --char is required");
    const SvtrConfig c = load_config(a->config);
    SvtrModel model = load_for_inference(c, a->checkpoint);
    const Tensor image = load_image(a->image, c);
    SVTR_REQUIRE(a->stage >= 1 && a->stage <= 3, ErrorKind::kIndex,
                 "stage " + std::to_string(a->stage) + " out of range 1..3");
    std::size_t query = a->query.value_or(0);
    if (a->character) {
      const Tensor logits = model.forward(reshape(image, Shape{1, 3, c.input_h, c.input_w}));
      const std::size_t t = character_step(best_path(logits)[0], *a->character);
      const auto geo = stage_geometry(c)[a->stage - 1];
      query = (geo.height / 2) * geo.width + t;
    }
    std::vector<std::size_t> heads;
    if (a->head) {
      heads.push_back(*a->head);
    } else {
      for (std::size_t h = 0; h < c.heads[a->stage - 1]; ++h) heads.push_back(h);
    }
    std::vector<std::pair<std::string, Image8>> files;
    const auto all = export_attention_heads(model, image, a->stage, a->block, query);
    for (std::size_t h : heads) {
      SVTR_REQUIRE(h < all.size(), ErrorKind::kIndex,
                   "head " + std::to_string(h) + " out of range for " + std::to_string(all.size()) + " heads");
      const AttentionMap& map = all[h];
      const double peak = *std::max_element(map.values.begin(), map.values.end());
      Image8 img{map.width, map.height, 1, std::vector<std::uint8_t>(map.values.size(), 0)};
      for (std::size_t i = 0; i < map.values.size(); ++i)
        img.pixels[i] = static_cast<std::uint8_t>(peak > 0.0 ? std::lround(255.0 * map.values[i] / peak) : 0);
      files.emplace_back("attn_s" + std::to_string(a->stage) + "_b" + std::to_string(a->block) + "_h" +
                             std::to_string(h) + "_q" + std::to_string(query) + ".pgm",
                         std::move(img));
    }
    std::filesystem::create_directories(a->out);
    for (const auto& [name, img] : files) {
      const auto path = std::filesystem::path(a->out) / name;
      write_pnm(path, img);
      std::printf("%s\n", path.string().c_str());
    }
  });
}

}  // namespace svtr::cli
