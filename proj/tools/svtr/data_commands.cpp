#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "commands.hpp"
#include "svtr/checkpoint.hpp"
#include "svtr/dataset.hpp"
#include "svtr/synth.hpp"
#include "svtr/trainer.hpp"

namespace svtr::cli {

Charset load_charset(const std::string& path, const SvtrConfig& config) {
  Charset charset = path.empty() ? Charset::english() : Charset::from_file(path);
  SVTR_REQUIRE(charset.size() == config.charset_size, ErrorKind::kCompatibility,
               "charset has " + std::to_string(charset.size()) + " classes with blank, config expects " +
                   std::to_string(config.charset_size));
  return charset;
}

namespace {

LoadOptions load_options(const SvtrConfig& c) { return {c.input_h, c.input_w, c.max_label_len}; }

}  // namespace

void add_gen_data_command(CLI::App& app) {
  auto* cmd = app.add_subcommand("gen-data", "Render a synthetic labelled corpus");
  struct Args {
    std::string config = "svtr-t";
    std::string charset;
    std::string out;
    std::size_t count = 0;
    std::size_t min_len = 1;
    std::size_t max_len = 5;
    std::uint64_t seed = kDefaultSeed;
    double noise = 0.02;
    double contrast = 0.7;
  };
  auto a = std::make_shared<Args>();
  cmd->add_option("-c,--config", a->config, "Preset name or config file (sets image size)")->capture_default_str();
  cmd->add_option("--charset", a->charset, "Charset file, one symbol per line");
  cmd->add_option("-o,--out", a->out, "Output directory")->required();
  cmd->add_option("-n,--count", a->count, "Number of samples")->required();
  cmd->add_option("--min-len", a->min_len, "Shortest label")->capture_default_str();
  cmd->add_option("--max-len", a->max_len, "Longest label")->capture_default_str();
  cmd->add_option("--seed", a->seed, "Random seed")->capture_default_str();
  cmd->add_option("--noise", a->noise, "Gaussian noise sigma")->capture_default_str();
  cmd->add_option("--contrast", a->contrast, "Ink contrast in [0,1]")->capture_default_str();
  cmd->callback([a] {
    const SvtrConfig c = load_config(a->config);
    const Charset charset = load_charset(a->charset, c);
    SVTR_REQUIRE(a->max_len <= c.max_label_len, ErrorKind::kUsage,
                 "--max-len " + std::to_string(a->max_len) + " exceeds the config's max_label_len " +
                     std::to_string(c.max_label_len));
    GenOptions opt;
    opt.count = a->count;
    opt.min_len = a->min_len;
    opt.max_len = a->max_len;
    opt.height = c.input_h;
    opt.width = c.input_w;
    opt.seed = a->seed;
    opt.style.noise_sigma = a->noise;
    opt.style.contrast = a->contrast;
    const auto samples = gen_dataset(opt, charset);
    save_dataset(a->out, samples);
    std::printf("wrote %zu samples to %s\n", samples.size(), a->out.c_str());
  });
}

void add_train_command(CLI::App& app) {
  auto* cmd = app.add_subcommand("train", "Train on a labels.tsv corpus");
  struct Args {
    std::string config = "svtr-t";
    std::string charset;
    std::string data;
    std::string out;
    std::string log;
    std::size_t epochs = 10;
    std::size_t batch_size = 16;
    std::optional<double> lr;
    std::size_t warmup_epochs = 2;
    double weight_decay = 0.05;
    double clip_norm = 5.0;
    bool no_clip = false;
    double holdout = 0.1;
    bool eval_on_train = false;
    std::optional<double> target_accuracy;
    std::uint64_t seed = kDefaultSeed;
  };
  auto a = std::make_shared<Args>();
  cmd->add_option("-c,--config", a->config, "Preset name or config file")->capture_default_str();
  cmd->add_option("--charset", a->charset, "Charset file, one symbol per line");
  cmd->add_option("-d,--data", a->data, "Directory with labels.tsv")->required();
  cmd->add_option("-o,--out", a->out, "Directory for last.ckpt and best.ckpt")->required();
  cmd->add_option("--log", a->log, "Metrics log (JSON lines); default <out>/metrics.jsonl");
  cmd->add_option("--epochs", a->epochs, "Training epochs")->capture_default_str();
  cmd->add_option("-b,--batch-size", a->batch_size, "Mini-batch size")->capture_default_str();
  cmd->add_option("--lr", a->lr, "Peak learning rate; default 5e-4 * batch / 2048");
  cmd->add_option("--warmup-epochs", a->warmup_epochs, "Linear warm-up length")->capture_default_str();
  cmd->add_option("--weight-decay", a->weight_decay, "AdamW decoupled weight decay")->capture_default_str();
  cmd->add_option("--clip-norm", a->clip_norm, "Global gradient norm limit")->capture_default_str();
  cmd->add_flag("--no-clip", a->no_clip, "Disable gradient clipping");
  cmd->add_option("--holdout", a->holdout, "Fraction held out for per-epoch accuracy")->capture_default_str();
  cmd->add_flag("--eval-on-train", a->eval_on_train, "Measure accuracy on the training set instead");
  cmd->add_option("--target-accuracy", a->target_accuracy, "Stop once held-out accuracy reaches this");
  cmd->add_option("--seed", a->seed, "Random seed")->capture_default_str();
  cmd->callback([a] {
    const SvtrConfig c = load_config(a->config);
    const Charset charset = load_charset(a->charset, c);
    const auto all = load_dataset(a->data, charset, load_options(c));
    SVTR_REQUIRE(!all.empty(), ErrorKind::kUsage, "dataset " + a->data + " is empty");
    std::vector<LabeledSample> train_set = all, heldout = all;
    if (!a->eval_on_train) std::tie(train_set, heldout) = split_dataset(all, a->holdout, a->seed);

    TrainOptions opt;
    opt.epochs = a->epochs;
    opt.batch_size = a->batch_size;
    opt.seed = a->seed;
    opt.peak_lr = a->lr;
    opt.warmup_epochs = a->warmup_epochs;
    opt.adamw.weight_decay = a->weight_decay;
    opt.clip_norm = a->no_clip ? 0.0 : a->clip_norm;
    opt.target_accuracy = a->target_accuracy;
    opt.checkpoint_dir = a->out;
    opt.log_path = a->log.empty() ? std::filesystem::path(a->out) / "metrics.jsonl" : std::filesystem::path(a->log);
    std::filesystem::create_directories(a->out);

    SvtrModel model(c, a->seed);
    std::printf("training %s on %zu samples, %zu held out\n", c.name.c_str(), train_set.size(), heldout.size());
    const TrainLog log = train(model, train_set, heldout, opt, [](const EpochRecord& e) {
      std::printf("epoch %4zu  step %6llu  loss %.5f  accuracy %.4f  edit_sim %.4f\n", e.epoch,
                  static_cast<unsigned long long>(e.step), e.mean_loss, e.word_accuracy, e.norm_edit_sim);
      std::fflush(stdout);
    });
    std::printf("best accuracy %.4f\n", log.best_accuracy);
  });
}

void add_eval_command(CLI::App& app) {
  auto* cmd = app.add_subcommand("eval", "Word accuracy of a checkpoint on a corpus");
  struct Args {
    std::string config = "svtr-t";
    std::string charset;
    std::string checkpoint;
    std::string data;
    bool per_sample = false;
  };
  auto a = std::make_shared<Args>();
  cmd->add_option("-c,--config", a->config, "Preset name or config file")->capture_default_str();
  cmd->add_option("--charset", a->charset, "Charset file, one symbol per line");
  cmd->add_option("-k,--checkpoint", a->checkpoint, "Checkpoint file")->required();
  cmd->add_option("-d,--data", a->data, "Directory with labels.tsv")->required();
  cmd->add_flag("--per-sample", a->per_sample, "Print every prediction");
  cmd->callback([a] {
    const SvtrConfig c = load_config(a->config);
    const Charset charset = load_charset(a->charset, c);
    SvtrModel model(c, kDefaultSeed);
    restore_checkpoint(model, read_checkpoint(a->checkpoint));
    model.set_mode(Mode::kEval);
    const auto data = load_dataset(a->data, charset, load_options(c));
    const EvalResult r = evaluate(model, data);
    for (const auto& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    if (a->per_sample)
      for (const auto& s : r.samples)
        std::printf("%s\t%s\t%s\t%d\n", s.id.c_str(), charset.decode(s.truth).c_str(),
                    charset.decode(s.prediction).c_str(), s.exact ? 1 : 0);
    std::printf("samples %zu  word_accuracy %.4f  norm_edit_sim %.4f\n", data.size(), r.word_accuracy,
                r.norm_edit_sim);
  });
}

}  // namespace svtr::cli
