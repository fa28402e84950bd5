#include "svtr/trainer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include "svtr/checkpoint.hpp"
#include "svtr/error.hpp"
#include "svtr/graph.hpp"
#include "svtr/ops.hpp"
#include "svtr/random.hpp"

namespace svtr {

Tensor stack_images(const std::vector<LabeledSample>& samples, const std::vector<std::size_t>& indices) {
  SVTR_REQUIRE(!indices.empty(), ErrorKind::kContract, "cannot stack an empty batch");
  const Shape& first = samples[indices[0]].image.shape();
  Shape shape{indices.size()};
  shape.insert(shape.end(), first.begin(), first.end());
  Tensor out(shape);
  auto dst = out.mutable_data();
  const std::size_t per = numel(first);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& img = samples[indices[i]].image;
    SVTR_REQUIRE(img.shape() == first, ErrorKind::kShape,
                 "sample " + samples[indices[i]].id + " has image shape " + shape_str(img.shape()) +
                     ", expected " + shape_str(first));
    std::copy(img.data().begin(), img.data().end(), dst.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

EvalResult evaluate(SvtrModel& model, const std::vector<LabeledSample>& dataset, std::size_t batch_size) {
  EvalResult result;
  if (dataset.empty()) {
    result.warnings.push_back("empty dataset: word accuracy defined as 0");
    return result;
  }
  SVTR_REQUIRE(batch_size > 0, ErrorKind::kContract, "batch size must be positive");
  const Mode previous = model.mode();
  model.set_mode(Mode::kEval);
  double exact = 0.0, sim = 0.0;
  for (std::size_t begin = 0; begin < dataset.size(); begin += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, dataset.size() - begin));
    std::iota(idx.begin(), idx.end(), begin);
    const auto decoded = greedy_decode(model.forward(stack_images(dataset, idx)));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto& s = dataset[idx[i]];
      const EditScore score = edit_accuracy(decoded[i], s.label);
      result.samples.push_back({s.id, s.label, decoded[i], score.exact, score.norm_edit_sim});
      exact += score.exact ? 1.0 : 0.0;
      sim += score.norm_edit_sim;
    }
  }
  model.set_mode(previous);
  result.word_accuracy = exact / static_cast<double>(dataset.size());
  result.norm_edit_sim = sim / static_cast<double>(dataset.size());
  return result;
}

std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> split_dataset(
    const std::vector<LabeledSample>& dataset, double fraction, std::uint64_t seed) {
  SVTR_REQUIRE(fraction >= 0.0 && fraction < 1.0, ErrorKind::kContract,
               "held-out fraction must lie in [0,1)");
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(splitmix64(seed ^ 0x5851F42D4C957F2DULL));
  rng.shuffle(order.begin(), order.end());
  const auto held = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(dataset.size())));
  std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> out;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i + held < order.size() ? out.first : out.second).push_back(dataset[order[i]]);
  return out;
}

namespace {

class JsonLog {
 public:
  explicit JsonLog(const std::filesystem::path& path) {
    if (path.empty()) return;
    out_.open(path, std::ios::trunc);
    SVTR_REQUIRE(out_.good(), ErrorKind::kIo, "cannot write metrics log " + path.string());
  }
  void write(const nlohmann::json& record) {
    if (out_.is_open()) out_ << record.dump() << '\n' << std::flush;
  }

 private:
  std::ofstream out_;
};

}  // namespace

TrainLog train(SvtrModel& model, const std::vector<LabeledSample>& dataset,
               const std::vector<LabeledSample>& heldout, const TrainOptions& options,
               const EpochCallback& on_epoch) {
  SVTR_REQUIRE(!dataset.empty(), ErrorKind::kContract, "training needs a non-empty dataset");
  SVTR_REQUIRE(options.batch_size > 0 && options.epochs > 0, ErrorKind::kContract,
               "epochs and batch size must be positive");
  const std::size_t steps_t = model.config().sequence_length();
  for (const auto& s : dataset)
    SVTR_REQUIRE(ctc_min_steps(s.label) <= steps_t, ErrorKind::kFeasibility,
                 "sample " + s.id + ": label of length " + std::to_string(s.label.size()) +
                     " cannot be aligned to " + std::to_string(steps_t) + " steps");
  if (!options.checkpoint_dir.empty()) std::filesystem::create_directories(options.checkpoint_dir);

  const std::size_t per_epoch = (dataset.size() + options.batch_size - 1) / options.batch_size;
  LrSchedule schedule;
  schedule.peak_lr = options.peak_lr.value_or(peak_lr(options.batch_size));
  schedule.total_steps = per_epoch * options.epochs;
  schedule.warmup_steps =
      std::min<std::uint64_t>(options.warmup_steps.value_or(per_epoch * options.warmup_epochs),
                              schedule.total_steps);

  OptimState state = make_optim_state(model.parameters(), options.adamw);
  Rng rng(splitmix64(options.seed));
  JsonLog json(options.log_path);
  TrainLog log;
  bool have_best = false;
  std::vector<std::size_t> order(dataset.size());

  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    model.set_mode(Mode::kTraining);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const std::size_t begin = b * options.batch_size;
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                         order.begin() + static_cast<std::ptrdiff_t>(
                                             std::min(begin + options.batch_size, order.size())));
      std::vector<LabelSeq> labels;
      for (auto i : idx) labels.push_back(dataset[i].label);

      StepRecord rec;
      rec.epoch = epoch;
      rec.step = state.step;
      rec.lr = lr_at(schedule, state.step);
      {
        Graph graph;
        GraphScope scope(graph);
        model.zero_grad();
        const Tensor logits = model.forward(stack_images(dataset, idx));
        const Tensor loss = ctc_loss(log_softmax(logits, 2), labels);
        rec.loss = static_cast<double>(loss.item());
        SVTR_REQUIRE(std::isfinite(rec.loss), ErrorKind::kDiverged,
                     "non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                         std::to_string(rec.step) + " (lr " + std::to_string(rec.lr) + ")");
        backward(loss, graph);
      }
      rec.grad_norm = options.clip_norm > 0.0
                          ? clip_grad_norm(model.parameters(), options.clip_norm)
                          : clip_grad_norm(model.parameters(), std::numeric_limits<double>::infinity());
      adamw_step(model.parameters(), state, rec.lr);
      loss_sum += rec.loss;
      log.steps.push_back(rec);
      json.write({{"type", "step"}, {"epoch", rec.epoch}, {"step", rec.step}, {"lr", rec.lr},
                  {"loss", rec.loss}, {"grad_norm", rec.grad_norm}});
    }

    EpochRecord er;
    er.epoch = epoch;
    er.step = state.step;
    er.mean_loss = loss_sum / static_cast<double>(per_epoch);
    const EvalResult eval = evaluate(model, heldout);
    er.word_accuracy = eval.word_accuracy;
    er.norm_edit_sim = eval.norm_edit_sim;
    log.epochs.push_back(er);
    json.write({{"type", "epoch"}, {"epoch", er.epoch}, {"step", er.step}, {"loss", er.mean_loss},
                {"accuracy", er.word_accuracy}, {"norm_edit_sim", er.norm_edit_sim}});

    const bool improved = !have_best || er.word_accuracy > log.best_accuracy;
    if (improved) {
      log.best_accuracy = er.word_accuracy;
      have_best = true;
    }
    if (!options.checkpoint_dir.empty()) {
      const std::map<std::string, double> metrics{{"loss", er.mean_loss},
                                                  {"accuracy", er.word_accuracy},
                                                  {"epoch", static_cast<double>(epoch)}};
      const Checkpoint ck = make_checkpoint(model, state.step, metrics);
      save_checkpoint(options.checkpoint_dir / "last.ckpt", ck);
      if (improved) save_checkpoint(options.checkpoint_dir / "best.ckpt", ck);
    }
    if (on_epoch) on_epoch(er);
    if (options.target_accuracy && er.word_accuracy >= *options.target_accuracy) break;
  }
  model.set_mode(Mode::kEval);
  return log;
}

}  // namespace svtr
