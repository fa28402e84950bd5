// Runs every acceptance criterion and prints one PASS/FAIL line per
// criterion. Exit status is nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "svtr/attention_mask.hpp"
#include "svtr/audit.hpp"
#include "svtr/charset.hpp"
#include "svtr/checkpoint.hpp"
#include "svtr/ctc.hpp"
#include "svtr/error.hpp"
#include "svtr/gradcheck.hpp"
#include "svtr/model.hpp"
#include "svtr/optim.hpp"
#include "svtr/synth.hpp"
#include "svtr/trainer.hpp"
#include "temp_dir.hpp"

using namespace svtr;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

Outcome check_params() {
  const std::pair<const char*, double> published[] = {
      {"svtr-t", 4.15}, {"svtr-s", 8.45}, {"svtr-b", 22.66}, {"svtr-l", 38.81}};
  std::ostringstream d;
  bool ok = true;
  for (const auto& [name, ref] : published) {
    const ParamBreakdown b = param_breakdown(preset(name));
    std::size_t sum = 0;
    for (const auto& [m, n] : b.modules) sum += n;
    const double m = static_cast<double>(b.total) / 1e6;
    const double rel = (m - ref) / ref;
    ok &= std::abs(rel) <= 0.10 && sum == b.total;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s %.3fM (%+.2f%%%s) ", name, m, 100.0 * rel, sum == b.total ? "" : ", rows differ");
    d << buf;
  }
  return {ok, d.str()};
}

Outcome check_flops() {
  const FlopReport r = count_flops(preset("svtr-t"));
  const double macs_g = static_cast<double>(r.total_macs) / 1e9;
  const double flops_g = static_cast<double>(r.total_flops()) / 1e9;
  const bool one_mac = macs_g >= 0.23 && macs_g <= 0.35;
  const bool two_flop = flops_g >= 0.46 && flops_g <= 0.70;
  SvtrConfig narrow = preset("svtr-t");
  narrow.input_w = 100;
  const double narrow_g = static_cast<double>(count_flops(narrow).total_macs) / 1e9;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "32x128: %.4f G (1 MAC = 1 FLOP), %.4f G (2 FLOPs per MAC), attention %.4f G MAC; "
                "diagnostic 32x100: %.4f G MAC",
                macs_g, flops_g, static_cast<double>(r.attention_macs) / 1e9, narrow_g);
  return {one_mac || two_flop, buf};
}

Outcome check_shapes() {
  SvtrModel model(preset("svtr-t"), 42);
  model.set_mode(Mode::kEval);
  Tensor x(Shape{1, 3, 32, 128}, 0.5f);
  ForwardTrace trace;
  const Tensor logits = model.forward(x, &trace);
  const bool ok = logits.shape() == Shape{1, 32, 37} && trace.stage_inputs[0][1] == 256 &&
                  trace.stage_inputs[1][1] == 128 && trace.stage_inputs[2][1] == 64;
  return {ok, "logits " + shape_str(logits.shape()) + ", tokens " + std::to_string(trace.stage_inputs[0][1]) + "/" +
                  std::to_string(trace.stage_inputs[1][1]) + "/" + std::to_string(trace.stage_inputs[2][1])};
}

Outcome check_gradient_suite() {
  const auto results = gradcheck_suite(GradCheckOptions{});
  double worst64 = 0.0, worst32 = 0.0;
  std::string failed;
  for (const auto& r : results) {
    worst64 = std::max(worst64, r.max_rel_f64);
    worst32 = std::max(worst32, r.max_rel_f32);
    if (!r.passed()) failed += " " + r.name;
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu checks, worst f64 %.2e, worst f32 %.2e", results.size(), worst64, worst32);
  return {failed.empty(), buf + (failed.empty() ? std::string() : "; failing:" + failed)};
}

Outcome check_ctc() {
  std::mt19937 gen(2024);
  std::normal_distribution<double> normal(0.0, 2.0);
  std::size_t cases = 0;
  double worst = 0.0;
  for (int rep = 0; rep < 4; ++rep)
    for (std::size_t steps = 1; steps <= 6; ++steps)
      for (std::size_t classes = 2; classes <= 4; ++classes)
        for (std::size_t len = 0; len <= 3 && len <= steps; ++len) {
          std::vector<double> lp(steps * classes);
          for (std::size_t t = 0; t < steps; ++t) {
            double z = 0.0;
            for (std::size_t k = 0; k < classes; ++k) z += std::exp(lp[t * classes + k] = normal(gen));
            for (std::size_t k = 0; k < classes; ++k) lp[t * classes + k] -= std::log(z);
          }
          std::vector<int> label(len);
          for (auto& c : label) c = 1 + static_cast<int>(gen() % (classes - 1));
          if (ctc_min_steps(LabelSeq{label}) > steps) continue;
          const double brute = oracle::brute_force_ctc_probability(lp, steps, classes, label);
          TensorD batch(Shape{1, steps, classes}, lp);
          const double ours = std::exp(-ctc_loss(batch, {LabelSeq{label}}).item());
          worst = std::max(worst, std::abs(brute - ours));
          ++cases;
        }
  std::size_t mismatches = 0;
  std::normal_distribution<float> nf;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t steps = 1 + gen() % 8, classes = 2 + gen() % 5;
    Tensor logits(Shape{1, steps, classes});
    for (auto& v : logits.mutable_data()) v = std::round(nf(gen) * 2.0f) / 2.0f;  // coarse values force ties
    const std::vector<float> flat(logits.data().begin(), logits.data().end());
    if (greedy_decode(logits)[0].indices != oracle::collapse(oracle::argmax_path(flat, steps, classes))) ++mismatches;
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu loss cases, worst |p - p_brute| %.2e; greedy mismatches %zu/1000", cases, worst,
                mismatches);
  return {cases >= 200 && worst < 1e-6 && mismatches == 0, buf};
}

Outcome check_mask() {
  bool ok = true;
  std::size_t entries = 0;
  for (std::size_t h : {8, 4, 2}) {
    const AttentionMask m = local_attention_mask(h, 32, 7, 11);
    const auto ref = oracle::local_mask(h, 32, 7, 11);
    for (std::size_t q = 0; q < h * 32; ++q)
      for (std::size_t k = 0; k < h * 32; ++k, ++entries) ok &= m.allowed(q, k) == ref[q][k];
  }
  const AttentionMask m = local_attention_mask(8, 32, 7, 11);
  const std::size_t interior = m.degree(4 * 32 + 16), corner = m.degree(0);
  ok &= interior == 77 && corner == 24;
  return {ok, std::to_string(entries) + " entries compared, interior degree " + std::to_string(interior) +
                  ", corner degree " + std::to_string(corner)};
}

Outcome check_saturation() {
  std::mt19937 gen(7);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  auto rnd = [&](Shape s) {
    Tensor t(std::move(s));
    for (auto& v : t.mutable_data()) v = u(gen);
    return t;
  };
  const std::size_t d = 32, n = 40, hidden = 128;
  const MixingBlockParams<float> p{rnd({d}), rnd({d}), rnd({d, 3 * d}), rnd({3 * d}), rnd({d, d}), rnd({d}),
                                   rnd({d}), rnd({d}), rnd({d, hidden}), rnd({hidden}), rnd({hidden, d}), rnd({d})};
  const Tensor x = rnd({2, n, d});
  const AttentionMask full(n, n, true);
  DropoutContext ctx;
  const Tensor g = mixing_block(x, BlockKind::kGlobal, 4, nullptr, p, ctx);
  const Tensor l = mixing_block(x, BlockKind::kLocal, 4, &full, p, ctx);
  const bool same = g.shape() == l.shape() && std::memcmp(g.data().data(), l.data().data(), g.numel() * sizeof(float)) == 0;
  return {same, std::to_string(g.numel()) + " outputs compared bitwise"};
}

std::vector<LabeledSample> overfit_data(const SvtrConfig& c) {
  GenOptions o;
  o.count = 64;
  o.min_len = 1;
  o.max_len = 5;
  o.height = c.input_h;
  o.width = c.input_w;
  o.seed = 42;
  return gen_dataset(o, Charset::english());
}

TrainOptions overfit_options() {
  TrainOptions o;
  o.epochs = 300;
  o.batch_size = 8;
  o.peak_lr = 3e-3;
  o.warmup_epochs = 5;
  o.seed = 42;
  o.target_accuracy = 0.95;
  return o;
}

Outcome check_overfit() {
  const SvtrConfig c = preset("svtr-micro");
  const auto data = overfit_data(c);
  const auto start = Clock::now();
  SvtrModel model(c, 42);
  const TrainLog log = train(model, data, data, overfit_options());
  const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
  const double final_acc = evaluate(model, data).word_accuracy;

  SvtrModel again(c, 42);
  const TrainLog log2 = train(again, data, data, overfit_options());
  bool identical = log.steps.size() == log2.steps.size();
  for (std::size_t i = 0; identical && i < log.steps.size(); ++i)
    identical = std::memcmp(&log.steps[i].loss, &log2.steps[i].loss, sizeof(double)) == 0;

  char buf[200];
  std::snprintf(buf, sizeof buf, "accuracy %.4f after %zu epochs in %.1f s; rerun loss curve %s (%zu steps)",
                final_acc, log.epochs.size(), seconds, identical ? "bit-identical" : "DIFFERS", log.steps.size());
  return {final_acc >= 0.95 && log.epochs.size() <= 300 && seconds < 600.0 && identical, buf};
}

Outcome check_permutations() {
  const char* perms[] = {"L3G3", "G3L3", "LGLGLG", "G6", "L6"};
  GenOptions o;
  o.count = 4;
  o.height = 16;
  o.width = 64;
  const auto data = gen_dataset(o, Charset::english());
  std::ostringstream d;
  bool ok = true;
  Shape first;
  for (const char* perm : perms) {
    SvtrConfig c = preset("svtr-micro");
    c.depths = {2, 2, 2};
    c.permutation = parse_permutation(perm);
    c.validate();
    SvtrModel model(c, 1);
    TrainOptions t;
    t.epochs = 1;
    t.batch_size = 4;
    t.peak_lr = 1e-3;
    const TrainLog log = train(model, data, data, t);
    model.set_mode(Mode::kEval);
    const Shape s = model.forward(stack_images(data, {0, 1})).shape();
    if (first.empty()) first = s;
    ok &= log.steps.size() == 1 && std::isfinite(log.steps[0].loss) && s == first;
    d << perm << " " << shape_str(s) << " ";
  }
  return {ok, d.str()};
}

Outcome check_checkpoint() {
  const SvtrConfig c = preset("svtr-micro");
  GenOptions o;
  o.count = 16;
  o.height = c.input_h;
  o.width = c.input_w;
  const auto data = gen_dataset(o, Charset::english());
  SvtrModel model(c, 3);
  TrainOptions t;
  t.epochs = 2;
  t.batch_size = 8;
  t.peak_lr = 3e-3;
  train(model, data, data, t);
  oracle::TempDir dir("accept");
  save_checkpoint(dir / "m.ckpt", make_checkpoint(model, 4));
  SvtrModel back = load_model(dir / "m.ckpt");
  const EvalResult a = evaluate(model, data), b = evaluate(back, data);
  bool same = a.word_accuracy == b.word_accuracy && a.norm_edit_sim == b.norm_edit_sim;
  for (std::size_t i = 0; i < a.samples.size(); ++i) same &= a.samples[i].prediction == b.samples[i].prediction;
  model.set_mode(Mode::kEval);
  back.set_mode(Mode::kEval);
  const Tensor batch = stack_images(data, {0, 1, 2, 3});
  const Tensor la = model.forward(batch), lb = back.forward(batch);
  const bool logits_same = std::memcmp(la.data().data(), lb.data().data(), la.numel() * sizeof(float)) == 0;

  // flip one byte in the middle of the largest record payload region
  std::fstream f(dir / "m.ckpt", std::ios::in | std::ios::out | std::ios::binary);
  f.seekg(0, std::ios::end);
  const std::streamoff pos = static_cast<std::streamoff>(f.tellg()) / 2;
  char byte = 0;
  f.seekg(pos);
  f.get(byte);
  f.seekp(pos);
  f.put(static_cast<char>(byte ^ 0x01));
  f.close();
  std::string detected = "not detected";
  try {
    read_checkpoint(dir / "m.ckpt");
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kChecksum) detected = "checksum error";
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "metrics %s (accuracy %.4f, edit sim %.4f), logits %s; corrupted byte: %s",
                same ? "identical" : "DIFFER", a.word_accuracy, a.norm_edit_sim,
                logits_same ? "bit-identical" : "DIFFER", detected.c_str());
  return {same && logits_same && detected == "checksum error", buf};
}

Outcome check_schedule() {
  const std::size_t batch = 256;
  const double peak = 5e-4 * static_cast<double>(batch) / 2048.0;
  const LrSchedule s{peak_lr(batch), 200, 1000};
  auto closed = [&](double k) {
    if (k < 200) return peak * k / 200.0;
    return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * (k - 200.0) / 800.0));
  };
  double worst = std::abs(s.peak_lr - peak);
  for (std::uint64_t k : {0ull, 200ull, 600ull, 1000ull}) worst = std::max(worst, std::abs(lr_at(s, k) - closed(double(k))));
  char buf[128];
  std::snprintf(buf, sizeof buf, "peak %.4g, worst deviation %.1e at steps 0/200/600/1000", peak, worst);
  return {worst <= 1e-12, buf};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"parameter audit", 5.0, check_params},
      {"flop audit", 5.0, check_flops},
      {"shape contract", 30.0, check_shapes},
      {"gradient suite", 120.0, check_gradient_suite},
      {"ctc oracle", 60.0, check_ctc},
      {"local mask oracle", 10.0, check_mask},
      {"local/global saturation", 10.0, check_saturation},
      {"overfit", 1200.0, check_overfit},
      {"permutation axes", 600.0, check_permutations},
      {"checkpoint round-trip", 600.0, check_checkpoint},
      {"scheduler", 5.0, check_schedule},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& c = criteria[i];
    Outcome o;
    const auto start = Clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
    const bool pass = o.pass && seconds < c.budget_s;
    failures += pass ? 0 : 1;
    std::printf("[%s] %2zu %-24s %7.2fs  %s%s\n", pass ? "PASS" : "FAIL", i + 1, c.name, seconds, o.detail.c_str(),
                o.pass && !pass ? " (over time budget)" : "");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
