#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "semnn/bitstream.h"
#include "semnn/channel.h"
#include "semnn/harness.h"

namespace fs = std::filesystem;
using namespace semnn;
using harness::Config;

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_file, "config file with key = value lines");
  cmd->add_option("--set", c.sets, "override, key=value (repeatable)");
  cmd->add_option("--seed", c.seed, "single seed, replaces the seed list");
  cmd->add_option("--out", c.out, "output directory");
}

Config resolve(const Common& c) {
  Config cfg;
  if (!c.config_file.empty()) cfg.load_file(c.config_file);
  for (const auto& s : c.sets) cfg.assign(s);
  if (c.seed) cfg.set("seeds", std::to_string(*c.seed));
  return cfg;
}

fs::path out_dir(const Common& c, const std::string& name) {
  if (!c.out.empty()) return c.out;
  const char* root = std::getenv("SEMNN_OUT_ROOT");
  return fs::path(root && *root ? root : "runs") / name;
}

void print_summary(const harness::ModelRun& m) {
  std::cout << m.label << " seed " << m.seed << "  entropy " << m.entropy_bits << " bits\n";
  for (const auto& s : m.metrics.summary) {
    std::cout << "  ber " << s.ber << "  accuracy " << s.mean << " +- " << s.stddev << "\n";
  }
}

int cmd_gen_data(const Common& c, harness::GenDataOptions o) {
  o.out_dir = out_dir(c, "data");
  if (c.seed) o.seed = *c.seed;
  auto r = harness::gen_dataset(o);
  std::cout << "wrote " << r.data_file.string() << " and " << r.index_file.string() << "\nlabel histogram:";
  for (auto h : r.histogram) std::cout << " " << h;
  std::cout << "\n";
  return 0;
}

int cmd_stage1(const Common& c, const std::string& task_ckpt) {
  auto cfg = resolve(c);
  harness::RunDir run(out_dir(c, "stage1"), cfg);
  auto lab = task_ckpt.empty() ? harness::build_lab(cfg) : harness::build_lab(cfg, task_ckpt);
  std::cout << "task model val accuracy " << lab.task_result.val_accuracy << "\n";
  run.add_epochs("", lab.task_result.epochs, cfg.count("task.seed"));
  run.add_checkpoint("task", lab.task.to_tensors());
  for (auto seed : cfg.seeds()) {
    codec::SemanticCodec cd(harness::codec_config(cfg, lab.task.split_shape()), seed);
    auto r = train::stage1_denoise(cd, lab.train_features, harness::train_config(cfg, seed));
    run.add_epochs("", r.epochs, seed);
    run.add_checkpoint("stage1-seed" + std::to_string(seed), cd.to_tensors());
    std::cout << "seed " << seed << ": final reconstruction loss " << r.epochs.back().loss_total << "\n";
  }
  run.finish("train-stage1");
  std::cout << "run directory " << run.path().string() << "\n";
  return 0;
}

int cmd_stage2(const Common& c, const std::string& task_ckpt, const std::string& init) {
  auto cfg = resolve(c);
  harness::RunDir run(out_dir(c, "stage2"), cfg);
  auto lab = task_ckpt.empty() ? harness::build_lab(cfg) : harness::build_lab(cfg, task_ckpt);
  run.add_epochs("", lab.task_result.epochs, cfg.count("task.seed"));
  run.add_checkpoint("task", lab.task.to_tensors());
  for (auto seed : cfg.seeds()) {
    harness::ModelRun m;
    if (init.empty()) {
      m = harness::run_model(lab, cfg, seed, "semnn");
    } else {
      auto tc = harness::train_config(cfg, seed);
      m.label = "semnn";
      m.seed = seed;
      m.codec = codec::SemanticCodec(harness::codec_config(cfg, lab.task.split_shape()), seed);
      m.codec.load_tensors(load_checkpoint(init));
      m.stage2 = train::stage2_semantic(m.codec, lab.task, lab.train_features, tc);
      m.metrics = train::evaluate(m.codec, lab.task, lab.val_features, harness::eval_config(cfg, seed));
      m.entropy_bits = train::usage_entropy(m.codec, lab.val_features);
    }
    run.add_model(m);
    print_summary(m);
  }
  run.finish("train-stage2");
  std::cout << "run directory " << run.path().string() << "\n";
  return 0;
}

int cmd_eval(const Common& c, const std::string& task_ckpt, const std::string& codec_ckpt) {
  auto cfg = resolve(c);
  harness::RunDir run(out_dir(c, "eval"), cfg);
  auto lab = harness::build_lab(cfg, task_ckpt);
  for (auto seed : cfg.seeds()) {
    harness::ModelRun m;
    m.label = "eval";
    m.seed = seed;
    m.codec = codec::SemanticCodec(harness::codec_config(cfg, lab.task.split_shape()), seed);
    m.codec.load_tensors(load_checkpoint(codec_ckpt));
    m.metrics = train::evaluate(m.codec, lab.task, lab.val_features, harness::eval_config(cfg, seed));
    m.entropy_bits = train::usage_entropy(m.codec, lab.val_features);
    for (const auto& r : m.metrics.rows) run.add_row("eval/" + train::csv_line(r, m.entropy_bits));
    print_summary(m);
  }
  run.finish("eval");
  return 0;
}

int cmd_channel_demo(const Common& c, const std::string& in, double ber, std::size_t symbols, int width) {
  const std::uint64_t seed = c.seed.value_or(1);
  bits::BitStream sent;
  if (!in.empty()) {
    sent = bits::read_dump(in);
  } else {
    if (width < 1 || width > 16) throw harness::ConfigError("channel-demo: width must be in 1..16");
    std::mt19937_64 rng(channel::derive_seed(seed, 1));
    std::uniform_int_distribution<int> d(0, (1 << width) - 1);
    std::vector<int> idx(symbols);
    for (auto& v : idx) v = d(rng);
    sent = bits::pack_fixed(idx, width);
  }
  channel::RngState rng(channel::derive_seed(seed, 2));
  auto cfg = channel::ChannelConfig::fixed(ber);
  cfg.validate();
  auto t = channel::transmit(sent, cfg, rng);
  const fs::path dir = out_dir(c, "channel-demo");
  fs::create_directories(dir);
  bits::write_dump(dir / "sent.bits", sent);
  bits::write_dump(dir / "received.bits", t.stream);
  std::size_t bad = 0;
  if (sent.symbol_width()) {
    const auto a = bits::unpack_fixed(sent), b = bits::unpack_fixed(t.stream);
    for (std::size_t i = 0; i < a.size(); ++i) bad += a[i] != b[i];
  }
  std::cout << "bits " << sent.bit_length() << "  flips " << t.flips << "  corrupted symbols " << bad
            << "\nwrote " << (dir / "sent.bits").string() << " and " << (dir / "received.bits").string() << "\n";
  return 0;
}

int cmd_huffman_demo(const Common& c, std::optional<double> ber) {
  auto cfg = resolve(c);
  harness::HuffmanSetup h;
  h.levels = cfg.count("huffman.levels");
  h.ratio = cfg.real("huffman.ratio");
  h.symbols = cfg.count("huffman.symbols");
  h.trials = cfg.count("huffman.trials");
  const auto seed = cfg.seeds().front();
  auto st = harness::huffman_vs_fixed(h, ber, seed);
  std::cout << (ber ? "ber " + std::to_string(*ber) : std::string("single flip")) << ", " << st.trials
            << " trials of " << h.symbols << " symbols\n"
            << "  fixed-length recovery " << st.fixed << "  (" << st.fixed_bits << " bits)\n"
            << "  huffman recovery      " << st.huffman << "  (" << st.huffman_bits << " bits, "
            << st.flips << " flips)\n";
  return 0;
}

int cmd_preset(const Common& c, const std::string& name) {
  auto cfg = resolve(c);
  const auto dir = out_dir(c, name);
  harness::run_preset_or_throw(name, cfg, dir, std::cout);
  std::cout << "run directory " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semnn: error-resilient split-computing feature codec"};
  app.require_subcommand(1);

  Common common;
  harness::GenDataOptions gen;
  std::string task_ckpt, codec_ckpt, init, in_dump, preset, sweep_key, sweep_values;
  double ber = 0.01;
  std::optional<double> huff_ber;
  std::size_t symbols = 1000;
  int width = 3;

  auto* g = app.add_subcommand("gen-data", "generate or import a dataset");
  g->add_option("--kind", gen.kind, "synthetic-shapes or import-small-binary");
  g->add_option("--n", gen.n, "number of samples");
  g->add_option("--classes", gen.classes, "number of classes");
  g->add_option("--input", gen.input, "small-binary file to import");
  add_common(g, common);

  auto* s1 = app.add_subcommand("train-stage1", "train the task model and the denoising stage");
  s1->add_option("--task", task_ckpt, "task model checkpoint (trained when absent)");
  add_common(s1, common);

  auto* s2 = app.add_subcommand("train-stage2", "semantic training, then evaluation");
  s2->add_option("--task", task_ckpt, "task model checkpoint (trained when absent)");
  s2->add_option("--init", init, "stage-1 codec checkpoint");
  add_common(s2, common);

  auto* ev = app.add_subcommand("eval", "evaluate a codec checkpoint over the BER grid");
  ev->add_option("--task", task_ckpt, "task model checkpoint")->required();
  ev->add_option("--codec", codec_ckpt, "codec checkpoint")->required();
  add_common(ev, common);

  auto* ch = app.add_subcommand("channel-demo", "send a bit-stream dump through the channel");
  ch->add_option("--in", in_dump, "input dump (random symbols when absent)");
  ch->add_option("--ber", ber, "bit error rate");
  ch->add_option("--symbols", symbols, "random symbols to generate");
  ch->add_option("--width", width, "bits per random symbol");
  add_common(ch, common);

  auto* hd = app.add_subcommand("huffman-demo", "Huffman vs fixed-length recovery");
  hd->add_option("--ber", huff_ber, "bit error rate (single flip when absent)");
  add_common(hd, common);

  auto* sw = app.add_subcommand("sweep", "train and evaluate over values of one config key");
  sw->add_option("--key", sweep_key, "config key to sweep");
  sw->add_option("--values", sweep_values, "comma-separated values");
  add_common(sw, common);

  std::string names;
  for (const auto& n : harness::preset_names()) names += (names.empty() ? "" : ", ") + n;
  auto* rp = app.add_subcommand("run-preset", "run a named experiment preset");
  rp->add_option("name", preset, names)->required();
  add_common(rp, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : harness::kConfigError;
  }

  try {
    if (*g) return cmd_gen_data(common, gen);
    if (*s1) return cmd_stage1(common, task_ckpt);
    if (*s2) return cmd_stage2(common, task_ckpt, init);
    if (*ev) return cmd_eval(common, task_ckpt, codec_ckpt);
    if (*ch) return cmd_channel_demo(common, in_dump, ber, symbols, width);
    if (*hd) return cmd_huffman_demo(common, huff_ber);
    if (*sw) {
      if (!sweep_key.empty()) common.sets.push_back("sweep.key=" + sweep_key);
      if (!sweep_values.empty()) common.sets.push_back("sweep.values=" + sweep_values);
      return cmd_preset(common, "sweep");
    }
    if (*rp) return cmd_preset(common, preset);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return harness::exit_code_for(e);
  }
  return 0;
}
