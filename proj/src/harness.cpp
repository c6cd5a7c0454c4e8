#include "semnn/harness.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "semnn/bitstream.h"
#include "semnn/channel.h"
#include "semnn/optim.h"

#ifndef SEMNN_VERSION
#define SEMNN_VERSION "0.0.0"
#endif

namespace semnn::harness {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string version_stamp() { return SEMNN_VERSION; }

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size() || !std::isfinite(x)) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
  return x;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_text(const fs::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot write " + p.string());
  f << content;
  if (!f) throw IoError("write failed: " + p.string());
}

}  // namespace

const std::vector<std::pair<std::string, std::string>>& Config::defaults() {
  static const std::vector<std::pair<std::string, std::string>> d = {
      {"preset", ""},
      {"seeds", "1,2,3"},
      {"data.kind", "synthetic-shapes"},
      {"data.path", ""},
      {"data.classes", "4"},
      {"data.train", "1000"},
      {"data.val", "500"},
      {"data.seed", "7"},
      {"task.width", "8"},
      {"task.split", "1"},
      {"task.seed", "1"},
      {"task.epochs", "10"},
      {"task.lr", "0.1"},
      {"task.momentum", "0.9"},
      {"codec.code_channels", "4"},
      {"codec.stride", "2"},
      {"codec.blocks", "3"},
      {"codec.levels", "8"},
      {"codec.per_channel", "false"},
      {"codec.gate", "channel"},
      {"codec.ber_log", "true"},
      {"codec.gate_hidden", "16"},
      {"train.batch", "32"},
      {"train.lr", "0.005"},
      {"train.stage1_epochs", "10"},
      {"train.stage2_epochs", "30"},
      {"train.sigma_start", "1"},
      {"train.sigma_end", "300"},
      {"train.ber_mode", "uniform"},
      {"train.ber", "0"},
      {"train.ber_lo", "0.0001"},
      {"train.ber_hi", "0.05"},
      {"train.per_sample_ber", "false"},
      {"train.one_stage", "false"},
      {"train.ber_side", "true"},
      {"train.pilot_bits", "1024"},
      {"loss.alpha", "2"},
      {"loss.beta", "1"},
      {"loss.gamma", "1"},
      {"loss.lambda", "0.5"},
      {"loss.r", "1"},
      {"loss.xai_cap", "10000"},
      {"xai.method", "grad-input"},
      {"xai.ig_steps", "8"},
      {"slice.ratio", "1"},
      {"slice.recovery", "reflect"},
      {"eval.bers", "0.0001,0.0025,0.025,0.05"},
      {"eval.reps", "6"},
      {"eval.ber_side", "true"},
      {"eval.pilot_bits", "1024"},
      {"eval.batch", "100"},
      {"huffman.levels", "8"},
      {"huffman.ratio", "8"},
      {"huffman.symbols", "10000"},
      {"huffman.trials", "100"},
      {"huffman.bers", "0.0001,0.001,0.005,0.01,0.05"},
      {"sweep.key", ""},
      {"sweep.values", ""},
  };
  return d;
}

Config::Config() {
  for (const auto& [k, v] : defaults()) values_[k] = v;
}

void Config::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = trim(value);
}

void Config::assign(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + kv + "'");
  set(trim(kv.substr(0, eq)), kv.substr(eq + 1));
}

void Config::load_file(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config " + path.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(f, line)) {
    ++n;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    if (line.find('=') == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(n) + ": expected key = value");
    }
    assign(line);
  }
}

const std::string& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double Config::real(const std::string& key) const { return parse_real(key, get(key)); }

std::size_t Config::count(const std::string& key) const {
  const double x = real(key);
  if (x < 0 || x != std::floor(x)) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + get(key) + "'");
  }
  return std::size_t(x);
}

bool Config::flag(const std::string& key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<double> Config::reals(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : split_list(get(key))) out.push_back(parse_real(key, s));
  return out;
}

std::vector<std::uint64_t> Config::seeds() const {
  std::vector<std::uint64_t> out;
  for (double x : reals("seeds")) {
    if (x < 0 || x != std::floor(x)) throw ConfigError("config key 'seeds': seeds are non-negative integers");
    out.push_back(std::uint64_t(x));
  }
  if (out.empty()) throw ConfigError("config key 'seeds': at least one seed required");
  return out;
}

std::string Config::dump() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

task::TaskConfig task_config(const Config& c) {
  task::TaskConfig t;
  t.classes = c.count("data.classes");
  t.width = c.count("task.width");
  t.split = c.count("task.split");
  if (t.split < 1 || t.split > 3) throw ConfigError("config key 'task.split': must be 1, 2 or 3");
  if (t.classes < 2 || t.classes > 10) throw ConfigError("config key 'data.classes': must be in 2..10");
  if (t.width == 0) throw ConfigError("config key 'task.width': must be positive");
  return t;
}

codec::CodecConfig codec_config(const Config& c, const Shape& split) {
  codec::CodecConfig k;
  k.in_channels = split.at(0);
  k.height = split.at(1);
  k.width = split.at(2);
  k.code_channels = c.count("codec.code_channels");
  k.stride = int(c.count("codec.stride"));
  k.blocks = c.count("codec.blocks");
  k.levels = c.count("codec.levels");
  k.per_channel_centers = c.flag("codec.per_channel");
  try {
    k.gate = codec::parse_gate_mode(c.get("codec.gate"));
    k.ber_log_feature = c.flag("codec.ber_log");
    k.gate_hidden = c.count("codec.gate_hidden");
    k.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (k.levels < 2 || (k.levels & (k.levels - 1))) {
    throw ConfigError("config key 'codec.levels': must be a power of two >= 2");
  }
  return k;
}

namespace {

codec::BerSide parse_side(const std::string& key, const std::string& v) {
  if (v == "true") return codec::BerSide::kTrue;
  if (v == "estimated") return codec::BerSide::kEstimated;
  if (v == "zero") return codec::BerSide::kZero;
  throw ConfigError("config key '" + key + "': expected true, estimated or zero, got '" + v + "'");
}

xai::Fill parse_fill(const std::string& v) {
  if (v == "reflect") return xai::Fill::kReflect;
  if (v == "zero") return xai::Fill::kZero;
  throw ConfigError("config key 'slice.recovery': expected reflect or zero, got '" + v + "'");
}

}  // namespace

train::TrainConfig train_config(const Config& c, std::uint64_t seed) {
  train::TrainConfig t;
  t.batch = c.count("train.batch");
  t.task_epochs = c.count("task.epochs");
  t.task_lr = c.real("task.lr");
  t.task_momentum = c.real("task.momentum");
  t.stage1_epochs = c.count("train.stage1_epochs");
  t.stage2_epochs = c.count("train.stage2_epochs");
  t.codec_lr = c.real("train.lr");
  t.sigma_start = c.real("train.sigma_start");
  t.sigma_end = c.real("train.sigma_end");
  const auto& mode = c.get("train.ber_mode");
  if (mode == "uniform") {
    t.channel = channel::ChannelConfig::uniform(c.real("train.ber_lo"), c.real("train.ber_hi"));
  } else if (mode == "fixed") {
    t.channel = channel::ChannelConfig::fixed(c.real("train.ber"));
  } else {
    throw ConfigError("config key 'train.ber_mode': expected uniform or fixed, got '" + mode + "'");
  }
  t.per_sample_ber = c.flag("train.per_sample_ber");
  t.one_stage = c.flag("train.one_stage");
  t.ber_side = parse_side("train.ber_side", c.get("train.ber_side"));
  t.pilot_bits = c.count("train.pilot_bits");
  t.slice_ratio = c.real("slice.ratio");
  t.fill = parse_fill(c.get("slice.recovery"));
  const auto& m = c.get("xai.method");
  if (m == "grad-input") t.xai_method = xai::Method::kGradInput;
  else if (m == "integrated-gradients") t.xai_method = xai::Method::kIntegratedGradients;
  else throw ConfigError("config key 'xai.method': expected grad-input or integrated-gradients, got '" + m + "'");
  t.ig_steps = int(c.count("xai.ig_steps"));
  t.weights.alpha = c.real("loss.alpha");
  t.weights.beta = c.real("loss.beta");
  t.weights.gamma = c.real("loss.gamma");
  t.weights.lambda = c.real("loss.lambda");
  t.weights.r = c.real("loss.r");
  t.weights.xai_cap = c.real("loss.xai_cap");
  t.seed = seed;
  try {
    t.channel.validate();
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return t;
}

train::EvalConfig eval_config(const Config& c, std::uint64_t seed) {
  train::EvalConfig e;
  e.bers = c.reals("eval.bers");
  for (double b : e.bers) {
    if (b < 0.0 || b > 1.0) throw ConfigError("config key 'eval.bers': BER must be in [0,1]");
  }
  e.reps = c.count("eval.reps");
  e.seeds = {seed};
  e.batch = c.count("eval.batch");
  e.offload.slice_ratio = c.real("slice.ratio");
  e.offload.fill = parse_fill(c.get("slice.recovery"));
  e.offload.ber_side = parse_side("eval.ber_side", c.get("eval.ber_side"));
  e.offload.pilot_bits = c.count("eval.pilot_bits");
  if (e.bers.empty() || e.reps == 0 || e.batch == 0) {
    throw ConfigError("config keys 'eval.*': need at least one BER, one rep and a positive batch");
  }
  return e;
}

data::Dataset load_dataset(const Config& c) {
  const std::size_t n = c.count("data.train") + c.count("data.val");
  if (c.count("data.train") == 0 || c.count("data.val") == 0) {
    throw ConfigError("config keys 'data.train'/'data.val': must be positive");
  }
  const auto& kind = c.get("data.kind");
  if (kind == "synthetic-shapes") {
    return data::make_shapes(n, task_config(c).classes, std::uint64_t(c.count("data.seed")));
  }
  if (kind == "small-binary") {
    if (c.get("data.path").empty()) throw ConfigError("config key 'data.path': required for small-binary");
    auto d = data::read_small_binary(c.get("data.path"), task_config(c).classes);
    if (d.size() < n) {
      throw ConfigError("config key 'data.path': " + std::to_string(d.size()) + " records, need " +
                        std::to_string(n));
    }
    return d.subset(0, n);
  }
  throw ConfigError("config key 'data.kind': expected synthetic-shapes or small-binary, got '" + kind + "'");
}

Lab build_lab(const Config& c) {
  Lab lab;
  auto all = load_dataset(c);
  const std::size_t nt = c.count("data.train");
  lab.train_set = all.subset(0, nt);
  lab.val_set = all.subset(nt, all.size());
  auto tc = train_config(c, std::uint64_t(c.count("task.seed")));
  lab.task = task::TaskModel(task_config(c), std::uint64_t(c.count("task.seed")));
  lab.task_result = train::train_task_model(lab.task, lab.train_set, lab.val_set, tc);
  lab.train_features = train::cache_features(lab.task, lab.train_set);
  lab.val_features = train::cache_features(lab.task, lab.val_set);
  return lab;
}

Lab build_lab(const Config& c, const fs::path& task_checkpoint) {
  Lab lab;
  auto all = load_dataset(c);
  const std::size_t nt = c.count("data.train");
  lab.train_set = all.subset(0, nt);
  lab.val_set = all.subset(nt, all.size());
  lab.task = task::TaskModel(task_config(c), std::uint64_t(c.count("task.seed")));
  lab.task.load_tensors(load_checkpoint(task_checkpoint));
  lab.task.set_frozen(true);
  lab.task_result.val_accuracy = train::task_accuracy(lab.task, lab.val_set);
  lab.train_features = train::cache_features(lab.task, lab.train_set);
  lab.val_features = train::cache_features(lab.task, lab.val_set);
  return lab;
}

codec::SemanticCodec Stage1Cache::get(const Lab& lab, const Config& c, std::uint64_t seed,
                                      train::StageResult* log) {
  std::string key = std::to_string(seed);
  for (const auto& [k, v] : c.entries()) {
    const bool relevant = k.rfind("codec.", 0) == 0 ||
                          (k.rfind("train.", 0) == 0 && k != "train.stage2_epochs" && k != "train.one_stage");
    if (relevant) key += ";" + k + "=" + v;
  }
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    codec::SemanticCodec cd(codec_config(c, lab.task.split_shape()), seed);
    auto r = train::stage1_denoise(cd, lab.train_features, train_config(c, seed));
    it = entries_.emplace(key, std::make_pair(std::move(cd), std::move(r))).first;
  }
  if (log) *log = it->second.second;
  return it->second.first.clone();
}

ModelRun run_model(const Lab& lab, const Config& c, std::uint64_t seed, const std::string& label,
                   Stage1Cache* cache) {
  ModelRun m;
  m.label = label;
  m.seed = seed;
  const auto tc = train_config(c, seed);
  const auto ec = eval_config(c, seed);
  if (tc.one_stage) {
    m.codec = codec::SemanticCodec(codec_config(c, lab.task.split_shape()), seed);
  } else if (cache) {
    m.codec = cache->get(lab, c, seed, &m.stage1);
  } else {
    m.codec = codec::SemanticCodec(codec_config(c, lab.task.split_shape()), seed);
    m.stage1 = train::stage1_denoise(m.codec, lab.train_features, tc);
  }
  m.stage2 = train::stage2_semantic(m.codec, lab.task, lab.train_features, tc);
  m.metrics = train::evaluate(m.codec, lab.task, lab.val_features, ec);
  m.entropy_bits = train::usage_entropy(m.codec, lab.val_features);
  return m;
}

std::vector<int> geometric_source(std::size_t n, std::size_t levels, double ratio, std::uint64_t seed) {
  std::vector<double> w(levels);
  for (std::size_t i = 0; i < levels; ++i) w[i] = std::pow(ratio, -double(i));
  std::discrete_distribution<int> dist(w.begin(), w.end());
  std::mt19937_64 rng(seed);
  std::vector<int> out(n);
  for (auto& s : out) s = dist(rng);
  return out;
}

namespace {

std::size_t flip_one(bits::BitStream& s, std::mt19937_64& rng) {
  if (s.bit_length() == 0) return 0;
  std::uniform_int_distribution<std::size_t> pos(0, s.bit_length() - 1);
  s.flip(pos(rng));
  return 1;
}

std::uint64_t ber_bits(double ber) {
  std::uint64_t k = 0;
  std::memcpy(&k, &ber, sizeof k);
  return k;
}

}  // namespace

RecoveryStats huffman_vs_fixed(const HuffmanSetup& h, std::optional<double> ber, std::uint64_t seed) {
  if (h.levels < 2 || (h.levels & (h.levels - 1))) throw ConfigError("huffman: levels must be a power of two");
  if (h.symbols == 0 || h.trials == 0) throw ConfigError("huffman: symbols and trials must be positive");
  if (ber && (*ber < 0.0 || *ber > 1.0)) throw ConfigError("huffman: BER must be in [0,1]");
  const int width = int(std::lround(std::log2(double(h.levels))));
  const std::uint64_t tag = ber ? ber_bits(*ber) : 0xF11Bu;
  RecoveryStats st;
  st.trials = h.trials;
  for (std::size_t t = 0; t < h.trials; ++t) {
    const auto sym = geometric_source(h.symbols, h.levels, h.ratio, channel::derive_seed(seed, t, 0));
    std::vector<std::uint64_t> freq(h.levels, 0);
    for (int s : sym) ++freq[std::size_t(s)];
    const auto table = bits::huffman_build(freq);
    auto hs = bits::huffman_encode(sym, table);
    auto fx = bits::pack_fixed(sym, width);
    channel::RngState rng(channel::derive_seed(seed, t, tag));
    std::size_t flips = 0;
    if (ber) {
      flips = channel::flip_bits(hs, *ber, rng);
      channel::flip_bits(fx, *ber, rng);
    } else {
      flips = flip_one(hs, rng);
      flip_one(fx, rng);
    }
    const auto dec = bits::huffman_decode_resync(hs, table, sym.size());
    st.huffman += bits::positional_recovery(dec, sym);
    const auto rx = bits::unpack_fixed(fx);
    std::size_t same = 0;
    for (std::size_t i = 0; i < sym.size(); ++i) same += rx[i] == sym[i];
    st.fixed += double(same) / double(sym.size());
    st.huffman_bits += double(hs.bit_length());
    st.fixed_bits += double(fx.bit_length());
    st.flips += double(flips);
  }
  const double n = double(h.trials);
  st.huffman /= n;
  st.fixed /= n;
  st.huffman_bits /= n;
  st.fixed_bits /= n;
  st.flips /= n;
  return st;
}

GenDataResult gen_dataset(const GenDataOptions& o) {
  if (o.n == 0) throw ConfigError("gen-data: n must be positive");
  if (o.out_dir.empty()) throw ConfigError("gen-data: output directory required");
  data::Dataset d;
  if (o.kind == "synthetic-shapes") {
    if (o.classes < 2 || o.classes > 10) throw ConfigError("gen-data: classes must be in 2..10");
    d = data::make_shapes(o.n, o.classes, o.seed);
  } else if (o.kind == "import-small-binary") {
    if (o.input.empty()) throw ConfigError("gen-data: import-small-binary needs an input file");
    auto src = data::read_small_binary(o.input, o.classes);
    if (src.size() < o.n) {
      throw ConfigError("gen-data: input holds " + std::to_string(src.size()) + " records, asked for " +
                        std::to_string(o.n));
    }
    d = src.subset(0, o.n);
  } else {
    throw ConfigError("gen-data: unknown kind '" + o.kind + "'");
  }
  std::error_code ec;
  fs::create_directories(o.out_dir, ec);
  if (ec) throw IoError("cannot create " + o.out_dir.string() + ": " + ec.message());
  GenDataResult r;
  r.data_file = o.out_dir / "data.bin";
  r.index_file = o.out_dir / "index.json";
  data::write_small_binary(r.data_file, d);
  r.histogram = data::label_histogram(d);
  json idx;
  idx["kind"] = o.kind;
  idx["n"] = d.size();
  idx["classes"] = d.classes;
  idx["seed"] = o.seed;
  idx["record_bytes"] = 1 + data::kImageBytes;
  idx["data_file"] = r.data_file.filename().string();
  idx["checksum"] = file_checksum(r.data_file);
  idx["label_histogram"] = r.histogram;
  idx["labels"] = d.labels;
  write_text(r.index_file, idx.dump(1) + "\n");
  return r;
}

RunDir::RunDir(fs::path dir, const Config& c) : dir_(std::move(dir)), config_dump_(c.dump()) {
  std::error_code ec;
  fs::create_directories(dir_ / "ckpt", ec);
  if (ec) throw IoError("cannot create " + dir_.string() + ": " + ec.message());
  write_text(dir_ / "config.txt", config_dump_);
  write_text(dir_ / "version.txt", version_stamp() + "\n");
  std::string seeds;
  for (auto s : c.seeds()) seeds += std::to_string(s) + "\n";
  write_text(dir_ / "seeds.txt", seeds);
}

void RunDir::add_epochs(const std::string& label, const std::vector<train::EpochLog>& epochs,
                        std::uint64_t seed) {
  for (auto e : epochs) {
    if (!label.empty()) e.stage = label + "/" + e.stage;
    rows_.push_back(train::csv_line(e, seed));
  }
}

void RunDir::add_model(const ModelRun& m) {
  add_epochs(m.label, m.stage1.epochs, m.seed);
  add_epochs(m.label, m.stage2.epochs, m.seed);
  for (const auto& r : m.metrics.rows) rows_.push_back(m.label + "/" + train::csv_line(r, m.entropy_bits));
  add_checkpoint(m.label + "-seed" + std::to_string(m.seed), m.codec.to_tensors());
}

void RunDir::add_checkpoint(const std::string& name, const std::vector<NamedTensor>& tensors) {
  std::string file = name;
  std::replace_if(file.begin(), file.end(), [](char ch) { return !(std::isalnum((unsigned char)ch) || ch == '-' || ch == '_' || ch == '.'); }, '_');
  const auto p = dir_ / "ckpt" / (file + ".ckpt");
  save_checkpoint(p, tensors);
  checkpoints_["ckpt/" + file + ".ckpt"] = file_checksum(p);
}

void RunDir::add_table(const std::string& file, const std::string& content) {
  write_text(dir_ / file, content);
  tables_[file] = file_checksum(dir_ / file);
}

void RunDir::finish(const std::string& preset) {
  std::string csv = train::csv_header() + "\n";
  for (const auto& r : rows_) csv += r + "\n";
  write_text(dir_ / "metrics.csv", csv);
  json m;
  m["preset"] = preset;
  m["version"] = version_stamp();
  m["config"] = config_dump_;
  m["metrics_csv"] = {{"file", "metrics.csv"}, {"rows", rows_.size()}, {"checksum", file_checksum(dir_ / "metrics.csv")}};
  m["checkpoints"] = checkpoints_;
  m["tables"] = tables_;
  write_text(dir_ / "manifest.json", m.dump(1) + "\n");
  const auto missing = audit_run_dir(dir_);
  if (!missing.empty()) {
    std::string list;
    for (const auto& f : missing) list += " " + f;
    throw IoError("self-audit failed in " + dir_.string() + ", missing:" + list);
  }
}

std::vector<std::string> audit_run_dir(const fs::path& dir) {
  std::vector<std::string> missing;
  for (const char* f : {"config.txt", "version.txt", "seeds.txt", "metrics.csv", "manifest.json"}) {
    std::error_code ec;
    if (!fs::is_regular_file(dir / f, ec)) missing.push_back(f);
  }
  return missing;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {
      "huffman-vs-fixed", "two-stage-ablation", "alpha-sweep",   "gamma-sweep",
      "dynamic-ber-attention", "slice-ratio",  "full-pipeline", "error-resilience", "sweep"};
  return names;
}

namespace {

struct Ctx {
  const Config& cfg;
  RunDir& out;
  std::ostream& log;
};

void log_model(std::ostream& log, const ModelRun& m) {
  log << m.label << " seed " << m.seed << ": entropy " << fmt(m.entropy_bits) << " bits, accuracy";
  for (const auto& s : m.metrics.summary) log << " " << fmt(s.ber) << ":" << fmt(s.mean);
  log << "\n";
}

Lab lab_with_checkpoint(Ctx& x) {
  x.log << "training task model\n";
  Lab lab = build_lab(x.cfg);
  x.log << "task model val accuracy " << fmt(lab.task_result.val_accuracy) << "\n";
  x.out.add_epochs("", lab.task_result.epochs, x.cfg.count("task.seed"));
  x.out.add_checkpoint("task", lab.task.to_tensors());
  return lab;
}

std::string summary_header(const std::string& extra) { return extra + ",seed,ber,accuracy,entropy_bits\n"; }

std::string summary_rows(const std::string& prefix, const ModelRun& m) {
  std::string s;
  for (const auto& r : m.metrics.summary) {
    s += prefix + "," + std::to_string(m.seed) + "," + fmt(r.ber) + "," + fmt(r.mean) + "," + fmt(m.entropy_bits) + "\n";
  }
  return s;
}

void preset_huffman(Ctx& x) {
  HuffmanSetup h;
  h.levels = x.cfg.count("huffman.levels");
  h.ratio = x.cfg.real("huffman.ratio");
  h.symbols = x.cfg.count("huffman.symbols");
  h.trials = x.cfg.count("huffman.trials");
  if (h.ratio <= 0.0) throw ConfigError("config key 'huffman.ratio': must be positive");
  std::string table = "condition,ber,seed,fixed_recovery,huffman_recovery,fixed_bits,huffman_bits,mean_flips\n";
  for (auto seed : x.cfg.seeds()) {
    std::vector<std::optional<double>> conds{std::nullopt};
    for (double b : x.cfg.reals("huffman.bers")) conds.emplace_back(b);
    for (const auto& b : conds) {
      const auto st = huffman_vs_fixed(h, b, seed);
      const double ber = b ? *b : 1.0 / st.huffman_bits;
      const std::string cond = b ? "ber" : "single-flip";
      table += cond + "," + fmt(ber) + "," + std::to_string(seed) + "," + fmt(st.fixed) + "," + fmt(st.huffman) +
               "," + fmt(st.fixed_bits) + "," + fmt(st.huffman_bits) + "," + fmt(st.flips) + "\n";
      for (const auto& [name, rate, bits] : {std::tuple{"fixed", st.fixed, st.fixed_bits},
                                             std::tuple{"huffman", st.huffman, st.huffman_bits}}) {
        train::EpochLog e;
        e.stage = std::string(name) + "/" + cond;
        e.ber = ber;
        e.accuracy = rate;
        e.wire_bits = std::size_t(std::llround(bits));
        x.out.add_row(train::csv_line(e, seed));
      }
      x.log << (b ? "ber " : "single flip, ber ") << fmt(ber) << ": fixed " << fmt(st.fixed) << ", huffman " << fmt(st.huffman) << "\n";
    }
  }
  x.out.add_table("recovery.csv", table);
}

void preset_two_stage(Ctx& x) {
  Lab lab = lab_with_checkpoint(x);
  Stage1Cache cache;
  std::string table = summary_header("variant");
  for (auto seed : x.cfg.seeds()) {
    Config one = x.cfg;
    one.set("train.one_stage", "true");
    for (auto& [label, c] : {std::pair<std::string, const Config*>{"two-stage", &x.cfg}, {"one-stage", &one}}) {
      auto m = run_model(lab, *c, seed, label, &cache);
      log_model(x.log, m);
      x.out.add_model(m);
      table += summary_rows(label, m);
    }
  }
  x.out.add_table("summary.csv", table);
}

void preset_sweep(Ctx& x, const std::string& key, std::vector<std::string> values) {
  if (!x.cfg.get("sweep.key").empty() && x.cfg.get("sweep.key") != key && !key.empty()) {
    throw ConfigError("config key 'sweep.key': this preset sweeps '" + key + "'");
  }
  const std::string k = key.empty() ? x.cfg.get("sweep.key") : key;
  if (k.empty()) throw ConfigError("config key 'sweep.key': required for a sweep");
  if (!x.cfg.known(k) || k.rfind("sweep.", 0) == 0 || k == "seeds") {
    throw ConfigError("config key 'sweep.key': cannot sweep '" + k + "'");
  }
  if (!x.cfg.get("sweep.values").empty()) values = split_list(x.cfg.get("sweep.values"));
  if (values.empty()) throw ConfigError("config key 'sweep.values': required for a sweep");
  const bool task_key = k.rfind("data.", 0) == 0 || k.rfind("task.", 0) == 0;
  std::optional<Lab> shared;
  if (!task_key) shared = lab_with_checkpoint(x);
  Stage1Cache cache;
  std::string table = summary_header(k);
  for (const auto& v : values) {
    Config c = x.cfg;
    c.set(k, v);
    std::optional<Lab> own;
    if (task_key) {
      x.log << "training task model for " << k << "=" << v << "\n";
      own = build_lab(c);
      x.out.add_checkpoint("task-" + k + "=" + v, own->task.to_tensors());
    }
    const Lab& lab = task_key ? *own : *shared;
    for (auto seed : c.seeds()) {
      auto m = run_model(lab, c, seed, k + "=" + v, &cache);
      log_model(x.log, m);
      x.out.add_model(m);
      table += summary_rows(v, m);
    }
  }
  x.out.add_table("summary.csv", table);
}

void preset_dynamic(Ctx& x) {
  Lab lab = lab_with_checkpoint(x);
  Stage1Cache cache;
  std::string table = "seed,ber,dynamic,fixed\n";
  for (auto seed : x.cfg.seeds()) {
    Config dyn = x.cfg;
    dyn.set("train.ber_mode", "uniform");
    auto d = run_model(lab, dyn, seed, "dynamic", &cache);
    log_model(x.log, d);
    x.out.add_model(d);
    for (double b : x.cfg.reals("eval.bers")) {
      Config fc = x.cfg;
      fc.set("train.ber_mode", "fixed");
      fc.set("train.ber", fmt(b));
      fc.set("eval.bers", fmt(b));
      auto f = run_model(lab, fc, seed, "fixed-" + fmt(b), &cache);
      log_model(x.log, f);
      x.out.add_model(f);
      table += std::to_string(seed) + "," + fmt(b) + "," + fmt(d.metrics.mean_at(b)) + "," + fmt(f.metrics.mean_at(b)) + "\n";
    }
  }
  x.out.add_table("summary.csv", table);
}

void preset_slice(Ctx& x) {
  Lab lab = lab_with_checkpoint(x);
  Stage1Cache cache;
  std::vector<std::string> ratios{"1", "0.75", "0.5", "0.25"};
  if (!x.cfg.get("sweep.values").empty()) ratios = split_list(x.cfg.get("sweep.values"));
  std::string table = "ratio,recovery,seed,ber,accuracy,wire_bits\n";
  for (const auto& r : ratios) {
    for (const char* fill : {"reflect", "zero"}) {
      Config c = x.cfg;
      c.set("slice.ratio", r);
      c.set("slice.recovery", fill);
      for (auto seed : c.seeds()) {
        auto m = run_model(lab, c, seed, "ratio=" + r + "/" + fill, &cache);
        log_model(x.log, m);
        x.out.add_model(m);
        for (const auto& s : m.metrics.summary) {
          table += r + "," + fill + "," + std::to_string(seed) + "," + fmt(s.ber) + "," + fmt(s.mean) + "," +
                   std::to_string(m.metrics.rows.front().wire_bits) + "\n";
        }
      }
    }
  }
  x.out.add_table("summary.csv", table);
}

void preset_full(Ctx& x) {
  Lab lab = lab_with_checkpoint(x);
  std::string table = summary_header("model");
  for (auto seed : x.cfg.seeds()) {
    auto m = run_model(lab, x.cfg, seed, "semnn");
    log_model(x.log, m);
    x.out.add_model(m);
    table += summary_rows("semnn", m);
  }
  x.out.add_table("summary.csv", table);
}

void preset_resilience(Ctx& x) {
  Lab lab = lab_with_checkpoint(x);
  Stage1Cache cache;
  std::string table = summary_header("variant");
  for (auto seed : x.cfg.seeds()) {
    Config abl = x.cfg;
    abl.set("train.ber_mode", "fixed");
    abl.set("train.ber", "0");
    abl.set("train.ber_side", "zero");
    abl.set("eval.ber_side", "zero");
    for (auto& [label, c] : {std::pair<std::string, const Config*>{"full", &x.cfg}, {"ablation", &abl}}) {
      auto m = run_model(lab, *c, seed, label, &cache);
      log_model(x.log, m);
      x.out.add_model(m);
      table += summary_rows(label, m);
    }
  }
  x.out.add_table("summary.csv", table);
}

}  // namespace

void run_preset_or_throw(const std::string& name, const Config& cfg_in, const fs::path& out_dir,
                         std::ostream& log) {
  if (std::find(preset_names().begin(), preset_names().end(), name) == preset_names().end()) {
    throw ConfigError("unknown preset '" + name + "'");
  }
  Config cfg = cfg_in;
  cfg.set("preset", name);
  cfg.seeds();
  RunDir out(out_dir, cfg);
  Ctx x{cfg, out, log};
  if (name == "huffman-vs-fixed") preset_huffman(x);
  else if (name == "two-stage-ablation") preset_two_stage(x);
  else if (name == "alpha-sweep") preset_sweep(x, "loss.alpha", {"0", "1", "2", "4"});
  else if (name == "gamma-sweep") preset_sweep(x, "loss.gamma", {"0", "0.5", "1", "2"});
  else if (name == "sweep") preset_sweep(x, "", {});
  else if (name == "dynamic-ber-attention") preset_dynamic(x);
  else if (name == "slice-ratio") preset_slice(x);
  else if (name == "full-pipeline") preset_full(x);
  else if (name == "error-resilience") preset_resilience(x);
  out.finish(name);
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const std::invalid_argument*>(&e)) return kConfigError;
  if (dynamic_cast<const optim::DivergenceError*>(&e)) return kDivergence;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) return kIoError;
  return 1;
}

int run_preset(const std::string& name, const Config& c, const fs::path& out_dir, std::ostream& log) {
  try {
    run_preset_or_throw(name, c, out_dir, log);
    return kOk;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace semnn::harness
