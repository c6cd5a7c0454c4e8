#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "semnn/train.h"

namespace semnn::harness {

enum ExitCode : int { kOk = 0, kConfigError = 2, kDivergence = 3, kIoError = 4 };

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string version_stamp();

// Flat dotted keys, each with a default. Files hold `key = value` lines; '#'
// starts a comment. Unknown keys are rejected.
class Config {
 public:
  Config();

  static const std::vector<std::pair<std::string, std::string>>& defaults();

  bool known(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value);
  void assign(const std::string& key_eq_value);
  void load_file(const std::filesystem::path& path);

  const std::string& get(const std::string& key) const;
  double real(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<double> reals(const std::string& key) const;
  std::vector<std::uint64_t> seeds() const;

  // Resolved config, one `key = value` line per key, sorted.
  std::string dump() const;
  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

task::TaskConfig task_config(const Config& c);
codec::CodecConfig codec_config(const Config& c, const Shape& split);
train::TrainConfig train_config(const Config& c, std::uint64_t seed);
train::EvalConfig eval_config(const Config& c, std::uint64_t seed);

// Dataset, frozen task model and cached split-point features shared by runs.
struct Lab {
  data::Dataset train_set, val_set;
  task::TaskModel task;
  train::TaskTrainResult task_result;
  train::FeatureSet train_features, val_features;
};

data::Dataset load_dataset(const Config& c);
Lab build_lab(const Config& c);
// Loads the task model from a checkpoint instead of training it.
Lab build_lab(const Config& c, const std::filesystem::path& task_checkpoint);

struct ModelRun {
  std::string label;
  std::uint64_t seed = 0;
  codec::SemanticCodec codec;
  train::StageResult stage1, stage2;
  train::MetricsTable metrics;
  double entropy_bits = 0.0;
};

// Reuses stage-1 codecs across runs whose stage-1 inputs agree.
class Stage1Cache {
 public:
  codec::SemanticCodec get(const Lab& lab, const Config& c, std::uint64_t seed, train::StageResult* log);

 private:
  std::map<std::string, std::pair<codec::SemanticCodec, train::StageResult>> entries_;
};

// Stage 1 (skipped for one-stage configs), stage 2, evaluation on val.
ModelRun run_model(const Lab& lab, const Config& c, std::uint64_t seed, const std::string& label,
                   Stage1Cache* cache = nullptr);

struct HuffmanSetup {
  std::size_t levels = 8;
  double ratio = 8.0;  // p_i proportional to ratio^-i
  std::size_t symbols = 10000;
  std::size_t trials = 100;
};

struct RecoveryStats {
  double fixed = 0.0, huffman = 0.0;  // mean positional recovery
  double fixed_bits = 0.0, huffman_bits = 0.0;
  double flips = 0.0;  // mean flips in the Huffman stream
  std::size_t trials = 0;
};

std::vector<int> geometric_source(std::size_t n, std::size_t levels, double ratio, std::uint64_t seed);

// ber empty: exactly one flipped bit per stream.
RecoveryStats huffman_vs_fixed(const HuffmanSetup& h, std::optional<double> ber, std::uint64_t seed);

struct GenDataOptions {
  std::string kind = "synthetic-shapes";  // or import-small-binary
  std::size_t n = 1000;
  std::size_t classes = 4;
  std::uint64_t seed = 7;
  std::filesystem::path input;  // import-small-binary source
  std::filesystem::path out_dir;
};

struct GenDataResult {
  std::filesystem::path data_file, index_file;
  std::vector<std::size_t> histogram;
};

GenDataResult gen_dataset(const GenDataOptions& o);

// Output directory of one preset or CLI run.
class RunDir {
 public:
  RunDir(std::filesystem::path dir, const Config& c);

  const std::filesystem::path& path() const { return dir_; }
  void add_epochs(const std::string& label, const std::vector<train::EpochLog>& epochs, std::uint64_t seed);
  void add_model(const ModelRun& m);
  void add_row(const std::string& csv_line) { rows_.push_back(csv_line); }
  void add_checkpoint(const std::string& name, const std::vector<NamedTensor>& tensors);
  void add_table(const std::string& file, const std::string& content);
  // Writes metrics.csv and manifest.json, then audits the directory.
  void finish(const std::string& preset);

 private:
  std::filesystem::path dir_;
  std::string config_dump_;
  std::vector<std::string> rows_;
  std::map<std::string, std::string> checkpoints_, tables_;
};

// Files every run directory must hold; returns the missing ones.
std::vector<std::string> audit_run_dir(const std::filesystem::path& dir);

const std::vector<std::string>& preset_names();

// Runs a preset into `out_dir` and maps failures to exit codes.
int run_preset(const std::string& name, const Config& c, const std::filesystem::path& out_dir,
               std::ostream& log);
// Same, but propagates exceptions.
void run_preset_or_throw(const std::string& name, const Config& c, const std::filesystem::path& out_dir,
                         std::ostream& log);

// Maps the library's exception types to exit codes.
int exit_code_for(const std::exception& e);

}  // namespace semnn::harness
