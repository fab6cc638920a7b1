// Copyright 2026 The crnn Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "crnn/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "crnn/checkpoint.hpp"
#include "crnn/decode.hpp"
#include "crnn/error.hpp"
#include "crnn/optim.hpp"

namespace crnn {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T v{};
  in >> v;
  if (!in || !in.eof()) {
    throw ConfigError("bad value '" + value + "' for " + key);
  }
  if constexpr (std::is_unsigned_v<T>) {
    if (!value.empty() && value[0] == '-') {
      throw ConfigError("bad value '" + value + "' for " + key);
    }
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "no") return false;
  throw ConfigError("bad boolean '" + value + "' for " + key);
}

// Fixed-precision numbers keep reports byte-stable and diffable.
std::string fmt(double v, int digits = 6) {
  if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
  if (std::isnan(v)) return "nan";
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

fs::path default_report(const RunConfig& c, const char* suffix) {
  if (!c.report.empty()) return c.report;
  fs::path p = c.checkpoint;
  p += suffix;
  return p;
}

fs::path sibling(const fs::path& report, const char* suffix) {
  return report.parent_path() / (report.stem().string() + suffix);
}

std::ofstream open_report(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageError("cannot write report " + path.string());
  return out;
}

LoadedCheckpoint load_model(const RunConfig& c) {
  if (c.checkpoint.empty()) throw UsageError("a checkpoint path is required");
  try {
    return load_checkpoint(c.checkpoint);
  } catch (const StorageError& e) {
    throw CheckpointError(e.what());
  }
}

struct Sample {
  std::string filename;
  std::string label;
  LabelSequence target;
  std::size_t width = 0;
  std::vector<float> pixels;  // normalized, 32 x width
};

// Reads one split. `training_geometry` resizes to 100 x 32, otherwise the
// aspect-preserving evaluation rule applies.
std::vector<Sample> load_split(const fs::path& dir, Split split, const Alphabet& alphabet,
                               bool training_geometry, std::size_t limit = 0) {
  std::vector<Sample> out;
  for (const ManifestEntry& e : read_manifest(dir)) {
    if (e.split != split) continue;
    if (limit != 0 && out.size() == limit) break;
    Sample s;
    s.filename = e.filename;
    s.label = e.label;
    try {
      s.target = alphabet.encode(e.label);
    } catch (const AlphabetError&) {
      throw ConfigError("dataset label '" + e.label + "' is outside the model alphabet");
    }
    const Tensor raw = load_pgm(dir / e.filename);
    const Tensor img = training_geometry ? normalize_training(raw) : normalize_input(raw);
    s.width = img.dim(2);
    s.pixels.assign(img.values().begin(), img.values().end());
    out.push_back(std::move(s));
  }
  return out;
}

Tensor batch_tensor(const std::vector<const Sample*>& batch, std::size_t height) {
  const std::size_t w = batch.front()->width;
  std::vector<double> v;
  v.reserve(batch.size() * height * w);
  for (const Sample* s : batch) v.insert(v.end(), s->pixels.begin(), s->pixels.end());
  return Tensor({batch.size(), 1, height, w}, std::move(v));
}

// Groups samples of equal width, preserving order within a group.
std::vector<std::vector<const Sample*>> width_batches(const std::vector<Sample>& samples,
                                                      std::size_t batch_size) {
  std::map<std::size_t, std::vector<const Sample*>> by_width;
  for (const Sample& s : samples) by_width[s.width].push_back(&s);
  std::vector<std::vector<const Sample*>> out;
  for (auto& [w, group] : by_width) {
    for (std::size_t i = 0; i < group.size(); i += batch_size) {
      out.emplace_back(group.begin() + i,
                       group.begin() + std::min(group.size(), i + batch_size));
    }
  }
  return out;
}

struct Evaluation {
  double loss = 0;
  double accuracy = 0;
  std::map<const Sample*, FrameDistributions> outputs;
};

Evaluation evaluate(Model& model, const std::vector<Sample>& samples, bool keep_outputs) {
  Evaluation ev;
  if (samples.empty()) return ev;
  NoGradGuard guard;
  const bool was_training = model.training();
  model.set_training(false);
  std::size_t correct = 0, feasible = 0;
  double loss_sum = 0;
  for (const auto& batch : width_batches(samples, 32)) {
    const Tensor logits = model.logits(batch_tensor(batch, model.config().input_height));
    std::vector<LabelSequence> targets;
    for (const Sample* s : batch) targets.push_back(s->target);
    CtcBatchStats stats;
    ctc_batch_loss(logits, targets, &stats);
    loss_sum += stats.loss_sum;
    feasible += stats.feasible;
    const std::size_t t = logits.dim(0), n = logits.dim(1), k = logits.dim(2);
    std::vector<double> acts(t * k);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t f = 0; f < t; ++f) {
        for (std::size_t c = 0; c < k; ++c) acts[f * k + c] = logits.values()[(f * n + i) * k + c];
      }
      FrameDistributions y = FrameDistributions::from_activations(t, k, acts);
      correct += best_path_decode(y) == batch[i]->target;
      if (keep_outputs) ev.outputs.emplace(batch[i], std::move(y));
    }
  }
  model.set_training(was_training);
  ev.loss = feasible ? loss_sum / feasible : std::numeric_limits<double>::infinity();
  ev.accuracy = static_cast<double>(correct) / samples.size();
  return ev;
}

std::unique_ptr<Optimizer> make_optimizer(const RunConfig& c, std::vector<Tensor> params) {
  if (c.optimizer == "adadelta") {
    return std::make_unique<Adadelta>(std::move(params), AdadeltaOptions{c.rho, c.epsilon});
  }
  return std::make_unique<Momentum>(std::move(params),
                                    MomentumOptions{c.learning_rate, c.momentum});
}

Lexicon load_lexicon(const fs::path& path, const Alphabet& alphabet) {
  try {
    return Lexicon::load(path, alphabet);
  } catch (const AlphabetError& e) {
    throw ConfigError(std::string("lexicon does not match the model alphabet: ") + e.what());
  }
}

void require_dataset(const RunConfig& c) {
  if (!fs::exists(c.dataset / "manifest.tsv")) {
    throw StorageError("no dataset manifest at " + (c.dataset / "manifest.tsv").string());
  }
}

}  // namespace

Alphabet RunConfig::make_alphabet() const {
  if (alphabet.empty()) throw ConfigError("alphabet is empty");
  return Alphabet(alphabet, fold_case);
}

ModelConfig RunConfig::model_config() const {
  ModelConfig mc = preset_by_name(preset, make_alphabet());
  if (!layers.empty()) {
    mc.layers = parse_layers(layers);
    mc.preset = "custom";
  }
  mc.input_height = input_height;
  mc.validate();
  return mc;
}

RenderParams RunConfig::render_params() const {
  RenderParams p;
  if (distortion == "clean") {
    p = RenderParams::clean();
  } else if (distortion == "training") {
    p = RenderParams::training();
  } else if (distortion == "max") {
    p = RenderParams::max_distortion();
  } else {
    throw ConfigError("unknown distortion '" + distortion + "' (clean, training, max)");
  }
  p.max_length = max_length;
  p.height = input_height;
  return p;
}

void RunConfig::validate() const {
  if (optimizer != "adadelta" && optimizer != "momentum") {
    throw ConfigError("unknown optimizer '" + optimizer + "' (adadelta, momentum)");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (delta < 0) throw ConfigError("delta must be non-negative");
  if (repeats == 0) throw ConfigError("repeats must be positive");
  if (max_length == 0) throw ConfigError("max_length must be positive");
  if (!(rho > 0 && rho < 1)) throw ConfigError("rho must lie in (0, 1)");
  if (!(epsilon > 0)) throw ConfigError("epsilon must be positive");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must lie in [0, 1)");
  if (clip_norm < 0 || time_budget < 0 || target_loss < 0) {
    throw ConfigError("clip_norm, time_budget and target_loss must be non-negative");
  }
  render_params();
  model_config();
}

void apply_config_value(const std::string& key, const std::string& value, RunConfig& c) {
  if (key == "dataset") c.dataset = value;
  else if (key == "checkpoint") c.checkpoint = value;
  else if (key == "lexicon") c.lexicon = value;
  else if (key == "image") c.image = value;
  else if (key == "report") c.report = value;
  else if (key == "preset") c.preset = value;
  else if (key == "layers") c.layers = value;
  else if (key == "alphabet") c.alphabet = value;
  else if (key == "fold_case") c.fold_case = parse_bool(key, value);
  else if (key == "input_height") c.input_height = parse_number<std::size_t>(key, value);
  else if (key == "optimizer") c.optimizer = value;
  else if (key == "rho") c.rho = parse_number<double>(key, value);
  else if (key == "epsilon") c.epsilon = parse_number<double>(key, value);
  else if (key == "learning_rate") c.learning_rate = parse_number<double>(key, value);
  else if (key == "momentum") c.momentum = parse_number<double>(key, value);
  else if (key == "batch_size") c.batch_size = parse_number<std::size_t>(key, value);
  else if (key == "epochs") c.epochs = parse_number<std::size_t>(key, value);
  else if (key == "max_steps") c.max_steps = parse_number<std::size_t>(key, value);
  else if (key == "time_budget") c.time_budget = parse_number<double>(key, value);
  else if (key == "clip_norm") c.clip_norm = parse_number<double>(key, value);
  else if (key == "train_limit") c.train_limit = parse_number<std::size_t>(key, value);
  else if (key == "eval_train_every") c.eval_train_every = parse_number<std::size_t>(key, value);
  else if (key == "stop_at_full_train_accuracy") c.stop_at_full_train_accuracy = parse_bool(key, value);
  else if (key == "target_loss") c.target_loss = parse_number<double>(key, value);
  else if (key == "save_optimizer_state") c.save_optimizer_state = parse_bool(key, value);
  else if (key == "delta") c.delta = parse_number<int>(key, value);
  else if (key == "repeats") c.repeats = parse_number<std::size_t>(key, value);
  else if (key == "n") c.n = parse_number<std::size_t>(key, value);
  else if (key == "max_length") c.max_length = parse_number<std::size_t>(key, value);
  else if (key == "distortion") c.distortion = value;
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

void apply_config_file(const fs::path& path, RunConfig& config) {
  std::ifstream in(path);
  if (!in) throw StorageError("cannot read config file " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    try {
      apply_config_value(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), config);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

GenResult cmd_gen(const RunConfig& c, std::ostream& out) {
  c.validate();
  if (c.n == 0) throw UsageError("gen needs --n of at least 1");
  DatasetOptions o;
  o.n = c.n;
  o.seed = c.seed;
  o.alphabet = c.make_alphabet();
  o.params = c.render_params();
  const auto plan = make_dataset(c.dataset, o);
  GenResult r;
  std::map<std::size_t, std::size_t> lengths;
  for (const auto& e : plan) {
    (e.split == Split::kTrain ? r.train : e.split == Split::kValidation ? r.validation : r.test)++;
    ++lengths[e.label.size()];
  }
  out << "dataset\t" << c.dataset.string() << "\n";
  out << "samples\t" << plan.size() << "\ttrain\t" << r.train << "\tvalidation\t"
      << r.validation << "\ttest\t" << r.test << "\n";
  out << "length";
  for (auto [len, k] : lengths) out << "\t" << len << ":" << k;
  out << "\n";
  return r;
}

TrainResult cmd_train(const RunConfig& c, std::ostream& out) {
  c.validate();
  require_dataset(c);
  if (c.checkpoint.empty()) throw UsageError("a checkpoint path is required");
  const ModelConfig mc = c.model_config();
  Model model(mc, c.seed);
  const std::size_t frames = model.frames_for_width(100);

  std::vector<Sample> train = load_split(c.dataset, Split::kTrain, mc.alphabet, true, c.train_limit);
  std::vector<Sample> val = load_split(c.dataset, Split::kValidation, mc.alphabet, true);
  if (train.empty()) throw UsageError("the training split is empty");
  std::size_t longest = 0;
  for (const Sample& s : train) longest = std::max(longest, s.target.size());
  if (longest > frames) {
    throw ConfigError("labels of length " + std::to_string(longest) + " cannot fit in " +
                      std::to_string(frames) + " frames");
  }

  const fs::path log_path = default_report(c, ".train.tsv");
  std::ofstream log = open_report(log_path);
  std::ofstream timing = open_report(sibling(log_path, ".timing.tsv"));
  log << "epoch\tsteps\ttrain_loss\ttrain_feasible\ttrain_infeasible\tval_loss\t"
         "val_accuracy\ttrain_accuracy\tsaved\n";
  timing << "epoch\tseconds\n";

  model.set_training(true);
  auto optimizer = make_optimizer(c, model.parameters());
  std::vector<Tensor> params = model.parameters();
  TrainResult result;
  double best_acc = -1, best_loss = std::numeric_limits<double>::infinity();
  const auto t_start = Clock::now();
  const double cpu_start = cpu_seconds();
  std::vector<std::size_t> order(train.size());

  for (std::size_t epoch = 1; epoch <= c.epochs && result.stop_reason.empty(); ++epoch) {
    const auto t_epoch = Clock::now();
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(splitmix64(c.seed ^ (0x9e37ULL * epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochLog row;
    row.epoch = epoch;
    double loss_sum = 0;
    for (std::size_t i = 0; i < order.size(); i += c.batch_size) {
      std::vector<const Sample*> batch;
      std::vector<LabelSequence> targets;
      for (std::size_t j = i; j < std::min(order.size(), i + c.batch_size); ++j) {
        batch.push_back(&train[order[j]]);
        targets.push_back(train[order[j]].target);
      }
      CtcBatchStats stats;
      Tensor loss = ctc_batch_loss(model.logits(batch_tensor(batch, mc.input_height)),
                                   targets, &stats);
      if (stats.feasible > 0) {
        optimizer->zero_grad();
        loss.backward();
        if (c.clip_norm > 0) clip_grad_norm(params, c.clip_norm);
        optimizer->step();
      }
      loss_sum += stats.loss_sum;
      row.train_feasible += stats.feasible;
      row.train_infeasible += stats.infeasible;
      ++row.steps;
      ++result.steps;
      if (result.steps % 100 == 0) {
        out << "  step " << result.steps << " running loss "
            << fmt(row.train_feasible ? loss_sum / row.train_feasible : 0.0, 4) << " ("
            << fmt(cpu_seconds() - cpu_start, 0) << " cpu s)" << std::endl;
      }
      if (c.max_steps != 0 && result.steps >= c.max_steps) {
        result.stop_reason = "max_steps";
        break;
      }
      if (c.time_budget > 0 && cpu_seconds() - cpu_start >= c.time_budget) {
        result.stop_reason = "time_budget";
        break;
      }
    }
    row.train_loss = row.train_feasible ? loss_sum / row.train_feasible
                                        : std::numeric_limits<double>::infinity();

    const Evaluation ev = evaluate(model, val.empty() ? train : val, false);
    row.val_loss = ev.loss;
    row.val_accuracy = ev.accuracy;
    const bool last = epoch == c.epochs || !result.stop_reason.empty();
    if (c.eval_train_every != 0 && (epoch % c.eval_train_every == 0 || last)) {
      row.train_accuracy = evaluate(model, train, false).accuracy;
    }
    if (row.val_accuracy > best_acc || (row.val_accuracy == best_acc && row.val_loss < best_loss)) {
      best_acc = row.val_accuracy;
      best_loss = row.val_loss;
      CheckpointExtras extras;
      extras.step = result.steps;
      if (c.save_optimizer_state) {
        extras.optimizer = optimizer->name();
        for (auto* slot : optimizer->slots()) extras.optimizer_slots.push_back(*slot);
      }
      save_checkpoint(model, c.checkpoint, extras);
      row.saved = true;
      result.best_epoch = epoch;
      result.best_val_accuracy = best_acc;
    }
    row.seconds = seconds_since(t_epoch);

    log << row.epoch << '\t' << row.steps << '\t' << fmt(row.train_loss) << '\t'
        << row.train_feasible << '\t' << row.train_infeasible << '\t' << fmt(row.val_loss)
        << '\t' << fmt(row.val_accuracy, 4) << '\t'
        << (row.train_accuracy ? fmt(*row.train_accuracy, 4) : "-") << '\t'
        << (row.saved ? 1 : 0) << '\n';
    log.flush();
    timing << row.epoch << '\t' << fmt(row.seconds, 3) << '\n';
    timing.flush();
    out << "epoch " << row.epoch << " loss " << fmt(row.train_loss, 4) << " val_loss "
        << fmt(row.val_loss, 4) << " val_acc " << fmt(row.val_accuracy, 4);
    if (row.train_accuracy) out << " train_acc " << fmt(*row.train_accuracy, 4);
    if (row.train_infeasible) out << " infeasible " << row.train_infeasible;
    out << " (" << fmt(row.seconds, 1) << " s)" << std::endl;
    result.epochs.push_back(row);

    if (result.stop_reason.empty()) {
      if (c.stop_at_full_train_accuracy && row.train_accuracy && *row.train_accuracy == 1.0) {
        result.stop_reason = "full_train_accuracy";
      } else if (c.target_loss > 0 && row.train_loss <= c.target_loss) {
        result.stop_reason = "target_loss";
      }
    }
  }
  if (result.stop_reason.empty()) result.stop_reason = "epochs";
  result.seconds = seconds_since(t_start);
  out << "stopped: " << result.stop_reason << ", best epoch " << result.best_epoch
      << " (val_acc " << fmt(result.best_val_accuracy, 4) << "), checkpoint "
      << c.checkpoint.string() << std::endl;
  return result;
}

std::vector<EvalRow> cmd_eval(const RunConfig& c, std::ostream& out) {
  c.validate();
  require_dataset(c);
  LoadedCheckpoint ck = load_model(c);
  Model& model = ck.model;
  const Alphabet& alphabet = model.config().alphabet;
  std::optional<LexiconDecoder> decoder;
  if (!c.lexicon.empty()) decoder.emplace(load_lexicon(c.lexicon, alphabet), c.delta);
  const std::vector<Sample> test = load_split(c.dataset, Split::kTest, alphabet, false);
  if (test.empty()) throw UsageError("the test split is empty");

  const Evaluation ev = evaluate(model, test, true);
  EvalRow free_row{"lexicon_free", -1, test.size()};
  EvalRow lex_row{"lexicon", c.delta, test.size()};
  const fs::path report = default_report(c, ".eval.tsv");
  std::ofstream rep = open_report(report);
  std::ofstream per = open_report(sibling(report, ".samples.tsv"));
  per << "filename\tlabel\tlexicon_free\tlexicon\tcandidates\n";
  double free_ed = 0, lex_ed = 0;
  std::size_t free_ok = 0, lex_ok = 0, hits = 0, oov = 0;
  for (const Sample& s : test) {
    const FrameDistributions& y = ev.outputs.at(&s);
    const LabelSequence free_seq = best_path_decode(y);
    free_ok += free_seq == s.target;
    free_ed += edit_distance(free_seq, s.target);
    per << s.filename << '\t' << s.label << '\t' << alphabet.decode(free_seq);
    if (decoder) {
      const LexiconDecodeResult r = decoder->decode(y);
      lex_ok += r.sequence == s.target;
      lex_ed += edit_distance(r.sequence, s.target);
      oov += r.out_of_lexicon;
      hits += decoder->lexicon().contains(s.target) &&
              (decoder->exhaustive() ||
               edit_distance(s.target, r.lexicon_free) <= static_cast<std::size_t>(c.delta));
      per << '\t' << alphabet.decode(r.sequence) << '\t' << r.candidates;
    } else {
      per << "\t-\t-";
    }
    per << '\n';
  }
  const double n = static_cast<double>(test.size());
  free_row.accuracy = free_ok / n;
  free_row.mean_edit_distance = free_ed / n;
  std::vector<EvalRow> rows{free_row};
  if (decoder) {
    lex_row.accuracy = lex_ok / n;
    lex_row.mean_edit_distance = lex_ed / n;
    lex_row.candidate_hit_rate = hits / n;
    lex_row.out_of_lexicon_rate = oov / n;
    rows.push_back(lex_row);
  }
  rep << "mode\tdelta\tsamples\taccuracy\tmean_edit_distance\tcandidate_hit_rate\t"
         "out_of_lexicon_rate\n";
  for (const EvalRow& r : rows) {
    rep << r.mode << '\t' << (r.delta < 0 ? std::string("-") : std::to_string(r.delta)) << '\t'
        << r.samples << '\t' << fmt(r.accuracy) << '\t' << fmt(r.mean_edit_distance) << '\t'
        << (r.delta < 0 ? std::string("-") : fmt(r.candidate_hit_rate)) << '\t'
        << (r.delta < 0 ? std::string("-") : fmt(r.out_of_lexicon_rate)) << '\n';
    out << r.mode << ": accuracy " << fmt(r.accuracy, 4) << ", mean edit distance "
        << fmt(r.mean_edit_distance, 4);
    if (r.delta >= 0) {
      out << ", candidate hit rate " << fmt(r.candidate_hit_rate, 4)
          << ", out of lexicon " << fmt(r.out_of_lexicon_rate, 4);
    }
    out << " over " << r.samples << " samples\n";
  }
  out << "report: " << report.string() << std::endl;
  return rows;
}

DecodeResult cmd_decode(const RunConfig& c, std::ostream& out) {
  c.validate();
  if (c.image.empty()) throw UsageError("decode needs --image");
  LoadedCheckpoint ck = load_model(c);
  Model& model = ck.model;
  const Alphabet& alphabet = model.config().alphabet;
  std::optional<LexiconDecoder> decoder;
  if (!c.lexicon.empty()) decoder.emplace(load_lexicon(c.lexicon, alphabet), c.delta);
  const Tensor image = normalize_input(load_pgm(c.image));

  const auto t0 = Clock::now();
  const FrameDistributions y = model.forward(image);
  const double forward_ms = seconds_since(t0) * 1e3;
  DecodeResult r;
  r.transcription = alphabet.decode(best_path_decode(y));
  out << "transcription\t" << r.transcription << "\n";
  if (decoder) {
    const auto t1 = Clock::now();
    const LexiconDecodeResult lr = decoder->decode(y);
    const double search_ms = seconds_since(t1) * 1e3;
    r.lexicon_transcription = alphabet.decode(lr.sequence);
    r.candidates = lr.candidates;
    r.out_of_lexicon = lr.out_of_lexicon;
    out << "lexicon\t" << *r.lexicon_transcription << (lr.out_of_lexicon ? "\t(out of lexicon)" : "")
        << "\n";
    out << "candidates\t" << lr.candidates << "\n";
    out << "forward_ms\t" << fmt(forward_ms, 3) << "\n";
    out << "search_ms\t" << fmt(search_ms, 3) << "\n";
  }
  out.flush();
  return r;
}

std::vector<BenchRow> cmd_bench_delta(const RunConfig& c, std::ostream& out) {
  c.validate();
  require_dataset(c);
  if (c.lexicon.empty()) throw UsageError("bench-delta needs --lexicon");
  LoadedCheckpoint ck = load_model(c);
  Model& model = ck.model;
  const Alphabet& alphabet = model.config().alphabet;
  const Lexicon lexicon = load_lexicon(c.lexicon, alphabet);
  if (lexicon.empty()) throw UsageError("the lexicon is empty");
  const BkTree tree = BkTree::build(lexicon);
  const std::vector<Sample> test = load_split(c.dataset, Split::kTest, alphabet, false);
  if (test.empty()) throw UsageError("the test split is empty");
  const Evaluation ev = evaluate(model, test, true);
  std::vector<const FrameDistributions*> ys;
  std::vector<LabelSequence> best_paths;
  for (const Sample& s : test) {
    ys.push_back(&ev.outputs.at(&s));
    best_paths.push_back(best_path_decode(*ys.back()));
  }

  const fs::path report = default_report(c, ".bench.tsv");
  std::ofstream rep = open_report(report);
  std::ofstream timing = open_report(sibling(report, ".timing.tsv"));
  rep << "delta\tsamples\taccuracy\tmean_candidates\tout_of_lexicon_rate\n";
  timing << "delta\tmean_search_ms\trepeats\n";
  std::vector<BenchRow> rows;
  for (int delta = 0; delta <= 5; ++delta) {
    BenchRow row;
    row.delta = delta;
    std::vector<double> totals;
    for (std::size_t rep_i = 0; rep_i < c.repeats; ++rep_i) {
      const auto t0 = Clock::now();
      for (std::size_t i = 0; i < test.size(); ++i) {
        const auto cands = tree.query(best_paths[i], delta);
        ScoredSequence best;
        if (!cands.empty()) best = score_candidates(*ys[i], cands);
        if (rep_i == 0) {
          row.candidates.push_back(cands.size());
          if (cands.empty()) {
            row.selected_log_probability.push_back(-std::numeric_limits<double>::infinity());
            row.accuracy += best_paths[i] == test[i].target;
            row.out_of_lexicon_rate += 1;
          } else {
            row.selected_log_probability.push_back(best.log_probability);
            row.accuracy += best.sequence == test[i].target;
          }
        }
      }
      totals.push_back(seconds_since(t0));
    }
    std::nth_element(totals.begin(), totals.begin() + totals.size() / 2, totals.end());
    const double n = static_cast<double>(test.size());
    row.mean_search_ms = totals[totals.size() / 2] / n * 1e3;
    row.accuracy /= n;
    row.out_of_lexicon_rate /= n;
    row.mean_candidates =
        std::accumulate(row.candidates.begin(), row.candidates.end(), 0.0) / n;
    rep << delta << '\t' << test.size() << '\t' << fmt(row.accuracy) << '\t'
        << fmt(row.mean_candidates) << '\t' << fmt(row.out_of_lexicon_rate) << '\n';
    timing << delta << '\t' << fmt(row.mean_search_ms, 4) << '\t' << c.repeats << '\n';
    out << "delta " << delta << ": accuracy " << fmt(row.accuracy, 4) << ", candidates "
        << fmt(row.mean_candidates, 2) << ", search " << fmt(row.mean_search_ms, 4)
        << " ms/sample" << std::endl;
    rows.push_back(std::move(row));
  }
  out << "report: " << report.string() << std::endl;
  return rows;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const CheckpointError*>(&e)) return 4;
  if (dynamic_cast<const StorageError*>(&e) || dynamic_cast<const InfeasibleTargetError*>(&e) ||
      dynamic_cast<const DimensionError*>(&e)) {
    return 3;
  }
  if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const ConfigError*>(&e) ||
      dynamic_cast<const AlphabetError*>(&e) || dynamic_cast<const StateError*>(&e)) {
    return 2;
  }
  return 1;
}

}  // namespace crnn
