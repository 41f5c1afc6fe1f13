#include "uqevo/feature_store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "uqevo/estimators.hpp"
#include "uqevo/rng.hpp"

namespace uqevo {

using ordered_json = nlohmann::ordered_json;

std::string to_string(Task t) {
  return t == Task::binary ? "binary" : "continuous";
}

Task task_from_string(const std::string& s) {
  if (s == "binary") return Task::binary;
  if (s == "continuous") return Task::continuous;
  throw DatasetError("unknown task '" + s + "' (expected binary or continuous)");
}

TokenFeatures SequenceSample::token(std::size_t i) const {
  TokenFeatures t;
  t.logprob = logprobs.at(i);
  t.entropy = entropies.at(i);
  for (const auto& [name, column] : channels) t.channels[name] = column.at(i);
  return t;
}

void SequenceSample::push_token(const TokenFeatures& t) {
  logprobs.push_back(t.logprob);
  entropies.push_back(t.entropy);
  for (const auto& [name, value] : t.channels) channels[name].push_back(value);
}

double Dataset::mean_quality() const {
  if (samples.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : samples) sum += s.quality;
  return sum / static_cast<double>(samples.size());
}

namespace {

std::string path_stem(const std::string& path) {
  auto slash = path.find_last_of("/\\");
  std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
  auto dot = base.find_last_of('.');
  return dot == std::string::npos ? base : base.substr(0, dot);
}

[[noreturn]] void line_error(std::size_t line_no, const std::string& what) {
  throw DatasetError("line " + std::to_string(line_no) + ": " + what);
}

double require_finite_number(const ordered_json& j, const char* what,
                             std::size_t line_no) {
  if (!j.is_number()) line_error(line_no, std::string(what) + " is not a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) line_error(line_no, std::string(what) + " is not finite");
  return v;
}

SequenceSample parse_sample_line(const std::string& line, std::size_t line_no) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    line_error(line_no, std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) line_error(line_no, "not a JSON object");

  for (const auto& [key, _] : j.items()) {
    if (key != "id" && key != "quality" && key != "tokens" && key != "meta")
      line_error(line_no, "unknown key '" + key + "'");
  }
  if (!j.contains("id") || !j["id"].is_string())
    line_error(line_no, "missing or non-string 'id'");
  if (!j.contains("quality")) line_error(line_no, "missing 'quality'");
  if (!j.contains("tokens") || !j["tokens"].is_array())
    line_error(line_no, "missing or non-array 'tokens'");

  SequenceSample s;
  s.id = j["id"].get<std::string>();
  s.quality = require_finite_number(j["quality"], "quality", line_no);

  const auto& tokens = j["tokens"];
  if (tokens.empty()) line_error(line_no, "empty 'tokens'");
  // Columnar storage; a channel must appear at every token of the sample to
  // become a dataset channel, but partial channels are legal in the file.
  std::size_t index = 0;
  for (const auto& tok : tokens) {
    if (!tok.is_object()) line_error(line_no, "token is not an object");
    for (const auto& [key, _] : tok.items()) {
      if (key != "lp" && key != "ent" && key != "ch")
        line_error(line_no, "unknown token key '" + key + "'");
    }
    if (!tok.contains("lp") || !tok.contains("ent"))
      line_error(line_no, "token missing 'lp' or 'ent'");
    double lp = require_finite_number(tok["lp"], "lp", line_no);
    double ent = require_finite_number(tok["ent"], "ent", line_no);
    if (lp > 0.0) line_error(line_no, "lp > 0");
    if (ent < 0.0) line_error(line_no, "ent < 0");
    TokenFeatures t;
    t.logprob = lp;
    t.entropy = ent;
    if (tok.contains("ch")) {
      if (!tok["ch"].is_object()) line_error(line_no, "'ch' is not an object");
      for (const auto& [name, value] : tok["ch"].items())
        t.channels[name] = require_finite_number(value, ("channel '" + name + "'").c_str(), line_no);
    }
    s.push_token(t);
    ++index;
  }
  // Channel columns shorter than the token count mean the channel was absent
  // at some token; keep only full columns.
  for (auto it = s.channels.begin(); it != s.channels.end();) {
    if (it->second.size() != s.size())
      it = s.channels.erase(it);
    else
      ++it;
  }

  if (j.contains("meta")) {
    if (!j["meta"].is_object()) line_error(line_no, "'meta' is not an object");
    for (const auto& [key, value] : j["meta"].items()) {
      if (!value.is_string()) line_error(line_no, "meta value for '" + key + "' is not a string");
      s.meta[key] = value.get<std::string>();
    }
  }
  return s;
}

std::set<std::string> common_channels(const std::vector<SequenceSample>& samples) {
  std::set<std::string> common;
  bool first = true;
  for (const auto& s : samples) {
    std::set<std::string> here;
    for (const auto& [name, _] : s.channels) here.insert(name);
    if (first) {
      common = std::move(here);
      first = false;
    } else {
      std::set<std::string> kept;
      std::set_intersection(common.begin(), common.end(), here.begin(), here.end(),
                            std::inserter(kept, kept.begin()));
      common = std::move(kept);
    }
  }
  return common;
}

}  // namespace

void validate_dataset(const Dataset& d) {
  std::set<std::string> ids;
  bool saw_zero = false, saw_one = false;
  for (const auto& s : d.samples) {
    if (s.logprobs.empty()) throw DatasetError("sample '" + s.id + "': no tokens");
    if (s.entropies.size() != s.logprobs.size())
      throw DatasetError("sample '" + s.id + "': column length mismatch");
    if (!ids.insert(s.id).second) throw DatasetError("duplicate id '" + s.id + "'");
    if (!std::isfinite(s.quality))
      throw DatasetError("sample '" + s.id + "': non-finite quality");
    if (d.task == Task::binary) {
      if (s.quality != 0.0 && s.quality != 1.0)
        throw DatasetError("sample '" + s.id + "': quality not in {0,1}");
      (s.quality == 0.0 ? saw_zero : saw_one) = true;
    } else if (s.quality < 0.0 || s.quality > 1.0) {
      throw DatasetError("sample '" + s.id + "': quality outside [0,1]");
    }
    for (const auto& name : d.required_channels) {
      auto it = s.channels.find(name);
      if (it == s.channels.end() || it->second.size() != s.size())
        throw DatasetError("sample '" + s.id + "': missing required channel '" + name + "'");
    }
  }
  if (d.task == Task::binary && !d.samples.empty() && !(saw_zero && saw_one))
    throw DatasetError("binary dataset '" + d.name + "' contains a single class");
}

Dataset parse_jsonl(std::istream& in, std::string name, Task expected_task) {
  Dataset d;
  d.name = std::move(name);
  d.task = expected_task;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
    if (blank) continue;
    d.samples.push_back(parse_sample_line(line, line_no));
  }
  if (d.samples.empty()) throw DatasetError("dataset '" + d.name + "' is empty");
  d.required_channels = common_channels(d.samples);
  validate_dataset(d);
  return d;
}

Dataset load_dataset(const std::string& path, Task expected_task) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open '" + path + "'");
  return parse_jsonl(in, path_stem(path), expected_task);
}

void write_jsonl(const Dataset& d, std::ostream& out) {
  for (const auto& s : d.samples) {
    ordered_json j;
    j["id"] = s.id;
    j["quality"] = s.quality;
    ordered_json tokens = ordered_json::array();
    for (std::size_t i = 0; i < s.size(); ++i) {
      ordered_json tok;
      tok["lp"] = s.logprobs[i];
      tok["ent"] = s.entropies[i];
      if (!s.channels.empty()) {
        ordered_json ch;
        for (const auto& [name, column] : s.channels) ch[name] = column[i];
        tok["ch"] = ch;
      }
      tokens.push_back(std::move(tok));
    }
    j["tokens"] = std::move(tokens);
    if (!s.meta.empty()) {
      ordered_json meta;
      for (const auto& [k, v] : s.meta) meta[k] = v;
      j["meta"] = std::move(meta);
    }
    out << j.dump() << '\n';
  }
}

void write_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DatasetError("cannot write '" + path + "'");
  write_jsonl(d, out);
}

Dataset generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.n_samples <= 0) throw DatasetError("n_samples must be positive");
  if (cfg.min_len <= 0 || cfg.min_len > cfg.max_len)
    throw DatasetError("need 0 < min_len <= max_len");
  if (cfg.noise < 0.0) throw DatasetError("noise must be >= 0");
  for (const auto& [name, _] : cfg.planted_weights) {
    if (!is_catalog_feature(name))
      throw DatasetError("unknown feature '" + name + "' in planted_weights");
  }

  Dataset d;
  d.name = "synthetic";
  d.task = cfg.task;
  d.samples.reserve(static_cast<std::size_t>(cfg.n_samples));

  std::mt19937_64 rng = make_rng(cfg.seed, 0x73796e74ULL);
  std::uniform_int_distribution<int> len_dist(cfg.min_len, cfg.max_len);
  std::normal_distribution<double> unit_normal(0.0, 1.0);

  std::uniform_real_distribution<double> difficulty(0.0, 1.0);
  for (int i = 0; i < cfg.n_samples; ++i) {
    SequenceSample s;
    s.id = "synth-" + std::to_string(i);
    int len = len_dist(rng);
    // Per-sample difficulty spreads the logprob level wide enough that
    // moderate planted weights produce a strong, recoverable signal; the
    // base drifts lower with length.
    double center = 0.05 + 0.02 * len + 3.0 * difficulty(rng);
    for (int t = 0; t < len; ++t) {
      double lp = -std::abs(center + 0.3 * unit_normal(rng));
      double ent = std::abs(0.8 * std::abs(lp) + 0.3 * unit_normal(rng));
      s.logprobs.push_back(lp);
      s.entropies.push_back(ent);
    }

    FeatureVector f = extract_features(s);
    double z = 0.0;
    for (const auto& [name, w] : cfg.planted_weights) z += w * f.at(name);
    z += cfg.noise * unit_normal(rng);
    double p = 1.0 / (1.0 + std::exp(-z));
    if (cfg.task == Task::binary) {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      s.quality = u(rng) < p ? 1.0 : 0.0;
    } else {
      s.quality = std::clamp(p, 0.0, 1.0);
    }
    d.samples.push_back(std::move(s));
  }

  try {
    validate_dataset(d);
  } catch (const DatasetError& e) {
    throw DatasetError(std::string("planted configuration produced an invalid dataset: ") + e.what());
  }
  return d;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& d, double train_fraction,
                                          std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw DatasetError("train_fraction must be in (0,1)");
  const std::size_t n = d.samples.size();
  if (n < 2) throw DatasetError("dataset too small to split");

  // Group indices by class for binary tasks (one group otherwise), shuffle
  // each group, and take round(fraction * group size) into train.
  std::vector<std::vector<std::size_t>> groups;
  if (d.task == Task::binary) {
    groups.resize(2);
    for (std::size_t i = 0; i < n; ++i)
      groups[d.samples[i].quality == 1.0 ? 1 : 0].push_back(i);
  } else {
    groups.resize(1);
    for (std::size_t i = 0; i < n; ++i) groups[0].push_back(i);
  }

  std::vector<bool> in_train(n, false);
  std::size_t group_index = 0;
  for (auto& group : groups) {
    std::mt19937_64 rng = make_rng(seed, 0x73706c69ULL, group_index++);
    std::shuffle(group.begin(), group.end(), rng);
    auto take = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(group.size())));
    for (std::size_t k = 0; k < take && k < group.size(); ++k) in_train[group[k]] = true;
  }

  Dataset train, test;
  train.name = d.name + "-train";
  test.name = d.name + "-test";
  train.task = test.task = d.task;
  train.required_channels = test.required_channels = d.required_channels;
  for (std::size_t i = 0; i < n; ++i)
    (in_train[i] ? train : test).samples.push_back(d.samples[i]);

  if (train.samples.empty() || test.samples.empty())
    throw DatasetError("train_fraction leaves an empty split");
  try {
    validate_dataset(train);
    validate_dataset(test);
  } catch (const DatasetError& e) {
    throw DatasetError(std::string("split produced an invalid dataset: ") + e.what());
  }
  return {std::move(train), std::move(test)};
}

}  // namespace uqevo
