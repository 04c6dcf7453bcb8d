#include "vibspk/io.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vibspk {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  return out;
}

}  // namespace

Config Config::parse_string(const std::string& text,
                            const std::string& origin) {
  Config cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                               ": expected key=value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                               ": empty key");
    cfg.values_[key] = value;
    cfg.lines_[key] = lineno;
  }
  return cfg;
}

Config Config::parse_file(const std::string& path) {
  auto in = open_input(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str(), path);
}

void Config::fail(const std::string& key, const std::string& why) const {
  const auto it = lines_.find(key);
  const std::string loc =
      (it != lines_.end())
          ? origin_ + ":" + std::to_string(it->second)
          : origin_;
  throw std::runtime_error(loc + ": key '" + key + "' " + why);
}

bool Config::has(const std::string& key) const { return values_.count(key); }

std::string Config::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) fail(key, "is required but missing");
  return it->second;
}

std::string Config::get_string(const std::string& key,
                               const std::string& def) const {
  const auto it = values_.find(key);
  return it == values_.end() ? def : it->second;
}

std::int64_t Config::get_int(const std::string& key) const {
  const std::string v = get_string(key);
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    fail(key, "has non-integer value '" + v + "'");
  return out;
}

std::int64_t Config::get_int(const std::string& key, std::int64_t def) const {
  return has(key) ? get_int(key) : def;
}

double Config::get_double(const std::string& key, double def) const {
  if (!has(key)) return def;
  const std::string v = get_string(key);
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    fail(key, "has non-numeric value '" + v + "'");
  }
}

bool Config::get_bool(const std::string& key, bool def) const {
  if (!has(key)) return def;
  const std::string v = get_string(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(key, "has non-boolean value '" + v + "'");
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t def) const {
  if (!has(key)) return def;
  const std::string v = get_string(key);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    fail(key, "has non-integer value '" + v + "'");
  return out;
}

std::uint64_t Config::hash() const {
  // FNV-1a over the sorted key=value pairs
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [k, v] : values_) {
    feed(k);
    feed("=");
    feed(v);
    feed("\n");
  }
  return h;
}

// --- corpus ----------------------------------------------------------------

void write_corpus(const Corpus& corpus, const std::string& features_path,
                  const std::string& manifest_path) {
  auto feat = open_output(features_path);
  auto man = open_output(manifest_path);
  for (const auto& u : corpus.utterances) {
    const Matrix& f = u.features.frames;
    feat << u.features.utterance_id << ' ' << u.features.speaker_id << ' '
         << f.rows() << ' ' << f.cols() << '\n';
    for (Eigen::Index t = 0; t < f.rows(); ++t) {
      for (Eigen::Index d = 0; d < f.cols(); ++d) {
        if (d) feat << ' ';
        feat << format_double(f(t, d));
      }
      feat << '\n';
    }
    man << u.features.utterance_id << ' ' << u.features.speaker_id << ' '
        << split_name(u.split) << '\n';
  }
}

Corpus read_corpus(const std::string& features_path,
                   const std::string& manifest_path) {
  std::map<std::string, Split> splits;
  {
    auto man = open_input(manifest_path);
    std::string utt, spk, split;
    while (man >> utt >> spk >> split) splits[utt] = parse_split(split);
  }
  Corpus corpus;
  auto feat = open_input(features_path);
  std::string utt, spk;
  Eigen::Index t_rows = 0, d_cols = 0;
  while (feat >> utt >> spk >> t_rows >> d_cols) {
    Utterance u;
    u.features.utterance_id = utt;
    u.features.speaker_id = spk;
    u.features.frames.resize(t_rows, d_cols);
    for (Eigen::Index t = 0; t < t_rows; ++t)
      for (Eigen::Index d = 0; d < d_cols; ++d)
        if (!(feat >> u.features.frames(t, d)))
          throw std::runtime_error("features file truncated at " + utt);
    const auto it = splits.find(utt);
    if (it == splits.end())
      throw std::runtime_error("utterance missing from manifest: " + utt);
    u.split = it->second;
    corpus.feature_dim = d_cols;
    corpus.utterances.push_back(std::move(u));
  }
  return corpus;
}

// --- trials / scores ---------------------------------------------------------

void write_trials(const TrialList& trials, const std::string& path) {
  auto out = open_output(path);
  for (const auto& t : trials)
    out << t.enroll_id << ' ' << t.test_id << ' '
        << (t.target ? "target" : "nontarget") << '\n';
}

TrialList read_trials(const std::string& path) {
  auto in = open_input(path);
  TrialList trials;
  std::string e, t, label;
  while (in >> e >> t >> label) {
    if (label != "target" && label != "nontarget")
      throw std::runtime_error("bad trial label '" + label + "' in " + path);
    trials.push_back({e, t, label == "target"});
  }
  return trials;
}

void write_scores(const std::vector<ScoredTrial>& scores,
                  const std::string& path) {
  auto out = open_output(path);
  for (const auto& s : scores)
    out << s.enroll_id << ' ' << s.test_id << ' ' << format_double(s.score)
        << ' ' << (s.target ? "target" : "nontarget") << '\n';
}

std::vector<ScoredTrial> read_scores(const std::string& path) {
  auto in = open_input(path);
  std::vector<ScoredTrial> scores;
  std::string e, t, label;
  double v = 0.0;
  while (in >> e >> t >> v >> label) {
    if (label != "target" && label != "nontarget")
      throw std::runtime_error("bad score label '" + label + "' in " + path);
    scores.push_back({e, t, v, label == "target"});
  }
  return scores;
}

// --- embeddings --------------------------------------------------------------

void write_embeddings(const EmbeddingSet& set, const std::string& path) {
  auto out = open_output(path);
  for (Eigen::Index i = 0; i < set.size(); ++i) {
    const std::string spk =
        set.speakers.empty() || set.speakers[i].empty() ? "-" : set.speakers[i];
    out << set.utterances[i] << ' ' << spk;
    for (Eigen::Index d = 0; d < set.dim(); ++d)
      out << ' ' << format_double(set.rows(i, d));
    out << '\n';
  }
}

EmbeddingSet read_embeddings(const std::string& path) {
  auto in = open_input(path);
  std::vector<std::string> utts, spks;
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::istringstream ls(line);
    std::string utt, spk;
    if (!(ls >> utt >> spk))
      throw std::runtime_error("bad embedding line in " + path);
    std::vector<double> vals;
    double v;
    while (ls >> v) vals.push_back(v);
    if (vals.empty())
      throw std::runtime_error("embedding without values: " + utt);
    if (!rows.empty() && vals.size() != rows.front().size())
      throw std::runtime_error("inconsistent embedding dim at " + utt);
    utts.push_back(utt);
    spks.push_back(spk == "-" ? "" : spk);
    rows.push_back(std::move(vals));
  }
  EmbeddingSet set;
  set.utterances = std::move(utts);
  set.speakers = std::move(spks);
  set.rows.resize(Eigen::Index(rows.size()),
                  rows.empty() ? 0 : Eigen::Index(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t d = 0; d < rows[i].size(); ++d)
      set.rows(Eigen::Index(i), Eigen::Index(d)) = rows[i][d];
  return set;
}

std::map<std::string, std::vector<std::string>> read_enroll_map(
    const std::string& path) {
  auto in = open_input(path);
  std::map<std::string, std::vector<std::string>> out;
  std::string enroll, utt;
  while (in >> enroll >> utt) out[enroll].push_back(utt);
  return out;
}

// --- checkpoints -------------------------------------------------------------

namespace {

struct NamedParamRefs {
  std::vector<std::pair<std::string, Matrix*>> mats;
  std::vector<std::pair<std::string, Vector*>> vecs;
};

NamedParamRefs model_param_refs(SpeakerModel& m) {
  NamedParamRefs refs;
  for (std::size_t k = 0; k < m.encoder.layers.size(); ++k) {
    refs.mats.emplace_back("frame" + std::to_string(k) + ".W",
                           &m.encoder.layers[k].W);
    refs.vecs.emplace_back("frame" + std::to_string(k) + ".b",
                           &m.encoder.layers[k].b);
  }
  refs.mats.emplace_back("mu.W", &m.head.mu_layer.W);
  refs.vecs.emplace_back("mu.b", &m.head.mu_layer.b);
  if (m.head.sigma_layer.W.size() > 0) {
    refs.mats.emplace_back("sigma.W", &m.head.sigma_layer.W);
    refs.vecs.emplace_back("sigma.b", &m.head.sigma_layer.b);
  }
  refs.mats.emplace_back("prototypes", &m.classifier.prototypes);
  if (m.classifier.has_bias())
    refs.vecs.emplace_back("class_bias", &m.classifier.bias);
  return refs;
}

}  // namespace

Checkpoint checkpoint_from_model(const SpeakerModel& model, int epoch,
                                 std::uint64_t config_hash) {
  Checkpoint ckpt;
  ckpt.epoch = epoch;
  ckpt.config_hash = config_hash;
  ckpt.loss_kind = loss_kind_name(model.kind);
  auto refs = model_param_refs(const_cast<SpeakerModel&>(model));
  for (const auto& [name, mat] : refs.mats) ckpt.params.emplace_back(name, *mat);
  for (const auto& [name, vec] : refs.vecs)
    ckpt.params.emplace_back(name, Matrix(*vec));
  return ckpt;
}

void checkpoint_into_model(const Checkpoint& ckpt, SpeakerModel& model) {
  if (ckpt.loss_kind != loss_kind_name(model.kind))
    throw std::runtime_error("checkpoint loss kind '" + ckpt.loss_kind +
                             "' does not match model '" +
                             loss_kind_name(model.kind) + "'");
  auto refs = model_param_refs(model);
  auto find = [&ckpt](const std::string& name) -> const Matrix& {
    for (const auto& [n, m] : ckpt.params)
      if (n == name) return m;
    throw std::runtime_error("checkpoint missing parameter block: " + name);
  };
  for (auto& [name, mat] : refs.mats) {
    const Matrix& src = find(name);
    if (src.rows() != mat->rows() || src.cols() != mat->cols())
      throw std::runtime_error("checkpoint shape mismatch for " + name);
    *mat = src;
  }
  for (auto& [name, vec] : refs.vecs) {
    const Matrix& src = find(name);
    if (src.rows() != vec->size() || src.cols() != 1)
      throw std::runtime_error("checkpoint shape mismatch for " + name);
    *vec = src.col(0);
  }
}

void write_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  auto out = open_output(path);
  out << "vibspk-checkpoint v" << ckpt.format_version << '\n';
  out << "epoch " << ckpt.epoch << '\n';
  out << "config_hash " << ckpt.config_hash << '\n';
  out << "loss " << ckpt.loss_kind << '\n';
  for (const auto& [name, mat] : ckpt.params) {
    out << "param " << name << ' ' << mat.rows() << ' ' << mat.cols() << '\n';
    for (Eigen::Index r = 0; r < mat.rows(); ++r) {
      for (Eigen::Index c = 0; c < mat.cols(); ++c) {
        if (c) out << ' ';
        out << format_double(mat(r, c));
      }
      out << '\n';
    }
  }
}

Checkpoint read_checkpoint(const std::string& path) {
  auto in = open_input(path);
  Checkpoint ckpt;
  std::string tag, version;
  in >> tag >> version;
  if (tag != "vibspk-checkpoint" || version != "v1")
    throw std::runtime_error("not a vibspk checkpoint: " + path);
  ckpt.format_version = 1;
  std::string key;
  while (in >> key) {
    if (key == "epoch") {
      in >> ckpt.epoch;
    } else if (key == "config_hash") {
      in >> ckpt.config_hash;
    } else if (key == "loss") {
      in >> ckpt.loss_kind;
    } else if (key == "param") {
      std::string name;
      Eigen::Index rows = 0, cols = 0;
      if (!(in >> name >> rows >> cols))
        throw std::runtime_error("malformed param header in " + path);
      Matrix m(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
          if (!(in >> m(r, c)))
            throw std::runtime_error("truncated param block " + name);
      ckpt.params.emplace_back(name, std::move(m));
    } else {
      throw std::runtime_error("unexpected token '" + key + "' in " + path);
    }
  }
  return ckpt;
}

}  // namespace vibspk
