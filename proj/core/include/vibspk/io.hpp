#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vibspk/backend.hpp"
#include "vibspk/model.hpp"
#include "vibspk/synthetic.hpp"

namespace vibspk {

// Flat key=value configuration with '#' comments. Parse and access
// errors carry the key and line number.
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text,
                             const std::string& origin = "<string>");

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& def) const;
  std::int64_t get_int(const std::string& key, std::int64_t def) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key, double def) const;
  bool get_bool(const std::string& key, bool def) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t def) const;

  const std::map<std::string, std::string>& entries() const { return values_; }

  // Stable content hash over sorted key=value pairs.
  std::uint64_t hash() const;

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };
  std::map<std::string, std::string> values_;
  std::map<std::string, int> lines_;
  std::string origin_;

  [[noreturn]] void fail(const std::string& key, const std::string& why) const;
};

// --- corpus files ---------------------------------------------------------
// features: per utterance a header "utterance_id speaker_id T D" followed
// by T rows of D floats. manifest: "utterance_id speaker_id split" lines.

void write_corpus(const Corpus& corpus, const std::string& features_path,
                  const std::string& manifest_path);
Corpus read_corpus(const std::string& features_path,
                   const std::string& manifest_path);

// --- trials / scores ------------------------------------------------------
// trials: "enroll_id test_id {target|nontarget}" lines.

void write_trials(const TrialList& trials, const std::string& path);
TrialList read_trials(const std::string& path);

struct ScoredTrial {
  std::string enroll_id;
  std::string test_id;
  double score = 0.0;
  bool target = false;
};

// scores: "enroll_id test_id score label" lines.
void write_scores(const std::vector<ScoredTrial>& scores,
                  const std::string& path);
std::vector<ScoredTrial> read_scores(const std::string& path);

// --- embeddings -----------------------------------------------------------
// one line per utterance: utterance_id speaker_id|- then E floats.

void write_embeddings(const EmbeddingSet& set, const std::string& path);
EmbeddingSet read_embeddings(const std::string& path);

// multi-enrollment map: "enroll_id utterance_id" lines.
std::map<std::string, std::vector<std::string>> read_enroll_map(
    const std::string& path);

// --- checkpoints ----------------------------------------------------------
// Decimal text with 17 significant digits; round-trips bit-exactly.

struct Checkpoint {
  int format_version = 1;
  int epoch = 0;
  std::uint64_t config_hash = 0;
  std::string loss_kind;
  std::vector<std::pair<std::string, Matrix>> params;
};

Checkpoint checkpoint_from_model(const SpeakerModel& model, int epoch,
                                 std::uint64_t config_hash);
void checkpoint_into_model(const Checkpoint& ckpt, SpeakerModel& model);

void write_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);

// 17-significant-digit decimal rendering used in all float file formats.
std::string format_double(double v);

}  // namespace vibspk
