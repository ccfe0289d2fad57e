#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "dstream/sim/runtime.hpp"

// Word-histogram MapReduce over the simulated transport. Two variants: a
// conventional one where every rank maps and then joins a staged reduction
// (key-set allgather + per-key tree sum to rank 0), and a decoupled one where
// a small reduce group consumes key/count streams while the map group is
// still producing, with one master rank merging reducer partials.
namespace dstream::apps::wordcount {

struct CorpusSpec {
  int vocab_size = 20000;
  double zipf_exponent = 1.1;
  std::uint64_t total_tokens = 100000;
  std::uint64_t seed = 1;
  int documents = 0;           ///< 0 = about one document per 1000 tokens
  double doc_size_skew = 1.0;  ///< max/min document length ratio (>= 1)

  void validate() const;
};

struct Document {
  std::int64_t doc_id = 0;
  std::string text;
};

struct Corpus {
  std::vector<Document> documents;

  static Corpus synthetic(const CorpusSpec& spec);
  /// Loads every regular file in the directory as one document, in sorted
  /// filename order. Unreadable entries are skipped and counted.
  static Corpus from_directory(const std::string& dir, int* unreadable = nullptr);
};

/// Longest token kept after truncation.
inline constexpr std::size_t kMaxTokenBytes = 64;

/// Splits on non-alphanumeric bytes, lowercases ASCII letters, truncates
/// tokens longer than kMaxTokenBytes.
std::vector<std::string> tokenize(std::string_view text);

std::uint64_t fnv1a64(std::string_view s);

using Histogram = std::map<std::string, std::uint64_t>;

/// Single-threaded reference implementation.
Histogram serial_histogram(const Corpus& corpus);

/// Lines of `word<TAB>count`, sorted by word.
void write_histogram(const Histogram& h, std::ostream& out);

enum class Variant { Conventional, Decoupled };

struct WordcountConfig {
  int ranks = 8;
  Variant variant = Variant::Conventional;
  double alpha = 1.0 / 16.0;  ///< reduce-side share of ranks (decoupled only)
  int batch_pairs = 128;      ///< key/count pairs per stream element
  bool combine = false;       ///< mappers pre-aggregate before streaming
  bool aggregate_partials = true;  ///< reducers send partials, not raw batches
  double per_token_us = 0.05;      ///< map cost per token
  double per_pair_us = 0.02;       ///< reduce cost per key/count pair
  sim::SimConfig sim;

  void validate() const;
};

struct WordcountResult {
  Histogram histogram;  ///< final histogram (master / rank 0)
  std::uint64_t tokens_mapped = 0;
  int map_ranks = 0;
  int reduce_ranks = 0;  ///< reducers + master for the decoupled variant
  sim::RunReport report;
};

WordcountResult run_wordcount(const Corpus& corpus, const WordcountConfig& config);

}  // namespace dstream::apps::wordcount
