#include "dstream/apps/wordcount.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <unordered_map>

#include "dstream/bytes.hpp"
#include "dstream/errors.hpp"
#include "dstream/group.hpp"
#include "dstream/sim/collectives.hpp"
#include "dstream/sim/noise.hpp"
#include "dstream/stream.hpp"

namespace dstream::apps::wordcount {
namespace {

constexpr std::size_t kPairSlotBytes = 4 + kMaxTokenBytes + 8;

bool is_token_byte(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

char lower_ascii(unsigned char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
}

template <class F>
void for_each_token(std::string_view text, F&& fn) {
  std::string token;
  for (unsigned char c : text) {
    if (is_token_byte(c)) {
      if (token.size() < kMaxTokenBytes) token.push_back(lower_ascii(c));
    } else if (!token.empty()) {
      fn(std::string_view(token));
      token.clear();
    }
  }
  if (!token.empty()) fn(std::string_view(token));
}

std::string word_from_index(int index) {
  std::string w;
  int v = index;
  do {
    w.push_back(static_cast<char>('a' + v % 26));
    v = v / 26 - 1;
  } while (v >= 0);
  std::reverse(w.begin(), w.end());
  return w;
}

/// Walker alias table for O(1) draws from a fixed discrete distribution.
class AliasTable {
 public:
  explicit AliasTable(std::vector<double> weights) {
    const std::size_t n = weights.size();
    double sum = 0.0;
    for (double w : weights) sum += w;
    prob_.resize(n);
    alias_.assign(n, 0);
    std::vector<std::size_t> small, large;
    for (std::size_t i = 0; i < n; ++i) {
      weights[i] *= static_cast<double>(n) / sum;
      (weights[i] < 1.0 ? small : large).push_back(i);
    }
    while (!small.empty() && !large.empty()) {
      std::size_t s = small.back(), l = large.back();
      small.pop_back();
      large.pop_back();
      prob_[s] = weights[s];
      alias_[s] = l;
      weights[l] = weights[l] + weights[s] - 1.0;
      (weights[l] < 1.0 ? small : large).push_back(l);
    }
    for (std::size_t i : large) prob_[i] = 1.0;
    for (std::size_t i : small) prob_[i] = 1.0;
  }

  std::size_t sample(sim::Rng& rng) const {
    std::size_t i = static_cast<std::size_t>(rng.next_unit() * static_cast<double>(prob_.size()));
    if (i >= prob_.size()) i = prob_.size() - 1;
    return rng.next_unit() < prob_[i] ? i : alias_[i];
  }

 private:
  std::vector<double> prob_;
  std::vector<std::size_t> alias_;
};

/// Fixed-size stream element holding up to `capacity` key/count pairs:
/// u32 pair count, then per slot u32 key length, 64 key bytes, u64 count.
class BatchWriter {
 public:
  explicit BatchWriter(int capacity) : capacity_(capacity) { reset(); }

  bool empty() const { return count_ == 0; }
  bool full() const { return count_ == capacity_; }

  void add(std::string_view key, std::uint64_t count) {
    bytes::put_u32(buf_, static_cast<std::uint32_t>(key.size()));
    std::size_t start = buf_.size();
    buf_.resize(start + kMaxTokenBytes);
    std::memcpy(buf_.data() + start, key.data(), key.size());
    bytes::put_u64(buf_, count);
    ++count_;
  }

  std::vector<std::byte> take() {
    std::vector<std::byte> out = std::move(buf_);
    std::uint32_t n = static_cast<std::uint32_t>(count_);
    for (int i = 0; i < 4; ++i) out[i] = static_cast<std::byte>((n >> (8 * i)) & 0xff);
    out.resize(4 + static_cast<std::size_t>(capacity_) * kPairSlotBytes);
    reset();
    return out;
  }

 private:
  void reset() {
    buf_.clear();
    bytes::put_u32(buf_, 0);
    count_ = 0;
  }

  int capacity_;
  int count_ = 0;
  std::vector<std::byte> buf_;
};

template <class F>
std::uint64_t for_each_pair(const std::vector<std::byte>& payload, F&& fn) {
  bytes::Reader r(payload);
  std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::uint32_t len = r.u32();
    if (len > kMaxTokenBytes) throw ProtocolError("wordcount: oversized key in stream element");
    auto slot = r.blob(kMaxTokenBytes);
    std::uint64_t count = r.u64();
    fn(std::string_view(reinterpret_cast<const char*>(slot.data()), len), count);
  }
  return n;
}

std::vector<std::byte> serialize_keys(const std::vector<std::string>& keys) {
  std::vector<std::byte> out;
  bytes::put_u32(out, static_cast<std::uint32_t>(keys.size()));
  for (const auto& k : keys) {
    bytes::put_u32(out, static_cast<std::uint32_t>(k.size()));
    bytes::put_blob(out, reinterpret_cast<const std::byte*>(k.data()), k.size());
  }
  return out;
}

std::vector<std::byte> serialize_counts(const std::vector<std::uint64_t>& counts) {
  std::vector<std::byte> out;
  out.reserve(counts.size() * 8);
  for (std::uint64_t c : counts) bytes::put_u64(out, c);
  return out;
}

/// Documents [begin, end) handled by mapper m of n, sized evenly with the
/// remainder going to the lowest indices.
std::pair<int, int> doc_range(int docs, int mappers, int m) {
  int base = docs / mappers;
  int rem = docs % mappers;
  int begin = m * base + std::min(m, rem);
  return {begin, begin + base + (m < rem ? 1 : 0)};
}

struct RankSlot {
  Histogram histogram;
  std::uint64_t tokens = 0;
};

}  // namespace

void CorpusSpec::validate() const {
  if (vocab_size < 1) throw ValidationError("vocab_size must be >= 1");
  if (!(zipf_exponent >= 0.0) || !std::isfinite(zipf_exponent)) {
    throw ValidationError("zipf_exponent must be finite and >= 0");
  }
  if (documents < 0) throw ValidationError("documents must be >= 0");
  if (!(doc_size_skew >= 1.0)) throw ValidationError("doc_size_skew must be >= 1");
}

Corpus Corpus::synthetic(const CorpusSpec& spec) {
  spec.validate();
  std::vector<double> weights(static_cast<std::size_t>(spec.vocab_size));
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i] = 1.0 / std::pow(static_cast<double>(i + 1), spec.zipf_exponent);
  }
  AliasTable table(std::move(weights));
  std::vector<std::string> vocab(static_cast<std::size_t>(spec.vocab_size));
  for (int i = 0; i < spec.vocab_size; ++i) vocab[static_cast<std::size_t>(i)] = word_from_index(i);

  int docs = spec.documents;
  if (docs == 0) {
    docs = static_cast<int>(std::max<std::uint64_t>(1, spec.total_tokens / 1000));
  }
  docs = static_cast<int>(std::min<std::uint64_t>(
      static_cast<std::uint64_t>(docs), std::max<std::uint64_t>(1, spec.total_tokens)));

  // Document lengths ramp linearly so max/min equals doc_size_skew.
  std::vector<double> ramp(static_cast<std::size_t>(docs));
  for (int d = 0; d < docs; ++d) {
    double t = docs == 1 ? 0.0 : static_cast<double>(d) / (docs - 1);
    ramp[static_cast<std::size_t>(d)] = 1.0 + (spec.doc_size_skew - 1.0) * t;
  }
  double ramp_sum = 0.0;
  for (double v : ramp) ramp_sum += v;
  std::vector<std::uint64_t> sizes(static_cast<std::size_t>(docs));
  std::uint64_t assigned = 0;
  for (int d = 0; d < docs; ++d) {
    sizes[static_cast<std::size_t>(d)] = static_cast<std::uint64_t>(
        static_cast<double>(spec.total_tokens) * ramp[static_cast<std::size_t>(d)] / ramp_sum);
    assigned += sizes[static_cast<std::size_t>(d)];
  }
  for (int d = 0; assigned < spec.total_tokens; d = (d + 1) % docs) {
    ++sizes[static_cast<std::size_t>(d)];
    ++assigned;
  }

  sim::Rng rng(sim::Rng::derive(spec.seed, 0x77637331));
  Corpus corpus;
  corpus.documents.resize(static_cast<std::size_t>(docs));
  for (int d = 0; d < docs; ++d) {
    auto& doc = corpus.documents[static_cast<std::size_t>(d)];
    doc.doc_id = d;
    doc.text.reserve(sizes[static_cast<std::size_t>(d)] * 7);
    for (std::uint64_t t = 0; t < sizes[static_cast<std::size_t>(d)]; ++t) {
      doc.text += vocab[table.sample(rng)];
      double u = rng.next_unit();
      if (u < 0.05) {
        doc.text += ". ";
      } else if (u < 0.13) {
        doc.text += '\n';
      } else {
        doc.text += ' ';
      }
    }
  }
  return corpus;
}

Corpus Corpus::from_directory(const std::string& dir, int* unreadable) {
  namespace fs = std::filesystem;
  if (unreadable) *unreadable = 0;
  if (!fs::is_directory(dir)) {
    throw ValidationError("corpus directory not found: " + dir);
  }
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  Corpus corpus;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    std::ifstream in(paths[i], std::ios::binary);
    if (!in) {
      if (unreadable) ++*unreadable;
      continue;
    }
    Document doc;
    doc.doc_id = static_cast<std::int64_t>(i);
    doc.text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  for_each_token(text, [&](std::string_view tok) { out.emplace_back(tok); });
  return out;
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

Histogram serial_histogram(const Corpus& corpus) {
  std::unordered_map<std::string, std::uint64_t> acc;
  for (const auto& doc : corpus.documents) {
    for_each_token(doc.text, [&](std::string_view tok) { ++acc[std::string(tok)]; });
  }
  return Histogram(acc.begin(), acc.end());
}

void write_histogram(const Histogram& h, std::ostream& out) {
  for (const auto& [word, count] : h) {
    out << word << '\t' << count << '\n';
  }
}

void WordcountConfig::validate() const {
  if (ranks < 2) throw ValidationError("wordcount needs at least 2 ranks");
  if (variant == Variant::Decoupled && ranks < 3) {
    throw ValidationError("decoupled wordcount needs at least 3 ranks");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
  if (batch_pairs < 1) throw ValidationError("batch_pairs must be >= 1");
  if (per_token_us < 0.0 || per_pair_us < 0.0) {
    throw ValidationError("per-token and per-pair costs must be >= 0");
  }
  sim.validate();
}

namespace {

constexpr std::uint64_t kKeysTag = 0x77630001;
constexpr std::uint64_t kCountsTag = 0x77630002;

void run_conventional(sim::RankContext& ctx, const Corpus& corpus,
                      const WordcountConfig& config, std::vector<RankSlot>& slots) {
  const int rank = ctx.rank();
  const int P = ctx.world_size();
  const int docs = static_cast<int>(corpus.documents.size());

  std::unordered_map<std::string, std::uint64_t> local;
  std::uint64_t tokens = 0;
  auto [d0, d1] = doc_range(docs, P, rank);
  for (int d = d0; d < d1; ++d) {
    std::uint64_t doc_tokens = 0;
    for_each_token(corpus.documents[static_cast<std::size_t>(d)].text,
                   [&](std::string_view tok) {
                     ++local[std::string(tok)];
                     ++doc_tokens;
                   });
    tokens += doc_tokens;
    ctx.work(static_cast<double>(doc_tokens) * config.per_token_us, "map");
  }
  slots[static_cast<std::size_t>(rank)].tokens = tokens;

  std::vector<int> members(static_cast<std::size_t>(P));
  for (int i = 0; i < P; ++i) members[static_cast<std::size_t>(i)] = i;

  // Key-set union: every rank learns the global sorted key list.
  std::vector<std::string> my_keys;
  my_keys.reserve(local.size());
  for (const auto& [k, v] : local) my_keys.push_back(k);
  std::sort(my_keys.begin(), my_keys.end());
  auto gathered = sim::allgather(ctx, members, serialize_keys(my_keys), kKeysTag);

  std::set<std::string> key_union;
  for (const auto& payload : gathered) {
    bytes::Reader r(payload);
    std::uint32_t n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
      std::uint32_t len = r.u32();
      auto raw = r.blob(len);
      key_union.insert(std::string(reinterpret_cast<const char*>(raw.data()), raw.size()));
    }
  }
  std::vector<std::string> keys(key_union.begin(), key_union.end());
  std::unordered_map<std::string_view, std::size_t> index;
  index.reserve(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) index[keys[i]] = i;

  std::vector<std::uint64_t> counts(keys.size(), 0);
  for (const auto& [k, v] : local) counts[index.at(k)] = v;

  // Per-key sum to rank 0 over a binomial tree; each fold is charged as
  // reduce work proportional to the key count.
  for (int mask = 1; mask < P; mask <<= 1) {
    if (rank & mask) {
      ctx.send_message(rank - mask, kCountsTag, serialize_counts(counts));
      return;
    }
    if (rank + mask < P) {
      auto payload = ctx.recv_message(rank + mask, kCountsTag);
      ctx.work(static_cast<double>(keys.size()) * config.per_pair_us, "reduce");
      bytes::Reader r(payload);
      for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += r.u64();
    }
  }

  Histogram result;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (counts[i] > 0) result[keys[i]] = counts[i];
  }
  slots[0].histogram = std::move(result);
}

struct DecoupledLayout {
  int mappers = 0;
  int reducers = 0;  ///< excludes the master
  int master_rank = 0;
};

DecoupledLayout decoupled_split(int P, double alpha) {
  int reduce_side = static_cast<int>(std::lround(alpha * P));
  reduce_side = std::clamp(reduce_side, 2, P - 1);
  return {P - reduce_side, reduce_side - 1, P - 1};
}

void run_decoupled(sim::RankContext& ctx, const Corpus& corpus, const WordcountConfig& config,
                   std::vector<RankSlot>& slots) {
  const int rank = ctx.rank();
  const DecoupledLayout split = decoupled_split(ctx.world_size(), config.alpha);
  const int docs = static_cast<int>(corpus.documents.size());
  const std::string group = *ctx.layout().group_of(rank);

  StreamElementType batch_type(4 + static_cast<std::size_t>(config.batch_pairs) * kPairSlotBytes,
                               "kv-batch");
  if (!ctx.layout_registered("kv-batch")) ctx.register_layout("kv-batch");

  if (group == "map") {
    Channel ch = create_channel(ctx, "map", "reduce");
    Stream out = attach(ch, batch_type);

    std::vector<BatchWriter> pending(static_cast<std::size_t>(split.reducers),
                                     BatchWriter(config.batch_pairs));
    auto reducer_rank = [&](std::size_t i) { return split.mappers + static_cast<int>(i); };
    auto emit = [&](std::string_view key, std::uint64_t count) {
      std::size_t i = fnv1a64(key) % static_cast<std::uint64_t>(split.reducers);
      pending[i].add(key, count);
      if (pending[i].full()) out.isend_to(reducer_rank(i), pending[i].take());
    };

    std::unordered_map<std::string, std::uint64_t> combined;
    std::uint64_t tokens = 0;
    auto [d0, d1] = doc_range(docs, split.mappers, rank);
    for (int d = d0; d < d1; ++d) {
      std::uint64_t doc_tokens = 0;
      for_each_token(corpus.documents[static_cast<std::size_t>(d)].text,
                     [&](std::string_view tok) {
                       ++doc_tokens;
                       if (config.combine) {
                         ++combined[std::string(tok)];
                       }
                     });
      ctx.work(static_cast<double>(doc_tokens) * config.per_token_us, "map");
      if (!config.combine) {
        // Stream (word, 1) pairs as this document finishes.
        for_each_token(corpus.documents[static_cast<std::size_t>(d)].text,
                       [&](std::string_view tok) { emit(tok, 1); });
      }
      tokens += doc_tokens;
    }
    if (config.combine) {
      for (const auto& [k, v] : combined) emit(k, v);
    }
    for (std::size_t i = 0; i < pending.size(); ++i) {
      if (!pending[i].empty()) out.isend_to(reducer_rank(i), pending[i].take());
    }
    out.terminate();
    slots[static_cast<std::size_t>(rank)].tokens = tokens;
    free_channel(ch);
    return;
  }

  if (group == "reduce") {
    Channel in_ch = create_channel(ctx, "map", "reduce");
    Channel out_ch = create_channel(ctx, "reduce", "master");
    Stream to_master = attach(out_ch, batch_type);

    std::unordered_map<std::string, std::uint64_t> partial;
    Stream in = attach(in_ch, batch_type, [&](const StreamElement& el) {
      if (config.aggregate_partials) {
        auto n = for_each_pair(el.payload,
                               [&](std::string_view k, std::uint64_t c) {
                                 partial[std::string(k)] += c;
                               });
        ctx.work(static_cast<double>(n) * config.per_pair_us, "reduce");
      } else {
        // Congestion mode: forward raw batches straight to the master.
        to_master.isend_to(split.master_rank, el.payload);
      }
    });
    in.operate();
    free_channel(in_ch);

    if (config.aggregate_partials) {
      BatchWriter w(config.batch_pairs);
      for (const auto& [k, v] : partial) {
        w.add(k, v);
        if (w.full()) to_master.isend_to(split.master_rank, w.take());
      }
      if (!w.empty()) to_master.isend_to(split.master_rank, w.take());
    }
    to_master.terminate();
    free_channel(out_ch);
    return;
  }

  // Master: merge reducer output.
  Channel ch = create_channel(ctx, "reduce", "master");
  std::unordered_map<std::string, std::uint64_t> merged;
  Stream in = attach(ch, batch_type, [&](const StreamElement& el) {
    auto n = for_each_pair(el.payload, [&](std::string_view k, std::uint64_t c) {
      merged[std::string(k)] += c;
    });
    ctx.work(static_cast<double>(n) * config.per_pair_us, "merge");
  });
  in.operate();
  free_channel(ch);
  slots[static_cast<std::size_t>(rank)].histogram = Histogram(merged.begin(), merged.end());
}

}  // namespace

WordcountResult run_wordcount(const Corpus& corpus, const WordcountConfig& config) {
  config.validate();
  const int P = config.ranks;

  GroupLayout layout = GroupLayout::single_group(P);
  DecoupledLayout split{P, 0, 0};
  if (config.variant == Variant::Decoupled) {
    split = decoupled_split(P, config.alpha);
    std::vector<int> map_ranks, reduce_ranks, master_ranks;
    for (int r = 0; r < split.mappers; ++r) map_ranks.push_back(r);
    for (int r = split.mappers; r < split.mappers + split.reducers; ++r) reduce_ranks.push_back(r);
    master_ranks.push_back(split.master_rank);
    layout = GroupLayout(P, {{"map", map_ranks}, {"reduce", reduce_ranks},
                             {"master", master_ranks}});
  }

  auto slots = std::make_shared<std::vector<RankSlot>>(static_cast<std::size_t>(P));
  auto program = [&corpus, &config, slots](sim::RankContext& ctx) {
    if (config.variant == Variant::Conventional) {
      run_conventional(ctx, corpus, config, *slots);
    } else {
      run_decoupled(ctx, corpus, config, *slots);
    }
  };

  WordcountResult result;
  result.report = sim::run(layout, config.sim, program);
  result.map_ranks = config.variant == Variant::Conventional ? P : split.mappers;
  result.reduce_ranks = config.variant == Variant::Conventional ? P : split.reducers + 1;
  const int root = config.variant == Variant::Conventional ? 0 : split.master_rank;
  result.histogram = std::move((*slots)[static_cast<std::size_t>(root)].histogram);
  for (const auto& slot : *slots) result.tokens_mapped += slot.tokens;
  return result;
}

}  // namespace dstream::apps::wordcount
