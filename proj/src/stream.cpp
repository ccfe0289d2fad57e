#include "dstream/stream.hpp"

#include <algorithm>

#include "dstream/errors.hpp"

namespace dstream {

namespace detail {

struct StreamLocal {
  std::uint64_t uid = 0;
  std::uint64_t channel_uid = 0;
  StreamElementType type;
  bool producer_side = false;
  bool channel_freed = false;
  std::vector<int> producers;
  std::vector<int> consumers;

  // producer state
  bool terminated_locally = false;
  std::uint64_t next_seq = 0;
  std::size_t rr_cursor = 0;
  std::vector<std::uint64_t> pair_seq;  // per consumer index

  // consumer state
  Operator op;
  std::set<int> producers_done;
  std::uint64_t processed_total = 0;
};

}  // namespace detail

using detail::StreamLocal;

namespace {

std::size_t index_of(const std::vector<int>& v, int rank) {
  auto it = std::find(v.begin(), v.end(), rank);
  if (it == v.end()) throw UsageError("rank " + std::to_string(rank) + " not in group");
  return static_cast<std::size_t>(it - v.begin());
}

void require_live(const StreamLocal& s, const char* what) {
  if (s.channel_freed)
    throw UsageError(std::string(what) + ": stream " + std::to_string(s.uid) +
                     " used after its channel was freed");
}

}  // namespace

Channel create_channel(sim::RankContext& ctx, const std::string& producer_group,
                       const std::string& consumer_group) {
  Channel ch;
  ch.ctx_ = &ctx;
  ch.uid_ = ctx.channel_create_sync(producer_group, consumer_group);
  ch.producer_group_ = producer_group;
  ch.consumer_group_ = consumer_group;
  ch.producer_side_ = ctx.layout().contains(producer_group, ctx.rank());
  return ch;
}

Stream attach(Channel& channel, const StreamElementType& type, Operator op) {
  if (channel.ctx_ == nullptr) throw UsageError("attach: channel handle is empty");
  if (channel.freed_) throw UsageError("attach: channel already freed");
  sim::RankContext& ctx = *channel.ctx_;

  auto local = std::make_shared<StreamLocal>();
  local->channel_uid = channel.uid_;
  local->type = type;
  local->producer_side = channel.producer_side_;
  local->producers = ctx.layout().members(channel.producer_group_);
  local->consumers = ctx.layout().members(channel.consumer_group_);
  if (local->producer_side) {
    local->rr_cursor = index_of(local->producers, ctx.rank()) % local->consumers.size();
    local->pair_seq.assign(local->consumers.size(), 0);
  } else {
    if (!op) throw UsageError("attach: consumer-group ranks must supply an operator");
    local->op = std::move(op);
  }
  local->uid = ctx.stream_attach(channel.uid_, type);

  channel.locals_.push_back(local);
  Stream s;
  s.ctx_ = &ctx;
  s.local_ = std::move(local);
  return s;
}

std::uint64_t Stream::uid() const noexcept { return local_->uid; }
const StreamElementType& Stream::element_type() const noexcept { return local_->type; }

SendTicket Stream::isend(std::vector<std::byte> element) {
  StreamLocal& s = *local_;
  int consumer = s.consumers[s.rr_cursor % s.consumers.size()];
  ++s.rr_cursor;
  return isend_to(consumer, std::move(element));
}

SendTicket Stream::isend_to(int consumer_rank, std::vector<std::byte> element) {
  StreamLocal& s = *local_;
  require_live(s, "isend");
  if (!s.producer_side) throw UsageError("isend: called on a consumer rank");
  if (s.terminated_locally) throw UsageError("isend: stream already terminated locally");
  if (element.size() != s.type.element_bytes)
    throw UsageError("isend: payload is " + std::to_string(element.size()) +
                     " bytes, element size is " + std::to_string(s.type.element_bytes));

  Envelope env;
  env.stream_id = s.uid;
  env.kind = Envelope::Kind::Data;
  env.seq_no = s.next_seq++;
  env.pair_seq = s.pair_seq[index_of(s.consumers, consumer_rank)]++;
  env.payload = std::move(element);

  SendTicket ticket{s.uid, env.seq_no, consumer_rank};
  ctx_->stream_send(consumer_rank, std::move(env));
  return ticket;
}

void Stream::terminate() {
  StreamLocal& s = *local_;
  require_live(s, "terminate");
  if (!s.producer_side) throw UsageError("terminate: called on a consumer rank");
  if (s.terminated_locally) throw UsageError("terminate: stream already terminated locally");
  s.terminated_locally = true;
  for (std::size_t i = 0; i < s.consumers.size(); ++i) {
    Envelope env;
    env.stream_id = s.uid;
    env.kind = Envelope::Kind::Terminate;
    env.seq_no = s.next_seq;
    env.pair_seq = s.pair_seq[i]++;
    ctx_->stream_send(s.consumers[i], std::move(env));
  }
}

namespace {

// Returns true for a data element, false for a termination marker.
bool consume(StreamLocal& s, Envelope env) {
  if (env.kind == Envelope::Kind::Terminate) {
    if (!s.producers_done.insert(env.producer_rank).second)
      throw ProtocolError("stream " + std::to_string(s.uid) +
                          ": duplicate terminate from producer " +
                          std::to_string(env.producer_rank));
    return false;
  }
  if (s.producers_done.count(env.producer_rank))
    throw ProtocolError("stream " + std::to_string(s.uid) + ": data from producer " +
                        std::to_string(env.producer_rank) + " after its terminate");
  s.op(StreamElement{env.producer_rank, env.seq_no, env.payload});
  ++s.processed_total;
  return true;
}

void require_consumer(const StreamLocal& s, const char* what) {
  if (s.producer_side) throw UsageError(std::string(what) + ": called on a producer rank");
}

}  // namespace

OperateSummary Stream::operate() {
  StreamLocal& s = *local_;
  require_live(s, "operate");
  require_consumer(s, "operate");
  OperateSummary out;
  while (s.producers_done.size() < s.producers.size()) {
    auto env = ctx_->stream_pop(s.uid, true);
    if (consume(s, std::move(*env))) ++out.elements_processed;
  }
  out.terminated = true;
  return out;
}

OperateSummary Stream::operate_poll() {
  StreamLocal& s = *local_;
  require_live(s, "operate_poll");
  require_consumer(s, "operate_poll");
  OperateSummary out;
  while (s.producers_done.size() < s.producers.size()) {
    auto env = ctx_->stream_pop(s.uid, false);
    if (!env) break;
    if (consume(s, std::move(*env))) ++out.elements_processed;
  }
  out.terminated = s.producers_done.size() == s.producers.size();
  return out;
}

bool Stream::closed() const {
  const StreamLocal& s = *local_;
  return s.producer_side ? s.terminated_locally
                         : s.producers_done.size() == s.producers.size();
}

bool Stream::fully_terminated() const {
  const StreamLocal& s = *local_;
  require_consumer(s, "fully_terminated");
  return s.producers_done.size() == s.producers.size();
}

std::uint64_t Stream::elements_processed() const { return local_->processed_total; }

void free_channel(Channel& channel) {
  if (channel.ctx_ == nullptr) throw UsageError("free_channel: channel handle is empty");
  if (channel.freed_) throw UsageError("free_channel: channel already freed");
  for (const auto& local : channel.locals_) {
    bool closed = local->producer_side
                      ? local->terminated_locally
                      : local->producers_done.size() == local->producers.size();
    if (!closed)
      throw UsageError("free_channel: stream " + std::to_string(local->uid) +
                       " is still open on rank " + std::to_string(channel.ctx_->rank()));
  }
  channel.ctx_->channel_free_sync(channel.uid_);
  channel.freed_ = true;
  for (const auto& local : channel.locals_) local->channel_freed = true;
}

}  // namespace dstream
