#pragma once

#include "hmpc/outer_subgrad.hpp"

#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace hmpc {

/// Node 0 is the coordinator; agent for subsystem position i is node i + 1.
inline constexpr std::uint32_t kCoordinator = 0;

enum class MessageKind : std::uint8_t {
  ParamAnnounce = 1,           // alpha, eps, k_bar, c, x
  DualBroadcast = 2,           // mu(k); p carries p_bar_k
  LocalUpdate = 3,             // u^i(p) for a neighbour
  ConstraintContribution = 4,  // Theta_i u^i(p_bar)
  Ack = 5,                     // final averaged block u_hat^i
};

std::string_view to_string(MessageKind kind);

struct Message {
  MessageKind kind = MessageKind::Ack;
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  std::uint64_t seq = 0;
  std::int32_t k = -1;
  std::int32_t p = -1;
  std::vector<double> payload;

  /// Frame size in the binary log: 29 header bytes plus 8 per value.
  std::size_t frame_bytes() const { return 29 + 8 * payload.size(); }
};

struct NetworkLog {
  std::size_t agents = 0;
  /// couplings[i]: agents whose iterates agent i reads, by position.
  std::vector<std::vector<std::size_t>> couplings;
  std::vector<Message> messages;
};

struct MessageStats {
  std::map<MessageKind, long> counts;
  long total = 0;
  std::size_t bytes = 0;
  long outer_iterations = 0;
  bool consistent = true;  // counting and locality invariants
  std::vector<std::string> problems;
};

/**
 * Ordered point-to-point channels with per-channel sequence numbers. Every
 * sent message is appended to the log. Payload sizes are checked against the
 * declared dimensions of each kind.
 */
class SimulatedNetwork {
 public:
  SimulatedNetwork(const CondensedProblem& p, NetworkLog& log);

  void send(Message msg);
  /// Next message on channel src -> dst; throws ProtocolViolation when the
  /// channel is empty, the kind is unexpected or the sequence is off.
  Message receive(std::uint32_t src, std::uint32_t dst, MessageKind expected);
  bool idle() const;

 private:
  std::size_t expected_size(const Message& msg) const;

  const CondensedProblem& p_;
  NetworkLog& log_;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> next_send_;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> next_recv_;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::deque<Message>> queues_;
};

struct HarnessOptions {
  bool parallel = false;
};

struct DistributedResult {
  StepSolution solution;
  NetworkLog log;
};

/**
 * Runs one step of the outer/inner iteration as coordinator and agents
 * exchanging messages in synchronous rounds. Single-threaded runs reproduce
 * solve_tightened_step bit for bit.
 */
DistributedResult run_distributed_step(const TightenedProblem& tp, const OuterParams& params,
                                       const ContractionCertificate& cert,
                                       const HarnessOptions& opts = {});

/// Per-kind totals, plus a check of the counting and locality invariants.
MessageStats message_stats(const NetworkLog& log);

std::vector<std::uint8_t> encode_log(const NetworkLog& log);
std::vector<Message> decode_log(const std::vector<std::uint8_t>& bytes);
void write_log(const NetworkLog& log, const std::string& path);

}  // namespace hmpc
