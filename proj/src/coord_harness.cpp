#include "hmpc/coord_harness.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <future>
#include <set>

namespace hmpc {

namespace {

struct Agent {
  std::uint32_t node = 0;
  BlockData block;
  std::vector<std::size_t> readers;  // agents that read this agent's iterate
  Vector x;
  Vector u;
  Vector sum;
  Vector linear;
};

std::vector<double> to_payload(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector from_payload(const std::vector<double>& values) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  for (std::size_t k = 0; k < values.size(); ++k) v(static_cast<Eigen::Index>(k)) = values[k];
  return v;
}

Message make(MessageKind kind, std::uint32_t src, std::uint32_t dst, long k, int p,
             std::vector<double> payload) {
  Message m;
  m.kind = kind;
  m.src = src;
  m.dst = dst;
  m.k = static_cast<std::int32_t>(k);
  m.p = p;
  m.payload = std::move(payload);
  return m;
}

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    out.push_back(static_cast<std::uint8_t>((value >> (8 * b)) & 0xffu));
  }
}

template <typename T>
T get(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) {
    throw Error(ErrorKind::ProtocolViolation, "truncated message frame");
  }
  T value = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    value |= static_cast<T>(static_cast<T>(in[pos + b]) << (8 * b));
  }
  pos += sizeof(T);
  return value;
}

}  // namespace

std::string_view to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::ParamAnnounce: return "ParamAnnounce";
    case MessageKind::DualBroadcast: return "DualBroadcast";
    case MessageKind::LocalUpdate: return "LocalUpdate";
    case MessageKind::ConstraintContribution: return "ConstraintContribution";
    case MessageKind::Ack: return "Ack";
  }
  return "Unknown";
}

SimulatedNetwork::SimulatedNetwork(const CondensedProblem& p, NetworkLog& log) : p_(p), log_(log) {}

std::size_t SimulatedNetwork::expected_size(const Message& msg) const {
  const auto block_size = [&](std::uint32_t node) {
    if (node == kCoordinator || node > p_.n_blocks()) {
      throw Error(ErrorKind::ProtocolViolation, "message source is not an agent");
    }
    return static_cast<std::size_t>(p_.blocks[node - 1].size);
  };
  switch (msg.kind) {
    case MessageKind::ParamAnnounce: return 4 + static_cast<std::size_t>(p_.n_x());
    case MessageKind::DualBroadcast:
    case MessageKind::ConstraintContribution: return static_cast<std::size_t>(p_.n_constraints());
    case MessageKind::LocalUpdate:
    case MessageKind::Ack: return block_size(msg.src);
  }
  throw Error(ErrorKind::ProtocolViolation, "unknown message kind");
}

void SimulatedNetwork::send(Message msg) {
  if (msg.src > p_.n_blocks() || msg.dst > p_.n_blocks() || msg.src == msg.dst) {
    throw Error(ErrorKind::ProtocolViolation, "message addressed to an unknown node");
  }
  if (msg.payload.size() != expected_size(msg)) {
    throw Error(ErrorKind::ProtocolViolation,
                std::string(to_string(msg.kind)) + " payload has " +
                    std::to_string(msg.payload.size()) + " values, expected " +
                    std::to_string(expected_size(msg)));
  }
  const auto channel = std::make_pair(msg.src, msg.dst);
  msg.seq = next_send_[channel]++;
  log_.messages.push_back(msg);
  queues_[channel].push_back(std::move(msg));
}

Message SimulatedNetwork::receive(std::uint32_t src, std::uint32_t dst, MessageKind expected) {
  const auto channel = std::make_pair(src, dst);
  auto& queue = queues_[channel];
  if (queue.empty()) {
    throw Error(ErrorKind::ProtocolViolation, "no message waiting on channel " +
                                                  std::to_string(src) + " -> " +
                                                  std::to_string(dst));
  }
  Message msg = std::move(queue.front());
  queue.pop_front();
  if (msg.seq != next_recv_[channel]++) {
    throw Error(ErrorKind::ProtocolViolation, "out-of-order sequence number on channel " +
                                                  std::to_string(src) + " -> " +
                                                  std::to_string(dst));
  }
  if (msg.kind != expected) {
    throw Error(ErrorKind::ProtocolViolation, "expected " + std::string(to_string(expected)) +
                                                  ", got " + std::string(to_string(msg.kind)));
  }
  return msg;
}

bool SimulatedNetwork::idle() const {
  return std::all_of(queues_.begin(), queues_.end(),
                     [](const auto& entry) { return entry.second.empty(); });
}

DistributedResult run_distributed_step(const TightenedProblem& tp, const OuterParams& params,
                                       const ContractionCertificate& cert,
                                       const HarnessOptions& opts) {
  const CondensedProblem& p = tp.problem();
  const std::size_t M = p.n_blocks();
  DistributedResult result;
  result.log.agents = M;
  result.log.couplings = cert.couplings;
  SimulatedNetwork net(p, result.log);

  // The coordinator keeps the global data to size the inner loops.
  const auto coord_blocks = make_all_block_data(p, cert);
  std::vector<Agent> agents(M);
  for (std::size_t i = 0; i < M; ++i) {
    Agent& a = agents[i];
    a.node = static_cast<std::uint32_t>(i + 1);
    a.block = make_block_data(p, i, cert.couplings[i]);
    for (std::size_t j = 0; j < M; ++j) {
      const auto& cj = cert.couplings[j];
      if (std::find(cj.begin(), cj.end(), i) != cj.end()) a.readers.push_back(j);
    }
    a.u = Vector::Zero(a.block.lo.size()).cwiseMax(a.block.lo).cwiseMin(a.block.hi);
    a.sum = Vector::Zero(a.block.lo.size());
  }

  std::vector<double> announce = {params.alpha, params.eps, static_cast<double>(params.k_bar),
                                  tp.c};
  for (Eigen::Index r = 0; r < tp.x.size(); ++r) announce.push_back(tp.x(r));
  for (auto& a : agents) {
    net.send(make(MessageKind::ParamAnnounce, kCoordinator, a.node, -1, -1, announce));
  }
  for (auto& a : agents) {
    const Message m = net.receive(kCoordinator, a.node, MessageKind::ParamAnnounce);
    a.x = from_payload(std::vector<double>(m.payload.begin() + 4, m.payload.end()));
  }

  const Vector base = p.Xi * tp.x + p.tau;
  Vector mu = Vector::Zero(p.n_constraints());
  StepSolution& sol = result.solution;
  sol.params = params;

  for (long k = 0; k < params.k_bar; ++k) {
    const auto terms = block_linear_terms(coord_blocks, mu, tp.x);
    const int p_bar = sweeps_needed(cert, lipschitz_from_terms(cert, terms), params.eps);
    sol.total_inner_sweeps += p_bar;
    for (auto& a : agents) {
      net.send(make(MessageKind::DualBroadcast, kCoordinator, a.node, k, p_bar, to_payload(mu)));
    }
    for (auto& a : agents) {
      const Message m = net.receive(kCoordinator, a.node, MessageKind::DualBroadcast);
      a.linear = block_linear_term(a.block, from_payload(m.payload), a.x);
    }

    for (int s = 0; s < p_bar; ++s) {
      for (const auto& a : agents) {
        for (std::size_t j : a.readers) {
          net.send(make(MessageKind::LocalUpdate, a.node, agents[j].node, k, s, to_payload(a.u)));
        }
      }
      std::vector<std::vector<Vector>> inbox(M);
      for (auto& a : agents) {
        for (std::size_t j : a.block.neighbours) {
          const Message m = net.receive(agents[j].node, a.node, MessageKind::LocalUpdate);
          inbox[a.block.index].push_back(from_payload(m.payload));
        }
      }
      std::vector<Vector> next(M);
      auto work = [&](std::size_t i) {
        next[i] = solve_local(agents[i].block, agents[i].linear, inbox[i], agents[i].u);
      };
      if (opts.parallel && M > 1) {
        std::vector<std::future<void>> tasks;
        for (std::size_t i = 1; i < M; ++i) tasks.push_back(std::async(std::launch::async, work, i));
        work(0);
        for (auto& t : tasks) t.get();
      } else {
        for (std::size_t i = 0; i < M; ++i) work(i);
      }
      for (std::size_t i = 0; i < M; ++i) agents[i].u = std::move(next[i]);
    }

    for (auto& a : agents) {
      a.sum += a.u;
      const Vector contribution = a.block.Theta_i * a.u;
      net.send(make(MessageKind::ConstraintContribution, a.node, kCoordinator, k, p_bar,
                    to_payload(contribution)));
    }
    Vector g = base;
    for (auto& a : agents) {
      const Message m = net.receive(a.node, kCoordinator, MessageKind::ConstraintContribution);
      g += from_payload(m.payload);
    }
    g.array() += tp.c;
    mu = dual_update(mu, params.alpha, g);
  }

  for (auto& a : agents) {
    net.send(make(MessageKind::Ack, a.node, kCoordinator, params.k_bar, -1,
                  to_payload(primal_average(a.sum, params.k_bar))));
  }
  Vector u_hat(p.n_u());
  for (std::size_t i = 0; i < M; ++i) {
    const Message m = net.receive(agents[i].node, kCoordinator, MessageKind::Ack);
    u_hat.segment(p.blocks[i].offset, p.blocks[i].size) = from_payload(m.payload);
  }
  if (!net.idle()) {
    throw Error(ErrorKind::ProtocolViolation, "undelivered messages at the end of the step");
  }
  sol.final_mu = mu;
  finalize_step(tp, u_hat, params.k_bar, sol);
  return result;
}

MessageStats message_stats(const NetworkLog& log) {
  MessageStats stats;
  for (MessageKind kind : {MessageKind::ParamAnnounce, MessageKind::DualBroadcast,
                           MessageKind::LocalUpdate, MessageKind::ConstraintContribution,
                           MessageKind::Ack}) {
    stats.counts[kind] = 0;
  }
  std::map<long, long> dual_per_k;
  std::map<long, long> contrib_per_k;
  std::map<long, long> local_per_k;
  std::map<long, std::set<int>> p_bar_per_k;
  for (const auto& m : log.messages) {
    ++stats.counts[m.kind];
    ++stats.total;
    stats.bytes += m.frame_bytes();
    switch (m.kind) {
      case MessageKind::DualBroadcast:
        ++dual_per_k[m.k];
        p_bar_per_k[m.k].insert(m.p);
        break;
      case MessageKind::ConstraintContribution: ++contrib_per_k[m.k]; break;
      case MessageKind::LocalUpdate: {
        ++local_per_k[m.k];
        const std::size_t reader = m.dst - 1;
        const std::size_t owner = m.src - 1;
        const bool allowed = m.src != kCoordinator && m.dst != kCoordinator &&
                             reader < log.couplings.size() &&
                             std::count(log.couplings[reader].begin(),
                                        log.couplings[reader].end(), owner) == 1;
        if (!allowed) {
          stats.consistent = false;
          stats.problems.push_back("LocalUpdate from node " + std::to_string(m.src) +
                                   " to node " + std::to_string(m.dst) +
                                   " outside the coupling set");
        }
        break;
      }
      default: break;
    }
  }
  if (log.messages.empty()) return stats;

  const long M = static_cast<long>(log.agents);
  long edges = 0;
  for (const auto& c : log.couplings) edges += static_cast<long>(c.size());
  auto expect = [&](const std::string& what, long got, long want) {
    if (got != want) {
      stats.consistent = false;
      stats.problems.push_back(what + ": " + std::to_string(got) + " messages, expected " +
                               std::to_string(want));
    }
  };
  expect("ParamAnnounce", stats.counts[MessageKind::ParamAnnounce], M);
  expect("Ack", stats.counts[MessageKind::Ack], M);
  stats.outer_iterations = static_cast<long>(dual_per_k.size());
  std::set<long> ks;
  for (const auto& [k, n] : dual_per_k) ks.insert(k);
  for (const auto& [k, n] : contrib_per_k) ks.insert(k);
  for (const auto& [k, n] : local_per_k) ks.insert(k);
  for (long k : ks) {
    const std::string tag = " at k = " + std::to_string(k);
    expect("DualBroadcast" + tag, dual_per_k[k], M);
    expect("ConstraintContribution" + tag, contrib_per_k[k], M);
    const auto& pbars = p_bar_per_k[k];
    if (pbars.size() != 1) {
      stats.consistent = false;
      stats.problems.push_back("inconsistent inner sweep count" + tag);
      continue;
    }
    expect("LocalUpdate" + tag, local_per_k[k], static_cast<long>(*pbars.begin()) * edges);
  }
  return stats;
}

std::vector<std::uint8_t> encode_log(const NetworkLog& log) {
  std::vector<std::uint8_t> out;
  for (const auto& m : log.messages) {
    out.push_back(static_cast<std::uint8_t>(m.kind));
    put<std::uint32_t>(out, m.src);
    put<std::uint32_t>(out, m.dst);
    put<std::uint64_t>(out, m.seq);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(m.k));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(m.p));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(m.payload.size()));
    for (double v : m.payload) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

std::vector<Message> decode_log(const std::vector<std::uint8_t>& bytes) {
  std::vector<Message> out;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    Message m;
    const std::uint8_t kind = bytes[pos++];
    if (kind < 1 || kind > 5) throw Error(ErrorKind::ProtocolViolation, "bad message kind");
    m.kind = static_cast<MessageKind>(kind);
    m.src = get<std::uint32_t>(bytes, pos);
    m.dst = get<std::uint32_t>(bytes, pos);
    m.seq = get<std::uint64_t>(bytes, pos);
    m.k = static_cast<std::int32_t>(get<std::uint32_t>(bytes, pos));
    m.p = static_cast<std::int32_t>(get<std::uint32_t>(bytes, pos));
    const std::uint32_t len = get<std::uint32_t>(bytes, pos);
    for (std::uint32_t v = 0; v < len; ++v) {
      m.payload.push_back(std::bit_cast<double>(get<std::uint64_t>(bytes, pos)));
    }
    out.push_back(std::move(m));
  }
  return out;
}

void write_log(const NetworkLog& log, const std::string& path) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorKind::IoError, "cannot open " + path + " for writing");
  const auto bytes = encode_log(log);
  file.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!file) throw Error(ErrorKind::IoError, "failed writing " + path);
}

}  // namespace hmpc
