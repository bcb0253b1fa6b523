#include "instances.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

using namespace hmpc;

namespace {

struct Step {
  ConfigDocument doc;
  CondensedProblem p;
  ContractionCertificate cert;
  TightenedProblem tp;
  OuterParams params;
};

// Heap-allocated so the tightened problem can keep pointing at `p`.
std::unique_ptr<Step> make_step(const ConfigDocument& doc) {
  auto s = std::make_unique<Step>();
  s->doc = doc;
  s->p = condense(s->doc.network);
  s->cert = certify_contraction(s->p);
  const SlaterCertificate slater = make_slater_certificate(s->p, doc.x0, doc.u_bar0);
  s->tp = build_tightened(s->p, doc.x0, slater, initial_norm_bound(s->p, doc.x0));
  s->params = compute_step_params(s->tp, 0.5 * doc.x0.dot(s->p.model.Q * doc.x0));
  return s;
}

ConfigDocument scalar_doc() {
  ConfigDocument doc;
  doc.network = hmpc::testing::scalar_network(2);
  doc.x0 = Vector::Constant(1, 0.8);
  doc.u_bar0 = Vector::Constant(2, -0.3);
  return doc;
}

}  // namespace

TEST_CASE("single agent sends no local updates") {
  const auto s = make_step(scalar_doc());
  const DistributedResult r = run_distributed_step(s->tp, s->params, s->cert);
  const MessageStats stats = message_stats(r.log);
  CHECK(stats.consistent);
  CHECK(stats.counts.at(MessageKind::LocalUpdate) == 0);
  CHECK(stats.counts.at(MessageKind::DualBroadcast) == s->params.k_bar);
  CHECK(stats.counts.at(MessageKind::ConstraintContribution) == s->params.k_bar);
  CHECK(stats.counts.at(MessageKind::ParamAnnounce) == 1);
  CHECK(stats.counts.at(MessageKind::Ack) == 1);
}

TEST_CASE("twin harness matches the monolithic solve") {
  const auto s = make_step(hmpc::testing::load_fixture("twin.json"));
  const StepSolution mono = solve_tightened_step(s->tp, s->params, s->cert);
  const DistributedResult r = run_distributed_step(s->tp, s->params, s->cert);
  CHECK((r.solution.u_hat - mono.u_hat).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(r.solution.total_inner_sweeps == mono.total_inner_sweeps);

  const MessageStats stats = message_stats(r.log);
  CHECK(stats.consistent);
  CHECK(stats.outer_iterations == s->params.k_bar);
  CHECK(stats.counts.at(MessageKind::ParamAnnounce) == 2);
  CHECK(stats.counts.at(MessageKind::DualBroadcast) == 2 * s->params.k_bar);
  CHECK(stats.counts.at(MessageKind::LocalUpdate) == 2 * mono.total_inner_sweeps);
  std::size_t bytes = 0;
  for (const auto& m : r.log.messages) bytes += m.frame_bytes();
  CHECK(stats.bytes == bytes);

  HarnessOptions par;
  par.parallel = true;
  const DistributedResult rp = run_distributed_step(s->tp, s->params, s->cert, par);
  CHECK(rp.solution.u_hat == r.solution.u_hat);
  CHECK(encode_log(rp.log) == encode_log(r.log));
}

TEST_CASE("runs are deterministic") {
  const auto s = make_step(hmpc::testing::random_instance(6));
  const DistributedResult a = run_distributed_step(s->tp, s->params, s->cert);
  const DistributedResult b = run_distributed_step(s->tp, s->params, s->cert);
  CHECK(encode_log(a.log) == encode_log(b.log));
  CHECK(a.solution.u_hat == b.solution.u_hat);
}

TEST_CASE("message statistics") {
  CHECK(message_stats(NetworkLog{}).total == 0);
  CHECK(message_stats(NetworkLog{}).bytes == 0);
  CHECK(message_stats(NetworkLog{}).consistent);

  const auto s = make_step(hmpc::testing::load_fixture("twin.json"));
  const DistributedResult r = run_distributed_step(s->tp, s->params, s->cert);

  NetworkLog dropped = r.log;
  const auto it = std::find_if(dropped.messages.begin(), dropped.messages.end(),
                               [](const Message& m) { return m.kind == MessageKind::LocalUpdate; });
  REQUIRE(it != dropped.messages.end());
  dropped.messages.erase(it);
  const MessageStats bad = message_stats(dropped);
  CHECK_FALSE(bad.consistent);
  CHECK_FALSE(bad.problems.empty());

  NetworkLog stray = r.log;
  stray.couplings[0].clear();
  CHECK_FALSE(message_stats(stray).consistent);
}

TEST_CASE("fourteen messages per outer iteration with five sweeps") {
  // Two agents, each reading the other, five sweeps per outer iteration.
  NetworkLog log;
  log.agents = 2;
  log.couplings = {{1}, {0}};
  auto add = [&](MessageKind kind, std::uint32_t src, std::uint32_t dst, int k, int p) {
    Message m;
    m.kind = kind;
    m.src = src;
    m.dst = dst;
    m.k = k;
    m.p = p;
    log.messages.push_back(m);
  };
  const int k_bar = 3;
  for (std::uint32_t a = 1; a <= 2; ++a) add(MessageKind::ParamAnnounce, 0, a, -1, -1);
  for (int k = 0; k < k_bar; ++k) {
    for (std::uint32_t a = 1; a <= 2; ++a) add(MessageKind::DualBroadcast, 0, a, k, 5);
    for (int p = 0; p < 5; ++p) {
      add(MessageKind::LocalUpdate, 1, 2, k, p);
      add(MessageKind::LocalUpdate, 2, 1, k, p);
    }
    for (std::uint32_t a = 1; a <= 2; ++a) add(MessageKind::ConstraintContribution, a, 0, k, 5);
  }
  for (std::uint32_t a = 1; a <= 2; ++a) add(MessageKind::Ack, a, 0, k_bar, -1);
  const MessageStats stats = message_stats(log);
  CHECK(stats.consistent);
  CHECK(stats.counts.at(MessageKind::LocalUpdate) == 10 * k_bar);
  CHECK(stats.counts.at(MessageKind::DualBroadcast) == 2 * k_bar);
  CHECK(stats.counts.at(MessageKind::ConstraintContribution) == 2 * k_bar);
  CHECK(stats.total == 14 * k_bar + 4);
}

TEST_CASE("protocol violations") {
  const auto s = make_step(hmpc::testing::load_fixture("twin.json"));
  NetworkLog log;
  SimulatedNetwork net(s->p, log);
  auto kind_of = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::IoError;
  };

  Message wrong;
  wrong.kind = MessageKind::DualBroadcast;
  wrong.src = kCoordinator;
  wrong.dst = 1;
  wrong.payload = {1.0};
  CHECK(kind_of([&] { net.send(wrong); }) == ErrorKind::ProtocolViolation);
  CHECK(kind_of([&] { net.receive(0, 1, MessageKind::DualBroadcast); }) == ErrorKind::ProtocolViolation);

  Message ok = wrong;
  ok.payload.assign(static_cast<std::size_t>(s->p.n_constraints()), 0.0);
  net.send(ok);
  CHECK_FALSE(net.idle());
  CHECK(kind_of([&] { net.receive(0, 1, MessageKind::LocalUpdate); }) == ErrorKind::ProtocolViolation);

  Message self = ok;
  self.dst = 0;
  CHECK(kind_of([&] { net.send(self); }) == ErrorKind::ProtocolViolation);
  Message unknown = ok;
  unknown.dst = 9;
  CHECK(kind_of([&] { net.send(unknown); }) == ErrorKind::ProtocolViolation);

  NetworkLog log2;
  SimulatedNetwork net2(s->p, log2);
  net2.send(ok);
  net2.send(ok);
  CHECK(log2.messages[0].seq == 0);
  CHECK(log2.messages[1].seq == 1);
  CHECK(net2.receive(0, 1, MessageKind::DualBroadcast).seq == 0);
  CHECK(net2.receive(0, 1, MessageKind::DualBroadcast).seq == 1);
  CHECK(net2.idle());
}

TEST_CASE("binary log round trip") {
  const auto s = make_step(hmpc::testing::load_fixture("twin.json"));
  const DistributedResult r = run_distributed_step(s->tp, s->params, s->cert);
  const std::vector<std::uint8_t> bytes = encode_log(r.log);
  std::size_t expected = 0;
  for (const auto& m : r.log.messages) expected += m.frame_bytes();
  CHECK(bytes.size() == expected);
  const std::vector<Message> back = decode_log(bytes);
  REQUIRE(back.size() == r.log.messages.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    const Message& a = back[i];
    const Message& b = r.log.messages[i];
    CHECK((a.kind == b.kind && a.src == b.src && a.dst == b.dst && a.seq == b.seq && a.k == b.k &&
           a.p == b.p && a.payload == b.payload));
  }
  std::vector<std::uint8_t> truncated(bytes.begin(), bytes.end() - 3);
  CHECK_THROWS_AS(decode_log(truncated), Error);

  const auto path = std::filesystem::temp_directory_path() / "hmpc_test_log.bin";
  write_log(r.log, path.string());
  std::ifstream in(path, std::ios::binary);
  const std::vector<std::uint8_t> file((std::istreambuf_iterator<char>(in)), {});
  CHECK(file == bytes);
  std::filesystem::remove(path);
}
