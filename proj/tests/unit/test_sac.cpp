#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "mapgo/checkpoint.hpp"
#include "mapgo/errors.hpp"
#include "mapgo/sac.hpp"
#include "mapgo/synthetic.hpp"
#include "../support/gradcheck.hpp"

using namespace mapgo;
using ad::Mat;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.graphs = {.n_robots = 3, .poses_per_robot = 6, .seed = 0};
  c.env.n_robots = 3;
  c.env.max_local_edges = c.actor.slots = 40;
  c.batch = 8;
  c.warmup = 20;
  c.update_every = 4;
  c.episodes = 3;
  c.seed = 42;
  auto& e = c.actor.encoder;
  e.layers = 2;
  e.hidden = 4;
  e.edge_hidden = 4;
  e.gate_hidden = 4;
  c.actor.memory_hidden = 5;
  c.actor.edge_embedding = 3;
  c.actor.score_hidden = 4;
  c.actor.corrector_hidden = 6;
  c.critic.encoder = e;
  c.critic.fusion = 8;
  c.critic.hidden = 6;
  return c;
}

std::filesystem::path temp_path(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

}  // namespace

TEST_CASE("replay buffer evicts oldest first") {
  ReplayBuffer buf(3);
  for (int k = 0; k < 5; ++k) {
    auto t = std::make_shared<Transition>();
    t->reward = k;
    buf.push(t);
  }
  CHECK(buf.size() == 3);
  CHECK(buf.appended() == 5);
  nn::Rng rng(1);
  std::set<double> seen;
  for (const auto& t : buf.sample(200, rng)) seen.insert(t->reward);
  CHECK(seen == std::set<double>{2.0, 3.0, 4.0});
  CHECK_THROWS_AS(ReplayBuffer(0), InvalidSpec);
}

TEST_CASE("critic with zero parameters predicts zero and matches finite differences") {
  TrainConfig cfg = tiny_config();
  cfg.warmup = 1000000;
  Trainer tr(cfg);
  tr.train();
  const auto batch = tr.sample_batch();
  std::vector<std::vector<const SubgraphSnapshot*>> states;
  std::vector<std::vector<const RobotObservation*>> obs;
  Mat sel = Mat::Zero(static_cast<int>(batch.size()), 3 * 40), act = Mat::Zero(static_cast<int>(batch.size()), 9);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    std::vector<const SubgraphSnapshot*> row;
    std::vector<const RobotObservation*> orow;
    for (int r = 0; r < 3; ++r) {
      row.push_back(&batch[b]->state[r].graph);
      orow.push_back(&batch[b]->state[r]);
      if (batch[b]->edges[r] >= 0) sel(b, r * 40 + batch[b]->edges[r]) = 1.0;
      act.block(b, 3 * r, 1, 3) = batch[b]->actions[r].transpose();
    }
    states.push_back(row);
    obs.push_back(orow);
  }
  const Mat prog = tr.critic(0).progress(obs);
  CHECK(prog.rows() == static_cast<int>(batch.size()));
  for (int r = 0; r < 3; ++r) {
    // Open fraction and last-step flag are bounded; the error log-ratio is not.
    const Mat bounded = prog.middleCols(Critic::kProgress * r, 2);
    CHECK(bounded.minCoeff() >= 0.0);
    CHECK(bounded.maxCoeff() <= 1.0);
    for (std::size_t b = 0; b < batch.size(); ++b)
      CHECK(prog(b, Critic::kProgress * r + 2) == batch[b]->state[r].log_error_ratio);
  }
  for (int k = 0; k < 2; ++k) {
    Critic& c = tr.critic(k);
    const auto r = gradcheck::check(c.parameters(), [&](ad::Tape& t) {
      return ad::sum(c.value(t, c.encode(t, states), t.constant(sel), t.constant(act), t.constant(prog)));
    });
    CHECK(r.worst < 1e-4);
  }
  Critic zero = tr.critic(0);
  for (auto* p : zero.parameters()) p->value.setZero();
  ad::Tape t(false);
  const Mat q = zero.value(t, zero.encode(t, states), t.constant(sel), t.constant(act), t.constant(prog)).value();
  CHECK(q.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("no updates happen during warmup") {
  TrainConfig cfg = tiny_config();
  cfg.warmup = 1000000;
  Trainer tr(cfg);
  const auto log = tr.train();
  CHECK(tr.updates() == 0);
  CHECK(tr.env_steps() > 0);
  CHECK(tr.replay().size() == static_cast<std::size_t>(tr.env_steps()));
  for (const auto& m : log) CHECK(m.updates == 0);
}

TEST_CASE("a critic step lowers the batch loss") {
  TrainConfig cfg = tiny_config();
  cfg.gamma = 0.0;  // targets are the stored rewards
  cfg.warmup = 1000000;
  Trainer tr(cfg);
  tr.train();
  const auto batch = tr.sample_batch();
  const double before = tr.critic_loss(batch, false);
  for (auto* p : tr.critic_parameters()) p->zero_grad();
  CHECK(tr.critic_loss(batch, true) == doctest::Approx(before));
  for (auto* p : tr.critic_parameters()) p->value -= 1e-3 * p->grad;
  CHECK(tr.critic_loss(batch, false) < before);
}

TEST_CASE("target networks follow by Polyak averaging") {
  TrainConfig cfg = tiny_config();
  cfg.warmup = 1000000;
  cfg.polyak = 0.25;
  Trainer tr(cfg);
  tr.train();
  std::vector<Mat> old_target;
  for (auto* p : tr.target(0).parameters()) old_target.push_back(p->value);
  tr.update();
  const auto src = tr.critic(0).parameters();
  const auto dst = tr.target(0).parameters();
  double worst = 0.0;
  for (std::size_t i = 0; i < dst.size(); ++i)
    worst = std::max(worst, (dst[i]->value - (0.75 * old_target[i] + 0.25 * src[i]->value)).cwiseAbs().maxCoeff());
  CHECK(worst < 1e-15);
  CHECK(tr.updates() == 1);
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
  auto run = [] {
    Trainer tr(tiny_config());
    std::ostringstream os;
    write_metrics_csv(os, tr.train());
    return os.str();
  };
  const std::string a = run();
  CHECK(a == run());
  std::istringstream is(a);
  std::string line;
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 4);
}

TEST_CASE("updates keep losses and temperatures finite") {
  TrainConfig cfg = tiny_config();
  cfg.episodes = 4;
  Trainer tr(cfg);
  const auto log = tr.train();
  CHECK(tr.updates() > 0);
  for (const auto& m : log) {
    CHECK(std::isfinite(m.f_after));
    CHECK(std::isfinite(m.episode_return));
  }
  CHECK(std::isfinite(log.back().last.critic_loss));
  CHECK(std::isfinite(log.back().last.actor_loss));
  CHECK(tr.temperature_discrete() > 0.0);
  CHECK(tr.temperature_continuous() > 0.0);
}

TEST_CASE("a non-finite critic aborts with a checkpoint") {
  TrainConfig cfg = tiny_config();
  cfg.warmup = 1000000;
  cfg.divergence_checkpoint = temp_path("mapgo_divergence.ckpt").string();
  std::filesystem::remove(cfg.divergence_checkpoint);
  Trainer tr(cfg);
  tr.train();
  tr.critic(0).parameters().back()->value(0, 0) = std::nan("");
  CHECK_THROWS_AS(tr.update(), DivergenceDetected);
  CHECK(std::filesystem::exists(cfg.divergence_checkpoint));
}

TEST_CASE("checkpoints round trip and reject corruption") {
  Trainer a(tiny_config());
  TrainConfig other = tiny_config();
  other.seed = 7;
  Trainer b(other);
  const auto path = temp_path("mapgo_roundtrip.ckpt");
  a.save(path);
  b.load(path);
  const auto pa = a.all_parameters(), pb = b.all_parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  CHECK_NOTHROW(decode_checkpoint(bytes));
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  CHECK_THROWS_AS(decode_checkpoint(flipped), CorruptCheckpoint);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 5)), CorruptCheckpoint);
  CHECK_THROWS_AS(decode_checkpoint("MAPGOCKX" + bytes.substr(8)), CorruptCheckpoint);

  TrainConfig wider = tiny_config();
  wider.actor.memory_hidden = 9;
  Trainer c(wider);
  CHECK_THROWS(c.load(path));
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("configuration overrides round trip through JSON") {
  TrainConfig c = TrainConfig::desk_scale();
  apply_overrides(c, {{"batch", 16}, {"hidden", 6}, {"noise", "V2"}, {"slots", 120}});
  CHECK(c.batch == 16);
  CHECK(c.actor.encoder.hidden == 6);
  CHECK(c.graphs.profile.sigma_odom == 0.10);
  CHECK(c.env.max_local_edges == 120);
  TrainConfig d;
  apply_overrides(d, to_json(c));
  CHECK(to_json(d) == to_json(c));
  CHECK_THROWS_AS(apply_overrides(c, {{"no_such_key", 1}}), InvalidSpec);
}
