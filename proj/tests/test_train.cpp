#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "adaor/errors.hpp"
#include "adaor/train.hpp"

using namespace adaor;

namespace {

EditTriplet sample_edit(const Task& task, std::uint64_t seed) {
  Rng rng(seed);
  return task.make_triplet(rng);
}

// A predictor-free check: the loss of a net whose output is forced to the
// exact target is zero. Build it by zeroing every layer and putting the target
// into the last bias; valid for a batch of one item.
double loss_with_exact_output(const Task& task) {
  auto net = DenoiserNet::init(0, task.kind());
  Rng rng(1);
  const EditTriplet item = task.make_triplet(rng);
  Rng noise(2);
  auto params = net.parameters();
  for (auto* p : params) p->value.fill(0.0);
  for (std::size_t j = 0; j < task.dim(); ++j) params.back()->value[j] = item.target[j];
  nd::AdamState opt(params, {.lr = 0.0});
  const std::vector<EditTriplet> batch{item};
  return train_step(net, opt, batch, noise, 0);
}

}  // namespace

TEST_SUITE("train") {
  TEST_CASE("mix_triplet forced branches") {
    const Task task(TaskKind::disc);
    const EditTriplet t = sample_edit(task, 3);
    Rng rng(0);
    const EditTriplet null = mix_triplet(t, rng, {1.0, 0.0});
    CHECK(null.instruction == kNullToken);
    CHECK(null.target == t.target);
    CHECK(null.source == t.source);
    const EditTriplet id = mix_triplet(t, rng, {0.0, 1.0});
    CHECK(id.instruction == kIdentityToken);
    CHECK(id.target == t.source);
    const EditTriplet kept = mix_triplet(t, rng, {0.0, 0.0});
    CHECK(kept.instruction == t.instruction);
    CHECK(kept.target == t.target);
    EditTriplet not_edit = t;
    not_edit.instruction = kIdentityToken;
    CHECK_THROWS_AS(mix_triplet(not_edit, rng, {}), ContractError);
    CHECK_THROWS_AS(MixConfig({0.7, 0.5}).validate(), std::invalid_argument);
  }

  TEST_CASE("empirical mix fractions match within 3 sigma") {
    const Task task(TaskKind::vec);
    const EditTriplet t = sample_edit(task, 1);
    Rng rng(42);
    const int n = 100000;
    int nulls = 0, ids = 0;
    for (int i = 0; i < n; ++i) {
      const EditTriplet m = mix_triplet(t, rng, {0.1, 0.1});
      if (m.instruction == kNullToken) ++nulls;
      if (m.instruction == kIdentityToken) {
        ++ids;
        CHECK(m.target == m.source);
      }
    }
    const double se = std::sqrt(0.1 * 0.9 / n);
    CHECK(std::abs(nulls / double(n) - 0.1) < 3 * se);
    CHECK(std::abs(ids / double(n) - 0.1) < 3 * se);
    CHECK(std::abs((n - nulls - ids) / double(n) - 0.8) < 3 * std::sqrt(0.8 * 0.2 / n));
  }

  TEST_CASE("make_batch is deterministic per step") {
    const Task task(TaskKind::disc);
    TrainConfig cfg = TrainConfig::defaults(TaskKind::disc);
    const auto a = make_batch(task, cfg, 5), b = make_batch(task, cfg, 5), c = make_batch(task, cfg, 6);
    REQUIRE(a.size() == 64);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].target == b[i].target);
      CHECK(a[i].instruction == b[i].instruction);
    }
    CHECK(a[0].source != c[0].source);
  }

  TEST_CASE("exact clean-sample output gives zero loss") {
    CHECK(loss_with_exact_output(Task(TaskKind::vec)) == doctest::Approx(0.0).epsilon(1e-24));
  }

  TEST_CASE("initial loss is order one on the vec task") {
    TrainConfig cfg = TrainConfig::defaults(TaskKind::vec);
    cfg.steps = 1;
    const double l0 = train(cfg).losses.front();
    CHECK((l0 > 0.3 && l0 < 5.0));
  }

  TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.steps = 0;
    CHECK_THROWS_AS(train(cfg), std::invalid_argument);
    cfg.steps = 1;
    cfg.lr = std::nan("");
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    CHECK(TrainConfig::defaults(TaskKind::disc).steps == 30000);
    CHECK(TrainConfig::defaults(TaskKind::vec).steps == 5000);
  }

  TEST_CASE("same config twice gives identical checkpoints and the echo lands in the header") {
    TrainConfig cfg = TrainConfig::defaults(TaskKind::vec);
    cfg.steps = 30;
    cfg.mix = {0.15, 0.05};
    const auto a = train(cfg), b = train(cfg);
    const auto bytes = serialize(a.net);
    CHECK(bytes == serialize(b.net));
    CHECK(a.losses == b.losses);
    CHECK(a.net.train_echo().p_null == 0.15);
    const std::string text(bytes.begin(), bytes.end());
    CHECK(text.find("\"p_null\":0.15") != std::string::npos);
    CHECK(text.find("\"p_id\":0.05") != std::string::npos);
  }

  TEST_CASE("p_id = 0 leaves the ID embedding row untouched, NULL and ID rows move apart otherwise") {
    TrainConfig cfg = TrainConfig::defaults(TaskKind::vec);
    cfg.steps = 40;
    cfg.mix.p_id = 0.0;
    const auto init = DenoiserNet::init(init_seed(cfg), TaskKind::vec);
    const auto trained = train(cfg).net;
    const auto& e0 = init.embedding().value;
    const auto& e1 = trained.embedding().value;
    for (std::size_t j = 0; j < kEmbedDim; ++j) {
      CHECK(e1.at(kIdentityToken.id, j) == e0.at(kIdentityToken.id, j));
    }
    bool null_moved = false;
    for (std::size_t j = 0; j < kEmbedDim; ++j) null_moved |= e1.at(kNullToken.id, j) != e0.at(kNullToken.id, j);
    CHECK(null_moved);

    cfg.mix.p_id = 0.1;
    const auto both = train(cfg).net;
    bool differ = false;
    for (std::size_t j = 0; j < kEmbedDim; ++j) {
      differ |= both.embedding().value.at(kNullToken.id, j) != both.embedding().value.at(kIdentityToken.id, j);
    }
    CHECK(differ);
  }

  TEST_CASE("loss CSV has a config comment and a step,loss header") {
    TrainConfig cfg = TrainConfig::defaults(TaskKind::vec);
    const auto path = std::filesystem::temp_directory_path() / "adaor_test_loss.csv";
    write_loss_csv(path, cfg, std::vector<double>{0.5, 0.25});
    std::ifstream in(path);
    std::string l1, l2, l3;
    std::getline(in, l1);
    std::getline(in, l2);
    std::getline(in, l3);
    CHECK(l1.rfind("# task=vec", 0) == 0);
    CHECK(l2 == "step,loss");
    CHECK(l3 == "0,0.5");
    std::filesystem::remove(path);
  }

  TEST_CASE("non-finite loss aborts with the step index") {
    auto net = DenoiserNet::init(0, TaskKind::vec);
    auto params = net.parameters();
    params.back()->value[0] = std::nan("");
    nd::AdamState opt(params);
    const Task task(TaskKind::vec);
    const std::vector<EditTriplet> batch{sample_edit(task, 1)};
    Rng rng(0);
    try {
      train_step(net, opt, batch, rng, 17);
      FAIL("expected NonFiniteError");
    } catch (const NonFiniteError& e) {
      CHECK(std::string(e.what()).find("17") != std::string::npos);
    }
  }
}
