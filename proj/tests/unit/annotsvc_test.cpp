#include <gtest/gtest.h>
#include <httplib.h>

#include <filesystem>
#include <set>
#include <thread>

#include "prewrite/annotsvc/annotsvc.hpp"
#include "prewrite/common/error.hpp"

using namespace prewrite;
using namespace prewrite::annotsvc;

namespace {

SourceItem make_item(int i, bool with_assumptions = true) {
  SourceItem s;
  s.ref = {"conv-" + std::to_string(i), 2};
  convstore::Turn t;
  t.index = 1;
  t.user_text = "hello there " + std::to_string(i);
  t.model_text = "hi, how can I help";
  s.history.push_back(t);
  s.original_user = "fix my code " + std::to_string(i);
  s.original_model = "here is a fix";
  s.rewrite_text = "fix the null check in my parser " + std::to_string(i);
  s.simulated_response = "the parser null check is fixed";
  if (with_assumptions) s.assumptions.push_back({"the user writes C", rewrite::Level::kHigh, rewrite::Level::kMid});
  s.machine_order = intervene::assign_order(7, s.ref);
  return s;
}

std::vector<SourceItem> make_items(int n) {
  std::vector<SourceItem> out;
  for (int i = 0; i < n; ++i) out.push_back(make_item(i, i % 2 == 0));
  return out;
}

std::vector<std::string> annotators(int a) {
  std::vector<std::string> out;
  for (int i = 0; i < a; ++i) out.push_back("ann" + std::to_string(i));
  return out;
}

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kConfig;
}

// Walks a JSON value collecting every object key and string value.
void collect(const json& j, std::set<std::string>& keys, std::vector<std::string>& strings) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) {
      keys.insert(k);
      collect(v, keys, strings);
    }
  } else if (j.is_array()) {
    for (const auto& v : j) collect(v, keys, strings);
  } else if (j.is_string()) {
    strings.push_back(j.get<std::string>());
  }
}

std::vector<AnnotationTask> pairwise_batch(int items, std::size_t n, std::size_t k, int a, std::uint64_t seed) {
  auto src = make_items(items);
  BatchOptions o;
  o.n = n;
  o.annotators_per_item = k;
  o.annotators = annotators(a);
  o.seed = seed;
  o.kinds = {TaskKind::kPairwise5};
  return create_batch(src, o);
}

}  // namespace

TEST(Batch, HundredItemsTwoPerItemFiveAnnotators) {
  auto tasks = pairwise_batch(150, 100, 2, 5, 3);
  ASSERT_EQ(tasks.size(), 100u);
  std::map<std::string, int> load;
  for (const auto& t : tasks) {
    ASSERT_EQ(t.annotators.size(), 2u);
    EXPECT_NE(t.annotators[0], t.annotators[1]);
    for (const auto& a : t.annotators) ++load[a];
  }
  ASSERT_EQ(load.size(), 5u);
  for (const auto& [a, n] : load) EXPECT_EQ(n, 40) << a;
}

TEST(Batch, SingleItemGoesToBothAnnotators) {
  auto tasks = pairwise_batch(3, 1, 2, 2, 0);
  ASSERT_EQ(tasks.size(), 1u);
  EXPECT_EQ(tasks[0].annotators, (std::vector<std::string>{"ann0", "ann1"}));
}

TEST(Batch, Errors) {
  EXPECT_EQ(code_of([] { pairwise_batch(10, 11, 2, 3, 0); }), ErrorCode::kInsufficientItems);
  EXPECT_EQ(code_of([] { pairwise_batch(10, 5, 3, 2, 0); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([] { pairwise_batch(10, 5, 0, 2, 0); }), ErrorCode::kConfig);
}

TEST(Batch, CoverageAndBalanceProperty) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int a = 1 + static_cast<int>(rng() % 8);
    const std::size_t k = 1 + rng() % static_cast<std::uint64_t>(a);
    const std::size_t n = rng() % 60;
    auto tasks = pairwise_batch(static_cast<int>(n + rng() % 10), n, k, a, rng());
    ASSERT_EQ(tasks.size(), n);
    std::map<std::string, std::size_t> load;
    for (const auto& t : tasks) {
      std::set<std::string> distinct(t.annotators.begin(), t.annotators.end());
      EXPECT_EQ(distinct.size(), k);
      for (const auto& x : t.annotators) ++load[x];
    }
    std::size_t lo = n * k, hi = 0, total = 0;
    for (const auto& name : annotators(a)) {
      lo = std::min(lo, load[name]);
      hi = std::max(hi, load[name]);
      total += load[name];
    }
    EXPECT_EQ(total, n * k);
    if (n > 0) EXPECT_LE(hi - lo, 1u);
  }
}

TEST(Batch, SeededSampleIsDeterministic) {
  auto a = pairwise_batch(50, 20, 2, 3, 42);
  auto b = pairwise_batch(50, 20, 2, 3, 42);
  auto c = pairwise_batch(50, 20, 2, 3, 43);
  std::vector<std::string> ia, ib, ic;
  for (const auto& t : a) ia.push_back(t.item.ref.key());
  for (const auto& t : b) ib.push_back(t.item.ref.key());
  for (const auto& t : c) ic.push_back(t.item.ref.key());
  EXPECT_EQ(ia, ib);
  EXPECT_NE(ia, ic);
  EXPECT_EQ(std::set<std::string>(ia.begin(), ia.end()).size(), 20u);
}

TEST(Batch, HumanOrderIndependentOfMachineOrder) {
  auto tasks = pairwise_batch(4000, 4000, 1, 1, 7);  // machine orders were drawn with seed 7 too
  int same = 0, rewritten_second = 0;
  for (const auto& t : tasks) {
    same += t.order.ending1 == t.item.machine_order->ending1;
    rewritten_second += t.order.rewritten_second();
  }
  EXPECT_GT(same, 1850);
  EXPECT_LT(same, 2150);
  EXPECT_GT(rewritten_second, 1850);
  EXPECT_LT(rewritten_second, 2150);
}

TEST(Payload, PairwiseIsBlinded) {
  auto src = make_items(40);
  BatchOptions o;
  o.n = 40;
  o.annotators = annotators(2);
  o.seed = 5;
  for (const auto& t : create_batch(src, o)) {
    if (t.kind != TaskKind::kPairwise5) continue;
    auto p = t.payload();
    std::set<std::string> keys;
    std::vector<std::string> strings;
    collect(p, keys, strings);
    for (const auto* banned : {"conv_id", "target_index", "order", "machine_order", "ending1", "ending2",
                               "side", "source", "assumptions", "rewrite_text", "original_user"}) {
      EXPECT_FALSE(keys.count(banned)) << banned;
    }
    for (const auto& s : strings) {
      EXPECT_EQ(s.find(t.item.ref.conv_id), std::string::npos) << s;
      for (const auto* word : {"ORIGINAL", "REWRITTEN", "Original", "Rewritten", "original", "rewritten"}) {
        EXPECT_EQ(s.find(word), std::string::npos) << s;
      }
    }
    ASSERT_EQ(p["endings"].size(), 2u);
    EXPECT_EQ(p["endings"][0]["label"], "Ending 1");
    EXPECT_EQ(p["endings"][1]["label"], "Ending 2");
    const bool rw2 = t.order.rewritten_second();
    EXPECT_EQ(p["endings"][rw2 ? 1 : 0]["user"], t.item.rewrite_text);
    EXPECT_EQ(p["endings"][rw2 ? 0 : 1]["user"], t.item.original_user);
    EXPECT_EQ(p["scale"].size(), 5u);
    EXPECT_EQ(p["scale_max"], 5);
  }
}

TEST(Payload, IntentRevealsAndPlausibilityOffersNone) {
  std::vector<SourceItem> src = {make_item(1)};
  BatchOptions o;
  o.n = 1;
  o.annotators = annotators(2);
  auto tasks = create_batch(src, o);
  ASSERT_EQ(tasks.size(), 3u);
  const auto intent = tasks[1].payload();
  EXPECT_EQ(intent["kind"], "INTENT_3PT");
  EXPECT_EQ(intent["endings"][0]["label"], "Original Ending");
  EXPECT_EQ(intent["endings"][1]["label"], "Rewritten Ending");
  EXPECT_EQ(intent["scale"].size(), 3u);
  EXPECT_EQ(intent["scale"][0]["label"].get<std::string>().rfind("1 indicates", 0), 0u);
  const auto pl = tasks[2].payload();
  EXPECT_EQ(pl["kind"], "PLAUSIBILITY_3PT");
  EXPECT_EQ(pl["assumptions"], json::array({"the user writes C"}));
  EXPECT_EQ(pl["allow_no_assumptions"], true);
  EXPECT_EQ(scale_labels(TaskKind::kPairwise5).size(), 5u);
}

TEST(Task, JsonRoundTrip) {
  auto tasks = pairwise_batch(5, 5, 2, 3, 1);
  for (const auto& t : tasks) {
    auto back = AnnotationTask::from_json(t.to_json());
    EXPECT_EQ(back.to_json(), t.to_json());
    EXPECT_EQ(back.payload(), t.payload());
  }
  EXPECT_EQ(code_of([] { AnnotationTask::from_json(json{{"task_id", "x"}}); }), ErrorCode::kSchemaViolation);
}

TEST(Store, RecordValidation) {
  std::vector<SourceItem> src = {make_item(1)};
  BatchOptions o;
  o.n = 1;
  o.annotators = {"a", "b", "c"};
  auto tasks = create_batch(src, o);
  const auto pw = tasks[0].task_id, in = tasks[1].task_id, pl = tasks[2].task_id;
  RatingStore store(tasks, logical_clock());
  EXPECT_EQ(code_of([&] { store.record("nope", "a", 3); }), ErrorCode::kUnknownTask);
  EXPECT_EQ(code_of([&] { store.record(pw, "c", 3); }), ErrorCode::kNotAssigned);
  EXPECT_EQ(code_of([&] { store.record(pw, "a", 0); }), ErrorCode::kRange);
  EXPECT_EQ(code_of([&] { store.record(pw, "a", 6); }), ErrorCode::kRange);
  EXPECT_EQ(code_of([&] { store.record(in, "a", 4); }), ErrorCode::kRange);
  EXPECT_EQ(code_of([&] { store.record(in, "a", std::nullopt); }), ErrorCode::kRange);
  EXPECT_EQ(code_of([&] { store.record(in, "a", std::nullopt, true); }), ErrorCode::kInvalidRequest);
  EXPECT_NO_THROW(store.record(pw, "a", 5));
  EXPECT_NO_THROW(store.record(in, "a", 3));
  EXPECT_NO_THROW(store.record(pl, "a", std::nullopt, true));
  EXPECT_EQ(store.ratings().size(), 3u);
}

TEST(Store, ResubmitOverwritesAndKeepsAudit) {
  auto path = std::filesystem::temp_directory_path() / "prewrite_annotsvc_ratings.jsonl";
  std::filesystem::remove(path);
  auto tasks = pairwise_batch(1, 1, 2, 2, 0);
  const auto id = tasks[0].task_id;
  {
    RatingStore store(tasks, logical_clock(), path);
    store.record(id, "ann0", 2);
    store.record(id, "ann0", 4);
    ASSERT_EQ(store.ratings().size(), 1u);
    EXPECT_EQ(store.ratings()[0].score, 4);
    ASSERT_EQ(store.audit_trail().size(), 2u);
    EXPECT_EQ(store.audit_trail()[0].score, 2);
  }
  RatingStore reloaded(tasks, logical_clock(), path);
  EXPECT_EQ(reloaded.audit_trail().size(), 2u);
  EXPECT_EQ(reloaded.ratings()[0].score, 4);
  EXPECT_FALSE(reloaded.next_task("ann0").has_value());
  EXPECT_TRUE(reloaded.next_task("ann1").has_value());
  std::filesystem::remove(path);
}

TEST(Store, DuplicateTaskIds) {
  auto tasks = pairwise_batch(1, 1, 2, 2, 0);
  tasks.push_back(tasks[0]);
  EXPECT_EQ(code_of([&] { RatingStore s(tasks, logical_clock()); }), ErrorCode::kDuplicateId);
}

TEST(Averages, PairAverage) {
  std::vector<int> two = {2, 5}, one = {4}, none = {};
  EXPECT_DOUBLE_EQ(pair_average(two), 3.5);
  EXPECT_EQ(code_of([&] { pair_average(one); }), ErrorCode::kUnderAnnotated);
  EXPECT_EQ(code_of([&] { pair_average(none); }), ErrorCode::kUnderAnnotated);

  std::vector<Rating> rs = {{"t1", "a", 1, false, ""}, {"t1", "b", 2, false, ""}, {"t2", "a", 3, false, ""}};
  EXPECT_EQ(code_of([&] { task_averages(rs); }), ErrorCode::kUnderAnnotated);
  auto avg = task_averages(rs, true);
  EXPECT_EQ(avg.size(), 1u);
  EXPECT_DOUBLE_EQ(avg.at("t1"), 1.5);
}

TEST(Progress, Counts) {
  auto tasks = pairwise_batch(4, 4, 2, 3, 9);
  RatingStore store(tasks, logical_clock());
  store.record(tasks[0].task_id, tasks[0].annotators[0], 3);
  auto p = store.progress();
  EXPECT_EQ(p["tasks"], 4);
  EXPECT_EQ(p["assignments"], 8);
  EXPECT_EQ(p["completed"], 1);
  EXPECT_EQ(p["annotators"][tasks[0].annotators[0]]["completed"], 1);
}

class HttpApi : public ::testing::Test {
 protected:
  void SetUp() override {
    tasks_ = pairwise_batch(6, 6, 2, 3, 21);
    store_ = std::make_unique<RatingStore>(tasks_, logical_clock());
    server_ = std::make_unique<Server>(*store_);
    port_ = server_->bind("127.0.0.1", 0);
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_->listen(); });
    server_->wait_until_ready();
  }
  void TearDown() override {
    server_->stop();
    if (thread_.joinable()) thread_.join();
  }

  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

  std::vector<AnnotationTask> tasks_;
  std::unique_ptr<RatingStore> store_;
  std::unique_ptr<Server> server_;
  std::thread thread_;
  int port_ = 0;
};

TEST_F(HttpApi, NextTaskRateAndProgress) {
  auto c = client();
  auto res = c.Get("/api/tasks?annotator=ann0");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  auto body = json::parse(res->body);
  ASSERT_FALSE(body["done"].get<bool>());
  const auto id = body["task"]["task_id"].get<std::string>();
  EXPECT_EQ(body["task"], store_->find(id)->payload());

  auto post = c.Post("/api/ratings", json{{"task_id", id}, {"annotator_id", "ann0"}, {"score", 4}}.dump(),
                     "application/json");
  ASSERT_TRUE(post);
  EXPECT_EQ(post->status, 200);
  auto next = json::parse(c.Get("/api/tasks?annotator=ann0")->body);
  EXPECT_NE(next["task"]["task_id"], id);

  auto single = c.Get("/api/tasks/" + id);
  ASSERT_TRUE(single);
  EXPECT_EQ(single->status, 200);

  auto prog = json::parse(c.Get("/api/progress")->body);
  EXPECT_EQ(prog["completed"], 1);
}

TEST_F(HttpApi, ErrorStatuses) {
  auto c = client();
  const auto& t = tasks_[0];
  std::string outsider;
  for (const auto& a : annotators(3)) {
    if (std::find(t.annotators.begin(), t.annotators.end(), a) == t.annotators.end()) outsider = a;
  }
  auto post = [&](const json& j) { return c.Post("/api/ratings", j.dump(), "application/json"); };

  auto r1 = post({{"task_id", t.task_id}, {"annotator_id", t.annotators[0]}, {"score", 9}});
  EXPECT_EQ(r1->status, 400);
  EXPECT_EQ(json::parse(r1->body)["error"], "RANGE");
  auto r2 = post({{"task_id", t.task_id}, {"annotator_id", outsider}, {"score", 3}});
  EXPECT_EQ(r2->status, 403);
  EXPECT_EQ(json::parse(r2->body)["error"], "NOT_ASSIGNED");
  auto r3 = post({{"task_id", "missing"}, {"annotator_id", "ann0"}, {"score", 3}});
  EXPECT_EQ(r3->status, 404);
  EXPECT_EQ(json::parse(r3->body)["error"], "UNKNOWN_TASK");
  auto r4 = c.Post("/api/ratings", "{not json", "application/json");
  EXPECT_EQ(r4->status, 400);
  auto r5 = post({{"task_id", t.task_id}, {"annotator_id", t.annotators[0]}, {"score", 2.5}});
  EXPECT_EQ(json::parse(r5->body)["error"], "RANGE");
  EXPECT_EQ(c.Get("/api/tasks")->status, 400);
  EXPECT_EQ(c.Get("/api/tasks/missing")->status, 404);
  EXPECT_TRUE(store_->ratings().empty());
}

TEST_F(HttpApi, ConcurrentAnnotatorsDrainTheirQueues) {
  std::vector<std::thread> workers;
  for (const auto& who : annotators(3)) {
    workers.emplace_back([this, who] {
      auto c = client();
      for (;;) {
        auto res = c.Get(("/api/tasks?annotator=" + who).c_str());
        if (!res) return;
        auto body = json::parse(res->body);
        if (body["done"].get<bool>()) return;
        c.Post("/api/ratings",
               json{{"task_id", body["task"]["task_id"]}, {"annotator_id", who}, {"score", 3}}.dump(),
               "application/json");
      }
    });
  }
  for (auto& w : workers) w.join();
  EXPECT_EQ(store_->ratings().size(), 12u);
  EXPECT_EQ(store_->audit_trail().size(), 12u);
  auto avg = task_averages(store_->ratings());
  EXPECT_EQ(avg.size(), 6u);
  for (const auto& [id, v] : avg) EXPECT_DOUBLE_EQ(v, 3.0);
}
