#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>

#include "test_util.hpp"
#include "wee/control.hpp"
#include "wee/errors.hpp"
#include "wee/handlers/mock.hpp"
#include "wee/saved_instance.hpp"

extern char** environ;

namespace wee {
namespace {

namespace fs = std::filesystem;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("wee-cli-" + std::to_string(::getpid()) + "-" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write(const std::string& name, const std::string& content) const {
    std::ofstream(path(name)) << content;
    return path(name);
  }

  pid_t start(std::vector<std::string> args) {
    args.insert(args.begin(), WEE_BINARY);
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    posix_spawn_file_actions_t fa;
    posix_spawn_file_actions_init(&fa);
    const auto out = path("stdout"), err = path("stderr");
    posix_spawn_file_actions_addopen(&fa, 1, out.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    posix_spawn_file_actions_addopen(&fa, 2, err.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    pid_t pid = 0;
    EXPECT_EQ(posix_spawn(&pid, argv[0], &fa, nullptr, argv.data(), environ), 0);
    posix_spawn_file_actions_destroy(&fa);
    return pid;
  }

  static int finish(pid_t pid) {
    int status = 0;
    waitpid(pid, &status, 0);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  int run(std::vector<std::string> args) { return finish(start(std::move(args))); }
  std::string out() const { return test::read_file(path("stdout")); }
  std::string err() const { return test::read_file(path("stderr")); }

  fs::path dir_;
};

const char* kBlocking = R"(workflow {
  handler "mock"
  endpoint svc: "http://svc"
  context got: 0
  call :first, endpoint: svc
  call :slow, endpoint: svc
  call :last, endpoint: svc
}
)";

const char* kBlockingScript = R"({
  "positions": {
    "first": [{}],
    "slow": [{"block": true, "passthrough": "slow-1", "result": {"got": 1}}],
    "last": [{}]
  },
  "stored": {"slow-1": {"got": 7}}
})";

void wait_for_file(const std::string& p) {
  for (int i = 0; i < 2000 && !fs::exists(p); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));
}

TEST_F(Cli, RunBookingExitCodeAndTrace) {
  const auto log = path("booking.jsonl");
  EXPECT_EQ(run({"run", test::source_path("fixtures/booking.wee"), "--handler", "mock", "--script",
                 test::source_path("fixtures/booking_over.json"), "--log", log}),
            0);
  EXPECT_EQ(test::started(read_event_log_file(log)).back(), "inform");
  EXPECT_EQ(run({"run", test::source_path("fixtures/booking.wee"), "--script",
                 test::source_path("fixtures/booking_under.json")}),
            0);
  const auto events = read_event_log(*std::make_unique<std::istringstream>(out()));
  ASSERT_FALSE(events.empty());
  EXPECT_EQ(events.back().kind, EventKind::InstanceFinish);
}

TEST_F(Cli, InvalidWorkflowIsError) {
  const auto bad = write("bad.wee", "workflow { handler \"mock\" choose { alternative (y > 1) { } } }");
  EXPECT_EQ(run({"run", bad}), 1);
  EXPECT_NE(err().find("y"), std::string::npos);
  EXPECT_EQ(run({"run", write("syntax.wee", "workflow {")}), 1);
}

TEST_F(Cli, IterationCap) {
  const auto loop = write("loop.wee", "workflow { handler \"mock\" context i: 0 cycle (true) { manipulate :inc { i = i + 1 } } }");
  const auto log = path("loop.jsonl");
  EXPECT_EQ(run({"run", loop, "--max-iterations", "10", "--log", log}), 1);
  const auto events = read_event_log_file(log);
  ASSERT_FALSE(events.empty());
  EXPECT_EQ(test::count_kind(events, EventKind::Error), 1u);
  bool capped = false;
  for (const auto& e : events) {
    if (e.kind == EventKind::Error) capped = e.detail.dump().find("iteration") != std::string::npos;
  }
  EXPECT_TRUE(capped);
}

TEST_F(Cli, Check) {
  EXPECT_EQ(run({"check", test::source_path("fixtures/booking.wee")}), 0);
  for (const char* p : {"book_airline", "book_hotel", "sum", "inform"}) EXPECT_NE(out().find(p), std::string::npos);

  const auto dup = write("dup.wee", "workflow { handler \"mock\" manipulate :a { } manipulate :a { } }");
  EXPECT_EQ(run({"check", dup}), 1);
  EXPECT_NE(err().find("'a'"), std::string::npos);

  // One of every node kind: each activity listed exactly once.
  const auto all = write("all.wee", R"(workflow {
  handler "mock"
  endpoint e: "http://e"
  context x: 0
  call :c1, endpoint: e
  parallel wait: all {
    parallel_branch { manipulate :m1 { x = 1 } }
    parallel_branch { critical :s { call :c2, endpoint: e } }
  }
  choose { alternative (x > 0) { manipulate :m2 { } } otherwise { manipulate :m3 { } } }
  cycle (x < 0) { manipulate :m4 { } }
})");
  EXPECT_EQ(run({"check", all}), 0);
  const std::string table = out();
  for (const char* p : {"c1", "m1", "c2", "m2", "m3", "m4"}) {
    const std::string needle = std::string("\n") + p + " ";
    const auto first = table.find(needle);
    EXPECT_NE(first, std::string::npos) << p;
    EXPECT_EQ(table.find(needle, first + 1), std::string::npos) << p;
  }
}

TEST_F(Cli, StopSaveResume) {
  const auto wf = write("wf.wee", kBlocking);
  const auto script = write("script.json", kBlockingScript);
  const auto log = path("wf.jsonl");
  const auto sock = path("ctl");
  const auto saved = path("wf.saved.json");

  const pid_t pid = start({"run", wf, "--script", script, "--log", log, "--control", sock, "--save", saved});
  wait_for_file(sock);
  // Wait for the blocking call to start before stopping.
  for (int i = 0; i < 2000; ++i) {
    if (fs::exists(log) && test::started(read_event_log_file(log)).size() == 2) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  EXPECT_EQ(control_send(sock, "stop"), "ack");
  EXPECT_EQ(finish(pid), 2);

  // The instance is terminal: a second stop is a no-op.
  EXPECT_EQ(run({"stop", "--control", sock}), 0);
  EXPECT_NE(out().find("already terminal"), std::string::npos);
  EXPECT_EQ(run({"stop", "--control", path("nobody")}), 1);

  const auto stopped = read_event_log_file(log);
  bool acknowledged = false;
  for (const auto& e : stopped) {
    if (e.kind == EventKind::StopAcknowledged) acknowledged = true;
    if (acknowledged) EXPECT_NE(e.kind, EventKind::ActivityStart);
  }
  EXPECT_TRUE(acknowledged);

  const SavedInstance s = read_saved(saved);
  EXPECT_EQ(s.hash, source_hash(kBlocking));
  ASSERT_EQ(s.state.passthroughs.size(), 1u);
  EXPECT_EQ(s.state.passthroughs.begin()->second, "slow-1");
  EXPECT_EQ(saved_to_json(saved_from_json(saved_to_json(s))), saved_to_json(s));

  EXPECT_EQ(run({"resume", saved, "--script", script, "--log", log}), 0);
  const auto all = read_event_log_file(log);
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i].seq, i + 1);
  EXPECT_EQ(all.back().kind, EventKind::InstanceFinish);
  // The interrupted call starts again on resume, carrying its passthrough.
  EXPECT_EQ(test::started(all), (std::vector<std::string>{"first", "slow", "slow", "last"}));
  bool stored_result = false;
  for (const auto& e : all) {
    if (e.kind == EventKind::ContextChange && e.detail.value("name", "") == "got") {
      stored_result = e.detail.at("new") == 7;
    }
  }
  EXPECT_TRUE(stored_result);
}

TEST_F(Cli, ResumeRejectsEditedSource) {
  const auto wf = write("wf.wee", kBlocking);
  const auto script = write("script.json", kBlockingScript);
  const auto sock = path("ctl");
  const auto saved = path("wf.saved.json");
  const auto log = path("wf.jsonl");
  const pid_t pid = start({"run", wf, "--script", script, "--control", sock, "--save", saved, "--log", log});
  wait_for_file(sock);
  for (int i = 0; i < 2000; ++i) {
    if (fs::exists(log) && test::started(read_event_log_file(log)).size() == 2) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  EXPECT_EQ(run({"stop", "--control", sock}), 0);
  EXPECT_EQ(finish(pid), 2);

  write("wf.wee", std::string(kBlocking) + "# edited\n");
  EXPECT_EQ(run({"resume", saved, "--script", script}), 1);
  EXPECT_NE(err().find("hash mismatch"), std::string::npos);
  EXPECT_EQ(run({"resume", saved, "--script", script, "--skip-region", "last..first"}), 1);
}

TEST(SavedInstance, SourceHashIsFnv1a) {
  EXPECT_EQ(source_hash(""), "cbf29ce484222325");
  EXPECT_EQ(source_hash("a"), "af63dc4c8601ec8c");
}

TEST(SavedInstance, JsonRoundTripAfterParallelStop) {
  const auto ast = test::parse_shared(R"(workflow {
  handler "mock"
  endpoint svc: "http://svc"
  context n: 0
  parallel wait: all {
    parallel_branch { call :a, endpoint: svc call :a2, endpoint: svc }
    parallel_branch { call :b, endpoint: svc }
  }
})");
  MockHandler h(mock_script_from_json(nlohmann::json::parse(
      R"({"a": [{"block": true, "passthrough": "pa"}], "b": [{"block": true, "passthrough": "pb"}]})")));
  Instance inst(ast, h, test::quiet_options());
  inst.start();
  for (int i = 0; i < 2000 && test::started(inst.log().records()).size() < 2; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  inst.stop();
  ASSERT_EQ(inst.wait().lifecycle, Lifecycle::Stopped);
  const SavedInstance s{source_hash("x"), "/tmp/x.wee", inst.save()};
  const auto j = saved_to_json(s);
  EXPECT_EQ(j.at("lifecycle"), "stopped");
  EXPECT_EQ(j.at("passthroughs").size(), 2u);
  EXPECT_EQ(saved_to_json(saved_from_json(j)), j);
  EXPECT_THROW(saved_from_json(nlohmann::json::object()), Error);
}

}  // namespace
}  // namespace wee
