#pragma once

#include <future>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "wee/handler.hpp"

namespace wee {

struct HttpOptions {
  int timeout_ms = 30'000;
  /// Completed results of stopped calls are also written here as
  /// <token>.json so that a resume in another process can replay them.
  std::string passthrough_dir;
};

/// Issues POST <endpoint> with {"position", "parameters", "context",
/// "passthrough"} and maps {"result": {...}} on 2xx to Result. A stop_call
/// detaches the request; its eventual response is stored under the returned
/// passthrough token and replayed on resume without a new request.
class HttpHandler : public HandlerWrapper {
 public:
  explicit HttpHandler(HttpOptions options = {});
  ~HttpHandler() override;

  HandlerOutcome call(const HandlerCall& call, std::stop_token stop_call) override;
  HandlerCapabilities capabilities() const override { return {false, true}; }
  std::string name() const override { return "http"; }

  /// Waits for every detached request to finish and be stored.
  void drain();

 private:
  HandlerOutcome post(const HandlerCall& call) const;
  HandlerOutcome replay(const std::string& token);
  void store(const std::string& token, const HandlerOutcome& outcome);

  HttpOptions options_;
  std::mutex mutex_;
  std::uint64_t next_token_ = 0;
  std::map<std::string, std::shared_future<HandlerOutcome>> pending_;
  std::vector<std::thread> writers_;
};

}  // namespace wee
