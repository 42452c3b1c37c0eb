#pragma once

#include <atomic>
#include <functional>
#include <string>
#include <thread>

namespace wee {

/// Local control channel of a running instance: a Unix domain socket at
/// `path` accepting one command line per connection and answering one line.
/// When the instance ends, `<path>.terminal` records its final state so that
/// later stop requests are recognised as no-ops.
class ControlServer {
 public:
  using CommandHandler = std::function<std::string(const std::string& command)>;

  ControlServer(std::string path, CommandHandler handler);
  ~ControlServer();

  ControlServer(const ControlServer&) = delete;
  ControlServer& operator=(const ControlServer&) = delete;

  /// Writes the tombstone and stops listening.
  void mark_terminal(const std::string& state);

 private:
  void serve();
  void shutdown();

  std::string path_;
  CommandHandler handler_;
  int fd_ = -1;
  std::atomic<bool> running_{true};
  std::thread thread_;
};

std::string tombstone_path(const std::string& control_path);

/// Sends one command and returns the reply. Throws Error if nothing listens.
std::string control_send(const std::string& path, const std::string& command, int timeout_ms = 10'000);

}  // namespace wee
