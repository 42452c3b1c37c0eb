#include "wee/control.hpp"

#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cstring>
#include <fstream>

#include "wee/errors.hpp"

namespace wee {

namespace {

sockaddr_un make_address(const std::string& path) {
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  if (path.size() >= sizeof(addr.sun_path)) throw Error("control path too long: '" + path + "'");
  std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
  return addr;
}

std::string read_line(int fd, int timeout_ms) {
  std::string out;
  char c = 0;
  while (true) {
    pollfd p{fd, POLLIN, 0};
    if (::poll(&p, 1, timeout_ms) <= 0) break;
    const ssize_t n = ::read(fd, &c, 1);
    if (n <= 0 || c == '\n') break;
    out.push_back(c);
  }
  return out;
}

void write_all(int fd, const std::string& s) {
  std::size_t off = 0;
  while (off < s.size()) {
    const ssize_t n = ::send(fd, s.data() + off, s.size() - off, MSG_NOSIGNAL);
    if (n <= 0) return;
    off += static_cast<std::size_t>(n);
  }
}

}  // namespace

std::string tombstone_path(const std::string& control_path) { return control_path + ".terminal"; }

ControlServer::ControlServer(std::string path, CommandHandler handler)
    : path_(std::move(path)), handler_(std::move(handler)) {
  const sockaddr_un addr = make_address(path_);
  ::unlink(path_.c_str());
  ::unlink(tombstone_path(path_).c_str());
  fd_ = ::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd_ < 0) throw Error("cannot create control socket");
  if (::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 8) != 0) {
    ::close(fd_);
    throw Error("cannot listen on control path '" + path_ + "': " + std::strerror(errno));
  }
  thread_ = std::thread([this] { serve(); });
}

ControlServer::~ControlServer() { shutdown(); }

void ControlServer::serve() {
  while (running_) {
    pollfd p{fd_, POLLIN, 0};
    if (::poll(&p, 1, 50) <= 0) continue;
    const int client = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (client < 0) continue;
    const std::string command = read_line(client, 2000);
    std::string reply;
    try {
      reply = handler_(command);
    } catch (const std::exception& e) {
      reply = std::string("error ") + e.what();
    }
    write_all(client, reply + "\n");
    ::close(client);
  }
}

void ControlServer::shutdown() {
  if (!thread_.joinable()) return;
  running_ = false;
  thread_.join();
  ::close(fd_);
  ::unlink(path_.c_str());
}

void ControlServer::mark_terminal(const std::string& state) {
  {
    std::ofstream out(tombstone_path(path_));
    out << state << '\n';
  }
  shutdown();
}

std::string control_send(const std::string& path, const std::string& command, int timeout_ms) {
  const sockaddr_un addr = make_address(path);
  const int fd = ::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw Error("cannot create socket");
  if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
    ::close(fd);
    throw Error("no instance listening on '" + path + "'");
  }
  write_all(fd, command + "\n");
  const std::string reply = read_line(fd, timeout_ms);
  ::close(fd);
  return reply;
}

}  // namespace wee
