#include "wee/handlers/http.hpp"

#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace wee {

namespace {

nlohmann::json outcome_to_json(const HandlerOutcome& o) {
  if (const auto* r = std::get_if<HandlerOutcome::Result>(&o.value)) return {{"result", values_to_json(r->values)}};
  if (const auto* e = std::get_if<HandlerOutcome::Error>(&o.value)) return {{"error", e->message}};
  return {{"error", "unexpected outcome"}};
}

HandlerOutcome outcome_from_json(const nlohmann::json& j) {
  if (j.contains("result")) return HandlerOutcome::result(values_from_json(j.at("result")));
  return HandlerOutcome::error(j.value("error", std::string("malformed stored result")));
}

std::string file_safe(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  return s;
}

}  // namespace

HttpHandler::HttpHandler(HttpOptions options) : options_(std::move(options)) {}

HttpHandler::~HttpHandler() { drain(); }

void HttpHandler::drain() {
  std::vector<std::thread> writers;
  {
    std::lock_guard lk(mutex_);
    writers.swap(writers_);
  }
  for (auto& t : writers) t.join();
}

HandlerOutcome HttpHandler::post(const HandlerCall& call) const {
  const std::string& uri = call.endpoint;
  const auto scheme = uri.find("://");
  if (scheme == std::string::npos || uri.compare(0, scheme, "http") != 0) {
    return HandlerOutcome::error("unsupported endpoint '" + uri + "' (http:// required)");
  }
  const auto slash = uri.find('/', scheme + 3);
  const std::string base = slash == std::string::npos ? uri : uri.substr(0, slash);
  const std::string path = slash == std::string::npos ? "/" : uri.substr(slash);

  nlohmann::json body{{"position", call.position.value},
                      {"parameters", values_to_json(call.parameters)},
                      {"context", values_to_json(call.context.values)},
                      {"passthrough", call.passthrough ? nlohmann::json(*call.passthrough) : nlohmann::json(nullptr)}};
  httplib::Client client(base);
  const auto timeout = std::chrono::milliseconds(options_.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  const auto res = client.Post(path, body.dump(), "application/json");
  if (!res) return HandlerOutcome::error("request to '" + uri + "' failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) {
    return HandlerOutcome::error("request to '" + uri + "' returned status " + std::to_string(res->status));
  }
  try {
    const auto j = nlohmann::json::parse(res->body);
    if (!j.is_object() || !j.contains("result")) return HandlerOutcome::error("response without 'result'");
    return HandlerOutcome::result(values_from_json(j.at("result")));
  } catch (const std::exception& e) {
    return HandlerOutcome::error(std::string("malformed response: ") + e.what());
  }
}

void HttpHandler::store(const std::string& token, const HandlerOutcome& outcome) {
  if (options_.passthrough_dir.empty()) return;
  std::filesystem::create_directories(options_.passthrough_dir);
  const auto path = std::filesystem::path(options_.passthrough_dir) / (token + ".json");
  std::ofstream out(path);
  out << outcome_to_json(outcome).dump() << '\n';
}

HandlerOutcome HttpHandler::replay(const std::string& token) {
  std::shared_future<HandlerOutcome> pending;
  {
    std::lock_guard lk(mutex_);
    if (const auto it = pending_.find(token); it != pending_.end()) pending = it->second;
  }
  if (pending.valid()) return pending.get();
  if (!options_.passthrough_dir.empty()) {
    std::ifstream in(std::filesystem::path(options_.passthrough_dir) / (token + ".json"));
    if (in) {
      try {
        return outcome_from_json(nlohmann::json::parse(in));
      } catch (const nlohmann::json::exception& e) {
        return HandlerOutcome::error("corrupt stored result for '" + token + "': " + e.what());
      }
    }
  }
  return HandlerOutcome::error("unknown passthrough '" + token + "'");
}

HandlerOutcome HttpHandler::call(const HandlerCall& call, std::stop_token stop_call) {
  if (call.passthrough) return replay(*call.passthrough);

  std::shared_future<HandlerOutcome> result =
      std::async(std::launch::async, [this, call] { return post(call); }).share();
  while (result.wait_for(std::chrono::milliseconds(2)) != std::future_status::ready) {
    if (!stop_call.stop_requested()) continue;
    std::lock_guard lk(mutex_);
    const std::string token =
        file_safe("http-" + call.instance + "-" + call.position.value + "-" + std::to_string(++next_token_));
    pending_.emplace(token, result);
    writers_.emplace_back([this, token, result] { store(token, result.get()); });
    return HandlerOutcome::passthrough(token);
  }
  return result.get();
}

}  // namespace wee
