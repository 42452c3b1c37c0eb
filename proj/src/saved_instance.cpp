#include "wee/saved_instance.hpp"

#include <cstdio>
#include <fstream>

#include "wee/errors.hpp"

namespace wee {

std::string source_hash(std::string_view source) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : source) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::json saved_to_json(const SavedInstance& saved) {
  using nlohmann::json;
  const InstanceState& st = saved.state;
  json branches = json::array();
  for (const auto& b : st.branches) {
    json jb{{"id", b.id}, {"path", b.path}, {"forks", b.forks}};
    jb["parent"] = b.parent ? json(*b.parent) : json(nullptr);
    json joins = json::array();
    for (const auto& j : b.joins) {
      joins.push_back({{"parallel", j.parallel}, {"arrived", j.arrived}, {"spawned", j.spawned}, {"fired", j.fired}});
    }
    jb["joins"] = std::move(joins);
    if (b.passthrough) jb["passthrough"] = {{"position", b.passthrough->first.value}, {"token", b.passthrough->second}};
    branches.push_back(std::move(jb));
  }
  json passthroughs = json::object();
  for (const auto& [pos, token] : st.passthroughs) passthroughs[pos.value] = token;
  return json{{"hash", saved.hash},
              {"source_path", saved.source_path},
              {"lifecycle", to_string(st.lifecycle)},
              {"instance", st.instance_id},
              {"branches", std::move(branches)},
              {"context", values_to_json(st.context)},
              {"version", st.version},
              {"passthroughs", std::move(passthroughs)},
              {"next_seq", st.next_seq}};
}

SavedInstance saved_from_json(const nlohmann::json& j) {
  try {
    SavedInstance out;
    out.hash = j.at("hash").get<std::string>();
    out.source_path = j.value("source_path", std::string());
    InstanceState& st = out.state;
    st.lifecycle = lifecycle_from(j.at("lifecycle").get<std::string>());
    st.instance_id = j.value("instance", std::string("instance"));
    for (const auto& jb : j.at("branches")) {
      SavedBranch b;
      b.id = jb.at("id").get<std::string>();
      b.path = jb.at("path").get<std::vector<std::size_t>>();
      b.forks = jb.value("forks", std::uint64_t{0});
      if (jb.contains("parent") && !jb.at("parent").is_null()) b.parent = jb.at("parent").get<std::string>();
      if (jb.contains("joins")) {
        for (const auto& jj : jb.at("joins")) {
          b.joins.push_back({jj.at("parallel").get<NodePath>(), jj.at("arrived").get<std::size_t>(),
                             jj.at("spawned").get<std::size_t>(), jj.at("fired").get<bool>()});
        }
      }
      if (jb.contains("passthrough")) {
        const auto& p = jb.at("passthrough");
        b.passthrough = std::make_pair(PositionId(p.at("position").get<std::string>()), p.at("token").get<std::string>());
      }
      st.branches.push_back(std::move(b));
    }
    st.context = values_from_json(j.at("context"));
    st.version = j.at("version").get<std::uint64_t>();
    for (const auto& [pos, token] : j.at("passthroughs").items()) {
      st.passthroughs[PositionId(pos)] = token.get<std::string>();
    }
    st.next_seq = j.value("next_seq", std::uint64_t{1});
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("corrupt saved state: ") + e.what());
  }
}

void write_saved(const std::string& path, const SavedInstance& saved) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot write '" + tmp + "'");
    out << saved_to_json(saved).dump(2) << '\n';
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error("cannot write '" + path + "'");
}

SavedInstance read_saved(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open saved instance '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("corrupt saved state: " + std::string(e.what()));
  }
  return saved_from_json(j);
}

}  // namespace wee
