#include "bgml/graph_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace bgml {

namespace {

using json = nlohmann::json;

[[noreturn]] void parse_fail(const std::string& path, std::size_t line, const std::string& what) {
  throw DataError(path + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      parts.push_back(s.substr(start));
      break;
    }
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return parts;
}

long long parse_int(const std::string& s, const std::string& path, std::size_t line) {
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    parse_fail(path, line, "expected integer, got '" + s + "'");
  return v;
}

Mat parse_sparse_features(const std::string& field, int feat_dim, int channels,
                          const std::string& path, std::size_t line) {
  Mat x(feat_dim, channels);
  if (field.empty()) return x;
  for (const auto& pair : split_on(field, ',')) {
    if (pair.empty()) continue;
    std::size_t colon = pair.find(':');
    if (colon == std::string::npos) parse_fail(path, line, "malformed index:value '" + pair + "'");
    long long idx = parse_int(pair.substr(0, colon), path, line);
    double val = 0.0;
    try {
      val = std::stod(pair.substr(colon + 1));
    } catch (const std::exception&) {
      parse_fail(path, line, "malformed feature value in '" + pair + "'");
    }
    if (idx < 0 || idx >= static_cast<long long>(feat_dim) * channels)
      parse_fail(path, line, "feature index " + std::to_string(idx) + " out of range");
    x.a[static_cast<std::size_t>(idx)] = val;
  }
  return x;
}

}  // namespace

GraphStore load_dataset(const std::string& nodes_path, const std::string& edges_path,
                        LoadReport* report) {
  std::ifstream nf(nodes_path);
  if (!nf) throw DataError("cannot open nodes file: " + nodes_path);

  std::string line;
  std::size_t lineno = 0;
  int feat_dim = -1, channels = -1;
  GraphStore graph;
  bool have_dims = false;

  while (std::getline(nf, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string tok;
      while (hs >> tok) {
        if (tok.rfind("F=", 0) == 0) feat_dim = static_cast<int>(parse_int(tok.substr(2), nodes_path, lineno));
        if (tok.rfind("C=", 0) == 0) channels = static_cast<int>(parse_int(tok.substr(2), nodes_path, lineno));
      }
      if (feat_dim > 0 && channels > 0 && !have_dims) {
        graph = GraphStore(feat_dim, channels);
        have_dims = true;
      }
      continue;
    }
    if (!have_dims) parse_fail(nodes_path, lineno, "node line before '# F=.. C=..' header");
    auto fields = split_on(line, '\t');
    if (fields.size() != 3) parse_fail(nodes_path, lineno, "expected 3 tab-separated fields");
    NodeId id = parse_int(fields[0], nodes_path, lineno);
    int label = kUnlabeled;
    if (fields[1] != "-") label = static_cast<int>(parse_int(fields[1], nodes_path, lineno));
    Mat x = parse_sparse_features(fields[2], feat_dim, channels, nodes_path, lineno);
    graph.add_node(id, std::move(x), label);
  }
  if (!have_dims) throw DataError(nodes_path + ": missing '# F=.. C=..' header");

  std::ifstream ef(edges_path);
  if (!ef) throw DataError("cannot open edges file: " + edges_path);
  lineno = 0;
  LoadReport local;
  while (std::getline(ef, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_on(line, '\t');
    if (fields.size() != 2) parse_fail(edges_path, lineno, "expected 2 tab-separated fields");
    NodeId u = parse_int(fields[0], edges_path, lineno);
    NodeId v = parse_int(fields[1], edges_path, lineno);
    if (u == v) {
      ++local.dropped_self_edges;
      continue;
    }
    if (!graph.contains(u) || !graph.contains(v))
      parse_fail(edges_path, lineno,
                 "edge endpoint not in nodes file: " + std::to_string(u) + "-" + std::to_string(v));
    if (graph.has_edge(u, v)) {
      ++local.dropped_duplicate_edges;
      continue;
    }
    graph.add_edge(u, v);
  }
  if (report) *report = local;
  return graph;
}

void save_dataset(const GraphStore& graph, const std::string& nodes_path,
                  const std::string& edges_path) {
  std::ofstream nf(nodes_path);
  if (!nf) throw DataError("cannot write nodes file: " + nodes_path);
  nf << "# F=" << graph.feat_dim() << " C=" << graph.channels() << "\n";
  char buf[64];
  for (NodeId id : graph.node_ids()) {
    const auto& rec = graph.node(id);
    nf << id << '\t';
    if (rec.label == kUnlabeled)
      nf << '-';
    else
      nf << rec.label;
    nf << '\t';
    bool first = true;
    for (std::size_t i = 0; i < rec.features.a.size(); ++i) {
      double v = rec.features.a[i];
      if (v == 0.0) continue;
      std::snprintf(buf, sizeof buf, "%.17g", v);
      if (!first) nf << ',';
      nf << i << ':' << buf;
      first = false;
    }
    nf << '\n';
  }

  std::ofstream ef(edges_path);
  if (!ef) throw DataError("cannot write edges file: " + edges_path);
  for (NodeId u : graph.node_ids())
    for (NodeId v : graph.neighbors(u))
      if (u < v) ef << u << '\t' << v << '\n';
}

std::vector<TimelineEvent> load_events(const std::string& path, int feat_dim, int channels) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open events file: " + path);
  std::vector<TimelineEvent> events;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      parse_fail(path, lineno, std::string("bad JSON: ") + e.what());
    }
    TimelineEvent ev;
    ev.timestamp = j.at("t").get<int>();
    if (ev.timestamp < 1) parse_fail(path, lineno, "event timestamp must be >= 1");
    if (j.contains("fr"))
      for (const auto& id : j["fr"]) ev.forget_nodes.push_back(id.get<NodeId>());
    if (j.contains("ir")) {
      for (const auto& rec : j["ir"]) {
        NewNode nn;
        nn.id = rec.at("id").get<NodeId>();
        nn.label = rec.contains("label") && !rec["label"].is_null() ? rec["label"].get<int>()
                                                                    : kUnlabeled;
        nn.features = Mat(feat_dim, channels);
        if (rec.contains("x"))
          for (const auto& [key, val] : rec["x"].items()) {
            long long idx = std::stoll(key);
            if (idx < 0 || idx >= static_cast<long long>(feat_dim) * channels)
              parse_fail(path, lineno, "feature index out of range in ir record");
            nn.features.a[static_cast<std::size_t>(idx)] = val.get<double>();
          }
        ev.add_nodes.push_back(std::move(nn));
      }
    }
    events.push_back(std::move(ev));
  }
  return events;
}

void save_events(const std::vector<TimelineEvent>& events, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write events file: " + path);
  for (const auto& ev : events) {
    json j;
    j["t"] = ev.timestamp;
    j["fr"] = ev.forget_nodes;
    json ir = json::array();
    for (const auto& nn : ev.add_nodes) {
      json rec;
      rec["id"] = nn.id;
      if (nn.label != kUnlabeled)
        rec["label"] = nn.label;
      else
        rec["label"] = nullptr;
      json x = json::object();
      for (std::size_t i = 0; i < nn.features.a.size(); ++i)
        if (nn.features.a[i] != 0.0) x[std::to_string(i)] = nn.features.a[i];
      rec["x"] = std::move(x);
      ir.push_back(std::move(rec));
    }
    j["ir"] = std::move(ir);
    f << j.dump() << '\n';
  }
}

}  // namespace bgml
