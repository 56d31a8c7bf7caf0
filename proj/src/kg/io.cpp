#include "kgf/kg/io.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <tuple>
#include <vector>

namespace kgf::kg {
namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find('\t', start);
    fields.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return fields;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

std::ifstream open_input(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  return in;
}

EntityType parse_type(const std::string& file, std::size_t line, const std::string& name) {
  auto t = parse_entity_type(name);
  if (!t) throw ParseError(file, line, "unknown entity type '" + name + "'");
  return *t;
}

}  // namespace

LoadedGraph load_triples(const std::filesystem::path& triples_path,
                         const std::filesystem::path& schema_path) {
  GraphBuilder builder;
  const std::string schema_name = schema_path.string();
  {
    auto in = open_input(schema_path);
    std::string raw;
    for (std::size_t n = 1; std::getline(in, raw); ++n) {
      std::string line = strip_cr(raw);
      if (line.empty() || line.front() == '#') continue;
      auto f = split_tabs(line);
      try {
        if (f[0] == "relation" && f.size() == 6) {
          RelationType r;
          r.label = f[1];
          r.domain = parse_type(schema_name, n, f[2]);
          r.range = parse_type(schema_name, n, f[3]);
          if (f[4] != "0" && f[4] != "1") {
            throw ParseError(schema_name, n, "functional flag must be 0 or 1");
          }
          r.functional = f[4] == "1";
          r.family = f[5];
          builder.add_relation(std::move(r));
        } else if (f[0] == "entity" && f.size() == 3) {
          builder.add_entity(f[1], parse_type(schema_name, n, f[2]));
        } else {
          throw ParseError(schema_name, n, "malformed schema record");
        }
      } catch (const GraphError& e) {
        throw ParseError(schema_name, n, e.what());
      }
    }
  }

  LoadedGraph result;
  const std::string triples_name = triples_path.string();
  auto in = open_input(triples_path);
  std::string raw;
  for (std::size_t n = 1; std::getline(in, raw); ++n) {
    std::string line = strip_cr(raw);
    if (line.empty()) continue;
    auto f = split_tabs(line);
    if (f.size() != 3) throw ParseError(triples_name, n, "expected 3 tab-separated fields");
    auto rel = builder.find_relation(f[1]);
    if (!rel) throw ParseError(triples_name, n, "unknown relation '" + f[1] + "'");
    const RelationType& r = builder.relation(*rel);
    auto resolve = [&](const std::string& label, EntityType expected) {
      if (auto id = builder.find_entity(label)) return *id;
      try {
        return builder.add_entity(label, expected);
      } catch (const GraphError& e) {
        throw ParseError(triples_name, n, e.what());
      }
    };
    EntityId h = resolve(f[0], r.domain);
    EntityId t = resolve(f[2], r.range);
    try {
      if (!builder.add_triple(h, *rel, t)) ++result.duplicate_warnings;
    } catch (const GraphError& e) {
      throw ParseError(triples_name, n, e.what());
    }
  }
  result.graph = std::move(builder).build();
  return result;
}

std::pair<std::filesystem::path, std::filesystem::path> write_world(
    const KnowledgeGraph& g, const std::filesystem::path& dir, const std::string& stem) {
  std::filesystem::create_directories(dir);
  auto triples_path = dir / (stem + ".tsv");
  auto schema_path = dir / (stem + ".schema.tsv");
  {
    std::ofstream out(schema_path, std::ios::binary);
    for (const auto& r : g.relations()) {
      out << "relation\t" << r.label << '\t' << to_string(r.domain) << '\t' << to_string(r.range)
          << '\t' << (r.functional ? 1 : 0) << '\t' << r.family << '\n';
    }
    for (const auto& e : g.entities()) {
      out << "entity\t" << e.label << '\t' << to_string(e.type) << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + schema_path.string());
  }
  {
    std::ofstream out(triples_path, std::ios::binary);
    for (const auto& t : g.triples()) {
      out << g.entity(t.head).label << '\t' << g.relation(t.relation).label << '\t'
          << g.entity(t.tail).label << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + triples_path.string());
  }
  return {triples_path, schema_path};
}

}  // namespace kgf::kg
