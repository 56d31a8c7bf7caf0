#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "kgf/kg/graph.hpp"

namespace kgf::kg {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct LoadedGraph {
  KnowledgeGraph graph;
  std::size_t duplicate_warnings = 0;
};

/// Reads a triple TSV (head, relation, tail labels) against a schema file.
///
/// Schema records are tab-separated:
///   relation <label> <domain> <range> <functional: 0|1> <family>
///   entity <label> <Type>
/// Entities not declared in the schema take their type from their first use;
/// a later use with a conflicting type is a typing error naming the triple.
LoadedGraph load_triples(const std::filesystem::path& triples_path,
                         const std::filesystem::path& schema_path);

/// Writes `<stem>.tsv` and `<stem>.schema.tsv`; returns both paths.
std::pair<std::filesystem::path, std::filesystem::path> write_world(
    const KnowledgeGraph& g, const std::filesystem::path& dir, const std::string& stem = "world");

}  // namespace kgf::kg
