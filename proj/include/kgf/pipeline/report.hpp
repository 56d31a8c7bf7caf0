#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "kgf/eval/metrics.hpp"
#include "kgf/pipeline/config.hpp"
#include "kgf/pipeline/stages.hpp"

namespace kgf::pipeline {

using json = nlohmann::ordered_json;

/// A required input file or directory is absent.
class MissingArtifact : public std::runtime_error {
 public:
  explicit MissingArtifact(const std::filesystem::path& p)
      : std::runtime_error("missing artifact: " + p.string()), path_(p) {}
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Throws MissingArtifact unless `p` exists.
const std::filesystem::path& require(const std::filesystem::path& p);

struct ReportRow {
  std::string label;
  eval::MetricsReport metrics;
  std::optional<double> learning_rate;
  std::size_t runs = 1;
};

inline constexpr const char* kBeforeLabel = "BE (before)";

ReportRow before_row(const eval::MetricsReport& pre);
/// Field-wise mean of several runs of one method.
ReportRow mean_row(const std::string& label, const std::vector<eval::MetricsReport>& runs,
                   std::optional<double> learning_rate = std::nullopt);

/// Method rows with Direct, Paraphrase, Inverse, Multi-hops, Locality and
/// RefusalRate columns, followed by Hmean and DeltaKCS.
std::string render_csv(const std::vector<ReportRow>& rows);
/// Horizontal ΔKCS bars, one per method row (the before row is skipped).
std::string render_svg(const std::vector<ReportRow>& rows);

std::string render_sweep_csv(const std::string& method, const std::vector<SweepPoint>& points,
                             std::optional<std::size_t> best);

struct AblationRow {
  double rate = 0.0;
  eval::MetricsReport metrics;
  bool ok = true;
};
std::string render_ablation_csv(const std::vector<AblationRow>& rows);

std::string render_epoch_csv(const unlearn::UnlearnRun& run);

json to_json(const eval::MetricsReport& m);
eval::MetricsReport metrics_from_json(const json& j);
json to_json(const eval::BoundaryReport& b);
json to_json(const eval::DriftReport& d);
/// Everything an evaluation produced, minus per-probe outputs.
json summary_json(const MethodResult& r);

/// Stage manifest: config echo plus SHA-256 of every input and output file.
json make_manifest(const std::string& stage, const ExperimentConfig& cfg,
                   const std::map<std::string, std::filesystem::path>& inputs,
                   const std::map<std::string, std::filesystem::path>& outputs);

void write_text(const std::filesystem::path& p, const std::string& text);
std::string read_text(const std::filesystem::path& p);
void write_json(const std::filesystem::path& p, const json& j);
json read_json(const std::filesystem::path& p);

void save_vocabulary(const lm::Tokenizer& tok, const std::filesystem::path& p);
lm::Tokenizer load_vocabulary(const std::filesystem::path& p);

}  // namespace kgf::pipeline
