#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "metademod/config.hpp"

namespace metademod {

struct ResultRow {
  std::string scheme;
  std::size_t pilots;  // P
  std::size_t trial;
  double ser;
  double std_error;
};

struct AggregateRow {
  std::string scheme;
  std::size_t pilots;
  double mean_ser;
  std::size_t trials;
};

struct RunOptions {
  std::size_t threads = 1;
  bool verbose = false;
  std::ostream* log = nullptr;  // telemetry sink when verbose
};

struct ExperimentResult {
  std::vector<ResultRow> rows;        // sorted by (scheme, P, trial)
  std::vector<AggregateRow> aggregates;
  nlohmann::json metadata;
  std::vector<GridRow> grid_pre;      // empty unless grid output is enabled
  std::vector<GridRow> grid_post;
};

// Stream tags; every random quantity of trial t comes from RngStream(seed, 0)
// derived with one of these tags and t.
enum class StreamTag : std::uint64_t {
  MetaData = 1,
  Init = 2,
  Maml = 3,
  Joint = 4,
  TargetDevice = 5,
  TargetPilots = 6,
  Adapt = 7,
  TestSymbols = 8,
};

RngStream trial_stream(std::uint64_t seed, StreamTag tag, std::size_t trial);

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

std::vector<AggregateRow> aggregate(const std::vector<ResultRow>& rows);

void write_raw_csv(std::ostream& os, const std::vector<ResultRow>& rows);
void write_aggregate_csv(std::ostream& os, const std::vector<AggregateRow>& rows);

// Writes raw.csv, aggregate.csv, metadata.json and (if present) grid CSVs.
void write_outputs(const std::filesystem::path& dir, const ExperimentResult& result);

}  // namespace metademod
