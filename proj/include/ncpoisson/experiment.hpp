#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ncpoisson/index_schedule.hpp"
#include "ncpoisson/sevastyanov.hpp"

namespace ncp {

enum class ModelKind { Bernoulli, Markov, Subshift };

struct Budgets {
  std::uint64_t enumeration = kDefaultEnumerationBudget;
  std::uint64_t paths = kDefaultPathBudget;
  int component_bits = 25;
  std::uint64_t sampler_memory = kDefaultSamplerMemory;
};

struct SevastyanovSettings {
  std::vector<int> orders{2, 3};
  std::string rare = "auto";  // auto | independent | markov | subshift | explicit
  RareParams explicit_params;
  ConditionOptions options;
  VerdictTolerances tolerances;
};

struct HittingSettings {
  std::vector<double> lambdas{0.5, 1.0, 2.0};
  double cap = 4.0;
};

struct MixingSettings {
  int horizon = 30;
  int l_max = 4;
  int gap_max = 12;
  int gibbs_n_max = 10;
};

// A validated experiment. The raw document is kept for hashing.
struct ExperimentConfig {
  nlohmann::json raw;
  ModelKind model = ModelKind::Bernoulli;
  nlohmann::json model_spec;
  nlohmann::json schedule_spec;
  double lambda = 1.0;
  std::vector<Index> n_grid;
  std::uint64_t replicates = 0;
  std::uint64_t seed = 0;
  bool exact = true;
  unsigned threads = 1;
  std::vector<std::string> outputs;
  Budgets budgets;
  SevastyanovSettings sevastyanov;
  HittingSettings hitting;
  MixingSettings mixing;
};

const std::vector<std::string>& table_names();

// Parses and validates; ConfigError lists every fault found.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

QSchedule schedule_from_spec(const nlohmann::json& spec);

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

std::vector<Table> run_experiment(const ExperimentConfig& config);

// RFC 4180: fields with a comma, quote, CR or LF are quoted, quotes doubled; CRLF line ends.
std::string to_csv(const Table& table);

// SHA-256 (hex) of the canonical dump of the config document.
std::string config_hash(const ExperimentConfig& config);

// Writes <name>.csv per table and manifest.json; returns the written paths.
std::vector<std::filesystem::path> write_outputs(const ExperimentConfig& config, const std::vector<Table>& tables,
                                                 const std::filesystem::path& out_dir);

}  // namespace ncp
