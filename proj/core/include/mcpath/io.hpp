#pragma once

// File formats: MCNET1 model files, MCPATH1 path files, CSV reports and JSON
// summaries. Every writer replaces its target atomically.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcpath/conditions.hpp"
#include "mcpath/network.hpp"
#include "mcpath/pathbuild.hpp"
#include "mcpath/subnet.hpp"

namespace mcpath {

inline constexpr std::string_view kModelTag = "MCNET1";
inline constexpr std::string_view kPathTag = "MCPATH1";

struct ModelFile {
  NetworkArch arch;
  Params params;
  std::uint64_t seed = 0;
};

// Number of float64 values in one blob: sum n_{l-1} n_l plus hidden biases.
std::size_t blob_length(const NetworkArch& arch);

// One JSON manifest line, '\n', then little-endian float64 in the order
// W_1 (row-major, rows = input side), b_1, ..., W_{L-1}, b_{L-1}, W_L.
std::string encode_model(const ModelFile& model);
ModelFile decode_model(std::string_view bytes);
void save_model(const std::string& path, const ModelFile& model);
ModelFile load_model(const std::string& path);

// Manifest (arch, segment labels, breakpoint count) and one blob per breakpoint.
std::string encode_path(const PWLPath& path);
PWLPath decode_path(std::string_view bytes);
void save_path(const std::string& file, const PWLPath& path);
PWLPath load_path(const std::string& file);

nlohmann::json arch_to_json(const NetworkArch& arch);
NetworkArch arch_from_json(const nlohmann::json& j);

// Writes to a sibling temporary file and renames it over `path`.
void write_atomic(const std::string& path, std::string_view content);
std::string read_file_bytes(const std::string& path);

// Trial CSV: experiment, layer_l, trial, seed, subset_hash, loss, error_rate,
// wall_ms. Per-trial rows tagged A / B, one A-best / B-best row per layer
// and a reference row carrying Phi(theta).
std::string trials_csv(const EndpointBound* exp_a, const std::vector<DropoutLayerResult>* exp_b,
                       double reference_loss, double reference_error);

// Path CSV: t, segment_index, segment_label, train_loss, train_error.
std::string path_csv(const PWLPath& path, const PathReport& report);

// Training CSV: width, seed, epoch, train_loss.
std::string training_csv_header();
std::string training_csv_rows(int width, std::uint64_t seed, const std::vector<double>& history);

nlohmann::json bound_to_json(const NetworkArch& arch, const BoundReport& bound);
nlohmann::json condition_to_json(const ConditionReport& report);
nlohmann::json path_report_to_json(const PWLPath& path, const PathReport& report);

}  // namespace mcpath
