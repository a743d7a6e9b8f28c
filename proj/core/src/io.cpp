#include "mcpath/io.hpp"

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <system_error>

#include <unistd.h>

namespace mcpath {

namespace {

using nlohmann::json;

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

double get_f64(std::string_view bytes, std::size_t offset) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= std::uint64_t{static_cast<unsigned char>(bytes[offset + static_cast<std::size_t>(i)])} << (8 * i);
  }
  return std::bit_cast<double>(bits);
}

void put_blob(std::string& out, const NetworkArch& arch, const Params& params) {
  params.check_shapes(arch);
  const int L = arch.depth();
  for (int l = 1; l <= L; ++l) {
    const Matrix& w = params.W(l);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) put_f64(out, w(r, c));
    }
    if (l < L) {
      for (Eigen::Index i = 0; i < params.b(l).size(); ++i) put_f64(out, params.b(l)(i));
    }
  }
}

Params get_blob(std::string_view bytes, std::size_t offset, const NetworkArch& arch) {
  Params p = Params::zeros(arch);
  const int L = arch.depth();
  for (int l = 1; l <= L; ++l) {
    Matrix& w = p.W(l);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c, offset += 8) w(r, c) = get_f64(bytes, offset);
    }
    if (l < L) {
      for (Eigen::Index i = 0; i < p.b(l).size(); ++i, offset += 8) p.b(l)(i) = get_f64(bytes, offset);
    }
  }
  return p;
}

// Splits "<manifest>\n<blob>" and checks the format tag.
std::pair<json, std::string_view> split_manifest(std::string_view bytes, std::string_view tag) {
  const auto nl = bytes.find('\n');
  if (nl == std::string_view::npos) throw ParseError("missing manifest terminator", bytes.size());
  json manifest;
  try {
    manifest = json::parse(bytes.substr(0, nl));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("manifest is not valid JSON: ") + e.what(), e.byte);
  }
  const std::string found = manifest.value("format", std::string{});
  if (found != tag) throw FormatError(std::string(tag), found);
  return {manifest, bytes.substr(nl + 1)};
}

std::string num(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void trial_rows(std::ostringstream& os, const char* tag, const std::vector<TrialRecord>& trials) {
  for (const auto& t : trials) {
    os << tag << ',' << t.layer << ',' << t.trial << ',' << t.seed << ',' << t.subset_hash << ','
       << (t.loss ? num(*t.loss) : "") << ',' << (t.loss ? num(t.error_rate) : "") << ',' << num(t.wall_ms) << '\n';
  }
}

}  // namespace

std::size_t blob_length(const NetworkArch& arch) {
  std::size_t n = 0;
  const int L = arch.depth();
  for (int l = 1; l <= L; ++l) {
    n += static_cast<std::size_t>(arch.width(l - 1)) * static_cast<std::size_t>(arch.width(l));
    if (l < L) n += static_cast<std::size_t>(arch.width(l));
  }
  return n;
}

json arch_to_json(const NetworkArch& arch) {
  return {{"widths", arch.widths},
          {"activation", to_string(arch.activation)},
          {"slope", arch.slope},
          {"loss_kind", to_string(arch.loss)}};
}

NetworkArch arch_from_json(const json& j) {
  NetworkArch arch;
  try {
    arch.widths = j.at("widths").get<std::vector<int>>();
    arch.activation = parse_activation(j.at("activation").get<std::string>());
    arch.slope = j.value("slope", 0.01);
    arch.loss = parse_loss_kind(j.at("loss_kind").get<std::string>());
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad architecture manifest: ") + e.what(), 0);
  }
  arch.validate();
  return arch;
}

std::string encode_model(const ModelFile& model) {
  model.arch.validate();
  json manifest = arch_to_json(model.arch);
  manifest["format"] = kModelTag;
  manifest["seed"] = model.seed;
  manifest["blob_floats"] = blob_length(model.arch);
  std::string out = manifest.dump();
  out.push_back('\n');
  put_blob(out, model.arch, model.params);
  return out;
}

ModelFile decode_model(std::string_view bytes) {
  auto [manifest, blob] = split_manifest(bytes, kModelTag);
  ModelFile model;
  model.arch = arch_from_json(manifest);
  model.seed = manifest.value("seed", std::uint64_t{0});
  const std::size_t expected = blob_length(model.arch) * 8;
  const std::size_t header = bytes.size() - blob.size();
  if (blob.size() != expected) {
    throw ParseError("model blob holds " + std::to_string(blob.size()) + " bytes, expected " +
                         std::to_string(expected),
                     header + std::min(blob.size(), expected));
  }
  model.params = get_blob(blob, 0, model.arch);
  return model;
}

void save_model(const std::string& path, const ModelFile& model) { write_atomic(path, encode_model(model)); }

ModelFile load_model(const std::string& path) { return decode_model(read_file_bytes(path)); }

std::string encode_path(const PWLPath& path) {
  json manifest = arch_to_json(path.arch);
  manifest["format"] = kPathTag;
  json labels = json::array();
  for (const auto& l : path.labels) labels.push_back(l.str());
  manifest["labels"] = labels;
  manifest["breakpoints"] = path.breakpoints.size();
  manifest["blob_floats"] = blob_length(path.arch);
  std::string out = manifest.dump();
  out.push_back('\n');
  for (const auto& p : path.breakpoints) put_blob(out, path.arch, p);
  return out;
}

PWLPath decode_path(std::string_view bytes) {
  auto [manifest, blob] = split_manifest(bytes, kPathTag);
  PWLPath path;
  path.arch = arch_from_json(manifest);
  std::size_t count = 0;
  try {
    count = manifest.at("breakpoints").get<std::size_t>();
    for (const auto& l : manifest.at("labels")) path.labels.push_back(SegmentLabel::parse(l.get<std::string>()));
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad path manifest: ") + e.what(), 0);
  }
  if (count == 0 || path.labels.size() + 1 != count) {
    throw ParseError("path manifest: " + std::to_string(count) + " breakpoints for " +
                         std::to_string(path.labels.size()) + " labels",
                     0);
  }
  const std::size_t each = blob_length(path.arch) * 8;
  const std::size_t header = bytes.size() - blob.size();
  if (blob.size() != each * count) {
    throw ParseError("path blob holds " + std::to_string(blob.size()) + " bytes, expected " +
                         std::to_string(each * count),
                     header + std::min(blob.size(), each * count));
  }
  for (std::size_t i = 0; i < count; ++i) path.breakpoints.push_back(get_blob(blob, i * each, path.arch));
  return path;
}

void save_path(const std::string& file, const PWLPath& path) { write_atomic(file, encode_path(path)); }

PWLPath load_path(const std::string& file) { return decode_path(read_file_bytes(file)); }

void write_atomic(const std::string& path, std::string_view content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out.flush()) throw std::runtime_error("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw std::runtime_error("cannot replace " + path + ": " + ec.message());
  }
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string trials_csv(const EndpointBound* exp_a, const std::vector<DropoutLayerResult>* exp_b,
                       double reference_loss, double reference_error) {
  std::ostringstream os;
  os << "experiment,layer_l,trial,seed,subset_hash,loss,error_rate,wall_ms\n";
  os << "reference,,,,," << num(reference_loss) << ',' << num(reference_error) << ",\n";
  if (exp_a) {
    for (const auto& q : exp_a->layers) {
      trial_rows(os, "A", q.trials);
      os << "A-best," << q.layer << ",,," << hash_indices(q.plan.kept.front()) << ',' << num(q.best_loss) << ','
         << num(q.best_error) << ",\n";
    }
  }
  if (exp_b) {
    for (const auto& layer : *exp_b) {
      trial_rows(os, "B", layer.trials);
      const std::vector<int> none;
      const auto& kept = layer.best_kept.empty() ? none : layer.best_kept.front();
      os << "B-best," << layer.layer << ",,," << hash_indices(kept) << ',' << num(layer.best_loss) << ','
         << num(layer.best_error) << ",\n";
    }
  }
  return os.str();
}

std::string path_csv(const PWLPath& path, const PathReport& report) {
  std::ostringstream os;
  os << "t,segment_index,segment_label,train_loss,train_error\n";
  for (const auto& s : report.samples) {
    const std::string label = path.segment_count() == 0 ? "" : path.labels.at(s.segment).str();
    os << num(s.t) << ',' << s.segment << ',' << label << ',' << num(s.loss) << ',' << num(s.error) << '\n';
  }
  return os.str();
}

std::string training_csv_header() { return "width,seed,epoch,train_loss\n"; }

std::string training_csv_rows(int width, std::uint64_t seed, const std::vector<double>& history) {
  std::ostringstream os;
  for (std::size_t e = 0; e < history.size(); ++e) {
    os << width << ',' << seed << ',' << e << ',' << num(history[e]) << '\n';
  }
  return os.str();
}

json bound_to_json(const NetworkArch& arch, const BoundReport& bound) {
  json endpoints = json::array();
  for (const auto& e : bound.endpoints) {
    json layers = json::array();
    for (const auto& q : e.layers) {
      int failed = 0;
      for (const auto& t : q.trials) failed += t.loss ? 0 : 1;
      layers.push_back({{"layer", q.layer},
                        {"achieved_loss", finite_or_null(q.best_loss)},
                        {"achieved_error", finite_or_null(q.best_error)},
                        {"kept", q.plan.kept.front()},
                        {"subnet_widths", q.xi.widths()},
                        {"trials", q.trials.size()},
                        {"failed_trials", failed}});
    }
    endpoints.push_back({{"reference_loss", finite_or_null(e.reference_loss)},
                         {"reference_error", finite_or_null(e.reference_error)},
                         {"max_achieved_q", e.layers.empty() ? json(nullptr) : finite_or_null(e.max_q_tilde())},
                         {"bound", finite_or_null(e.bound())},
                         {"layers", layers}});
  }
  return {{"arch", arch_to_json(arch)},
          {"drop_ratio", bound.drop_ratio},
          {"trials", bound.trials},
          {"rhs_achieved", bound.endpoints.empty() ? json(nullptr) : finite_or_null(bound.rhs())},
          {"endpoints", endpoints}};
}

json condition_to_json(const ConditionReport& report) {
  json items = json::array();
  for (const auto& a : report.assumptions) {
    items.push_back({{"name", a.name},
                     {"verdict", to_string(a.verdict)},
                     {"detail", a.detail},
                     {"margin", finite_or_null(a.margin)}});
  }
  return {{"condition", report.condition}, {"overall", to_string(report.overall())}, {"assumptions", items}};
}

json path_report_to_json(const PWLPath& path, const PathReport& report) {
  json segments = json::array();
  for (std::size_t s = 0; s < path.segment_count(); ++s) {
    segments.push_back({{"index", s}, {"label", path.labels[s].str()}, {"max_loss", finite_or_null(report.segment_max[s])}});
  }
  return {{"segments", segments},
          {"max_loss", finite_or_null(report.max_loss)},
          {"start_loss", finite_or_null(report.samples.front().loss)},
          {"end_loss", finite_or_null(report.samples.back().loss)}};
}

}  // namespace mcpath
