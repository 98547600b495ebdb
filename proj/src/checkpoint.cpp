#include "swapdetect/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "swapdetect/serialize.hpp"

using nlohmann::json;

namespace swapdetect {

namespace {

constexpr char kMagic[8] = {'S', 'W', 'D', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

void write_container(const std::string& path, const json& header,
                     const std::vector<std::pair<std::string, const Matd*>>& arrays) {
  json h = header;
  json dir = json::array();
  for (const auto& [name, mat] : arrays)
    dir.push_back({{"name", name}, {"rows", mat->rows()}, {"cols", mat->cols()}});
  h["arrays"] = dir;
  const std::string header_bytes = h.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u64(out, header_bytes.size());
  out.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
  for (const auto& [name, mat] : arrays) {
    static_assert(sizeof(double) == 8);
    out.write(reinterpret_cast<const char*>(mat->data()),
              static_cast<std::streamsize>(sizeof(double) * mat->size()));
  }
  if (!out) throw IoError("short write: " + path);
}

json read_header(std::istream& in, const std::string& path) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("not a checkpoint file: " + path);
  const std::uint64_t header_size = read_u64(in);
  std::string header_bytes(header_size, '\0');
  in.read(header_bytes.data(), static_cast<std::streamsize>(header_size));
  if (!in) throw IoError("truncated checkpoint header: " + path);
  try {
    return json::parse(header_bytes);
  } catch (const json::parse_error& e) {
    throw IoError("corrupt checkpoint header: " + std::string(e.what()));
  }
}

void read_arrays(std::istream& in, const json& header,
                 const std::vector<std::pair<std::string, Matd*>>& arrays,
                 const std::string& path) {
  const json& dir = header.at("arrays");
  if (dir.size() != arrays.size())
    throw IoError("checkpoint array count mismatch: " + path);
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    const json& entry = dir[i];
    if (entry.at("name").get<std::string>() != arrays[i].first)
      throw IoError("checkpoint array order mismatch at '" + arrays[i].first + "'");
    const Index rows = entry.at("rows").get<Index>();
    const Index cols = entry.at("cols").get<Index>();
    Matd& mat = *arrays[i].second;
    if (mat.rows() != rows || mat.cols() != cols)
      throw IoError("checkpoint array shape mismatch at '" + arrays[i].first + "'");
    in.read(reinterpret_cast<char*>(mat.data()),
            static_cast<std::streamsize>(sizeof(double) * mat.size()));
  }
  if (!in) throw IoError("truncated checkpoint arrays: " + path);
}

void check_fingerprint(const json& header,
                       const std::optional<std::string>& expected) {
  if (!expected) return;
  const std::string stored = header.at("fe_fingerprint").get<std::string>();
  if (stored != *expected)
    throw ConfigError(
        "checkpoint was trained under a different feature configuration "
        "(stored fingerprint " +
        stored + ", requested " + *expected + ")");
}

}  // namespace

CheckpointInfo peek_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  const json header = read_header(in, path);
  CheckpointInfo info;
  info.kind = header.at("kind").get<std::string>();
  info.fe_config = feature_config_from_json(header.at("fe_config"));
  info.fe_fingerprint = header.at("fe_fingerprint").get<std::string>();
  info.run_fingerprint = header.value("run_fingerprint", "");
  return info;
}

void save_classifier_checkpoint(const std::string& path,
                                const ClassifierModel& model,
                                const FeatureExtractorConfig& fe_config,
                                const std::string& run_fingerprint) {
  json header;
  header["kind"] = "classifier";
  header["fe_config"] = to_json(fe_config);
  header["fe_fingerprint"] = feature_config_fingerprint(fe_config);
  header["run_fingerprint"] = run_fingerprint;
  header["classifier_config"] = to_json(model.config());
  json history = json::array();
  for (const EpochStats& s : model.training_history()) history.push_back(to_json(s));
  header["history"] = history;
  header["training_techniques"] = model.training_techniques();
  write_container(path, header, model.named_params());
}

ClassifierModel load_classifier_checkpoint(
    const std::string& path, FeatureExtractorConfig* fe_config_out,
    const std::optional<std::string>& expected_fe_fingerprint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  const json header = read_header(in, path);
  if (header.at("kind").get<std::string>() != "classifier")
    throw ConfigError("checkpoint is not a classifier checkpoint: " + path);
  check_fingerprint(header, expected_fe_fingerprint);

  ClassifierModel model =
      ClassifierModel::init(classifier_config_from_json(header.at("classifier_config")));
  read_arrays(in, header, model.named_params(), path);

  std::vector<EpochStats> history;
  for (const json& s : header.at("history")) history.push_back(epoch_stats_from_json(s));
  model.set_history(std::move(history));
  model.set_fe_fingerprint(header.at("fe_fingerprint").get<std::string>());
  model.set_training_techniques(
      header.at("training_techniques").get<std::vector<std::string>>());
  if (fe_config_out) *fe_config_out = feature_config_from_json(header.at("fe_config"));
  return model;
}

void save_anomaly_checkpoint(const std::string& path,
                             const DualEncoderModel& model,
                             const FeatureExtractorConfig& fe_config,
                             const std::string& run_fingerprint) {
  json header;
  header["kind"] = "anomaly";
  header["fe_config"] = to_json(fe_config);
  header["fe_fingerprint"] = feature_config_fingerprint(fe_config);
  header["run_fingerprint"] = run_fingerprint;
  header["anomaly_config"] = to_json(model.config());
  header["history"] = model.training_history();
  header["training_techniques"] = model.training_techniques();
  if (model.calibrated()) header["calibration"] = to_json(model.calibration());

  auto arrays = model.named_params();
  const Matd mean = model.feature_mean();
  const Matd scale = model.feature_scale();
  arrays.emplace_back("feature_mean", &mean);
  arrays.emplace_back("feature_scale", &scale);
  write_container(path, header, arrays);
}

DualEncoderModel load_anomaly_checkpoint(
    const std::string& path, FeatureExtractorConfig* fe_config_out,
    const std::optional<std::string>& expected_fe_fingerprint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  const json header = read_header(in, path);
  if (header.at("kind").get<std::string>() != "anomaly")
    throw ConfigError("checkpoint is not an anomaly checkpoint: " + path);
  check_fingerprint(header, expected_fe_fingerprint);

  DualEncoderModel model =
      DualEncoderModel::init(anomaly_config_from_json(header.at("anomaly_config")));
  Matd mean(model.feature_dim(), 1), scale(model.feature_dim(), 1);
  auto arrays = model.named_params();
  arrays.emplace_back("feature_mean", &mean);
  arrays.emplace_back("feature_scale", &scale);
  read_arrays(in, header, arrays, path);
  model.set_feature_stats(mean.col(0), scale.col(0));

  model.set_history(header.at("history").get<std::vector<double>>());
  model.set_fe_fingerprint(header.at("fe_fingerprint").get<std::string>());
  model.set_training_techniques(
      header.at("training_techniques").get<std::vector<std::string>>());
  if (header.contains("calibration"))
    model.set_calibration(calibration_from_json(header.at("calibration")));
  if (fe_config_out) *fe_config_out = feature_config_from_json(header.at("fe_config"));
  return model;
}

}  // namespace swapdetect
