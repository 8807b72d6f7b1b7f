#include "unicon/encoder.hpp"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace unicon {

std::string to_string(NumericEncoding e) {
  return e == NumericEncoding::ScaledEmbedding ? "scaled_embedding" : "piecewise_linear";
}

NumericEncoding parse_numeric_encoding(const std::string& s) {
  if (s == "scaled_embedding") return NumericEncoding::ScaledEmbedding;
  if (s == "piecewise_linear") return NumericEncoding::PiecewiseLinear;
  throw ConfigError("unknown numeric encoding: " + s);
}

void EncoderConfig::validate() const {
  if (d_model < 1) throw ConfigError("encoder: d_model must be positive");
  if (n_heads < 1 || d_model % n_heads != 0)
    throw ConfigError("encoder: d_model must be divisible by n_heads");
  if (n_layers < 1) throw ConfigError("encoder: n_layers must be >= 1");
  if (d_ff < 1) throw ConfigError("encoder: d_ff must be positive");
  if (max_seq_len < 2) throw ConfigError("encoder: max_seq_len must be >= 2");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("encoder: dropout must be in [0, 1)");
  if (ple_bins < 2) throw ConfigError("encoder: ple_bins must be >= 2");
}

nlohmann::ordered_json encoder_config_json(const EncoderConfig& cfg) {
  nlohmann::ordered_json j;
  j["d_model"] = cfg.d_model;
  j["n_layers"] = cfg.n_layers;
  j["n_heads"] = cfg.n_heads;
  j["d_ff"] = cfg.d_ff;
  j["max_seq_len"] = cfg.max_seq_len;
  j["numeric_encoding"] = to_string(cfg.numeric_encoding);
  j["use_timestamp"] = cfg.use_timestamp;
  j["class_weighting"] = cfg.class_weighting;
  j["dropout"] = cfg.dropout;
  j["ple_bins"] = cfg.ple_bins;
  j["seed"] = cfg.seed;
  return j;
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig cfg;
  cfg.d_model = j.value("d_model", cfg.d_model);
  cfg.n_layers = j.value("n_layers", cfg.n_layers);
  cfg.n_heads = j.value("n_heads", cfg.n_heads);
  cfg.d_ff = j.value("d_ff", cfg.d_ff);
  cfg.max_seq_len = j.value("max_seq_len", cfg.max_seq_len);
  if (j.contains("numeric_encoding"))
    cfg.numeric_encoding = parse_numeric_encoding(j.at("numeric_encoding").get<std::string>());
  cfg.use_timestamp = j.value("use_timestamp", cfg.use_timestamp);
  cfg.class_weighting = j.value("class_weighting", cfg.class_weighting);
  cfg.dropout = j.value("dropout", cfg.dropout);
  cfg.ple_bins = j.value("ple_bins", cfg.ple_bins);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.validate();
  return cfg;
}

namespace {

constexpr char kMagic[4] = {'U', 'N', 'C', 'N'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw FormatError(path + ": truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Tokenizer& tok, const Model<double>& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MissingArtifactError("cannot open " + path + " for writing");
  out.write(kMagic, 4);
  write_pod<std::uint32_t>(out, kVersion);

  nlohmann::ordered_json meta;
  meta["config"] = encoder_config_json(model.config());
  meta["tokenizer"] = tok.to_json();
  meta["trained"] = {{"next_item", model.next_item_trained},
                     {"classifier", model.classifier_trained}};
  meta["fingerprint"] = model_fingerprint(tok, model.config());
  const std::string blob = meta.dump();
  write_pod<std::uint64_t>(out, blob.size());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));

  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(model.parameters().size()));
  std::vector<double> rowbuf;
  for (const auto& t : model.parameters()) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_pod<std::uint8_t>(out, 1);  // f64
    write_pod<std::uint32_t>(out, 2);
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(t.value.rows()));
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(t.value.cols()));
    rowbuf.resize(static_cast<std::size_t>(t.value.cols()));
    for (Eigen::Index r = 0; r < t.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.value.cols(); ++c)
        rowbuf[static_cast<std::size_t>(c)] = t.value(r, c);
      out.write(reinterpret_cast<const char*>(rowbuf.data()),
                static_cast<std::streamsize>(rowbuf.size() * sizeof(double)));
    }
  }
  if (!out) throw FormatError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError(path + " missing; train and save a model first");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError(path + ": not a model checkpoint");
  const auto version = read_pod<std::uint32_t>(in, path);
  if (version != kVersion)
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));

  const auto blob_len = read_pod<std::uint64_t>(in, path);
  std::string blob(blob_len, '\0');
  if (!in.read(blob.data(), static_cast<std::streamsize>(blob_len)))
    throw FormatError(path + ": truncated checkpoint");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(blob);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": bad metadata block: " + e.what());
  }

  Tokenizer tok = Tokenizer::from_json(meta.at("tokenizer"));
  EncoderConfig cfg = encoder_config_from_json(meta.at("config"));
  Model<double> model(cfg, tok);

  const auto n_tensors = read_pod<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const auto name_len = read_pod<std::uint32_t>(in, path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw FormatError(path + ": truncated checkpoint");
    const auto dtype = read_pod<std::uint8_t>(in, path);
    const auto ndim = read_pod<std::uint32_t>(in, path);
    if (ndim != 2) throw FormatError(path + ": tensor " + name + " has unsupported rank");
    const auto rows = read_pod<std::uint64_t>(in, path);
    const auto cols = read_pod<std::uint64_t>(in, path);
    if (!model.has_param(name)) throw FormatError(path + ": unknown tensor " + name);
    auto& t = model.param(name);
    if (static_cast<std::uint64_t>(t.value.rows()) != rows ||
        static_cast<std::uint64_t>(t.value.cols()) != cols)
      throw FormatError(path + ": tensor " + name + " has mismatched shape");
    for (std::uint64_t r = 0; r < rows; ++r) {
      for (std::uint64_t c = 0; c < cols; ++c) {
        double v;
        if (dtype == 1)
          v = read_pod<double>(in, path);
        else if (dtype == 0)
          v = static_cast<double>(read_pod<float>(in, path));
        else
          throw FormatError(path + ": tensor " + name + " has unknown dtype");
        t.value(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
      }
    }
  }
  const auto& trained = meta.at("trained");
  model.next_item_trained = trained.value("next_item", false);
  model.classifier_trained = trained.value("classifier", false);
  return {std::move(tok), std::move(model)};
}

std::string model_fingerprint(const Tokenizer& tok, const EncoderConfig& config) {
  nlohmann::ordered_json j;
  j["config"] = encoder_config_json(config);
  j["tokenizer"] = tok.to_json();
  const std::uint64_t h = derive_seed(0, j.dump());
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

}  // namespace unicon
