#include "probekit/param_io.hpp"

#include "overloaded.hpp"
#include "probekit/errors.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

namespace probekit {

using detail::overloaded;

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

constexpr std::string_view kFormatTag = "probekit-params";
constexpr int kFormatVersion = 1;

struct Tensor {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<double> values;  // row-major
};

using TensorList = std::vector<Tensor>;

std::int64_t element_count(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

void add_vector(TensorList& out, const std::string& name, const Eigen::VectorXd& v) {
  out.push_back({name, {v.size()}, {v.data(), v.data() + v.size()}});
}

void add_scalar(TensorList& out, const std::string& name, double value) {
  out.push_back({name, {}, {value}});
}

void add_matrix(TensorList& out, const std::string& name, const Eigen::MatrixXd& m) {
  Tensor t{name, {m.rows(), m.cols()}, {}};
  t.values.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.values.push_back(m(r, c));
  }
  out.push_back(std::move(t));
}

void add_probe(TensorList& out, const std::string& prefix, const Probe& probe) {
  std::visit(overloaded{[&](const CircularProbe& p) {
                          add_vector(out, prefix + "w1", p.w1);
                          add_vector(out, prefix + "w2", p.w2);
                        },
                        [&](const LinearProbe& p) {
                          add_vector(out, prefix + "w", p.w);
                          add_scalar(out, prefix + "b", p.b);
                        },
                        [&](const LogisticProbe& p) {
                          add_matrix(out, prefix + "weights", p.weights);
                        },
                        [&](const MlpProbe& p) {
                          add_matrix(out, prefix + "w1", p.w1);
                          add_vector(out, prefix + "b1", p.b1);
                          add_matrix(out, prefix + "w2", p.w2);
                          add_vector(out, prefix + "b2", p.b2);
                        }},
             probe);
}

TensorList detector_tensors(const ErrorDetector& detector) {
  TensorList out;
  std::visit(overloaded{[&](const SeparateProbes& s) {
                          add_probe(out, "model.", s.model);
                          add_probe(out, "gt.", s.gt);
                        },
                        [&](const JointCircular& j) {
                          add_vector(out, "first.w1", j.first.w1);
                          add_vector(out, "first.w2", j.first.w2);
                          add_vector(out, "second.w1", j.second.w1);
                          add_vector(out, "second.w2", j.second.w2);
                          add_scalar(out, "scale", j.scale);
                          add_scalar(out, "bias", j.bias);
                        },
                        [&](const MlpProbe& m) { add_probe(out, "", m); }},
             detector.components);
  return out;
}

TensorList probe_tensors(const Probe& probe) {
  TensorList out;
  add_probe(out, "", probe);
  return out;
}

std::vector<unsigned char> encode_blob(const TensorList& tensors) {
  std::vector<unsigned char> bytes;
  for (const auto& t : tensors) {
    for (double v : t.values) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int shift = 0; shift < 32; shift += 8) {
        bytes.push_back(static_cast<unsigned char>(bits >> shift));
      }
    }
  }
  return bytes;
}

// ---- reading --------------------------------------------------------------

class TensorReader {
 public:
  TensorReader(const ojson& specs, const std::vector<unsigned char>& blob) {
    if (!specs.is_array()) throw FormatError("'tensors' must be an array");
    std::size_t offset = 0;
    for (const auto& spec : specs) {
      Tensor t;
      try {
        t.name = spec.at("name").get<std::string>();
        t.shape = spec.at("shape").get<std::vector<std::int64_t>>();
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad tensor entry: ") + e.what());
      }
      for (auto s : t.shape) {
        if (s < 0) throw FormatError("negative dimension in tensor " + t.name);
      }
      const auto n = static_cast<std::size_t>(element_count(t.shape));
      if (offset + 4 * n > blob.size()) {
        throw FormatError("parameter blob is shorter than the header implies");
      }
      t.values.resize(n);
      for (std::size_t i = 0; i < n; ++i, offset += 4) {
        const std::uint32_t bits = std::uint32_t{blob[offset]} |
                                   (std::uint32_t{blob[offset + 1]} << 8) |
                                   (std::uint32_t{blob[offset + 2]} << 16) |
                                   (std::uint32_t{blob[offset + 3]} << 24);
        t.values[i] = std::bit_cast<float>(bits);
        if (!std::isfinite(t.values[i])) throw DataError("non-finite value in " + t.name);
      }
      if (!tensors_.emplace(t.name, std::move(t)).second) {
        throw FormatError("duplicate tensor name");
      }
    }
    if (offset != blob.size()) {
      throw FormatError("parameter blob is longer than the header implies");
    }
  }

  const Tensor& get(const std::string& name, std::size_t rank) const {
    const auto it = tensors_.find(name);
    if (it == tensors_.end()) throw FormatError("missing tensor '" + name + "'");
    if (it->second.shape.size() != rank) {
      throw ShapeError("tensor '" + name + "' has rank " +
                       std::to_string(it->second.shape.size()) + ", expected " +
                       std::to_string(rank));
    }
    return it->second;
  }

  Eigen::VectorXd vector(const std::string& name) const {
    const Tensor& t = get(name, 1);
    return Eigen::Map<const Eigen::VectorXd>(t.values.data(),
                                             static_cast<Eigen::Index>(t.values.size()));
  }

  double scalar(const std::string& name) const { return get(name, 0).values[0]; }

  Eigen::MatrixXd matrix(const std::string& name) const {
    const Tensor& t = get(name, 2);
    Eigen::MatrixXd m(t.shape[0], t.shape[1]);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = t.values[k++];
    }
    return m;
  }

 private:
  std::map<std::string, Tensor> tensors_;
};

Probe read_probe(const TensorReader& in, ProbeKind kind, const std::string& prefix) {
  switch (kind) {
    case ProbeKind::circular:
      return CircularProbe{in.vector(prefix + "w1"), in.vector(prefix + "w2")};
    case ProbeKind::linear:
      return LinearProbe{in.vector(prefix + "w"), in.scalar(prefix + "b")};
    case ProbeKind::logistic: return LogisticProbe{in.matrix(prefix + "weights")};
    case ProbeKind::mlp:
      return MlpProbe{in.matrix(prefix + "w1"), in.vector(prefix + "b1"),
                      in.matrix(prefix + "w2"), in.vector(prefix + "b2")};
  }
  throw FormatError("unknown probe kind");
}

// ---- header ---------------------------------------------------------------

ojson optimizer_json(const OptimizerConfig& cfg) {
  return ojson{{"optimizer", cfg.kind == OptimizerKind::adam ? "adam" : "adamw"},
               {"learning_rate", cfg.learning_rate},
               {"beta1", cfg.beta1},
               {"beta2", cfg.beta2},
               {"epsilon", cfg.epsilon},
               {"weight_decay", cfg.effective_weight_decay()},
               {"epochs", cfg.epochs}};
}

OptimizerConfig optimizer_from_json(const ojson& h) {
  OptimizerConfig cfg;
  const auto name = h.at("optimizer").get<std::string>();
  if (name == "adam") {
    cfg.kind = OptimizerKind::adam;
  } else if (name == "adamw") {
    cfg.kind = OptimizerKind::adamw;
  } else {
    throw FormatError("unknown optimizer '" + name + "'");
  }
  cfg.learning_rate = h.at("learning_rate").get<double>();
  cfg.beta1 = h.at("beta1").get<double>();
  cfg.beta2 = h.at("beta2").get<double>();
  cfg.epsilon = h.at("epsilon").get<double>();
  cfg.weight_decay = h.at("weight_decay").get<double>();
  cfg.epochs = h.at("epochs").get<int>();
  return cfg;
}

ojson probe_options_json(const ProbeTrainingOptions& options) {
  return ojson{
      {"circular_loss", options.circular_loss == CircularLoss::wrapped ? "wrapped" : "unwrapped"},
      {"ridge_lambda", options.ridge_lambda},
      {"init_std", options.init_std}};
}

ProbeTrainingOptions probe_options_from_json(const ojson& h) {
  ProbeTrainingOptions options;
  const auto loss = h.at("circular_loss").get<std::string>();
  if (loss == "wrapped") {
    options.circular_loss = CircularLoss::wrapped;
  } else if (loss == "unwrapped") {
    options.circular_loss = CircularLoss::unwrapped;
  } else {
    throw FormatError("unknown circular_loss '" + loss + "'");
  }
  options.ridge_lambda = h.at("ridge_lambda").get<double>();
  options.init_std = h.at("init_std").get<double>();
  return options;
}

ojson tensor_specs(const TensorList& tensors) {
  ojson specs = ojson::array();
  for (const auto& t : tensors) specs.push_back({{"name", t.name}, {"shape", t.shape}});
  return specs;
}

void write_file(const fs::path& path, ojson header, const TensorList& tensors) {
  const auto blob = encode_blob(tensors);
  header["dtype"] = "f32";
  header["byte_order"] = "little";
  header["tensors"] = tensor_specs(tensors);
  header["checksum"] = "fnv1a64:" + checksum_hex(fnv1a64(blob));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(blob.data()),
            static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

struct RawFile {
  ojson header;
  std::vector<unsigned char> blob;
};

RawFile read_file(const fs::path& path, std::string_view object) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("missing parameter file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + " is empty");
  RawFile raw;
  try {
    raw.header = ojson::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": header is not valid JSON: " + e.what());
  }
  raw.blob.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  const auto& h = raw.header;
  if (!h.is_object() || h.value("format", "") != kFormatTag ||
      h.value("version", 0) != kFormatVersion) {
    throw FormatError(path.string() + " is not a probekit parameter file");
  }
  if (h.value("object", "") != object) {
    throw FormatError(path.string() + " holds a " + h.value("object", std::string("?")) +
                      ", expected a " + std::string(object));
  }
  if (h.value("dtype", "") != "f32" || h.value("byte_order", "") != "little") {
    throw FormatError(path.string() + ": only little-endian f32 blobs are supported");
  }
  const std::string expected = "fnv1a64:" + checksum_hex(fnv1a64(raw.blob));
  if (h.value("checksum", "") != expected) {
    throw FormatError(path.string() + ": parameter checksum mismatch");
  }
  return raw;
}

template <typename F>
auto with_format_errors(const fs::path& path, F&& body) {
  try {
    return body();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const ArgumentError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace

std::uint64_t fnv1a64(std::span<const unsigned char> bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    hash ^= b;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string checksum_hex(std::uint64_t checksum) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(checksum));
  return buf;
}

std::uint64_t parameter_checksum(const Probe& probe) {
  return fnv1a64(encode_blob(probe_tensors(probe)));
}

std::uint64_t parameter_checksum(const ErrorDetector& detector) {
  return fnv1a64(encode_blob(detector_tensors(detector)));
}

void save_probe(const ProbeFile& file, const fs::path& path) {
  validate_probe(file.probe);
  ojson header{{"format", kFormatTag},
               {"version", kFormatVersion},
               {"object", "probe"},
               {"kind", to_string(kind_of(file.probe))},
               {"d_model", d_model_of(file.probe)},
               {"layer", file.layer},
               {"target", to_string(file.target)},
               {"seed", file.optimizer.seed},
               {"hyperparameters", optimizer_json(file.optimizer)}};
  header["hyperparameters"].update(probe_options_json(file.options));
  write_file(path, std::move(header), probe_tensors(file.probe));
}

ProbeFile load_probe(const fs::path& path) {
  const RawFile raw = read_file(path, "probe");
  return with_format_errors(path, [&] {
    const auto& h = raw.header;
    ProbeFile file;
    const ProbeKind kind = parse_probe_kind(h.at("kind").get<std::string>());
    file.layer = h.at("layer").get<int>();
    file.target = parse_digit_target(h.at("target").get<std::string>());
    file.optimizer = optimizer_from_json(h.at("hyperparameters"));
    file.optimizer.seed = h.at("seed").get<std::uint64_t>();
    file.options = probe_options_from_json(h.at("hyperparameters"));
    const TensorReader reader(h.at("tensors"), raw.blob);
    file.probe = read_probe(reader, kind, "");
    validate_probe(file.probe);
    if (d_model_of(file.probe) != h.at("d_model").get<int>()) {
      throw ShapeError("probe tensors disagree with header d_model");
    }
    return file;
  });
}

void save_detector(const DetectorFile& file, const fs::path& path) {
  const ErrorDetector& d = file.detector;
  validate_detector(d);
  ojson header{{"format", kFormatTag},
               {"version", kFormatVersion},
               {"object", "detector"},
               {"kind", to_string(d.kind)},
               {"d_model", d_model_of(d)},
               {"layer", d.layer},
               {"threshold", d.threshold},
               {"seed", file.optimizer.seed},
               {"hyperparameters", optimizer_json(file.optimizer)}};
  header["hyperparameters"].update(probe_options_json(file.options.probe));
  if (const auto* joint = std::get_if<JointCircular>(&d.components)) {
    header["joint_form"] = to_string(joint->form);
  }
  write_file(path, std::move(header), detector_tensors(d));
}

DetectorFile load_detector(const fs::path& path) {
  const RawFile raw = read_file(path, "detector");
  return with_format_errors(path, [&] {
    const auto& h = raw.header;
    DetectorFile file;
    ErrorDetector& d = file.detector;
    d.kind = parse_detector_kind(h.at("kind").get<std::string>());
    d.layer = h.at("layer").get<int>();
    d.threshold = h.at("threshold").get<double>();
    file.optimizer = optimizer_from_json(h.at("hyperparameters"));
    file.optimizer.seed = h.at("seed").get<std::uint64_t>();
    file.options.probe = probe_options_from_json(h.at("hyperparameters"));
    const TensorReader reader(h.at("tensors"), raw.blob);
    if (is_separate(d.kind)) {
      const ProbeKind kind = separate_probe_kind(d.kind);
      d.components = SeparateProbes{read_probe(reader, kind, "model."),
                                    read_probe(reader, kind, "gt.")};
    } else if (d.kind == DetectorKind::circular_joint) {
      JointCircular j;
      j.first = {reader.vector("first.w1"), reader.vector("first.w2")};
      j.second = {reader.vector("second.w1"), reader.vector("second.w2")};
      j.scale = reader.scalar("scale");
      j.bias = reader.scalar("bias");
      j.form = parse_joint_form(h.at("joint_form").get<std::string>());
      file.options.joint_form = j.form;
      d.components = std::move(j);
    } else {
      d.components = std::get<MlpProbe>(read_probe(reader, ProbeKind::mlp, ""));
    }
    validate_detector(d);
    if (d_model_of(d) != h.at("d_model").get<int>()) {
      throw ShapeError("detector tensors disagree with header d_model");
    }
    return file;
  });
}

}  // namespace probekit
