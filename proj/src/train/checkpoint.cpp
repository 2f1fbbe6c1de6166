#include "vitkit/train/checkpoint.hpp"

#include <algorithm>
#include <set>

#include "vitkit/errors.hpp"
#include "vitkit/tnsr.hpp"

namespace vitkit::train {

namespace {

constexpr char kMagic[4] = {'O', 'V', 'C', 'K'};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
  if (s.size() > UINT32_MAX) throw FormatError("checkpoint string too long");
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("checkpoint truncated while reading ") + what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32(const char* what) {
    auto s = take(4, what);
    return static_cast<std::uint32_t>(s[0]) | static_cast<std::uint32_t>(s[1]) << 8 |
           static_cast<std::uint32_t>(s[2]) << 16 | static_cast<std::uint32_t>(s[3]) << 24;
  }
  std::uint16_t u16(const char* what) {
    auto s = take(2, what);
    return static_cast<std::uint16_t>(s[0] | s[1] << 8);
  }
  std::string string(const char* what) {
    const auto n = u32(what);
    auto s = take(n, what);
    return {s.begin(), s.end()};
  }
  std::span<const std::uint8_t> rest() const { return bytes_.subspan(pos_); }
  void skip(std::size_t n) { pos_ += n; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint make_checkpoint(const models::Classifier& model, CheckpointMeta meta) {
  meta.kind = model.kind();
  meta.config = model.config_json();
  Checkpoint c{std::move(meta), {}};
  for (const auto* p : model.parameters().all()) c.parameters.emplace_back(p->name, p->value);
  return c;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u16(out, kCheckpointVersion);
  const auto& m = checkpoint.meta;
  const nlohmann::json meta{{"kind", m.kind},     {"config", m.config},
                            {"seed", m.seed},     {"epochs", m.epochs},
                            {"source_dataset", m.source_dataset}, {"adam", m.adam}};
  put_string(out, meta.dump());
  put_u32(out, static_cast<std::uint32_t>(checkpoint.parameters.size()));
  for (const auto& [name, value] : checkpoint.parameters) {
    put_string(out, name);
    const auto blob = encode_tnsr(value, TnsrDtype::f64);
    out.insert(out.end(), blob.begin(), blob.end());
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kMagic)) throw FormatError("not a checkpoint: bad magic");
  const auto version = r.u16("version");
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.string("metadata"));
    c.meta.kind = meta.at("kind").get<std::string>();
    c.meta.config = meta.at("config");
    c.meta.seed = meta.at("seed").get<std::uint64_t>();
    c.meta.epochs = meta.at("epochs").get<std::size_t>();
    c.meta.source_dataset = meta.at("source_dataset").get<std::string>();
    c.meta.adam = meta.at("adam").get<AdamConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint metadata: ") + e.what());
  }
  const auto count = r.u32("parameter count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.string("parameter name");
    std::size_t used = 0;
    Tensor t = decode_tnsr(r.rest(), &used);
    r.skip(used);
    c.parameters.emplace_back(std::move(name), std::move(t));
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint parameters");
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_file_bytes(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void load_parameters(models::Classifier& model, const Checkpoint& checkpoint) {
  auto& store = model.parameters();
  std::set<std::string> expected, found;
  for (const auto& n : store.names()) expected.insert(n);
  for (const auto& [name, value] : checkpoint.parameters) found.insert(name);
  std::vector<std::string> missing, extra;
  std::set_difference(expected.begin(), expected.end(), found.begin(), found.end(), std::back_inserter(missing));
  std::set_difference(found.begin(), found.end(), expected.begin(), expected.end(), std::back_inserter(extra));
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "checkpoint parameters do not match model " + model.kind() + ":";
    auto list = [&msg](const char* label, const std::vector<std::string>& names) {
      if (names.empty()) return;
      msg += std::string(" ") + label + " [";
      for (std::size_t i = 0; i < names.size(); ++i) msg += (i ? ", " : "") + names[i];
      msg += "]";
    };
    list("missing", missing);
    list("extra", extra);
    throw ValidationError(msg);
  }
  for (const auto& [name, value] : checkpoint.parameters) {
    auto& p = store.at(name);
    if (p.value.shape() != value.shape()) {
      throw ValidationError("checkpoint tensor '" + name + "' has shape " + shape_to_string(value.shape()) +
                            ", model expects " + shape_to_string(p.value.shape()));
    }
  }
  for (const auto& [name, value] : checkpoint.parameters) store.at(name).value = value;
}

std::unique_ptr<models::Classifier> restore_model(const Checkpoint& checkpoint) {
  auto model = models::build_classifier(checkpoint.meta.kind, checkpoint.meta.config, checkpoint.meta.seed);
  load_parameters(*model, checkpoint);
  return model;
}

}  // namespace vitkit::train
