#include "vitkit/data/manifest.hpp"

#include <charconv>
#include <set>
#include <sstream>

#include "vitkit/errors.hpp"
#include "vitkit/tnsr.hpp"

namespace vitkit::data {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.emplace_back(trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

fs::path DatasetManifest::resolve(const ManifestEntry& entry) const {
  const fs::path p(entry.path);
  return p.is_absolute() ? p : root / p;
}

std::vector<std::size_t> DatasetManifest::class_counts() const {
  std::vector<std::size_t> counts(num_classes(), 0);
  for (const auto& e : entries)
    if (e.label < counts.size()) ++counts[e.label];
  return counts;
}

DatasetManifest DatasetManifest::empty_copy() const {
  DatasetManifest m;
  m.name = name;
  m.class_names = class_names;
  m.source_note = source_note;
  m.root = root;
  return m;
}

void DatasetManifest::validate() const {
  if (class_names.empty()) throw ValidationError("manifest declares no classes");
  std::set<std::string> seen;
  for (const auto& n : class_names) {
    if (n.empty()) throw ValidationError("manifest has an empty class name");
    if (!seen.insert(n).second) throw ValidationError("duplicate class name '" + n + "'");
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].label >= class_names.size()) {
      throw ValidationError("entry " + std::to_string(i) + " (" + entries[i].path + ") has label " +
                            std::to_string(entries[i].label) + " outside [0, " + std::to_string(class_names.size()) +
                            ")");
    }
  }
}

void DatasetManifest::check_files() const {
  std::vector<std::string> missing;
  std::size_t count = 0;
  for (const auto& e : entries) {
    if (fs::exists(resolve(e))) continue;
    if (++count <= 10) missing.push_back(resolve(e).string());
  }
  if (count == 0) return;
  std::string msg = std::to_string(count) + " of " + std::to_string(entries.size()) + " manifest entries are missing:";
  for (const auto& m : missing) msg += "\n  " + m;
  if (count > missing.size()) msg += "\n  ... and " + std::to_string(count - missing.size()) + " more";
  throw ValidationError(msg);
}

bool DatasetManifest::same_content(const DatasetManifest& other) const {
  return name == other.name && class_names == other.class_names && entries == other.entries &&
         source_note == other.source_note;
}

DatasetManifest parse_manifest(std::string_view text, const fs::path& root) {
  DatasetManifest m;
  m.root = root;
  bool have_classes = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;
    const std::string where = "manifest line " + std::to_string(line_no);
    if (line.front() == '#') {
      const auto colon = line.find(':');
      if (colon == std::string_view::npos) continue;
      const auto key = trim(line.substr(1, colon - 1));
      const auto value = trim(line.substr(colon + 1));
      if (key == "classes") {
        if (have_classes) throw FormatError(where + ": duplicate #classes header");
        m.class_names = split_csv(value);
        have_classes = true;
      } else if (key == "name") {
        m.name = value;
      } else if (key == "source") {
        m.source_note = value;
      }
      continue;
    }
    if (!have_classes) throw FormatError(where + ": entry before the #classes header");
    const auto tab = line.rfind('\t');
    if (tab == std::string_view::npos || tab == 0) {
      throw FormatError(where + ": expected 'path<TAB>label'");
    }
    const auto label_text = trim(line.substr(tab + 1));
    std::size_t label = 0;
    const auto [end, ec] = std::from_chars(label_text.data(), label_text.data() + label_text.size(), label);
    if (ec != std::errc{} || end != label_text.data() + label_text.size() || label_text.empty()) {
      throw FormatError(where + ": field 'label' is not a class id: '" + std::string(label_text) + "'");
    }
    m.entries.push_back({std::string(line.substr(0, tab)), label});
  }
  if (!have_classes) throw FormatError("manifest has no #classes header");
  return m;
}

std::string format_manifest(const DatasetManifest& m) {
  std::ostringstream out;
  out << "#classes: ";
  for (std::size_t i = 0; i < m.class_names.size(); ++i) out << (i ? "," : "") << m.class_names[i];
  out << '\n';
  if (!m.name.empty()) out << "#name: " << m.name << '\n';
  if (!m.source_note.empty()) out << "#source: " << m.source_note << '\n';
  for (const auto& e : m.entries) out << e.path << '\t' << e.label << '\n';
  return out.str();
}

DatasetManifest load_manifest(const fs::path& path, bool check_files) {
  const auto bytes = read_file_bytes(path);
  DatasetManifest m = parse_manifest(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                                     path.parent_path());
  m.validate();
  if (check_files) m.check_files();
  return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  manifest.validate();
  const fs::path dir = fs::absolute(path).parent_path();
  DatasetManifest out = manifest;
  for (auto& e : out.entries) {
    const fs::path target = fs::absolute(manifest.resolve(e)).lexically_normal();
    const fs::path rel = target.lexically_relative(dir);
    e.path = (rel.empty() ? target : rel).generic_string();
  }
  if (!dir.empty()) fs::create_directories(dir);
  const std::string text = format_manifest(out);
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

}  // namespace vitkit::data
