#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace vitkit::data {

struct ManifestEntry {
  /// Relative to the manifest's root directory (or absolute).
  std::string path;
  std::size_t label = 0;

  bool operator==(const ManifestEntry&) const = default;
};

/// Text format, UTF-8 with LF line endings:
///
///   #classes: name0,name1,...
///   #name: optional dataset name
///   #source: optional free text
///   relative/path<TAB>label_id
///
/// Blank lines and other '#' lines are ignored.
struct DatasetManifest {
  std::string name;
  std::vector<std::string> class_names;
  std::vector<ManifestEntry> entries;
  std::string source_note;
  /// Directory that entry paths are resolved against. Not serialized.
  std::filesystem::path root;

  std::size_t num_classes() const noexcept { return class_names.size(); }
  std::size_t size() const noexcept { return entries.size(); }
  std::filesystem::path resolve(const ManifestEntry& entry) const;
  std::vector<std::size_t> class_counts() const;
  /// Same metadata and root, no entries.
  DatasetManifest empty_copy() const;

  /// Class names non-empty and unique, every label in [0, C). Throws
  /// ValidationError naming the first offending entry.
  void validate() const;
  /// Throws ValidationError listing up to 10 missing files and the total.
  void check_files() const;

  /// Content equality (root excluded).
  bool same_content(const DatasetManifest& other) const;
};

/// Parses manifest text; parse failures are FormatErrors with the line number.
DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& root = {});
std::string format_manifest(const DatasetManifest& manifest);

/// Reads, parses, validates and (optionally) checks that every entry exists.
DatasetManifest load_manifest(const std::filesystem::path& path, bool check_files = true);
/// Writes the manifest with entry paths rewritten relative to the new file.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

}  // namespace vitkit::data
