#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vitkit/tensor.hpp"

namespace vitkit::train {

enum class Split { train, val, test };

std::string to_string(Split split);
/// Throws ConfigError for anything but train, val or test.
Split parse_split(std::string_view text);

struct MetricsRecord {
  std::string model;
  std::string dataset;
  /// 1-based epoch index; nullopt for a final evaluation (rendered "final").
  std::optional<std::size_t> epoch;
  Split split = Split::val;
  Real accuracy = 0;
  Real loss = 0;

  bool operator==(const MetricsRecord&) const = default;
};

struct BinaryCounts {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  /// (TP + TN) / (TP + TN + FP + FN); EmptyError when all counts are zero.
  Real accuracy() const;
};

/// Rows are true classes, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  /// LabelError for ids outside [0, C).
  void add(std::size_t truth, std::size_t predicted);

  std::size_t num_classes() const noexcept { return classes_; }
  std::size_t at(std::size_t truth, std::size_t predicted) const;
  std::size_t total() const noexcept { return total_; }
  std::size_t correct() const;
  /// trace / total; EmptyError when nothing was added.
  Real accuracy() const;
  /// Class 1 is the positive class. ConfigError unless C == 2.
  BinaryCounts binary() const;

 private:
  std::size_t classes_;
  std::vector<std::size_t> counts_;
  std::size_t total_ = 0;
};

/// Table-shaped CSV: header `model,dataset,epoch,split,accuracy,loss`, rows
/// sorted by (dataset, model, epoch, split) with numbered epochs before
/// "final" and splits in train/val/test order. Accuracy is a percentage with
/// 2 decimals, loss unscaled with 2 decimals. When val rows exist a footer
/// comment lists the best val accuracy per dataset.
std::string format_metrics_csv(std::vector<MetricsRecord> records);
/// IoError when the file cannot be written.
void write_metrics_csv(const std::vector<MetricsRecord>& records, const std::filesystem::path& path);
/// Inverse of format_metrics_csv up to the printed precision; comment lines
/// are skipped. FormatError on malformed rows.
std::vector<MetricsRecord> parse_metrics_csv(std::string_view text);

/// Sort key used by the CSV.
bool csv_order(const MetricsRecord& a, const MetricsRecord& b);

}  // namespace vitkit::train
