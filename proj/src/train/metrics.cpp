#include "vitkit/train/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <tuple>

#include "vitkit/errors.hpp"

namespace vitkit::train {

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "unknown";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw ConfigError("unknown split '" + std::string(text) + "'");
}

Real BinaryCounts::accuracy() const {
  const std::size_t total = tp + tn + fp + fn;
  if (total == 0) throw EmptyError("accuracy of zero samples is undefined");
  return static_cast<Real>(tp + tn) / static_cast<Real>(total);
}

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes) : classes_(num_classes), counts_(num_classes * num_classes) {
  if (num_classes == 0) throw ConfigError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
  if (truth >= classes_ || predicted >= classes_) {
    throw LabelError("confusion entry (" + std::to_string(truth) + ", " + std::to_string(predicted) +
                     ") is outside [0, " + std::to_string(classes_) + ")");
  }
  ++counts_[truth * classes_ + predicted];
  ++total_;
}

std::size_t ConfusionMatrix::at(std::size_t truth, std::size_t predicted) const {
  if (truth >= classes_ || predicted >= classes_) throw LabelError("confusion index out of range");
  return counts_[truth * classes_ + predicted];
}

std::size_t ConfusionMatrix::correct() const {
  std::size_t c = 0;
  for (std::size_t k = 0; k < classes_; ++k) c += counts_[k * classes_ + k];
  return c;
}

Real ConfusionMatrix::accuracy() const {
  if (total_ == 0) throw EmptyError("accuracy of zero samples is undefined");
  return static_cast<Real>(correct()) / static_cast<Real>(total_);
}

BinaryCounts ConfusionMatrix::binary() const {
  if (classes_ != 2) throw ConfigError("TP/TN/FP/FN need 2 classes, have " + std::to_string(classes_));
  return {.tp = at(1, 1), .tn = at(0, 0), .fp = at(0, 1), .fn = at(1, 0)};
}

namespace {

auto sort_key(const MetricsRecord& r) {
  const bool final = !r.epoch.has_value();
  return std::tuple<const std::string&, const std::string&, bool, std::size_t, int>(r.dataset, r.model, final, r.epoch.value_or(0), static_cast<int>(r.split));
}

std::string fixed2(Real v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

Real parse_real(std::string_view s, const std::string& where) {
  Real v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size() || s.empty()) {
    throw FormatError(where + ": '" + std::string(s) + "' is not a number");
  }
  return v;
}

void check_cell(const std::string& s) {
  if (s.find_first_of(",\n\r") != std::string::npos) {
    throw FormatError("metrics cell '" + s + "' contains a comma or newline");
  }
}

}  // namespace

bool csv_order(const MetricsRecord& a, const MetricsRecord& b) { return sort_key(a) < sort_key(b); }

std::string format_metrics_csv(std::vector<MetricsRecord> records) {
  std::stable_sort(records.begin(), records.end(), csv_order);
  std::string out = "model,dataset,epoch,split,accuracy,loss\n";
  // dataset -> (best accuracy, model)
  std::map<std::string, std::pair<Real, std::string>> best;
  for (const auto& r : records) {
    check_cell(r.model);
    check_cell(r.dataset);
    out += r.model + "," + r.dataset + "," + (r.epoch ? std::to_string(*r.epoch) : std::string("final")) + "," +
           to_string(r.split) + "," + fixed2(r.accuracy * 100) + "," + fixed2(r.loss) + "\n";
    if (r.split != Split::val) continue;
    auto [it, fresh] = best.try_emplace(r.dataset, r.accuracy, r.model);
    if (!fresh && r.accuracy > it->second.first) it->second = {r.accuracy, r.model};
  }
  if (!best.empty()) {
    out += "# best val accuracy:";
    for (const auto& [dataset, b] : best) out += " " + dataset + "=" + fixed2(b.first * 100) + " (" + b.second + ")";
    out += "\n";
  }
  return out;
}

void write_metrics_csv(const std::vector<MetricsRecord>& records, const std::filesystem::path& path) {
  const std::string text = format_metrics_csv(records);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<MetricsRecord> parse_metrics_csv(std::string_view text) {
  std::vector<MetricsRecord> out;
  std::size_t pos = 0, line_no = 0;
  bool header = false;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const std::string where = "metrics line " + std::to_string(line_no);
    if (!header) {
      if (line != "model,dataset,epoch,split,accuracy,loss") throw FormatError(where + ": unexpected header");
      header = true;
      continue;
    }
    const auto f = split_fields(line);
    if (f.size() != 6) throw FormatError(where + ": expected 6 fields, found " + std::to_string(f.size()));
    MetricsRecord r;
    r.model = f[0];
    r.dataset = f[1];
    if (f[2] != "final") {
      std::size_t e = 0;
      const auto [end, ec] = std::from_chars(f[2].data(), f[2].data() + f[2].size(), e);
      if (ec != std::errc{} || end != f[2].data() + f[2].size()) throw FormatError(where + ": bad epoch");
      r.epoch = e;
    }
    try {
      r.split = parse_split(f[3]);
    } catch (const ConfigError&) {
      throw FormatError(where + ": bad split '" + std::string(f[3]) + "'");
    }
    r.accuracy = parse_real(f[4], where) / 100;
    r.loss = parse_real(f[5], where);
    out.push_back(std::move(r));
  }
  if (!header) throw FormatError("metrics CSV has no header");
  return out;
}

}  // namespace vitkit::train
