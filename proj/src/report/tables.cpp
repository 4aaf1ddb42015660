#include "rdist/report/tables.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "rdist/core/archive.hpp"

namespace rdist {
namespace {

struct Column {
  std::string header;
  std::string key;
  bool is_metric = false;
  double multiplier = 1.0;
  int decimals = 2;
  bool with_std = false;
};

Column label(std::string header, std::string key) { return Column{std::move(header), std::move(key)}; }
Column metric(std::string header, std::string key, int decimals, bool with_std, double mult = 1.0) {
  return Column{std::move(header), std::move(key), true, mult, decimals, with_std};
}

std::vector<Column> columns(TableLayout layout) {
  switch (layout) {
    case TableLayout::kTable1:
      return {label("Scale Factor", "scale"),
              label("Model", "model"),
              metric("MSE (×10⁻⁴)↓", "mse", 2, true, 1e4),
              metric("PSNR (dB)↑", "psnr", 2, true),
              metric("SSIM↑", "ssim", 3, true),
              metric("LPIPS↓", "lpips", 4, true),
              metric("rFID↓", "rfid", 3, false)};
    case TableLayout::kTable2:
      return {label("Resolution", "resolution"), label("C_hidden", "hidden"), label("Params", "params"),
              metric("MSE", "mse", 2, false, 1e4), metric("PSNR", "psnr", 2, false), metric("SSIM", "ssim", 3, false),
              metric("LPIPS", "lpips", 4, false)};
    case TableLayout::kTable3:
      return {label("Interpolation Types", "method"), label("Position", "position"), metric("MSE↓", "mse", 2, false, 1e4),
              metric("PSNR↑", "psnr", 2, false), metric("SSIM↑", "ssim", 3, false), metric("LPIPS↓", "lpips", 4, false)};
    case TableLayout::kTable4:
      return {label("Loss", "loss"), label("Training Hours", "hours"), metric("MSE", "mse", 2, false, 1e4),
              metric("PSNR", "psnr", 2, false), metric("SSIM", "ssim", 3, false), metric("LPIPS", "lpips", 4, false)};
    case TableLayout::kTable5:
      return {label("Model", "model"), label("T_infer(ms)", "t_infer"), label("params(MB)", "params"),
              label("Mem_GPU(MB)", "mem"), metric("PSNR", "psnr", 2, false)};
  }
  return {};
}

std::size_t display_width(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string_view to_string(TableLayout l) {
  switch (l) {
    case TableLayout::kTable1: return "table1";
    case TableLayout::kTable2: return "table2";
    case TableLayout::kTable3: return "table3";
    case TableLayout::kTable4: return "table4";
    case TableLayout::kTable5: return "table5";
  }
  return "table1";
}

TableLayout table_layout_from_string(std::string_view s) {
  for (auto l : {TableLayout::kTable1, TableLayout::kTable2, TableLayout::kTable3, TableLayout::kTable4, TableLayout::kTable5}) {
    if (to_string(l) == s) return l;
  }
  throw ContractError(fmt::format("unknown table layout '{}'", s));
}

ReportRow row_from_record(const EvalRecord& record) {
  ReportRow row;
  row.labels["scale"] = fmt::format("{:.1f}", record.scale.value());
  row.labels["model"] = record.model_id;
  if (record.ok) {
    row.mean = record.report.mean;
    row.std = record.report.std;
    for (const auto& [k, v] : record.report.set_metrics) row.mean[k] = v;
  }
  return row;
}

std::string format_metric(double value, int decimals, const double* stddev) {
  std::string s = fmt::format("{:.{}f}", value, decimals);
  if (stddev) s += fmt::format("±{:.{}f}", *stddev, decimals);
  return s;
}

RenderedTable render_table(const std::vector<ReportRow>& rows, TableLayout layout) {
  const auto cols = columns(layout);
  RenderedTable t;
  for (const auto& c : cols) t.header.push_back(c.header);
  for (const auto& row : rows) {
    std::vector<std::string> cells;
    for (const auto& c : cols) {
      if (!c.is_metric) {
        auto it = row.labels.find(c.key);
        cells.push_back(it == row.labels.end() ? "-" : it->second);
        continue;
      }
      auto m = row.mean.find(c.key);
      if (m == row.mean.end()) {
        cells.push_back("unavailable");
        continue;
      }
      auto s = row.std.find(c.key);
      const double sd = s == row.std.end() ? 0.0 : s->second * c.multiplier;
      const bool show_std = c.with_std && s != row.std.end();
      cells.push_back(format_metric(m->second * c.multiplier, c.decimals, show_std ? &sd : nullptr));
    }
    t.cells.push_back(std::move(cells));
  }

  auto csv_line = [](const std::vector<std::string>& v) {
    std::string line;
    for (std::size_t i = 0; i < v.size(); ++i) line += (i ? "," : "") + csv_escape(v[i]);
    return line + "\n";
  };
  t.csv = csv_line(t.header);
  for (const auto& r : t.cells) t.csv += csv_line(r);

  std::vector<std::size_t> width(cols.size());
  for (std::size_t i = 0; i < cols.size(); ++i) {
    width[i] = display_width(t.header[i]);
    for (const auto& r : t.cells) width[i] = std::max(width[i], display_width(r[i]));
  }
  auto text_line = [&](const std::vector<std::string>& v) {
    std::string line;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) line += "  ";
      line += v[i];
      if (i + 1 < v.size()) line += std::string(width[i] - display_width(v[i]), ' ');
    }
    return line + "\n";
  };
  t.text = text_line(t.header);
  std::size_t total = 0;
  for (std::size_t w : width) total += w;
  t.text += std::string(total + 2 * (cols.size() - 1), '-') + "\n";
  for (const auto& r : t.cells) t.text += text_line(r);
  return t;
}

void write_table(const RenderedTable& table, const std::filesystem::path& stem) {
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  write_text_atomic(std::filesystem::path(stem.string() + ".csv"), table.csv);
  write_text_atomic(std::filesystem::path(stem.string() + ".txt"), table.text);
}

}  // namespace rdist
