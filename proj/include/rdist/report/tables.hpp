#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rdist/eval/resolution_eval.hpp"

namespace rdist {

enum class TableLayout { kTable1, kTable2, kTable3, kTable4, kTable5 };
std::string_view to_string(TableLayout l);
TableLayout table_layout_from_string(std::string_view s);

/// One table row: text labels plus metric means/stds. Missing metrics render as "unavailable".
struct ReportRow {
  std::map<std::string, std::string> labels;
  std::map<std::string, double> mean;
  std::map<std::string, double> std;
};

/// Labels "scale" and "model" plus the record's metrics.
ReportRow row_from_record(const EvalRecord& record);

struct RenderedTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> cells;
  std::string csv;
  std::string text;
};

/// Columns per layout (label keys in brackets):
///   table1: Scale Factor [scale], Model [model], MSE (x1e-4), PSNR, SSIM, LPIPS (mean+-std), rFID
///   table2: Resolution [resolution], C_hidden [hidden], Params [params], MSE, PSNR, SSIM, LPIPS
///   table3: Interpolation Types [method], Position [position], MSE, PSNR, SSIM, LPIPS
///   table4: Loss [loss], Training Hours [hours], MSE, PSNR, SSIM, LPIPS
///   table5: Model [model], T_infer [t_infer], params [params], Mem_GPU [mem], PSNR
RenderedTable render_table(const std::vector<ReportRow>& rows, TableLayout layout);

/// "24.97" or "24.97±0.55".
std::string format_metric(double value, int decimals, const double* stddev = nullptr);

/// Writes <stem>.csv and <stem>.txt.
void write_table(const RenderedTable& table, const std::filesystem::path& stem);

}  // namespace rdist
