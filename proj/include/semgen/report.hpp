#pragma once

// Report rendering: loss curves as plain 24-bit BMP images and metric tables
// as CSV, so runs can be inspected without plotting dependencies.

#include <filesystem>
#include <vector>

#include "semgen/finetune.hpp"
#include "semgen/pretrain.hpp"

namespace semgen {

// Line plot of loss_cls (red), loss_rec (blue) and loss_total (black) against
// epoch, with a vertical marker at each stage change.
void render_loss_curve(const std::vector<EpochLog>& log, const std::filesystem::path& bmp_path);

// CSV with header init,n,mean,sd (one row per initialization)
void write_metric_table(const CompareResult& result, const std::filesystem::path& csv_path);

} // namespace semgen
