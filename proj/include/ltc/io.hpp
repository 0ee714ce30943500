#pragma once

#include <cstdint>
#include <string>

#include "ltc/data.hpp"
#include "ltc/diagnostics.hpp"
#include "ltc/trainer.hpp"

namespace ltc {

/// "# config_hash=0x... seed=..." — the first line of every output file.
/// Timestamps never appear in data files; they live in run.log only.
std::string output_header(std::uint64_t config_hash, std::uint64_t seed);

/// metrics.csv: one row per epoch with losses, balanced/group test
/// accuracy and the per-class train/test accuracies. Absent groups print
/// as empty fields.
void write_metrics_csv(const std::string& path, const MetricTrace& trace,
                       std::uint64_t config_hash, std::uint64_t seed);

/// conflicts.csv: epoch,class_id,class_count,pos_pairs,repulsive,
/// conflict_ratio,beta. One row per class per epoch that had a
/// contrastive term.
void write_conflicts_csv(const std::string& path, const MetricTrace& trace,
                         const LongTailedDataset& ds, std::uint64_t config_hash,
                         std::uint64_t seed);

/// Same schema with a single epoch column value, for diagnose reports;
/// appends a trailing "# spearman_count_vs_conflict=..." comment.
void write_conflict_report_csv(const std::string& path, const ConflictReport& report,
                               const LongTailedDataset& ds, double spearman_value,
                               std::uint64_t config_hash, std::uint64_t seed);

/// embeddings.csv: label,e0,...,e{h-1} for every row of the given split.
void write_embeddings_csv(const std::string& path, const Model& model,
                          std::span<const Vec> xs, std::span<const int> ys,
                          std::uint64_t config_hash, std::uint64_t seed);

/// Decimal formatting used by all writers: shortest round-trip-exact form.
std::string csv_double(double v);

}  // namespace ltc
