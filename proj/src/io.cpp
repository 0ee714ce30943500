#include "ltc/io.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace ltc {

std::string csv_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string output_header(std::uint64_t config_hash, std::uint64_t seed) {
  char buf[80];
  std::snprintf(buf, sizeof(buf), "# config_hash=0x%016llx seed=%llu",
                static_cast<unsigned long long>(config_hash),
                static_cast<unsigned long long>(seed));
  return buf;
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

void write_optional(std::ofstream& out, const std::optional<double>& v) {
  if (v) out << csv_double(*v);
}

}  // namespace

void write_metrics_csv(const std::string& path, const MetricTrace& trace,
                       std::uint64_t config_hash, std::uint64_t seed) {
  auto out = open_out(path);
  out << output_header(config_hash, seed) << '\n';
  const std::size_t classes = trace.rows.empty()
                                  ? 0
                                  : trace.rows.front().test_class_acc.size();
  out << "epoch,loss_total,loss_contrastive,loss_bs,test_all,test_many,"
         "test_medium,test_few";
  for (std::size_t c = 0; c < classes; ++c) out << ",train_acc_" << c;
  for (std::size_t c = 0; c < classes; ++c) out << ",test_acc_" << c;
  out << '\n';
  for (const auto& row : trace.rows) {
    out << row.epoch << ',' << csv_double(row.loss_total) << ','
        << csv_double(row.loss_contrastive) << ',' << csv_double(row.loss_bs)
        << ',' << csv_double(row.test_groups.all) << ',';
    write_optional(out, row.test_groups.many);
    out << ',';
    write_optional(out, row.test_groups.medium);
    out << ',';
    write_optional(out, row.test_groups.few);
    for (double a : row.train_class_acc) out << ',' << csv_double(a);
    for (double a : row.test_class_acc) out << ',' << csv_double(a);
    out << '\n';
  }
}

namespace {

void write_conflict_rows(std::ofstream& out, int epoch, const ConflictReport& report,
                         const LongTailedDataset& ds) {
  for (const auto& [cls, st] : report.per_class) {
    const long long count =
        (cls >= 0 && cls < static_cast<int>(ds.class_counts.size()))
            ? ds.class_counts[static_cast<std::size_t>(cls)]
            : 0;
    out << epoch << ',' << cls << ',' << count << ',' << st.pos_pairs << ','
        << st.repulsive << ',' << csv_double(st.conflict_ratio) << ','
        << csv_double(st.beta) << '\n';
  }
}

constexpr const char* kConflictColumns =
    "epoch,class_id,class_count,pos_pairs,repulsive,conflict_ratio,beta";

}  // namespace

void write_conflicts_csv(const std::string& path, const MetricTrace& trace,
                         const LongTailedDataset& ds, std::uint64_t config_hash,
                         std::uint64_t seed) {
  auto out = open_out(path);
  out << output_header(config_hash, seed) << '\n' << kConflictColumns << '\n';
  for (const auto& row : trace.rows)
    write_conflict_rows(out, row.epoch, row.conflicts, ds);
}

void write_conflict_report_csv(const std::string& path, const ConflictReport& report,
                               const LongTailedDataset& ds, double spearman_value,
                               std::uint64_t config_hash, std::uint64_t seed) {
  auto out = open_out(path);
  out << output_header(config_hash, seed) << '\n' << kConflictColumns << '\n';
  write_conflict_rows(out, 0, report, ds);
  out << "# spearman_count_vs_conflict=" << csv_double(spearman_value) << '\n';
}

void write_embeddings_csv(const std::string& path, const Model& model,
                          std::span<const Vec> xs, std::span<const int> ys,
                          std::uint64_t config_hash, std::uint64_t seed) {
  auto out = open_out(path);
  out << output_header(config_hash, seed) << '\n';
  auto [embed, logits] = forward(model, xs);
  out << "label";
  for (std::size_t d = 0; d < embed.cols; ++d) out << ",e" << d;
  out << '\n';
  for (std::size_t e = 0; e < embed.rows; ++e) {
    out << ys[e];
    for (std::size_t d = 0; d < embed.cols; ++d)
      out << ',' << csv_double(embed.at(e, d));
    out << '\n';
  }
}

}  // namespace ltc
