#include "moralprobe/report.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "moralprobe/csv.hpp"

namespace moralprobe {
namespace {

struct CsvCells {
  std::string r_or_u, p, n, direction, stars;
};

CsvCells cells(const RowResult& result) {
  return std::visit(
      [](const auto& r) -> CsvCells {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, stats::CorrelationResult>) {
          return {fmt::format("{:.12f}", r.r), fmt::format("{:.6e}", r.p), std::to_string(r.n),
                  "", std::string(stats::to_string(r.stars))};
        } else if constexpr (std::is_same_v<T, stats::RankTestResult>) {
          return {fmt::format("{:.1f}", r.u_statistic), fmt::format("{:.6e}", r.p_corrected),
                  std::to_string(r.n1), std::string(stats::to_string(r.direction)),
                  std::string(stats::to_string(stats::stars_for(r.p_corrected)))};
        } else if constexpr (std::is_same_v<T, stats::IntervalEstimate>) {
          return {fmt::format("{:.12f}", r.mean_r), "", std::to_string(r.replicates),
                  fmt::format("ci:{:.6f}:{:.6f}", r.lower, r.upper), ""};
        } else {
          return {"", "", std::to_string(r.n), "flagged", ""};
        }
      },
      result);
}

}  // namespace

std::string describe_result(const RowResult& result) {
  return std::visit(
      [](const auto& r) -> std::string {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, stats::CorrelationResult>) {
          return fmt::format("r = {:.3f}{}, p = {:.3g}, n = {}", r.r,
                             r.stars == stats::Stars::kNs ? "" : stats::to_string(r.stars), r.p,
                             r.n);
        } else if constexpr (std::is_same_v<T, stats::RankTestResult>) {
          const auto s = stats::stars_for(r.p_corrected);
          return fmt::format("U = {:.1f}, p = {:.3g} (raw {:.3g}){}, n = {}, {}", r.u_statistic,
                             r.p_corrected, r.p_raw,
                             s == stats::Stars::kNs ? "" : " " + std::string(stats::to_string(s)),
                             r.n1, stats::to_string(r.direction));
        } else if constexpr (std::is_same_v<T, stats::IntervalEstimate>) {
          return fmt::format("mean r = {:.3f}, {:.0f}% interval [{:.3f}, {:.3f}], {} replicates",
                             r.mean_r, 100.0 * (1.0 - r.alpha), r.lower, r.upper, r.replicates);
        } else {
          return fmt::format("flagged: {} (n = {})", r.reason, r.n);
        }
      },
      result);
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

void write_report_csv(std::ostream& out, const EvalReport& report) {
  out << "kind,label,topic,r_or_u,p,n,direction,stars\n";
  const std::string kind(to_string(report.kind));
  for (const auto& row : report.rows) {
    const auto c = cells(row.result);
    csv::write_row(out, {kind, row.label, row.topic, c.r_or_u, c.p, c.n, c.direction, c.stars});
  }
}

std::string provenance_json(const Provenance& p) {
  nlohmann::ordered_json j;
  j["backend"] = p.backend;
  j["model_id"] = p.model_id;
  j["template_id"] = p.template_id;
  j["dataset_id"] = p.dataset_id;
  j["seed"] = p.seed ? nlohmann::ordered_json(*p.seed) : nlohmann::ordered_json(nullptr);
  j["cache_digest"] = p.cache_digest;
  j["input_digest"] = p.input_digest;
  return j.dump(2) + "\n";
}

void write_report_markdown(std::ostream& out, const EvalReport& report) {
  const auto& p = report.provenance;
  fmt::print(out, "# {} report\n\n", to_string(report.kind));
  fmt::print(out, "| field | value |\n|---|---|\n");
  fmt::print(out, "| backend | {} |\n| model | {} |\n| template | {} |\n| dataset | {} |\n",
             p.backend, p.model_id, p.template_id, p.dataset_id);
  fmt::print(out, "| seed | {} |\n| cache digest | {} |\n| input digest | {} |\n\n",
             p.seed ? std::to_string(*p.seed) : "-", p.cache_digest.empty() ? "-" : p.cache_digest,
             p.input_digest.empty() ? "-" : p.input_digest);
  fmt::print(out, "| label | topic | result |\n|---|---|---|\n");
  for (const auto& row : report.rows)
    fmt::print(out, "| {} | {} | {} |\n", row.label, row.topic, describe_result(row.result));
  if (!report.notes.empty()) {
    fmt::print(out, "\n## Notes\n\n");
    for (const auto& n : report.notes) fmt::print(out, "- {}\n", n);
  }
}

void write_joined_csv(std::ostream& out, const EvalReport& report) {
  out << "topic,country,empirical,model\n";
  for (const auto& j : report.joined)
    csv::write_row(out, {j.topic, j.country, fmt::format("{:.17g}", j.empirical),
                         fmt::format("{:.17g}", j.model)});
}

void write_report_files(const std::filesystem::path& dir, const std::string& stem,
                        const EvalReport& report) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::ostringstream csv_out, md_out, joined_out;
  write_report_csv(csv_out, report);
  write_report_markdown(md_out, report);
  write_joined_csv(joined_out, report);
  write_file(dir / (stem + ".csv"), csv_out.str());
  write_file(dir / (stem + ".md"), md_out.str());
  write_file(dir / (stem + ".joined.csv"), joined_out.str());
  write_file(dir / (stem + ".provenance.json"), provenance_json(report.provenance));
}

}  // namespace moralprobe
