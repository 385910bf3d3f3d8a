#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "moralprobe/analysis.hpp"

namespace moralprobe {

/// Long-format CSV `kind,label,topic,r_or_u,p,n,direction,stars`.
/// Rank tests report U and the corrected p. Intervals put the mean r in
/// r_or_u, the replicate count in n and `ci:<lower>:<upper>` in direction.
/// Flagged rows leave r_or_u and p empty and set direction to `flagged`.
void write_report_csv(std::ostream& out, const EvalReport& report);

void write_report_markdown(std::ostream& out, const EvalReport& report);

/// CSV `topic,country,empirical,model`.
void write_joined_csv(std::ostream& out, const EvalReport& report);

/// Writes `<stem>.csv`, `<stem>.md`, `<stem>.joined.csv` and
/// `<stem>.provenance.json` under `dir`.
void write_report_files(const std::filesystem::path& dir, const std::string& stem,
                        const EvalReport& report);

std::string provenance_json(const Provenance& p);

/// One-line human summary such as `r = 0.411***, p = 1e-40, n = 1028`.
std::string describe_result(const RowResult& result);

}  // namespace moralprobe
