#ifndef ATTRBENCH_REPORT_HPP
#define ATTRBENCH_REPORT_HPP

#include <string>
#include <vector>

#include "attrbench/protocols.hpp"

namespace atb {

// Everything here emits byte-stable output: keys are sorted, floats go
// through fixed formats, and no timestamps appear. Timestamps belong in the
// run manifest only.

std::string reports_to_json(const std::vector<ProtocolReport>& reports);
std::vector<ProtocolReport> reports_from_json(const std::string& text);

// one row per report, sorted by model tag (first-seen order), then score
// descending, then method id; scores rendered %.3f
std::string ranking_csv(const std::vector<ProtocolReport>& reports);

// protocol-comparison table: row per method (first-seen order), one %.3f
// column per protocol; missing cells stay empty
std::string compare_csv(const std::vector<ProtocolReport>& reports);

std::string stability_to_json(const StabilityReport& report);
// long-form table: axis,value_a,value_b,rank_corr
std::string stability_csv(const StabilityReport& report);

// horizontal bar chart of aggregate scores, one bar per report, colored by
// method class; axis spans [min(0, scores), max(0, scores)]
std::string plot_ranking_svg(const std::vector<ProtocolReport>& reports);

}  // namespace atb

#endif
