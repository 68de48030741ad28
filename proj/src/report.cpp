#include "attrbench/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "json.hpp"

#include "attrbench/common.hpp"

namespace atb {

namespace {

using json = nlohmann::json;

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

std::string score3(double v) { return fmt("%.3f", v); }

json report_obj(const ProtocolReport& r) {
  json j;
  j["protocol"] = r.protocol;
  j["method"] = r.method;
  j["model_tag"] = r.model_tag;
  j["aggregate"] = r.aggregate;
  j["degenerate_count"] = r.degenerate_count;
  j["fingerprint"] = r.fingerprint_json.empty() ? json::object() : json::parse(r.fingerprint_json);
  json recs = json::array();
  for (const auto& rec : r.records) {
    json o;
    o["image_id"] = rec.image_id;
    o["r"] = rec.r;
    o["degenerate"] = rec.degenerate;
    if (!rec.patch_attr.empty()) o["patch_attr"] = rec.patch_attr;
    if (!rec.patch_drop.empty()) o["patch_drop"] = rec.patch_drop;
    recs.push_back(std::move(o));
  }
  j["records"] = std::move(recs);
  return j;
}

// distinct values in order of first appearance
template <typename Get>
std::vector<std::string> first_seen(const std::vector<ProtocolReport>& reports, const Get& get) {
  std::vector<std::string> out;
  for (const auto& r : reports)
    if (std::find(out.begin(), out.end(), get(r)) == out.end()) out.push_back(get(r));
  return out;
}

}  // namespace

std::string reports_to_json(const std::vector<ProtocolReport>& reports) {
  json j;
  j["schema_version"] = 1;
  json arr = json::array();
  for (const auto& r : reports) arr.push_back(report_obj(r));
  j["reports"] = std::move(arr);
  return j.dump(2) + "\n";
}

std::vector<ProtocolReport> reports_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("report json: ") + e.what());
  }
  if (!j.contains("reports") || !j["reports"].is_array())
    throw FormatError("report json: missing 'reports' array");
  std::vector<ProtocolReport> out;
  for (const auto& o : j["reports"]) {
    ProtocolReport r;
    r.protocol = o.value("protocol", "");
    r.method = o.value("method", "");
    r.model_tag = o.value("model_tag", "");
    r.aggregate = o.value("aggregate", 0.0);
    r.degenerate_count = o.value("degenerate_count", 0);
    if (o.contains("fingerprint")) r.fingerprint_json = o["fingerprint"].dump();
    for (const auto& ro : o.value("records", json::array())) {
      ImageRecord rec;
      rec.image_id = ro.value("image_id", 0);
      rec.r = ro.value("r", 0.0);
      rec.degenerate = ro.value("degenerate", false);
      if (ro.contains("patch_attr")) rec.patch_attr = ro["patch_attr"].get<std::vector<double>>();
      if (ro.contains("patch_drop")) rec.patch_drop = ro["patch_drop"].get<std::vector<double>>();
      r.records.push_back(std::move(rec));
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string ranking_csv(const std::vector<ProtocolReport>& reports) {
  std::vector<std::string> tags = first_seen(reports, [](const ProtocolReport& r) { return r.model_tag; });
  std::vector<const ProtocolReport*> rows;
  for (const auto& r : reports) rows.push_back(&r);
  std::stable_sort(rows.begin(), rows.end(), [&](const ProtocolReport* a, const ProtocolReport* b) {
    size_t ta = std::find(tags.begin(), tags.end(), a->model_tag) - tags.begin();
    size_t tb = std::find(tags.begin(), tags.end(), b->model_tag) - tags.begin();
    if (ta != tb) return ta < tb;
    if (a->aggregate != b->aggregate) return a->aggregate > b->aggregate;
    return a->method < b->method;
  });
  std::string out = "protocol,model,method,score,degenerate\n";
  for (const ProtocolReport* r : rows) {
    out += r->protocol + "," + r->model_tag + "," + r->method + "," + score3(r->aggregate) + "," +
           std::to_string(r->degenerate_count) + "\n";
  }
  return out;
}

std::string compare_csv(const std::vector<ProtocolReport>& reports) {
  std::vector<std::string> protocols =
      first_seen(reports, [](const ProtocolReport& r) { return r.protocol; });
  std::vector<std::string> methods =
      first_seen(reports, [](const ProtocolReport& r) { return r.method; });
  std::map<std::pair<std::string, std::string>, double> cells;
  for (const auto& r : reports) cells[{r.protocol, r.method}] = r.aggregate;

  std::string out = "method";
  for (const auto& p : protocols) out += "," + p;
  out += "\n";
  for (const auto& m : methods) {
    out += m;
    for (const auto& p : protocols) {
      auto it = cells.find({p, m});
      out += ",";
      if (it != cells.end()) out += score3(it->second);
    }
    out += "\n";
  }
  return out;
}

std::string stability_to_json(const StabilityReport& report) {
  json j;
  j["schema_version"] = 1;
  j["roster"] = report.roster;
  json axes = json::array();
  for (const auto& axis : report.axes) {
    json a;
    a["axis"] = axis.axis;
    a["labels"] = axis.labels;
    a["scores"] = axis.scores;
    a["rank_corr"] = axis.rank_corr;
    axes.push_back(std::move(a));
  }
  j["axes"] = std::move(axes);
  return j.dump(2) + "\n";
}

std::string stability_csv(const StabilityReport& report) {
  std::string out = "axis,value_a,value_b,rank_corr\n";
  for (const auto& axis : report.axes) {
    for (size_t i = 0; i < axis.labels.size(); ++i)
      for (size_t j = i + 1; j < axis.labels.size(); ++j)
        out += axis.axis + "," + axis.labels[i] + "," + axis.labels[j] + "," +
               score3(axis.rank_corr[i][j]) + "\n";
  }
  return out;
}

std::string plot_ranking_svg(const std::vector<ProtocolReport>& reports) {
  if (reports.empty()) throw ConfigError("plot: no reports to draw");

  std::vector<const ProtocolReport*> rows;
  for (const auto& r : reports) rows.push_back(&r);
  std::stable_sort(rows.begin(), rows.end(), [](const ProtocolReport* a, const ProtocolReport* b) {
    if (a->aggregate != b->aggregate) return a->aggregate > b->aggregate;
    return a->method < b->method;
  });

  double lo = 0.0, hi = 0.0;
  for (const ProtocolReport* r : rows) {
    lo = std::min(lo, r->aggregate);
    hi = std::max(hi, r->aggregate);
  }
  if (hi == lo) hi = lo + 1.0;

  const double left = 170.0, right = 64.0, top = 44.0, bar_h = 18.0, gap = 8.0;
  const double width = 640.0;
  const double plot_w = width - left - right;
  const int n = static_cast<int>(rows.size());
  const double height = top + n * (bar_h + gap) + 40.0;
  auto xpos = [&](double v) { return left + (v - lo) / (hi - lo) * plot_w; };

  auto color_of = [](const std::string& method) -> std::string {
    std::string cls;
    try {
      cls = method_class(parse_method(method));
    } catch (const Error&) {
      cls = "other";  // synthetic labels like "oracle"
    }
    if (cls == "raw") return "#4c72b0";
    if (cls == "absolute") return "#dd8452";
    if (cls == "cam") return "#55a868";
    if (cls == "perturbation") return "#c44e52";
    if (cls == "intrinsic") return "#8172b3";
    return "#8c8c8c";
  };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt("%.0f", width) +
         "\" height=\"" + fmt("%.0f", height) + "\" viewBox=\"0 0 " + fmt("%.0f", width) + " " +
         fmt("%.0f", height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  svg += "<text x=\"" + fmt("%.1f", left) +
         "\" y=\"24\" font-family=\"monospace\" font-size=\"14\">" + rows[0]->protocol +
         " method ranking</text>\n";

  double axis_y = top + n * (bar_h + gap) + 8.0;
  for (int i = 0; i < n; ++i) {
    const ProtocolReport* r = rows[i];
    double y = top + i * (bar_h + gap);
    double x0 = std::min(xpos(0.0), xpos(r->aggregate));
    double w = std::max(0.5, std::abs(xpos(r->aggregate) - xpos(0.0)));
    svg += "<rect x=\"" + fmt("%.2f", x0) + "\" y=\"" + fmt("%.2f", y) + "\" width=\"" +
           fmt("%.2f", w) + "\" height=\"" + fmt("%.2f", bar_h) + "\" fill=\"" +
           color_of(r->method) + "\"/>\n";
    svg += "<text x=\"" + fmt("%.2f", left - 8.0) + "\" y=\"" + fmt("%.2f", y + bar_h - 4.0) +
           "\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"end\">" + r->method +
           "</text>\n";
    svg += "<text x=\"" + fmt("%.2f", xpos(std::max(0.0, r->aggregate)) + 6.0) + "\" y=\"" +
           fmt("%.2f", y + bar_h - 4.0) + "\" font-family=\"monospace\" font-size=\"12\">" +
           score3(r->aggregate) + "</text>\n";
  }

  svg += "<line x1=\"" + fmt("%.2f", left) + "\" y1=\"" + fmt("%.2f", axis_y) + "\" x2=\"" +
         fmt("%.2f", left + plot_w) + "\" y2=\"" + fmt("%.2f", axis_y) +
         "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
  svg += "<line x1=\"" + fmt("%.2f", xpos(0.0)) + "\" y1=\"" + fmt("%.2f", top - 4.0) +
         "\" x2=\"" + fmt("%.2f", xpos(0.0)) + "\" y2=\"" + fmt("%.2f", axis_y) +
         "\" stroke=\"#bbbbbb\" stroke-width=\"1\"/>\n";
  for (double tick : {lo, 0.0, hi}) {
    svg += "<text x=\"" + fmt("%.2f", xpos(tick)) + "\" y=\"" + fmt("%.2f", axis_y + 16.0) +
           "\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">" + score3(tick) +
           "</text>\n";
  }
  svg += "<text x=\"" + fmt("%.2f", left + plot_w / 2.0) + "\" y=\"" + fmt("%.2f", axis_y + 32.0) +
         "\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">score</text>\n";
  svg += "</svg>\n";
  return svg;
}

}  // namespace atb
