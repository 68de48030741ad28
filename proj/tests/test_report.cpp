// Report writers. Output must be byte-stable, so the CSV and SVG forms are
// frozen as golden files; regenerate them deliberately with
// tools/write_golden if the format changes, and review the diff.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <string>
#include <vector>

#include "json.hpp"

#include "attrbench/report.hpp"
#include "attrbench/serialize.hpp"

#include "report_fixture.hpp"

using namespace atb;
using atb::testfix::fixture;
using atb::testfix::make_report;
using atb::testfix::stability_fixture;

namespace {

std::string golden(const std::string& name) {
  return read_file_text(std::string(ATB_GOLDEN_DIR) + "/" + name);
}

}  // namespace

TEST_CASE("protocol reports survive a json round trip") {
  std::vector<ProtocolReport> in = fixture();
  std::string text = reports_to_json(in);
  CHECK(text.back() == '\n');

  std::vector<ProtocolReport> out = reports_from_json(text);
  REQUIRE(out.size() == in.size());
  for (size_t i = 0; i < in.size(); ++i) {
    CHECK(out[i].protocol == in[i].protocol);
    CHECK(out[i].model_tag == in[i].model_tag);
    CHECK(out[i].method == in[i].method);
    CHECK(out[i].aggregate == in[i].aggregate);
    CHECK(out[i].degenerate_count == in[i].degenerate_count);
    REQUIRE(out[i].records.size() == 1);
    CHECK(out[i].records[0].image_id == in[i].records[0].image_id);
    CHECK(out[i].records[0].r == in[i].records[0].r);
    CHECK(out[i].records[0].patch_attr == in[i].records[0].patch_attr);
    CHECK(out[i].records[0].patch_drop == in[i].records[0].patch_drop);
  }

  // second serialization is byte-identical
  CHECK(reports_to_json(out) == text);
  // fingerprints survive as parsed json
  auto doc = nlohmann::json::parse(text);
  CHECK(doc["schema_version"] == 1);
  CHECK(doc["reports"][0]["fingerprint"]["method"] == "occlusion");

  CHECK_THROWS_AS(reports_from_json("not json"), FormatError);
  CHECK_THROWS_AS(reports_from_json("{\"a\":1}"), FormatError);  // not an array
}

TEST_CASE("ranking csv matches the golden file") {
  std::string csv = ranking_csv(fixture());
  CHECK(csv == golden("ranking.csv"));

  // ordering: model tags in first-seen order, scores descending inside a tag
  size_t ft_occ = csv.find("model_ft,occlusion");
  size_t ft_cam = csv.find("model_ft,grad_cam");
  size_t ft_rnd = csv.find("model_ft,random");
  size_t ft_grad = csv.find("model_ft,gradient");
  size_t base_occ = csv.find("model_base,occlusion");
  REQUIRE(ft_occ != std::string::npos);
  CHECK(ft_occ < ft_cam);
  CHECK(ft_cam < ft_rnd);
  CHECK(ft_rnd < ft_grad);  // negative score sorts last
  CHECK(ft_grad < base_occ);

  CHECK(ranking_csv({}) == "protocol,model,method,score,degenerate\n");
}

TEST_CASE("compare csv matches the golden file") {
  std::string csv = compare_csv(fixture());
  CHECK(csv == golden("compare.csv"));

  // header: protocols in first-seen order; missing cells empty
  CHECK(csv.substr(0, csv.find('\n')) == "method,idsds,sds");
  CHECK(csv.find("gradient,-0.062,\n") != std::string::npos);
}

TEST_CASE("ranking svg matches the golden file and colors by method class") {
  std::string svg = plot_ranking_svg(fixture());
  CHECK(svg == golden("ranking.svg"));

  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("#c44e52") != std::string::npos);  // perturbation: occlusion
  CHECK(svg.find("#55a868") != std::string::npos);  // cam: grad_cam
  CHECK(svg.find("#4c72b0") != std::string::npos);  // raw: gradient
  CHECK(svg.find("#8c8c8c") != std::string::npos);  // other: random
  CHECK(svg.find("-0.062") != std::string::npos);   // negative score labeled

  // single report still renders, and equal scores get equal bar geometry
  std::string one = plot_ranking_svg({make_report("idsds", "m", "gradient", 0.5)});
  CHECK(one.rfind("<svg", 0) == 0);
  CHECK(one.find("gradient") != std::string::npos);

  std::vector<ProtocolReport> equal = {make_report("idsds", "m", "ixg", 0.5),
                                       make_report("idsds", "m", "gradient", 0.5)};
  std::string two = plot_ranking_svg(equal);
  size_t first = two.find("width=\"");
  REQUIRE(first != std::string::npos);
  // collect all bar widths: rect elements after the axis line share the value
  std::vector<std::string> widths;
  for (size_t pos = two.find("<rect"); pos != std::string::npos; pos = two.find("<rect", pos + 1)) {
    size_t w = two.find("width=\"", pos);
    size_t end = two.find('"', w + 7);
    widths.push_back(two.substr(w + 7, end - w - 7));
  }
  REQUIRE(widths.size() >= 2);
  CHECK(widths[widths.size() - 1] == widths[widths.size() - 2]);
}

TEST_CASE("stability serialization matches the golden files") {
  StabilityReport s = stability_fixture();
  CHECK(stability_to_json(s) == golden("stability.json"));
  CHECK(stability_csv(s) == golden("stability.csv"));

  // csv lists only the upper triangle: one pair for the seed axis, none for
  // the single-valued grid axis
  std::string csv = stability_csv(s);
  CHECK(csv.find("seed,seed=3,seed=4,1.000") != std::string::npos);
  CHECK(csv.find("grid,P=16") == std::string::npos);

  auto doc = nlohmann::json::parse(stability_to_json(s));
  CHECK(doc["roster"].size() == 2);
  CHECK(doc["axes"][0]["axis"] == "seed");
  CHECK(doc["axes"][0]["scores"][1][1] == 0.7);
}
