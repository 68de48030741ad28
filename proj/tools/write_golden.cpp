// Regenerates the golden report files under tests/golden from the shared
// fixture. Run with the output directory as the only argument, then review
// the diff before committing.
#include <cstdio>
#include <string>

#include "attrbench/report.hpp"
#include "attrbench/serialize.hpp"

#include "report_fixture.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: write_golden <output-dir>\n");
    return 2;
  }
  std::string dir = argv[1];
  auto reports = atb::testfix::fixture();
  auto stability = atb::testfix::stability_fixture();

  atb::write_file_text(dir + "/ranking.csv", atb::ranking_csv(reports));
  atb::write_file_text(dir + "/compare.csv", atb::compare_csv(reports));
  atb::write_file_text(dir + "/ranking.svg", atb::plot_ranking_svg(reports));
  atb::write_file_text(dir + "/stability.json", atb::stability_to_json(stability));
  atb::write_file_text(dir + "/stability.csv", atb::stability_csv(stability));
  std::printf("wrote 5 golden files to %s\n", dir.c_str());
  return 0;
}
