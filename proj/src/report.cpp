#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "binshield/errors.hpp"
#include "binshield/evaluate.hpp"
#include "binshield/serialize.hpp"

namespace binshield {

namespace {

std::string sanitize(const std::string& s) {
  std::string out = s;
  std::replace(out.begin(), out.end(), ',', ';');
  std::replace(out.begin(), out.end(), '\n', ' ');
  return out;
}

std::string percent(Real v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", v * 100.0);
  return buf;
}

std::vector<std::string> first_seen(const std::vector<EvaluationRecord>& records,
                                    std::string EvaluationRecord::*field) {
  std::vector<std::string> out;
  for (const auto& r : records)
    if (std::find(out.begin(), out.end(), r.*field) == out.end()) out.push_back(r.*field);
  return out;
}

const EvaluationRecord* find_record(const std::vector<EvaluationRecord>& records,
                                    const std::string& family, const std::string& defense,
                                    const std::string& attack, const std::string& threat) {
  for (const auto& r : records)
    if (r.family == family && r.defense == defense && r.attack == attack && r.threat == threat)
      return &r;
  return nullptr;
}

std::string clean_accuracy_table(const std::vector<EvaluationRecord>& records) {
  const auto families = first_seen(records, &EvaluationRecord::family);
  const auto defenses = first_seen(records, &EvaluationRecord::defense);
  std::string md = "## Clean accuracy\n\n| Model |";
  for (const auto& d : defenses) md += " " + d + " |";
  md += "\n|---|";
  for (size_t i = 0; i < defenses.size(); ++i) md += "---|";
  md += "\n";
  for (const auto& family : families) {
    md += "| " + family + " |";
    for (const auto& defense : defenses) {
      // deployment (black-box) pipelines carry the headline clean accuracy
      const EvaluationRecord* pick = nullptr;
      for (const auto& r : records) {
        if (r.family != family || r.defense != defense || r.status != "ok") continue;
        if (!pick || (pick->threat != "black" && r.threat == "black")) pick = &r;
      }
      md += pick ? " " + percent(pick->acc_clean) + " |" : " — |";
    }
    md += "\n";
  }
  return md + "\n";
}

std::string threat_table(const std::vector<EvaluationRecord>& records,
                         const std::string& threat, const std::string& title) {
  std::vector<EvaluationRecord> in_threat;
  for (const auto& r : records)
    if (r.threat == threat) in_threat.push_back(r);
  if (in_threat.empty()) return "";

  const auto families = first_seen(in_threat, &EvaluationRecord::family);
  const auto defenses = first_seen(in_threat, &EvaluationRecord::defense);
  const auto attacks = first_seen(in_threat, &EvaluationRecord::attack);

  std::string md = "## " + title + "\n\n| Model | Attack |";
  for (const auto& d : defenses) md += " " + d + " Adv_acc | " + d + " RM |";
  md += "\n|---|---|";
  for (size_t i = 0; i < defenses.size(); ++i) md += "---|---|";
  md += "\n";
  for (const auto& family : families) {
    for (const auto& attack : attacks) {
      bool any = false;
      std::string row = "| " + family + " | " + attack + " |";
      for (const auto& defense : defenses) {
        const EvaluationRecord* r = find_record(in_threat, family, defense, attack, threat);
        if (r && r->status == "ok") {
          row += " " + percent(r->acc_adv) + " | " + percent(r->rm) + " |";
          any = true;
        } else {
          row += " — | — |";
        }
      }
      if (any) md += row + "\n";
    }
  }
  return md + "\n";
}

std::string svg_plot(const std::vector<EvaluationRecord>& records) {
  // mean black-box RM per (family, defense) as grouped bars
  const auto families = first_seen(records, &EvaluationRecord::family);
  const auto defenses = first_seen(records, &EvaluationRecord::defense);
  std::map<std::pair<std::string, std::string>, std::pair<Real, int>> sums;
  for (const auto& r : records)
    if (r.threat == "black" && r.status == "ok") {
      auto& slot = sums[{r.family, r.defense}];
      slot.first += r.rm;
      slot.second += 1;
    }

  const int bar_w = 18, group_gap = 30, left = 60, bottom = 260, top = 20;
  const int group_w = int(defenses.size()) * bar_w + group_gap;
  const int width = left + group_w * int(families.size()) + 40;
  Real max_rm = 0.0;
  for (const auto& [key, val] : sums)
    if (val.second) max_rm = std::max(max_rm, val.first / val.second);
  if (max_rm <= 0.0) max_rm = 1.0;

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='300'>\n";
  svg << "<text x='10' y='14' font-size='12'>mean black-box RM per defense</text>\n";
  svg << "<line x1='" << left << "' y1='" << bottom << "' x2='" << width - 20 << "' y2='"
      << bottom << "' stroke='black'/>\n";
  const char* colors[] = {"#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee",
                          "#aa3377", "#bbbbbb"};
  for (size_t fi = 0; fi < families.size(); ++fi) {
    const int gx = left + int(fi) * group_w;
    svg << "<text x='" << gx << "' y='" << bottom + 16 << "' font-size='11'>" << families[fi]
        << "</text>\n";
    for (size_t di = 0; di < defenses.size(); ++di) {
      auto it = sums.find({families[fi], defenses[di]});
      if (it == sums.end() || it->second.second == 0) continue;
      const Real rm = it->second.first / it->second.second;
      const int h = int((bottom - top) * (rm / max_rm));
      svg << "<rect x='" << gx + int(di) * bar_w << "' y='" << bottom - h << "' width='"
          << bar_w - 2 << "' height='" << h << "' fill='" << colors[di % 7] << "'/>\n";
    }
  }
  for (size_t di = 0; di < defenses.size(); ++di)
    svg << "<rect x='" << width - 18 << "' y='" << top + int(di) * 16 << "' width='10' height='10' fill='"
        << colors[di % 7] << "'/><text x='" << width - 18 + 14 << "' y='" << top + int(di) * 16 + 9
        << "' font-size='10'>" << defenses[di] << "</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace

std::string records_to_csv(const std::vector<EvaluationRecord>& records, bool zero_timing) {
  std::string csv =
      "family,defense,attack,threat,substitute,acc_clean,acc_adv,rm,seed,wall_ms,status,note\n";
  for (const auto& r : records) {
    csv += r.family + "," + r.defense + "," + r.attack + "," + r.threat + "," + r.substitute +
           "," + format_real(r.acc_clean) + "," + format_real(r.acc_adv) + "," +
           format_real(r.rm) + "," + std::to_string(r.seed) + "," +
           std::to_string(zero_timing ? 0 : r.wall_ms) + "," + r.status + "," +
           sanitize(r.note) + "\n";
  }
  return csv;
}

std::vector<EvaluationRecord> records_from_csv(const std::string& csv_text) {
  std::istringstream stream(csv_text);
  std::string line;
  if (!std::getline(stream, line)) throw IoError("empty records csv");
  std::vector<EvaluationRecord> records;
  while (std::getline(stream, line)) {
    if (line.empty()) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    while (cells.size() < 12) cells.emplace_back();
    EvaluationRecord r;
    r.family = cells[0];
    r.defense = cells[1];
    r.attack = cells[2];
    r.threat = cells[3];
    r.substitute = cells[4];
    r.acc_clean = parse_real(cells[5]);
    r.acc_adv = parse_real(cells[6]);
    r.rm = parse_real(cells[7]);
    r.seed = std::stoull(cells[8]);
    r.wall_ms = std::stoll(cells[9]);
    r.status = cells[10];
    r.note = cells[11];
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<std::string> render_report(const std::vector<EvaluationRecord>& records,
                                       const std::vector<ReportFormat>& formats,
                                       const std::string& out_dir, bool zero_timing) {
  if (records.empty()) throw ConfigInvalid("render_report needs at least one record");
  std::vector<std::string> written;
  for (ReportFormat format : formats) {
    switch (format) {
      case ReportFormat::Csv: {
        const std::string path = out_dir + "/report.csv";
        write_text_file(path, records_to_csv(records, zero_timing));
        written.push_back(path);
        break;
      }
      case ReportFormat::Markdown: {
        std::string md = "# Robustness report\n\n";
        md += clean_accuracy_table(records);
        md += threat_table(records, "black", "Black-box attacks");
        md += threat_table(records, "white", "White-box attacks (straight-through)");
        md += threat_table(records, "white-transfer", "White-box attacks (transfer)");
        const std::string path = out_dir + "/report.md";
        write_text_file(path, md);
        written.push_back(path);
        break;
      }
      case ReportFormat::SvgPlot: {
        const std::string path = out_dir + "/rm_plot.svg";
        write_text_file(path, svg_plot(records));
        written.push_back(path);
        break;
      }
    }
  }
  return written;
}

}  // namespace binshield
