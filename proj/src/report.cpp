#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "intent/checkpoint.hpp"
#include "intent/errors.hpp"
#include "intent/harness.hpp"

namespace intent {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PathError("cannot write " + path.string());
  out << text;
  if (!out) throw PathError("write failed: " + path.string());
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string file_safe(std::string s) {
  for (char& ch : s) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
  }
  return s;
}

}  // namespace

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
  // Keyed by (source, target), preserving method order of first appearance.
  std::vector<SummaryRow> out;
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> values;
  for (const ResultRow& r : rows) {
    auto key = std::make_tuple(r.method, r.source, r.target);
    auto [it, inserted] = values.try_emplace(key);
    if (inserted) out.push_back({r.method, r.source, r.target, 0.0, 0.0, 0});
    it->second.push_back(r.dice);
  }
  for (SummaryRow& s : out) {
    const auto& v = values.at(std::make_tuple(s.method, s.source, s.target));
    double mean = 0.0;
    for (double d : v) mean += d;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double d : v) var += (d - mean) * (d - mean);
    s.mean = mean;
    s.std = std::sqrt(var / static_cast<double>(v.size()));
    s.trials = static_cast<int>(v.size());
  }
  return out;
}

std::string results_csv(const std::vector<ResultRow>& rows) {
  std::string out = "method,source,target,trial,dice\r\n";
  for (const ResultRow& r : rows) {
    out += r.method + "," + r.source + "," + r.target + "," + std::to_string(r.trial) + "," + num(r.dice) + "\r\n";
  }
  return out;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out = "method,source,target,mean_dice,std_dice,trials\r\n";
  for (const SummaryRow& r : rows) {
    out += r.method + "," + r.source + "," + r.target + "," + num(r.mean) + "," + num(r.std) + "," +
           std::to_string(r.trials) + "\r\n";
  }
  return out;
}

std::string c_sensitivity_csv(const std::vector<CSensitivityRow>& rows) {
  std::string out = "c,source,target,trial,dice,delta_dice\r\n";
  for (const CSensitivityRow& r : rows) {
    out += num(r.c) + "," + r.source + "," + r.target + "," + std::to_string(r.trial) + "," + num(r.dice) + "," +
           num(r.delta) + "\r\n";
  }
  return out;
}

std::string trials_csv(const std::vector<TrialInfo>& trials) {
  std::string out = "trial,init_seed,split_seed,source_val_dice,best_epoch,epochs_run\r\n";
  for (const TrialInfo& t : trials) {
    out += std::to_string(t.trial) + "," + std::to_string(t.init_seed) + "," + std::to_string(t.split_seed) + "," +
           num(t.source_val_dice) + "," + std::to_string(t.best_epoch) + "," + std::to_string(t.epochs_run) + "\r\n";
  }
  return out;
}

std::string bar_chart_svg(const std::string& title, const std::vector<SummaryRow>& rows) {
  const int bar_h = 18, gap = 6, label_w = 130, plot_w = 360, top = 40;
  const int height = top + static_cast<int>(rows.size()) * (bar_h + gap) + 30;
  const int width = label_w + plot_w + 80;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"10\" y=\"20\" font-size=\"14\">" << xml_escape(title) << "</text>\n";
  int y = top;
  for (const SummaryRow& r : rows) {
    const double w = std::clamp(r.mean, 0.0, 1.0) * plot_w;
    const double e = std::clamp(r.std, 0.0, 1.0) * plot_w;
    const double mid = y + bar_h / 2.0;
    s << "<text x=\"" << label_w - 6 << "\" y=\"" << mid + 4 << "\" text-anchor=\"end\">" << xml_escape(r.method)
      << "</text>\n";
    s << "<rect x=\"" << label_w << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << bar_h
      << "\" fill=\"#4a7ebb\"/>\n";
    if (e > 0) {
      s << "<line x1=\"" << label_w + w - e << "\" x2=\"" << label_w + w + e << "\" y1=\"" << mid << "\" y2=\""
        << mid << "\" stroke=\"black\"/>\n";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", r.mean);
    s << "<text x=\"" << label_w + w + e + 4 << "\" y=\"" << mid + 4 << "\">" << buf << "</text>\n";
    y += bar_h + gap;
  }
  s << "<line x1=\"" << label_w << "\" x2=\"" << label_w + plot_w << "\" y1=\"" << y + 4 << "\" y2=\"" << y + 4
    << "\" stroke=\"#888\"/>\n";
  s << "<text x=\"" << label_w << "\" y=\"" << y + 18 << "\">0</text>\n";
  s << "<text x=\"" << label_w + plot_w << "\" y=\"" << y + 18 << "\" text-anchor=\"end\">1 (Dice)</text>\n";
  s << "</svg>\n";
  return s.str();
}

void emit_report(const SweepResult& result, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "plots", ec);
  if (ec) throw PathError("cannot create " + out_dir.string() + ": " + ec.message());

  const auto summary = summarize(result.rows);
  write_text(out_dir / "results.csv", results_csv(result.rows));
  write_text(out_dir / "summary.csv", summary_csv(summary));
  write_text(out_dir / "trials.csv", trials_csv(result.trials));
  if (!result.c_rows.empty()) write_text(out_dir / "c_sensitivity.csv", c_sensitivity_csv(result.c_rows));

  std::map<std::pair<std::string, std::string>, std::vector<SummaryRow>> pairs;
  std::vector<std::pair<std::string, std::string>> order;
  for (const SummaryRow& r : summary) {
    auto key = std::make_pair(r.source, r.target);
    if (!pairs.count(key)) order.push_back(key);
    pairs[key].push_back(r);
  }
  for (const auto& key : order) {
    const std::string title = key.first + " -> " + key.second;
    write_text(out_dir / "plots" / ("dice_" + file_safe(key.first) + "_to_" + file_safe(key.second) + ".svg"),
               bar_chart_svg(title, pairs[key]));
  }

  for (std::size_t t = 0; t < result.trials.size(); ++t) {
    const auto dir = out_dir / ("trial_" + std::to_string(result.trials[t].trial));
    std::filesystem::create_directories(dir, ec);
    if (ec) throw PathError("cannot create " + dir.string() + ": " + ec.message());
    if (t < result.histories.size()) write_history_csv(dir / "history.csv", result.histories[t]);
    if (t < result.models.size()) save_checkpoint(result.models[t], dir / "checkpoint");
  }
}

}  // namespace intent
