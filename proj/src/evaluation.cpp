#include "coactseg/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace coact {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string opt(const std::optional<double>& v, const char* f = "%.6f") { return v ? fmt(f, *v) : "NA"; }

MetricRow score(const std::string& name, SampleKind kind, const char* head, const LabelVolume& pred,
                const LabelVolume& gt, const MetricOptions& opts) {
  MetricRow r;
  r.case_name = name;
  r.kind = kind;
  r.head = head;
  r.dice = dice(pred, gt);
  r.jaccard = jaccard(pred, gt);
  r.hd95 = hd95(pred, gt, opts.surface);
  r.asd = asd(pred, gt, opts.surface);
  r.f1 = lesion_f1(pred, gt, opts.f1);
  return r;
}

struct OptMean {
  double sum = 0;
  std::size_t n = 0;
  void add(const std::optional<double>& v) {
    if (v) sum += *v, ++n;
  }
  std::optional<double> get() const { return n ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt; }
};

}  // namespace

std::optional<MetricSummary> MetricsReport::summary(SampleKind kind, const std::vector<std::string>& heads) const {
  MetricSummary s;
  OptMean h, a, f;
  for (const auto& r : rows) {
    if (r.kind != kind || std::find(heads.begin(), heads.end(), r.head) == heads.end()) continue;
    ++s.cases;
    s.dice += r.dice;
    s.jaccard += r.jaccard;
    h.add(r.hd95);
    a.add(r.asd);
    f.add(r.f1);
  }
  if (s.cases == 0) return std::nullopt;
  s.dice /= static_cast<double>(s.cases);
  s.jaccard /= static_cast<double>(s.cases);
  s.hd95 = h.get();
  s.asd = a.get();
  s.f1 = f.get();
  return s;
}

std::optional<MetricSummary> MetricsReport::new_lesions() const {
  return summary(SampleKind::TwoTimePoint, {"nl"});
}

std::optional<MetricSummary> MetricsReport::all_lesions() const {
  return summary(SampleKind::SingleTimePoint, {"al1", "al2"});
}

std::optional<double> MetricsReport::mean_head_gap(SampleKind kind) const {
  OptMean m;
  for (const auto& c : consistency)
    if (c.kind == kind) m.add(c.mean_abs_head_gap);
  return m.get();
}

void MetricsReport::append(const MetricsReport& other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
  consistency.insert(consistency.end(), other.consistency.begin(), other.consistency.end());
}

void MetricsReport::write_csv(std::ostream& os) const {
  os << "case,kind,head,dice,jaccard,hd95,asd,f1\n";
  for (const auto& r : rows)
    os << r.case_name << ',' << to_string(r.kind) << ',' << r.head << ',' << fmt("%.6f", r.dice) << ','
       << fmt("%.6f", r.jaccard) << ',' << opt(r.hd95) << ',' << opt(r.asd) << ',' << opt(r.f1) << '\n';
}

void MetricsReport::write_head_gap_csv(std::ostream& os) const {
  os << "case,kind,mean_abs_head_gap\n";
  for (const auto& c : consistency)
    os << c.case_name << ',' << to_string(c.kind) << ',' << fmt("%.17g", c.mean_abs_head_gap) << '\n';
}

namespace {

std::vector<std::vector<std::string>> csv_records(std::istream& is, const std::string& header) {
  std::vector<std::vector<std::string>> out;
  std::string line;
  bool seen_header = false;
  for (std::size_t n = 1; std::getline(is, line); ++n) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!seen_header) {
      if (line != header) throw std::runtime_error("expected CSV header '" + header + "', found '" + line + "'");
      seen_header = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    const auto width = static_cast<std::size_t>(std::count(header.begin(), header.end(), ',') + 1);
    if (cells.size() != width)
      throw std::runtime_error("CSV line " + std::to_string(n) + " has " + std::to_string(cells.size()) +
                               " fields, expected " + std::to_string(width));
    out.push_back(std::move(cells));
  }
  if (!seen_header) throw std::runtime_error("missing CSV header '" + header + "'");
  return out;
}

double parse_cell(const std::string& s) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw std::runtime_error("'" + s + "' is not a number");
  return v;
}

std::optional<double> parse_opt_cell(const std::string& s) {
  if (s == "NA") return std::nullopt;
  return parse_cell(s);
}

}  // namespace

MetricsReport MetricsReport::read_csv(std::istream& rows, std::istream* head_gaps) {
  MetricsReport r;
  for (auto& c : csv_records(rows, "case,kind,head,dice,jaccard,hd95,asd,f1")) {
    r.rows.push_back({c[0], parse_sample_kind(c[1]), c[2], parse_cell(c[3]), parse_cell(c[4]),
                      parse_opt_cell(c[5]), parse_opt_cell(c[6]), parse_opt_cell(c[7])});
  }
  if (head_gaps)
    for (auto& c : csv_records(*head_gaps, "case,kind,mean_abs_head_gap"))
      r.consistency.push_back({c[0], parse_sample_kind(c[1]), parse_cell(c[2])});
  return r;
}

std::string MetricsReport::markdown() const {
  std::ostringstream os;
  os << "| Target | Cases | Dice(%) | Jaccard(%) | 95HD | ASD | F1(%) |\n";
  os << "|---|---|---|---|---|---|---|\n";
  auto line = [&](const char* label, const std::optional<MetricSummary>& s) {
    os << "| " << label << " | ";
    if (!s) {
      os << "0 | N/A | N/A | N/A | N/A | N/A |\n";
      return;
    }
    auto pct = [](const std::optional<double>& v) { return v ? fmt("%.2f", 100.0 * *v) : std::string("N/A"); };
    auto dist = [](const std::optional<double>& v) { return v ? fmt("%.2f", *v) : std::string("N/A"); };
    os << s->cases << " | " << fmt("%.2f", 100.0 * s->dice) << " | " << fmt("%.2f", 100.0 * s->jaccard) << " | "
       << dist(s->hd95) << " | " << dist(s->asd) << " | " << pct(s->f1) << " |\n";
  };
  line("New lesions (two time-point)", new_lesions());
  line("All lesions (single time-point)", all_lesions());
  line("All lesions, baseline head (two time-point)", summary(SampleKind::TwoTimePoint, {"al1"}));
  line("All lesions, follow-up head (two time-point)", summary(SampleKind::TwoTimePoint, {"al2"}));
  os << "\n| Head gap mean abs(p_al_1 - p_al_2) | Value |\n|---|---|\n";
  for (auto kind : {SampleKind::SingleTimePoint, SampleKind::TwoTimePoint}) {
    const auto g = mean_head_gap(kind);
    os << "| " << to_string(kind) << " | " << (g ? fmt("%.6f", *g) : "N/A") << " |\n";
  }
  return os.str();
}

MetricsReport evaluate_case(const std::string& name, const HeadMaps& maps, const Sample& sample,
                            const std::optional<HiddenTruth>& hidden, const MetricOptions& opts) {
  if (maps.m_nl.dims() != sample.dims()) throw std::invalid_argument("evaluate_case: prediction dims differ");
  MetricsReport r;
  if (sample.kind == SampleKind::SingleTimePoint) {
    r.rows.push_back(score(name, sample.kind, "al1", maps.m_al_1, sample.label, opts));
    r.rows.push_back(score(name, sample.kind, "al2", maps.m_al_2, sample.label, opts));
  } else {
    r.rows.push_back(score(name, sample.kind, "nl", maps.m_nl, sample.label, opts));
    if (hidden) {
      r.rows.push_back(score(name, sample.kind, "al1", maps.m_al_1, hidden->all_lesions_baseline, opts));
      r.rows.push_back(score(name, sample.kind, "al2", maps.m_al_2, hidden->all_lesions_follow_up, opts));
    }
  }
  const auto brain = sample.brain_mask.data() != 0;
  const double n = static_cast<double>(brain.count());
  const double gap = brain.select((maps.p_al_1.data() - maps.p_al_2.data()).abs(), 0.0).sum();
  r.consistency.push_back({name, sample.kind, n > 0 ? gap / n : 0.0});
  return r;
}

MetricsReport evaluate_dataset(const Manifest& manifest, const SegNet& net, const InferenceConfig& infer,
                               const MetricOptions& opts, Split split) {
  MetricsReport report;
  for (const auto* rec : manifest.select(split)) {
    const Sample s = manifest.load_sample(*rec);
    const HeadMaps maps = sliding_window_predict(net, s, infer);
    const auto hidden =
        rec->kind == SampleKind::TwoTimePoint ? manifest.load_hidden_truth(*rec) : std::optional<HiddenTruth>{};
    report.append(evaluate_case(rec->name, maps, s, hidden, opts));
  }
  return report;
}

std::string ablation_markdown(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "| L_rr | Two time-point data | Single time-point data | New Dice(%) | New 95HD(voxel) | New F1(%) "
        "| All Dice(%) | All 95HD(voxel) | All F1(%) |\n";
  os << "|---|---|---|---|---|---|---|---|---|\n";
  auto cells = [](const std::optional<MetricSummary>& s) -> std::string {
    if (!s) return "N/A | N/A | N/A";
    return fmt("%.2f", 100.0 * s->dice) + " | " + (s->hd95 ? fmt("%.2f", *s->hd95) : "N/A") + " | " +
           (s->f1 ? fmt("%.2f", 100.0 * *s->f1) : "N/A");
  };
  for (const auto& r : rows) {
    const char* mark = r.staged ? "yes*" : "yes";
    os << "| " << (r.with_rr ? "w/" : "w/o") << " | " << (r.two_data ? mark : "") << " | "
       << (r.single_data ? mark : "") << " | " << cells(r.new_lesions) << " | " << cells(r.all_lesions) << " |\n";
  }
  return os.str();
}

}  // namespace coact
