#pragma once

#include "coactseg/inference.hpp"
#include "coactseg/manifest.hpp"
#include "coactseg/metrics.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace coact {

struct MetricOptions {
  SurfaceDistanceOptions surface;
  LesionF1Options f1;
};

/// Which prediction a row scores: "al1", "al2" or "nl".
struct MetricRow {
  std::string case_name;
  SampleKind kind = SampleKind::SingleTimePoint;
  std::string head;
  double dice = 0, jaccard = 0;
  std::optional<double> hd95, asd, f1;
};

struct CaseConsistency {
  std::string case_name;
  SampleKind kind = SampleKind::SingleTimePoint;
  /// Mean |p_al_1 - p_al_2| over brain voxels.
  double mean_abs_head_gap = 0;
};

/// Means over the rows of one (kind, head) group; optional metrics average
/// the applicable rows only and stay empty when none applies.
struct MetricSummary {
  std::size_t cases = 0;
  double dice = 0, jaccard = 0;
  std::optional<double> hd95, asd, f1;
};

struct MetricsReport {
  std::vector<MetricRow> rows;
  std::vector<CaseConsistency> consistency;

  /// Rows whose kind matches and whose head is one of `heads`.
  std::optional<MetricSummary> summary(SampleKind kind, const std::vector<std::string>& heads) const;
  /// New lesions: "nl" on two time-point cases.
  std::optional<MetricSummary> new_lesions() const;
  /// All lesions: both all-lesion heads on single time-point cases.
  std::optional<MetricSummary> all_lesions() const;
  std::optional<double> mean_head_gap(SampleKind kind) const;

  void append(const MetricsReport& other);
  void write_csv(std::ostream& os) const;
  /// One `case,kind,mean_abs_head_gap` line per case.
  void write_head_gap_csv(std::ostream& os) const;
  std::string markdown() const;

  /// Parses the output of write_csv (and optionally write_head_gap_csv).
  /// Lines starting with '#' are skipped. Throws std::runtime_error on
  /// malformed input.
  static MetricsReport read_csv(std::istream& rows, std::istream* head_gaps = nullptr);
};

/// Scores one case. Single time-point: both all-lesion heads against the
/// label. Two time-point: the new-lesion head against the label and, when
/// hidden all-lesion truth exists, al1/al2 against baseline/follow-up truth.
MetricsReport evaluate_case(const std::string& name, const HeadMaps& maps, const Sample& sample,
                            const std::optional<HiddenTruth>& hidden, const MetricOptions& opts = {});

/// Sliding-window prediction and scoring of every record in `split`, in
/// manifest order.
MetricsReport evaluate_dataset(const Manifest& manifest, const SegNet& net, const InferenceConfig& infer,
                               const MetricOptions& opts = {}, Split split = Split::Val);

/// One line of an ablation table: training data, regularizer, and scores.
struct AblationRow {
  bool with_rr = false;
  bool two_data = false;
  bool single_data = false;
  bool staged = false;
  std::optional<MetricSummary> new_lesions, all_lesions;
};

std::string ablation_markdown(const std::vector<AblationRow>& rows);

}  // namespace coact
