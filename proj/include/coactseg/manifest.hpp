#pragma once

#include "coactseg/volume.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace coact {

enum class Split : std::uint8_t { Train, Val };

const char* to_string(Split split);
Split parse_split(const std::string& s);

/// One sample on disk. Paths are stored relative to the manifest directory.
struct ManifestRecord {
  std::string name;
  SampleKind kind = SampleKind::SingleTimePoint;
  Split split = Split::Train;
  std::uint64_t seed = 0;
  SamplePaths paths;
  /// All-lesion ground truth per time point, when known (phantom data).
  std::optional<std::filesystem::path> gt_all_baseline;
  std::optional<std::filesystem::path> gt_all_follow_up;
};

struct HiddenTruth {
  LabelVolume all_lesions_baseline;
  LabelVolume all_lesions_follow_up;
};

/// Plain-text sample list, one tab-separated record per line:
///   name kind split seed baseline follow_up difference label brain_mask gt_baseline gt_follow_up
/// Absent ground-truth paths are written as "-". Lines starting with '#' are
/// comments; the header comment records the root seed.
class Manifest {
 public:
  std::uint64_t root_seed = 0;
  std::vector<ManifestRecord> records;

  static Manifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Directory the record paths are relative to (set by load/save).
  const std::filesystem::path& base_dir() const { return base_dir_; }
  void set_base_dir(std::filesystem::path dir) { base_dir_ = std::move(dir); }

  std::vector<const ManifestRecord*> select(Split split, std::optional<SampleKind> kind = std::nullopt) const;
  std::size_t count(Split split, SampleKind kind) const;

  Sample load_sample(const ManifestRecord& r) const;
  std::optional<HiddenTruth> load_hidden_truth(const ManifestRecord& r) const;

 private:
  std::filesystem::path resolve(const std::filesystem::path& p) const;
  std::filesystem::path base_dir_;
};

}  // namespace coact
