#include "coactseg/manifest.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace coact {

const char* to_string(Split split) { return split == Split::Train ? "train" : "val"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  throw std::invalid_argument("unknown split '" + s + "' (expected train or val)");
}

namespace {

constexpr const char* kHeader = "# coactseg manifest v1";

std::string path_field(const std::optional<std::filesystem::path>& p) {
  return p ? p->generic_string() : std::string("-");
}

std::optional<std::filesystem::path> parse_path_field(const std::string& s) {
  if (s == "-") return std::nullopt;
  return std::filesystem::path(s);
}

}  // namespace

Manifest Manifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  Manifest m;
  m.base_dir_ = path.parent_path();
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fail = [&](const std::string& what) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + what);
    };
    if (line[0] == '#') {
      if (line == kHeader) header = true;
      const auto pos = line.find("root_seed=");
      if (pos != std::string::npos) m.root_seed = std::stoull(line.substr(pos + 10));
      continue;
    }
    if (!header) fail("missing manifest header");
    std::vector<std::string> f;
    std::istringstream ls(line);
    for (std::string tok; std::getline(ls, tok, '\t');) f.push_back(tok);
    if (f.size() != 11) fail("expected 11 tab-separated fields, got " + std::to_string(f.size()));
    ManifestRecord r;
    try {
      r.name = f[0];
      r.kind = parse_sample_kind(f[1]);
      r.split = parse_split(f[2]);
      r.seed = std::stoull(f[3]);
    } catch (const std::exception& e) {
      fail(e.what());
    }
    r.paths = {f[4], f[5], f[6], f[7], f[8]};
    r.gt_all_baseline = parse_path_field(f[9]);
    r.gt_all_follow_up = parse_path_field(f[10]);
    m.records.push_back(std::move(r));
  }
  if (!header) throw std::runtime_error(path.string() + ": missing manifest header");
  return m;
}

void Manifest::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << kHeader << "\n# root_seed=" << root_seed
      << "\n# name\tkind\tsplit\tseed\tbaseline\tfollow_up\tdifference\tlabel\tbrain_mask\tgt_all_baseline"
         "\tgt_all_follow_up\n";
  for (const auto& r : records) {
    out << r.name << '\t' << to_string(r.kind) << '\t' << to_string(r.split) << '\t' << r.seed << '\t'
        << r.paths.baseline.generic_string() << '\t' << r.paths.follow_up.generic_string() << '\t'
        << r.paths.difference.generic_string() << '\t' << r.paths.label.generic_string() << '\t'
        << r.paths.brain_mask.generic_string() << '\t' << path_field(r.gt_all_baseline) << '\t'
        << path_field(r.gt_all_follow_up) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing manifest " + path.string());
}

std::vector<const ManifestRecord*> Manifest::select(Split split, std::optional<SampleKind> kind) const {
  std::vector<const ManifestRecord*> out;
  for (const auto& r : records)
    if (r.split == split && (!kind || r.kind == *kind)) out.push_back(&r);
  return out;
}

std::size_t Manifest::count(Split split, SampleKind kind) const { return select(split, kind).size(); }

std::filesystem::path Manifest::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : base_dir_ / p;
}

Sample Manifest::load_sample(const ManifestRecord& r) const {
  SamplePaths p{resolve(r.paths.baseline), resolve(r.paths.follow_up), resolve(r.paths.difference),
                resolve(r.paths.label), resolve(r.paths.brain_mask)};
  return coact::load_sample(p, r.kind);
}

std::optional<HiddenTruth> Manifest::load_hidden_truth(const ManifestRecord& r) const {
  if (!r.gt_all_baseline || !r.gt_all_follow_up) return std::nullopt;
  return HiddenTruth{load_volume<std::uint8_t>(resolve(*r.gt_all_baseline)),
                     load_volume<std::uint8_t>(resolve(*r.gt_all_follow_up))};
}

}  // namespace coact
