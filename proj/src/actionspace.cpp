#include "sig/actionspace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sig/errors.hpp"

namespace sig::actions {

using json = nlohmann::json;

std::string label(Bitmask mask) {
  if (mask == 0) return "no action";
  std::string out;
  for (int i = 0; i < 8; ++i) {
    if ((mask >> i) & 1) {
      if (!out.empty()) out += " + ";
      out += kAtomicActions[static_cast<std::size_t>(i)];
    }
  }
  return out;
}

Bitmask parse_label(std::string_view text) {
  if (text == "no action") return 0;
  Bitmask mask = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find(" + ", pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view part = text.substr(pos, end - pos);
    auto it = std::find(kAtomicActions.begin(), kAtomicActions.end(), part);
    if (it == kAtomicActions.end()) throw InputError("unknown atomic action: " + std::string(part));
    mask |= static_cast<Bitmask>(1u << (it - kAtomicActions.begin()));
    pos = end + 3;
  }
  return mask;
}

std::vector<int> atomic_indices(Bitmask mask) {
  std::vector<int> out;
  for (int i = 0; i < 8; ++i) {
    if ((mask >> i) & 1) out.push_back(i);
  }
  return out;
}

Bitmask from_indices(std::span<const int> indices) {
  Bitmask m = 0;
  for (int i : indices) {
    if (i < 0 || i >= 8) throw InputError("atomic action index out of range: " + std::to_string(i));
    m |= static_cast<Bitmask>(1u << i);
  }
  return m;
}

// ---------------------------------------------------------------------------

ActionDictionary::ActionDictionary(std::vector<Bitmask> entries, double coverage)
    : entries_(std::move(entries)), coverage_(coverage) {
  if (entries_.empty()) throw InputError("action dictionary needs at least one entry");
  if (!(coverage > 0.0 && coverage <= 1.0)) throw RangeError("coverage must lie in (0, 1]");
  lookup_.fill(-1);
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (lookup_[entries_[i]] != -1) throw InputError("duplicate dictionary entry: " + label(entries_[i]));
    lookup_[entries_[i]] = static_cast<int>(i);
  }
}

int ActionDictionary::encode(Bitmask mask) const noexcept {
  const int id = lookup_[mask];
  return id < 0 ? catch_all_id() : id;
}

std::optional<Bitmask> ActionDictionary::mask(int id) const {
  if (id < 0 || id >= size()) {
    throw RangeError("token " + std::to_string(id) + " outside dictionary of size " + std::to_string(size()));
  }
  if (id == catch_all_id()) return std::nullopt;
  return entries_[static_cast<std::size_t>(id)];
}

std::string ActionDictionary::decode(int id) const {
  const auto m = mask(id);
  return m ? label(*m) : std::string(kCatchAllLabel);
}

ActionDictionary build_dictionary(std::span<const Bitmask> annotations, double coverage) {
  if (annotations.empty()) throw InputError("cannot build a dictionary from an empty annotation stream");
  if (!(coverage > 0.0 && coverage <= 1.0)) throw RangeError("coverage must lie in (0, 1]");
  std::array<std::size_t, 256> counts{};
  for (Bitmask m : annotations) ++counts[m];
  std::vector<Bitmask> order;
  for (int m = 0; m < 256; ++m) {
    if (counts[static_cast<std::size_t>(m)] > 0) order.push_back(static_cast<Bitmask>(m));
  }
  std::stable_sort(order.begin(), order.end(), [&](Bitmask a, Bitmask b) {
    if (counts[a] != counts[b]) return counts[a] > counts[b];
    return a < b;
  });
  const double total = static_cast<double>(annotations.size());
  const double needed = coverage * total;
  std::vector<Bitmask> entries;
  std::size_t cum = 0;
  for (Bitmask m : order) {
    entries.push_back(m);
    cum += counts[m];
    if (static_cast<double>(cum) + 1e-9 * total >= needed) break;
  }
  return ActionDictionary(std::move(entries), coverage);
}

void validate(const Interaction& s, int num_actions) {
  const std::string where = "sample '" + s.id + "': ";
  if (s.tokens.rows() < 2) throw ValidationError(where + "needs at least two persons");
  if (s.t_obs < 1) throw ValidationError(where + "t_obs must be at least 1");
  if (s.horizon < 1) throw ValidationError(where + "horizon must be at least 1");
  if (s.tokens.cols() != s.t_obs + s.horizon) {
    throw ValidationError(where + "rows have length " + std::to_string(s.tokens.cols()) + ", expected " +
                          std::to_string(s.t_obs + s.horizon));
  }
  for (Eigen::Index i = 0; i < s.tokens.size(); ++i) {
    const int t = s.tokens.data()[i];
    if (t < 0 || t >= num_actions) {
      throw ValidationError(where + "token " + std::to_string(t) + " outside [0, " + std::to_string(num_actions) +
                            ")");
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

Occlusion parse_occlusion(const std::string& s, std::size_t line) {
  if (s == "none") return Occlusion::none;
  if (s == "partial") return Occlusion::partial;
  if (s == "total") return Occlusion::total;
  throw ParseError(line, "unknown occlusion value '" + s + "'");
}

}  // namespace

std::vector<FrameRecord> parse_annotations(std::istream& in) {
  std::vector<FrameRecord> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(text);
      FrameRecord rec;
      rec.group = j.at("group").get<std::string>();
      rec.frame = j.at("frame").get<long>();
      for (const auto& p : j.at("persons")) {
        PersonFrame pf;
        pf.id = p.at("id").get<std::string>();
        const auto& acts = p.at("actions");
        if (!acts.is_array() || acts.size() != 8) throw ParseError(line, "actions must hold 8 flags");
        for (int i = 0; i < 8; ++i) {
          const int v = acts[static_cast<std::size_t>(i)].get<int>();
          if (v != 0 && v != 1) throw ParseError(line, "action flags must be 0 or 1");
          if (v) pf.actions |= static_cast<Bitmask>(1u << i);
        }
        pf.occlusion = parse_occlusion(p.at("occlusion").get<std::string>(), line);
        rec.persons.push_back(std::move(pf));
      }
      out.push_back(std::move(rec));
    } catch (const ParseError&) {
      throw;
    } catch (const json::exception& e) {
      throw ParseError(line, e.what());
    }
  }
  return out;
}

std::vector<FrameRecord> read_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open annotation file " + path.string());
  try {
    return parse_annotations(in);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + e.what());
  }
}

std::vector<GroupStream> group_annotations(std::vector<FrameRecord> records) {
  std::map<std::string, std::vector<FrameRecord>> by_group;
  for (auto& r : records) by_group[r.group].push_back(std::move(r));
  std::vector<GroupStream> out;
  for (auto& [group, recs] : by_group) {
    std::stable_sort(recs.begin(), recs.end(), [](const auto& a, const auto& b) { return a.frame < b.frame; });
    std::vector<std::string> ids;
    for (const auto& p : recs.front().persons) ids.push_back(p.id);
    const std::set<std::string> id_set(ids.begin(), ids.end());
    if (id_set.size() != ids.size()) throw InputError("group '" + group + "': duplicate person id in a frame");
    GroupStream cur;
    for (std::size_t i = 0; i < recs.size(); ++i) {
      const auto& r = recs[i];
      if (r.persons.size() != ids.size()) {
        throw InputError("group '" + group + "': frame " + std::to_string(r.frame) + " has " +
                         std::to_string(r.persons.size()) + " persons, expected " + std::to_string(ids.size()));
      }
      if (i > 0 && r.frame == recs[i - 1].frame) {
        throw InputError("group '" + group + "': frame " + std::to_string(r.frame) + " appears twice");
      }
      std::vector<PersonFrame> ordered(ids.size());
      for (const auto& p : r.persons) {
        auto it = std::find(ids.begin(), ids.end(), p.id);
        if (it == ids.end()) {
          throw InputError("group '" + group + "': person '" + p.id + "' appears mid-stream");
        }
        ordered[static_cast<std::size_t>(it - ids.begin())] = p;
      }
      if (i == 0 || r.frame != recs[i - 1].frame + 1) {
        if (!cur.frames.empty()) out.push_back(std::move(cur));
        cur = GroupStream{};
        cur.group = group;
        cur.first_frame = r.frame;
        cur.person_ids = ids;
      }
      cur.frames.push_back(std::move(ordered));
    }
    if (!cur.frames.empty()) out.push_back(std::move(cur));
  }
  return out;
}

std::vector<Bitmask> visible_masks(std::span<const GroupStream> streams) {
  std::vector<Bitmask> out;
  for (const auto& s : streams) {
    for (const auto& frame : s.frames) {
      for (const auto& p : frame) {
        if (p.occlusion != Occlusion::total) out.push_back(p.actions);
      }
    }
  }
  return out;
}

SegmentResult segment_annotations(std::span<const GroupStream> streams, const ActionDictionary& dict,
                                  const SegmentConfig& cfg) {
  if (!(cfg.fps > 0)) throw InputError("fps must be positive");
  const double obs_real = cfg.fps * cfg.seg_seconds;
  const long t_obs = std::lround(obs_real);
  if (t_obs < 1 || std::abs(obs_real - static_cast<double>(t_obs)) > 1e-9) {
    throw InputError("fps * seg_seconds must be a positive integer");
  }
  if (cfg.horizon < 1) throw InputError("horizon must be a positive integer");
  const long window = t_obs + cfg.horizon;

  SegmentResult res;
  for (const auto& s : streams) {
    const long len = static_cast<long>(s.frames.size());
    const auto n = static_cast<Eigen::Index>(s.person_ids.size());
    for (long start = 0; start + window <= len; start += window) {
      ++res.windows;
      std::size_t occluded = 0;
      Interaction it;
      it.id = s.group + "/" + std::to_string(s.first_frame + start);
      it.t_obs = static_cast<int>(t_obs);
      it.horizon = cfg.horizon;
      it.tokens.resize(n, window);
      for (long f = 0; f < window; ++f) {
        const auto& frame = s.frames[static_cast<std::size_t>(start + f)];
        for (Eigen::Index p = 0; p < n; ++p) {
          const auto& pf = frame[static_cast<std::size_t>(p)];
          if (pf.occlusion == Occlusion::total) ++occluded;
          it.tokens(p, f) = dict.encode(pf.actions);
        }
      }
      const double share = static_cast<double>(occluded) / static_cast<double>(window * n);
      if (share > cfg.occlusion_max) {
        ++res.occlusion_drops;
        continue;
      }
      res.samples.push_back(std::move(it));
    }
  }
  return res;
}

// ---------------------------------------------------------------------------

std::vector<Interaction> parse_dataset(std::istream& in, int num_actions) {
  std::vector<Interaction> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    Interaction it;
    try {
      const json j = json::parse(text);
      it.id = j.at("id").get<std::string>();
      it.t_obs = j.at("t_obs").get<int>();
      it.horizon = j.at("horizon").get<int>();
      const auto& rows = j.at("actions");
      if (!rows.is_array() || rows.empty()) throw ParseError(line, "actions must be a non-empty array");
      const auto len = rows[0].size();
      it.tokens.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(len));
      for (std::size_t p = 0; p < rows.size(); ++p) {
        if (!rows[p].is_array()) throw ParseError(line, "each person row must be an array");
        if (rows[p].size() != len) {
          throw ValidationError("line " + std::to_string(line) + ": person rows differ in length");
        }
        for (std::size_t t = 0; t < len; ++t) {
          it.tokens(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(t)) = rows[p][t].get<int>();
        }
      }
    } catch (const json::exception& e) {
      throw ParseError(line, e.what());
    }
    try {
      validate(it, num_actions);
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line) + ": " + e.what());
    }
    out.push_back(std::move(it));
  }
  return out;
}

std::vector<Interaction> read_dataset(const std::filesystem::path& path, int num_actions) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset " + path.string());
  try {
    return parse_dataset(in, num_actions);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_dataset(std::ostream& out, std::span<const Interaction> samples) {
  for (const auto& s : samples) {
    json rows = json::array();
    for (Eigen::Index p = 0; p < s.tokens.rows(); ++p) {
      json row = json::array();
      for (Eigen::Index t = 0; t < s.tokens.cols(); ++t) row.push_back(s.tokens(p, t));
      rows.push_back(std::move(row));
    }
    json j;
    j["id"] = s.id;
    j["t_obs"] = s.t_obs;
    j["horizon"] = s.horizon;
    j["actions"] = std::move(rows);
    out << j.dump() << '\n';
  }
}

void write_dataset(const std::filesystem::path& path, std::span<const Interaction> samples) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  write_dataset(out, samples);
}

ActionDictionary read_dictionary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dictionary " + path.string());
  try {
    const json j = json::parse(in);
    std::vector<Bitmask> entries;
    for (const auto& e : j.at("entries")) {
      const auto idx = e.get<std::vector<int>>();
      entries.push_back(from_indices(idx));
    }
    return ActionDictionary(std::move(entries), j.at("coverage").get<double>());
  } catch (const json::exception& e) {
    throw ParseError(1, path.string() + ": " + e.what());
  }
}

void write_dictionary(const std::filesystem::path& path, const ActionDictionary& dict) {
  json entries = json::array();
  for (Bitmask m : dict.entries()) entries.push_back(atomic_indices(m));
  json j;
  j["entries"] = std::move(entries);
  j["coverage"] = dict.coverage();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

}  // namespace sig::actions
