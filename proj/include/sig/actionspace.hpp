#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace sig::actions {

/// The eight annotated atomic actions; bit i of a Bitmask is action i.
inline constexpr std::array<std::string_view, 8> kAtomicActions = {
    "walking", "stepping", "drinking", "hand gesture", "head gesture", "hair touching", "speaking", "laughing"};

using Bitmask = std::uint8_t;

enum class Occlusion { none, partial, total };

/// "no action" for 0, otherwise atomic names joined by " + " in bit order.
std::string label(Bitmask mask);
/// Inverse of label(); throws InputError for unknown names.
Bitmask parse_label(std::string_view text);
std::vector<int> atomic_indices(Bitmask mask);
Bitmask from_indices(std::span<const int> indices);

/// Dense token ids for the most frequent composite actions plus a trailing
/// catch-all token. Entries are sorted by descending corpus frequency.
class ActionDictionary {
 public:
  ActionDictionary(std::vector<Bitmask> entries, double coverage);

  /// Number of tokens, catch-all included.
  int size() const noexcept { return static_cast<int>(entries_.size()) + 1; }
  int catch_all_id() const noexcept { return static_cast<int>(entries_.size()); }
  double coverage() const noexcept { return coverage_; }
  const std::vector<Bitmask>& entries() const noexcept { return entries_; }

  /// Total: masks outside the dictionary map to catch_all_id().
  int encode(Bitmask mask) const noexcept;
  /// Composite label of a token; the catch-all decodes to "other".
  std::string decode(int id) const;
  /// Bitmask of a token, nullopt for the catch-all. Throws RangeError.
  std::optional<Bitmask> mask(int id) const;

 private:
  std::vector<Bitmask> entries_;
  std::array<int, 256> lookup_{};
  double coverage_;
};

inline constexpr std::string_view kCatchAllLabel = "other";

/// Minimal frequency-sorted prefix of composite actions whose cumulative
/// frame share reaches `coverage`, ties broken by ascending bitmask.
ActionDictionary build_dictionary(std::span<const Bitmask> annotations, double coverage);

using TokenMat = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// N synchronized token sequences: t_obs observed frames followed by a
/// `horizon`-frame target.
struct Interaction {
  std::string id;
  int t_obs = 0;
  int horizon = 0;
  TokenMat tokens;  // persons × (t_obs + horizon)

  int persons() const noexcept { return static_cast<int>(tokens.rows()); }
  int length() const noexcept { return t_obs + horizon; }
  auto observed() const { return tokens.leftCols(t_obs); }
  auto target() const { return tokens.rightCols(horizon); }
};

/// Throws ValidationError unless N ≥ 2, t_obs ≥ 1, horizon ≥ 1, row length
/// matches and every token lies in [0, num_actions).
void validate(const Interaction& sample, int num_actions);

// --- raw annotations -------------------------------------------------------

struct PersonFrame {
  std::string id;
  Bitmask actions = 0;
  Occlusion occlusion = Occlusion::none;
};

struct FrameRecord {
  std::string group;
  long frame = 0;
  std::vector<PersonFrame> persons;
};

/// One group's frames in time order, persons in a fixed order.
struct GroupStream {
  std::string group;
  long first_frame = 0;
  std::vector<std::string> person_ids;
  std::vector<std::vector<PersonFrame>> frames;  // frame-major
};

std::vector<FrameRecord> parse_annotations(std::istream& in);
std::vector<FrameRecord> read_annotations(const std::filesystem::path& path);

/// Sorts frames per group and splits at frame gaps into contiguous streams.
/// Throws InputError when a group's person count (or id set) changes or a
/// frame repeats.
std::vector<GroupStream> group_annotations(std::vector<FrameRecord> records);

/// Composite masks of every frame that is not totally occluded.
std::vector<Bitmask> visible_masks(std::span<const GroupStream> streams);

struct SegmentConfig {
  double fps = 20.0;
  double seg_seconds = 3.0;
  int horizon = 40;
  double occlusion_max = 0.10;
};

struct SegmentResult {
  std::vector<Interaction> samples;
  std::size_t windows = 0;         // candidate windows considered
  std::size_t occlusion_drops = 0;  // windows dropped by the occlusion rule
};

/// Cuts each stream into consecutive, non-overlapping windows of
/// t_obs = fps·seg_seconds observed frames plus `horizon` target frames.
/// Windows whose share of totally occluded person-frames exceeds
/// occlusion_max are dropped; trailing frames that cannot fill a window are
/// ignored.
SegmentResult segment_annotations(std::span<const GroupStream> streams, const ActionDictionary& dict,
                                  const SegmentConfig& cfg);

// --- dataset files ---------------------------------------------------------

std::vector<Interaction> parse_dataset(std::istream& in, int num_actions);
std::vector<Interaction> read_dataset(const std::filesystem::path& path, int num_actions);
void write_dataset(std::ostream& out, std::span<const Interaction> samples);
void write_dataset(const std::filesystem::path& path, std::span<const Interaction> samples);

ActionDictionary read_dictionary(const std::filesystem::path& path);
void write_dictionary(const std::filesystem::path& path, const ActionDictionary& dict);

}  // namespace sig::actions
