#pragma once

// Binary embedding files and FSCIL session plans.
//
// File layout (little-endian):
//   magic "BAMP" (4 bytes) | version u16 = 1 | d u32 | N u64
//   N records of: class_id u32 | split u8 (0 = train, 1 = test) | d x f32
//
// An optional sidecar "<path>.manifest" holds the dataset name on the first
// line followed by one class name per line.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bamp {

enum class Split : std::uint8_t { train = 0, test = 1 };

struct LabeledEmbedding {
  std::vector<float> vector;  // raw backbone features, unnormalized
  std::uint32_t class_id = 0;
  Split split = Split::train;

  friend bool operator==(const LabeledEmbedding&, const LabeledEmbedding&) = default;
};

struct SplitCounts {
  std::size_t train = 0;
  std::size_t test = 0;
};

struct DatasetManifest {
  std::string name;
  std::uint32_t dim = 0;
  std::map<std::uint32_t, SplitCounts> counts;  // ordered by class id
  std::vector<std::string> class_names;         // empty unless a sidecar exists

  std::size_t class_count() const noexcept { return counts.size(); }
  std::vector<std::uint32_t> class_ids() const;
};

inline constexpr std::uint16_t kEmbeddingFormatVersion = 1;
inline constexpr std::size_t kEmbeddingHeaderBytes = 4 + 2 + 4 + 8;

/// Size in bytes of a file holding `count` records of width `dim`.
constexpr std::size_t embedding_file_size(std::size_t count, std::size_t dim) {
  return kEmbeddingHeaderBytes + count * (4 + 1 + 4 * dim);
}

void write_embeddings(std::span<const LabeledEmbedding> records, const std::filesystem::path& path);

struct LoadedDataset {
  DatasetManifest manifest;
  std::vector<LabeledEmbedding> records;
};

/// Reads and validates an embedding file (and its sidecar, if present).
/// Throws FormatError on bad magic/version, truncation or non-finite values.
LoadedDataset load_embeddings(const std::filesystem::path& path);

/// Builds the manifest implied by a record set.
DatasetManifest derive_manifest(std::span<const LabeledEmbedding> records, std::string name = {});

/// Sidecar manifest (dataset name + class names).
void write_sidecar(const std::filesystem::path& embedding_path, const std::string& name,
                   std::span<const std::string> class_names);

// ---------------------------------------------------------------------------
// Session plans

enum class PlanMode { big_start, small_start };

const char* to_string(PlanMode mode);
PlanMode parse_plan_mode(const std::string& text);

struct SessionPlan {
  std::vector<std::vector<std::uint32_t>> sessions;  // C^0, C^1, ...
  std::size_t shots = 5;
  PlanMode mode = PlanMode::big_start;
  std::uint64_t seed = 0;

  std::size_t session_count() const noexcept { return sessions.size(); }
  /// Classes of sessions 0..t inclusive.
  std::vector<std::uint32_t> seen_classes(std::size_t t) const;

  friend bool operator==(const SessionPlan&, const SessionPlan&) = default;
};

/// Default session counts: 6 for big start (base + 5 increments) and 10 for small start.
std::size_t default_session_count(PlanMode mode);

/// Partitions the manifest's classes into sessions.
///
/// big_start: incremental sessions get ceil(C / (2 (S - 1))) classes each and
/// the base session takes the rest, which reproduces the published splits
/// (e.g. 45 classes, 6 sessions -> 20 + 5 x 5; 196 classes, 8 sessions -> 98 + 7 x 14).
/// small_start: each session gets floor(C / S) classes, the base absorbs the remainder.
///
/// Class order is ascending class id when seed == 0, else a seeded shuffle.
SessionPlan build_session_plan(const DatasetManifest& manifest, PlanMode mode, std::size_t shots,
                               std::uint64_t seed, std::optional<std::size_t> sessions = {});

/// Training records for one session: all of C^0's training records for
/// session 0, exactly `plan.shots` per class (without replacement) afterwards.
/// Records are returned in file order.
std::vector<LabeledEmbedding> sample_session_data(const SessionPlan& plan,
                                                  std::size_t session_index,
                                                  std::span<const LabeledEmbedding> records,
                                                  std::uint64_t seed);

/// Test records of the given classes, in file order.
std::vector<LabeledEmbedding> select_test_records(std::span<const LabeledEmbedding> records,
                                                  std::span<const std::uint32_t> classes);

// Plain-text plan files.
void write_plan(const SessionPlan& plan, const std::filesystem::path& path);
SessionPlan read_plan(const std::filesystem::path& path);

/// "6 sessions, base 50, inc 10"
std::string describe_plan(const SessionPlan& plan);

}  // namespace bamp
