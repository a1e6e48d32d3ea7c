#include "bamp/embedding_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "bamp/errors.hpp"
#include "bamp/random.hpp"
#include "binary_io.hpp"

namespace bamp {

namespace {

constexpr char kMagic[4] = {'B', 'A', 'M', 'P'};

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  auto sidecar = path;
  sidecar += ".manifest";
  return sidecar;
}

}  // namespace

std::vector<std::uint32_t> DatasetManifest::class_ids() const {
  std::vector<std::uint32_t> ids;
  ids.reserve(counts.size());
  for (const auto& [id, _] : counts) ids.push_back(id);
  return ids;
}

void write_embeddings(std::span<const LabeledEmbedding> records,
                      const std::filesystem::path& path) {
  const std::size_t dim = records.empty() ? 0 : records.front().vector.size();
  for (const auto& record : records) {
    if (record.vector.size() != dim) {
      throw InputError("write_embeddings: mixed dimensions (" + std::to_string(dim) + " vs " +
                       std::to_string(record.vector.size()) + ")");
    }
    for (float v : record.vector) {
      if (!std::isfinite(v)) throw InputError("write_embeddings: non-finite feature value");
    }
  }

  std::string buffer;
  buffer.reserve(embedding_file_size(records.size(), dim));
  buffer.append(kMagic, sizeof(kMagic));
  binary::put<std::uint16_t>(buffer, kEmbeddingFormatVersion);
  binary::put<std::uint32_t>(buffer, static_cast<std::uint32_t>(dim));
  binary::put<std::uint64_t>(buffer, records.size());
  for (const auto& record : records) {
    binary::put<std::uint32_t>(buffer, record.class_id);
    buffer.push_back(static_cast<char>(record.split));
    for (float v : record.vector) binary::put_f32(buffer, v);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("write_embeddings: cannot open " + path.string());
  out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
  out.flush();
  if (!out) throw InputError("write_embeddings: write failed for " + path.string());
}

LoadedDataset load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("load_embeddings: cannot open " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());

  if (bytes.size() < kEmbeddingHeaderBytes) throw FormatError("embedding file: truncated header");
  if (std::memcmp(data, kMagic, sizeof(kMagic)) != 0) throw FormatError("embedding file: bad magic");
  const auto version = binary::get<std::uint16_t>(data + 4);
  if (version != kEmbeddingFormatVersion) {
    throw FormatError("embedding file: unsupported version " + std::to_string(version));
  }
  const auto dim = binary::get<std::uint32_t>(data + 6);
  const auto count = binary::get<std::uint64_t>(data + 10);

  const std::size_t record_bytes = 4 + 1 + 4 * static_cast<std::size_t>(dim);
  const std::size_t payload = bytes.size() - kEmbeddingHeaderBytes;
  if (count > payload / record_bytes) {
    throw FormatError("embedding file: declared " + std::to_string(count) +
                      " records but payload is truncated");
  }
  if (count * record_bytes != payload) throw FormatError("embedding file: trailing bytes after last record");

  LoadedDataset dataset;
  dataset.records.reserve(count);
  const unsigned char* cursor = data + kEmbeddingHeaderBytes;
  for (std::uint64_t n = 0; n < count; ++n) {
    LabeledEmbedding record;
    record.class_id = binary::get<std::uint32_t>(cursor);
    const auto split = cursor[4];
    if (split > 1) throw FormatError("embedding file: invalid split tag in record " + std::to_string(n));
    record.split = static_cast<Split>(split);
    cursor += 5;
    record.vector.resize(dim);
    for (std::uint32_t i = 0; i < dim; ++i, cursor += 4) {
      const float v = std::bit_cast<float>(binary::get<std::uint32_t>(cursor));
      if (!std::isfinite(v)) {
        throw FormatError("embedding file: non-finite value in record " + std::to_string(n));
      }
      record.vector[i] = v;
    }
    dataset.records.push_back(std::move(record));
  }

  dataset.manifest = derive_manifest(dataset.records, path.stem().string());
  dataset.manifest.dim = dim;

  if (std::ifstream side(sidecar_path(path)); side) {
    std::string line;
    if (std::getline(side, line) && !line.empty()) dataset.manifest.name = line;
    while (std::getline(side, line)) dataset.manifest.class_names.push_back(line);
  }
  return dataset;
}

DatasetManifest derive_manifest(std::span<const LabeledEmbedding> records, std::string name) {
  DatasetManifest manifest;
  manifest.name = std::move(name);
  manifest.dim = records.empty() ? 0 : static_cast<std::uint32_t>(records.front().vector.size());
  for (const auto& record : records) {
    auto& counts = manifest.counts[record.class_id];
    (record.split == Split::train ? counts.train : counts.test) += 1;
  }
  return manifest;
}

void write_sidecar(const std::filesystem::path& embedding_path, const std::string& name,
                   std::span<const std::string> class_names) {
  std::ofstream out(sidecar_path(embedding_path), std::ios::trunc);
  if (!out) throw InputError("cannot write sidecar manifest for " + embedding_path.string());
  out << name << '\n';
  for (const auto& cls : class_names) out << cls << '\n';
}

// ---------------------------------------------------------------------------

const char* to_string(PlanMode mode) {
  return mode == PlanMode::big_start ? "big_start" : "small_start";
}

PlanMode parse_plan_mode(const std::string& text) {
  if (text == "big_start" || text == "big") return PlanMode::big_start;
  if (text == "small_start" || text == "small") return PlanMode::small_start;
  throw InputError("unknown plan mode '" + text + "' (expected big_start or small_start)");
}

std::vector<std::uint32_t> SessionPlan::seen_classes(std::size_t t) const {
  std::vector<std::uint32_t> seen;
  for (std::size_t s = 0; s <= t && s < sessions.size(); ++s) {
    seen.insert(seen.end(), sessions[s].begin(), sessions[s].end());
  }
  return seen;
}

std::size_t default_session_count(PlanMode mode) {
  return mode == PlanMode::big_start ? 6 : 10;
}

SessionPlan build_session_plan(const DatasetManifest& manifest, PlanMode mode, std::size_t shots,
                               std::uint64_t seed, std::optional<std::size_t> sessions) {
  const std::size_t classes = manifest.class_count();
  if (classes < 2) throw InputError("session plan: need at least 2 classes");
  if (shots < 1) throw InputError("session plan: shots must be >= 1");
  for (const auto& [id, counts] : manifest.counts) {
    if (counts.test == 0) {
      throw InputError("session plan: class " + std::to_string(id) + " has no test samples");
    }
  }
  const std::size_t count = sessions.value_or(default_session_count(mode));
  if (count < 2) throw InputError("session plan: need at least 2 sessions");
  if (count > classes) {
    throw InputError("session plan: " + std::to_string(classes) + " classes cannot form " +
                     std::to_string(count) + " sessions");
  }

  const std::size_t increments = count - 1;
  std::size_t per_increment = 0;
  if (mode == PlanMode::big_start) {
    per_increment = (classes + 2 * increments - 1) / (2 * increments);
  } else {
    per_increment = classes / count;
  }
  if (per_increment * increments >= classes) {
    throw InputError("session plan: too many sessions for " + std::to_string(classes) + " classes");
  }
  const std::size_t base = classes - per_increment * increments;
  if (base < per_increment) {
    throw InputError("session plan: base session would be smaller than an incremental session");
  }

  std::vector<std::uint32_t> order = manifest.class_ids();
  if (seed != 0) {
    Rng rng(mix_seed(seed, 0x706c616eULL));
    rng.shuffle(order);
  }

  SessionPlan plan;
  plan.mode = mode;
  plan.shots = shots;
  plan.seed = seed;
  auto cursor = order.begin();
  plan.sessions.emplace_back(cursor, cursor + static_cast<std::ptrdiff_t>(base));
  cursor += static_cast<std::ptrdiff_t>(base);
  for (std::size_t t = 0; t < increments; ++t) {
    plan.sessions.emplace_back(cursor, cursor + static_cast<std::ptrdiff_t>(per_increment));
    cursor += static_cast<std::ptrdiff_t>(per_increment);
  }
  return plan;
}

std::vector<LabeledEmbedding> sample_session_data(const SessionPlan& plan,
                                                  std::size_t session_index,
                                                  std::span<const LabeledEmbedding> records,
                                                  std::uint64_t seed) {
  if (session_index >= plan.session_count()) {
    throw InputError("sample_session_data: session index " + std::to_string(session_index) +
                     " out of range");
  }
  const auto& classes = plan.sessions[session_index];
  const std::set<std::uint32_t> wanted(classes.begin(), classes.end());

  std::map<std::uint32_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& record = records[i];
    if (record.split == Split::train && wanted.contains(record.class_id)) {
      by_class[record.class_id].push_back(i);
    }
  }

  std::vector<std::size_t> chosen;
  if (session_index == 0) {
    for (const auto& [_, indices] : by_class) chosen.insert(chosen.end(), indices.begin(), indices.end());
  } else {
    for (std::uint32_t cls : classes) {
      auto& indices = by_class[cls];
      if (indices.size() < plan.shots) {
        throw InputError("sample_session_data: class " + std::to_string(cls) + " has " +
                         std::to_string(indices.size()) + " training records, fewer than " +
                         std::to_string(plan.shots) + " shots");
      }
      Rng rng(mix_seed(mix_seed(seed, session_index), cls));
      for (std::size_t i = 0; i < plan.shots; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(indices.size() - i));
        std::swap(indices[i], indices[j]);
        chosen.push_back(indices[i]);
      }
    }
  }
  std::sort(chosen.begin(), chosen.end());

  std::vector<LabeledEmbedding> subset;
  subset.reserve(chosen.size());
  for (std::size_t i : chosen) subset.push_back(records[i]);
  return subset;
}

std::vector<LabeledEmbedding> select_test_records(std::span<const LabeledEmbedding> records,
                                                  std::span<const std::uint32_t> classes) {
  const std::set<std::uint32_t> wanted(classes.begin(), classes.end());
  std::vector<LabeledEmbedding> subset;
  for (const auto& record : records) {
    if (record.split == Split::test && wanted.contains(record.class_id)) subset.push_back(record);
  }
  return subset;
}

void write_plan(const SessionPlan& plan, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write plan file " + path.string());
  out << "bamp-plan 1\n";
  out << "mode " << to_string(plan.mode) << '\n';
  out << "shots " << plan.shots << '\n';
  out << "seed " << plan.seed << '\n';
  for (const auto& session : plan.sessions) {
    out << "session";
    for (auto cls : session) out << ' ' << cls;
    out << '\n';
  }
  if (!out) throw InputError("write failed for plan file " + path.string());
}

SessionPlan read_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open plan file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "bamp-plan 1") throw FormatError("plan file: bad header");

  SessionPlan plan;
  std::set<std::uint32_t> seen;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string key;
    fields >> key;
    if (key == "mode") {
      std::string mode;
      fields >> mode;
      plan.mode = parse_plan_mode(mode);
    } else if (key == "shots") {
      fields >> plan.shots;
    } else if (key == "seed") {
      fields >> plan.seed;
    } else if (key == "session") {
      std::vector<std::uint32_t> classes;
      std::uint32_t cls;
      while (fields >> cls) {
        if (!seen.insert(cls).second) {
          throw FormatError("plan file: class " + std::to_string(cls) + " in two sessions");
        }
        classes.push_back(cls);
      }
      if (classes.empty()) throw FormatError("plan file: empty session");
      plan.sessions.push_back(std::move(classes));
      continue;
    } else {
      throw FormatError("plan file: unknown key '" + key + "'");
    }
    if (fields.fail()) throw FormatError("plan file: malformed line '" + line + "'");
  }
  if (plan.sessions.size() < 2) throw FormatError("plan file: fewer than 2 sessions");
  if (plan.shots < 1) throw FormatError("plan file: shots must be >= 1");
  return plan;
}

std::string describe_plan(const SessionPlan& plan) {
  std::ostringstream out;
  out << plan.session_count() << " sessions, base " << plan.sessions.front().size() << ", inc "
      << (plan.session_count() > 1 ? plan.sessions[1].size() : 0);
  return out.str();
}

}  // namespace bamp
