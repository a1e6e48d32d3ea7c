#include "bamp/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "bamp/errors.hpp"
#include "bamp/random.hpp"

namespace bamp {

namespace {

std::string format_double(double value) {
  char buffer[64];
  const auto [end, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, end);
}

std::string format_bool(bool value) { return value ? "true" : "false"; }

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [end, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || end != last || text.empty()) {
    throw InputError("config key '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "on") return true;
  if (text == "false" || text == "0" || text == "off") return false;
  throw InputError("config key '" + key + "': expected true or false, got '" + text + "'");
}

std::string trim(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = text.find_last_not_of(" \t\r");
  return text.substr(first, last - first + 1);
}

const char* to_string(ContrastDenominator denominator) {
  return denominator == ContrastDenominator::other_classes ? "other_classes" : "all_but_anchor";
}

ContrastDenominator parse_denominator(const std::string& text) {
  if (text == "other_classes") return ContrastDenominator::other_classes;
  if (text == "all_but_anchor") return ContrastDenominator::all_but_anchor;
  throw InputError("config key 'contrast_denominator': expected other_classes or all_but_anchor");
}

struct Field {
  const char* key;
  bool training;  // affects base training
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define BAMP_SIZE_FIELD(name, training, member)                                          \
  Field {                                                                                \
    name, training, [](const RunConfig& c) { return std::to_string(c.member); },         \
        [](RunConfig& c, const std::string& v) { c.member = parse_number<std::size_t>(name, v); } \
  }
#define BAMP_U64_FIELD(name, training, member)                                           \
  Field {                                                                                \
    name, training, [](const RunConfig& c) { return std::to_string(c.member); },         \
        [](RunConfig& c, const std::string& v) { c.member = parse_number<std::uint64_t>(name, v); } \
  }
#define BAMP_DOUBLE_FIELD(name, training, member)                                        \
  Field {                                                                                \
    name, training, [](const RunConfig& c) { return format_double(c.member); },          \
        [](RunConfig& c, const std::string& v) { c.member = parse_number<double>(name, v); } \
  }
#define BAMP_BOOL_FIELD(name, training, member)                                          \
  Field {                                                                                \
    name, training, [](const RunConfig& c) { return format_bool(c.member); },            \
        [](RunConfig& c, const std::string& v) { c.member = parse_bool(name, v); }       \
  }

std::string optional_double(const std::optional<double>& value) {
  return value ? format_double(*value) : "auto";
}

std::optional<double> parse_optional_double(const std::string& key, const std::string& text) {
  if (text == "auto") return std::nullopt;
  return parse_number<double>(key, text);
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"mode", false, [](const RunConfig& c) { return std::string(to_string(c.mode)); },
            [](RunConfig& c, const std::string& v) { c.mode = parse_plan_mode(v); }},
      BAMP_SIZE_FIELD("shots", false, shots),
      BAMP_SIZE_FIELD("sessions", false, sessions),
      BAMP_U64_FIELD("plan_seed", false, plan_seed),
      BAMP_U64_FIELD("seed", true, seed),
      Field{"preset", false,
            [](const RunConfig& c) { return c.protocol.toggles.preset_name(); },
            [](RunConfig& c, const std::string& v) {
              // "custom" defers to the individual toggle keys.
              if (v != "custom") c.protocol.toggles = ComponentToggles::preset(v);
            }},
      BAMP_BOOL_FIELD("mixture_losses", true, protocol.toggles.mixture_losses),
      BAMP_BOOL_FIELD("calibration", false, protocol.toggles.calibration),
      BAMP_BOOL_FIELD("voting", false, protocol.toggles.voting),
      BAMP_SIZE_FIELD("epochs", true, protocol.train.epochs),
      BAMP_SIZE_FIELD("batch_size", true, protocol.train.batch_size),
      BAMP_DOUBLE_FIELD("learning_rate", true, protocol.train.learning_rate),
      BAMP_DOUBLE_FIELD("sgd_momentum", true, protocol.train.sgd_momentum),
      Field{"schedule", true,
            [](const RunConfig& c) { return std::string(to_string(c.protocol.train.schedule)); },
            [](RunConfig& c, const std::string& v) {
              c.protocol.train.schedule = parse_step_schedule(v);
            }},
      Field{"alpha", true, [](const RunConfig& c) { return optional_double(c.protocol.train.alpha); },
            [](RunConfig& c, const std::string& v) {
              c.protocol.train.alpha = parse_optional_double("alpha", v);
            }},
      Field{"lambda", true,
            [](const RunConfig& c) { return optional_double(c.protocol.train.lambda); },
            [](RunConfig& c, const std::string& v) {
              c.protocol.train.lambda = parse_optional_double("lambda", v);
            }},
      BAMP_SIZE_FIELD("prototypes_per_class", true, protocol.train.prototypes_per_class),
      BAMP_DOUBLE_FIELD("tau", true, protocol.train.tau),
      BAMP_DOUBLE_FIELD("tau_assign", true, protocol.train.tau_assign),
      BAMP_DOUBLE_FIELD("ema_momentum", true, protocol.train.ema_momentum),
      BAMP_DOUBLE_FIELD("prune_threshold", true, protocol.train.prune_threshold),
      BAMP_DOUBLE_FIELD("init_noise", true, protocol.train.init_noise),
      Field{"contrast_denominator", true,
            [](const RunConfig& c) {
              return std::string(to_string(c.protocol.train.contrast_denominator));
            },
            [](RunConfig& c, const std::string& v) {
              c.protocol.train.contrast_denominator = parse_denominator(v);
            }},
      BAMP_SIZE_FIELD("rank", true, protocol.train.rank),
      Field{"activation", true,
            [](const RunConfig& c) { return std::string(to_string(c.protocol.train.activation)); },
            [](RunConfig& c, const std::string& v) {
              c.protocol.train.activation = parse_activation(v);
            }},
      BAMP_BOOL_FIELD("residual", true, protocol.train.residual),
      BAMP_DOUBLE_FIELD("tau_cal", false, protocol.calibration.tau_cal),
      BAMP_DOUBLE_FIELD("beta", false, protocol.calibration.beta),
      BAMP_DOUBLE_FIELD("eta", false, protocol.calibration.eta),
      BAMP_DOUBLE_FIELD("gamma", false, protocol.calibration.gamma),
      BAMP_SIZE_FIELD("ots_dim", false, protocol.ots.dim),
      BAMP_DOUBLE_FIELD("ridge", false, protocol.ots.ridge),
      BAMP_DOUBLE_FIELD("vote_weight", false, protocol.vote_weight),
      BAMP_SIZE_FIELD("threads", false, protocol.threads),
  };
  return table;
}

#undef BAMP_SIZE_FIELD
#undef BAMP_U64_FIELD
#undef BAMP_DOUBLE_FIELD
#undef BAMP_BOOL_FIELD

std::uint64_t fnv1a(const std::vector<std::pair<std::string, std::string>>& entries,
                    const std::set<std::string>* only) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  auto feed = [&](const std::string& text) {
    for (unsigned char ch : text) {
      hash ^= ch;
      hash *= 0x100000001b3ULL;
    }
    hash ^= 0xff;
    hash *= 0x100000001b3ULL;
  };
  for (const auto& [key, value] : entries) {
    if (only != nullptr && only->count(key) == 0) continue;
    feed(key);
    feed(value);
  }
  return hash;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& field : fields()) out.emplace_back(field.key);
    return out;
  }();
  return keys;
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& field : fields()) out.emplace_back(field.key, field.get(*this));
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& field : fields()) {
    if (key == field.key) {
      field.set(*this, value);
      return;
    }
  }
  throw InputError("unknown config key '" + key + "'");
}

void RunConfig::validate() const {
  if (shots == 0) throw InputError("shots must be >= 1");
  if (sessions == 1) throw InputError("sessions must be 0 (default) or >= 2");
  protocol.validate();
}

ProtocolConfig RunConfig::resolved_protocol() const {
  ProtocolConfig out = protocol;
  out.seed = mix_seed(seed, 1);
  out.train.seed = mix_seed(seed, 2);
  out.ots.seed = mix_seed(seed, 3);
  out.train.mixture_losses = protocol.toggles.mixture_losses;
  return out;
}

std::optional<std::size_t> RunConfig::session_override() const {
  if (sessions == 0) return std::nullopt;
  return sessions;
}

std::uint64_t RunConfig::hash() const {
  auto all = entries();
  std::erase_if(all, [](const auto& entry) { return entry.first == "threads"; });
  return fnv1a(all, nullptr);
}

std::uint64_t RunConfig::training_hash() const {
  std::set<std::string> keys;
  for (const auto& field : fields()) {
    if (field.training) keys.insert(field.key);
  }
  return fnv1a(entries(), &keys);
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InputError(path.string() + ":" + std::to_string(number) + ": expected key = value");
    }
    try {
      config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const InputError& error) {
      throw InputError(path.string() + ":" + std::to_string(number) + ": " + error.what());
    }
  }
}

std::string format_config(const RunConfig& config) {
  std::ostringstream out;
  for (const auto& [key, value] : config.entries()) out << key << " = " << value << '\n';
  return out.str();
}

}  // namespace bamp
