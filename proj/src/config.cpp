#include "axloc/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace axloc {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  text = trim(text);
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw ConfigError("invalid value '" + std::string(text) + "' for " + std::string(key));
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  text = trim(text);
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("invalid boolean '" + std::string(text) + "' for " + std::string(key));
}

template <typename T>
std::vector<T> parse_list(std::string_view key, std::string_view text) {
  std::vector<T> out;
  text = trim(text);
  if (text.empty()) throw ConfigError("empty list for " + std::string(key));
  std::size_t pos = 0;
  while (true) {
    const auto comma = text.find(',', pos);
    out.push_back(parse_number<T>(key, text.substr(pos, comma == std::string_view::npos ? text.npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}
std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

template <typename T>
std::string fmt_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += ',';
    out += fmt(static_cast<std::conditional_t<std::is_floating_point_v<T>, double, std::uint64_t>>(v[i]));
  }
  return out;
}

struct Entry {
  ConfigKey key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Field>
Entry size_entry(std::string name, std::string desc, Field field) {
  return {{name, std::move(desc)},
          [name, field](RunConfig& c, std::string_view v) { field(c) = parse_number<std::size_t>(name, v); },
          [field](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(field(c))); }};
}

template <typename Field>
Entry double_entry(std::string name, std::string desc, Field field) {
  return {{name, std::move(desc)},
          [name, field](RunConfig& c, std::string_view v) { field(c) = parse_number<double>(name, v); },
          [field](const RunConfig& c) { return fmt(field(c)); }};
}

template <typename Field>
Entry bool_entry(std::string name, std::string desc, Field field) {
  return {{name, std::move(desc)},
          [name, field](RunConfig& c, std::string_view v) { field(c) = parse_bool(name, v); },
          [field](const RunConfig& c) { return fmt(field(c)); }};
}

template <typename Field>
Entry path_entry(std::string name, std::string desc, Field field) {
  return {{name, std::move(desc)},
          [field](RunConfig& c, std::string_view v) {
            const auto t = trim(v);
            if (t.empty()) {
              field(c).reset();
            } else {
              field(c) = std::filesystem::path(std::string(t));
            }
          },
          [field](const RunConfig& c) {
            const auto& p = field(c);
            return p ? p->string() : std::string();
          }};
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    t.push_back({{"seed", "seeds scene generation, model initialization and batch order"},
                 [](RunConfig& c, std::string_view v) { c.seed = parse_number<std::uint64_t>("seed", v); },
                 [](const RunConfig& c) { return fmt(c.seed); }});
    t.push_back(size_entry("threads", "worker thread cap (dataset rendering)", [](auto& c) -> auto& { return c.threads; }));
    t.push_back(path_entry("data.dir", "dataset directory", [](auto& c) -> auto& { return c.data_dir; }));
    t.push_back(path_entry("out.dir", "output directory", [](auto& c) -> auto& { return c.out_dir; }));

    t.push_back(size_entry("data.objects", "objects in the generated scene", [](auto& c) -> auto& { return c.data.objects; }));
    t.push_back(double_entry("data.extent", "scene side length", [](auto& c) -> auto& { return c.data.extent; }));
    t.push_back(size_entry("data.n_train", "training samples", [](auto& c) -> auto& { return c.data.n_train; }));
    t.push_back(size_entry("data.n_test", "test samples", [](auto& c) -> auto& { return c.data.n_test; }));
    t.push_back(size_entry("data.width", "image width", [](auto& c) -> auto& { return c.data.width; }));
    t.push_back(size_entry("data.height", "image height", [](auto& c) -> auto& { return c.data.height; }));
    for (const char* split : {"train", "test"}) {
      const std::string s = split;
      auto path = [s](auto& c) -> auto& { return s == "train" ? c.data.train_path : c.data.test_path; };
      t.push_back(double_entry("data." + s + "_radius", s + " loop radius",
                               [path](auto& c) -> auto& { return path(c).radius; }));
      t.push_back(double_entry("data." + s + "_height", s + " loop camera height",
                               [path](auto& c) -> auto& { return path(c).height; }));
      t.push_back(double_entry("data." + s + "_phase", s + " loop start angle (radians)",
                               [path](auto& c) -> auto& { return path(c).phase; }));
      t.push_back(double_entry("data." + s + "_center_x", s + " loop center x",
                               [path](auto& c) -> auto& { return path(c).center_x; }));
      t.push_back(double_entry("data." + s + "_center_y", s + " loop center y",
                               [path](auto& c) -> auto& { return path(c).center_y; }));
      t.push_back({{"data." + s + "_look_at", s + " loop look-at target x,y,z"},
                   [path, s](RunConfig& c, std::string_view v) {
                     const auto xyz = parse_list<double>("data." + s + "_look_at", v);
                     if (xyz.size() != 3) throw ConfigError("data." + s + "_look_at needs three values");
                     path(c).look_at = {xyz[0], xyz[1], xyz[2]};
                   },
                   [path](const RunConfig& c) {
                     const auto& p = path(c).look_at;
                     return fmt_list(std::vector<double>(p.begin(), p.end()));
                   }});
    }

    t.push_back(size_entry("model.input_height", "network input height", [](auto& c) -> auto& { return c.model.input_height; }));
    t.push_back(size_entry("model.input_width", "network input width", [](auto& c) -> auto& { return c.model.input_width; }));
    t.push_back({{"model.backbone_widths", "channels per backbone stage; the first four stages stride by 2"},
                 [](RunConfig& c, std::string_view v) {
                   c.model.backbone_widths = parse_list<std::size_t>("model.backbone_widths", v);
                 },
                 [](const RunConfig& c) { return fmt_list(c.model.backbone_widths); }});
    t.push_back(size_entry("model.colorizer_depth", "colorization U-Net downsampling steps",
                           [](auto& c) -> auto& { return c.model.colorizer_depth; }));
    t.push_back(size_entry("model.colorizer_base_width", "colorization U-Net full-resolution width",
                           [](auto& c) -> auto& { return c.model.colorizer_base_width; }));
    t.push_back(size_entry("model.embed_width", "regressor hidden width", [](auto& c) -> auto& { return c.model.embed_width; }));
    t.push_back(bool_entry("model.use_auxiliary", "colorization auxiliary branch", [](auto& c) -> auto& { return c.model.use_auxiliary; }));
    t.push_back(bool_entry("model.use_attention", "attention module", [](auto& c) -> auto& { return c.model.use_attention; }));
    t.push_back(double_entry("model.beta_intra", "rotation weight in the pose loss", [](auto& c) -> auto& { return c.model.beta_intra; }));
    t.push_back(double_entry("model.beta_inter", "colorization weight in the joint loss", [](auto& c) -> auto& { return c.model.beta_inter; }));

    t.push_back(size_entry("train.batch_size", "mini-batch size", [](auto& c) -> auto& { return c.train.batch_size; }));
    t.push_back(double_entry("train.lr_backbone", "learning rate of the backbone and colorizer", [](auto& c) -> auto& { return c.train.lr_backbone; }));
    t.push_back(double_entry("train.lr_other", "learning rate of the remaining layers", [](auto& c) -> auto& { return c.train.lr_other; }));
    t.push_back(double_entry("train.decay_factor", "learning-rate decay factor", [](auto& c) -> auto& { return c.train.decay_factor; }));
    t.push_back(size_entry("train.decay_every", "epochs between decays", [](auto& c) -> auto& { return c.train.decay_every; }));
    t.push_back(double_entry("train.adam_beta1", "Adam first-moment decay", [](auto& c) -> auto& { return c.train.adam_beta1; }));
    t.push_back(double_entry("train.adam_beta2", "Adam second-moment decay", [](auto& c) -> auto& { return c.train.adam_beta2; }));
    t.push_back(double_entry("train.adam_eps", "Adam epsilon", [](auto& c) -> auto& { return c.train.adam_eps; }));
    t.push_back(size_entry("train.epochs", "training epochs", [](auto& c) -> auto& { return c.train.epochs; }));
    t.push_back(size_entry("train.checkpoint_every", "epochs between checkpoints (0: final only)",
                           [](auto& c) -> auto& { return c.train.checkpoint_every; }));
    t.push_back(size_entry("train.probe_size", "training samples behind the logged median errors",
                           [](auto& c) -> auto& { return c.train.probe_size; }));

    t.push_back({{"ablate.seeds", "comma-separated seeds for the ablation"},
                 [](RunConfig& c, std::string_view v) { c.ablate_seeds = parse_seed_list(v); },
                 [](const RunConfig& c) { return fmt_list(c.ablate_seeds); }});
    t.push_back(double_entry("ablate.threshold_fraction", "epochs-to-threshold level as a fraction of the scene extent",
                             [](auto& c) -> auto& { return c.ablate_threshold_fraction; }));
    return t;
  }();
  return table;
}

const Entry& find_entry(std::string_view key) {
  for (const auto& e : entries()) {
    if (e.key.name == key) return e;
  }
  throw ConfigError("unknown configuration key '" + std::string(key) + "'");
}

}  // namespace

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  return t;
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& e : entries()) out.push_back(e.key);
    return out;
  }();
  return keys;
}

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  find_entry(trim(key)).set(config, value);
}

std::string get_config_value(const RunConfig& config, std::string_view key) { return find_entry(key).get(config); }

void apply_config_text(RunConfig& config, std::string_view text) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value, got '" + std::string(line) + "'");
    }
    try {
      set_config_value(config, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    apply_config_text(config, buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string config_reference() {
  const RunConfig defaults;
  std::ostringstream os;
  os << "Configuration keys (key=value lines, '#' comments; flags override the file):\n";
  for (const auto& e : entries()) {
    std::string value = e.get(defaults);
    if (value.empty()) value = "<unset>";
    os << "  " << e.key.name << " = " << value << "\n      " << e.key.description << "\n";
  }
  return os.str();
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  auto seeds = parse_list<std::uint64_t>("seeds", text);
  return seeds;
}

}  // namespace axloc
