#include "ubr/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "ubr/error.hpp"

namespace ubr {

namespace pt = boost::property_tree;

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(const std::string& text, const std::string& key) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (res.ec != std::errc() || res.ptr != end) throw usage_error(key + ": expected a number, got '" + text + "'");
  return value;
}

std::uint64_t parse_u64(const std::string& text, const std::string& key) {
  std::uint64_t value = 0;
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (res.ec != std::errc() || res.ptr != end) {
    throw usage_error(key + ": expected a non-negative integer, got '" + text + "'");
  }
  return value;
}

std::size_t parse_size(const std::string& text, const std::string& key) {
  return static_cast<std::size_t>(parse_u64(text, key));
}

struct Option {
  std::string section;
  std::string key;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Ref>
Option size_option(std::string section, std::string key, Ref ref) {
  return {section, key, [ref](RunConfig& c, const std::string& v, const std::string& k) { ref(c) = parse_size(v, k); },
          [ref](const RunConfig& c) {
            RunConfig copy = c;
            return std::to_string(ref(copy));
          }};
}

template <typename Ref>
Option u64_option(std::string section, std::string key, Ref ref) {
  return {section, key, [ref](RunConfig& c, const std::string& v, const std::string& k) { ref(c) = parse_u64(v, k); },
          [ref](const RunConfig& c) {
            RunConfig copy = c;
            return std::to_string(ref(copy));
          }};
}

template <typename Ref>
Option double_option(std::string section, std::string key, Ref ref) {
  return {section, key, [ref](RunConfig& c, const std::string& v, const std::string& k) { ref(c) = parse_double(v, k); },
          [ref](const RunConfig& c) {
            RunConfig copy = c;
            return format_double(ref(copy));
          }};
}

const std::vector<Option>& options() {
  static const std::vector<Option> table = [] {
    std::vector<Option> t;
    // [phantom]
    t.push_back(size_option("phantom", "image_height", [](RunConfig& c) -> auto& { return c.phantom.image_height; }));
    t.push_back(size_option("phantom", "image_width", [](RunConfig& c) -> auto& { return c.phantom.image_width; }));
    t.push_back(size_option("phantom", "min_slices", [](RunConfig& c) -> auto& { return c.phantom.min_slices; }));
    t.push_back(size_option("phantom", "max_slices", [](RunConfig& c) -> auto& { return c.phantom.max_slices; }));
    t.push_back(double_option("phantom", "min_span", [](RunConfig& c) -> auto& { return c.phantom.min_span; }));
    t.push_back(double_option("phantom", "max_span", [](RunConfig& c) -> auto& { return c.phantom.max_span; }));
    t.push_back(double_option("phantom", "spacing_jitter", [](RunConfig& c) -> auto& { return c.phantom.spacing_jitter; }));
    t.push_back(double_option("phantom", "noise_sigma", [](RunConfig& c) -> auto& { return c.phantom.noise_sigma; }));
    t.push_back(double_option("phantom", "translate_max", [](RunConfig& c) -> auto& { return c.phantom.translate_max; }));
    t.push_back(double_option("phantom", "scale_min", [](RunConfig& c) -> auto& { return c.phantom.scale_min; }));
    t.push_back(double_option("phantom", "scale_max", [](RunConfig& c) -> auto& { return c.phantom.scale_max; }));
    t.push_back(u64_option("phantom", "seed", [](RunConfig& c) -> auto& { return c.phantom.seed; }));
    // [sampler]
    t.push_back(size_option("sampler", "g", [](RunConfig& c) -> auto& { return c.train.sampler.g; }));
    t.push_back(size_option("sampler", "m", [](RunConfig& c) -> auto& { return c.train.sampler.m; }));
    t.push_back(size_option("sampler", "max_interval", [](RunConfig& c) -> auto& { return c.train.sampler.max_interval; }));
    // [network]
    t.push_back(size_option("network", "input_height", [](RunConfig& c) -> auto& { return c.train.network.input_height; }));
    t.push_back(size_option("network", "input_width", [](RunConfig& c) -> auto& { return c.train.network.input_width; }));
    t.push_back({"network", "stages",
                 [](RunConfig& c, const std::string& v, const std::string&) { c.train.network.stages = stages_from_text(v); },
                 [](const RunConfig& c) { return stages_to_text(c.train.network.stages); }});
    t.push_back(size_option("network", "conv6_channels", [](RunConfig& c) -> auto& { return c.train.network.conv6_channels; }));
    t.push_back(u64_option("network", "seed", [](RunConfig& c) -> auto& { return c.train.network.seed; }));
    // [train]
    t.push_back(size_option("train", "iterations", [](RunConfig& c) -> auto& { return c.train.iterations; }));
    t.push_back(double_option("train", "learning_rate", [](RunConfig& c) -> auto& { return c.train.learning_rate; }));
    t.push_back(double_option("train", "lr_decay_factor", [](RunConfig& c) -> auto& { return c.train.lr_decay_factor; }));
    t.push_back(size_option("train", "lr_decay_period", [](RunConfig& c) -> auto& { return c.train.lr_decay_period; }));
    t.push_back(double_option("train", "momentum", [](RunConfig& c) -> auto& { return c.train.momentum; }));
    t.push_back(double_option("train", "dist_weight", [](RunConfig& c) -> auto& { return c.train.dist_weight; }));
    t.push_back(u64_option("train", "seed", [](RunConfig& c) -> auto& { return c.train.seed; }));
    t.push_back(size_option("train", "checkpoint_period", [](RunConfig& c) -> auto& { return c.train.checkpoint_period; }));
    return t;
  }();
  return table;
}

const Option* find_option(const std::string& section, const std::string& key) {
  for (const auto& o : options()) {
    if (o.section == section && o.key == key) return &o;
  }
  return nullptr;
}

pt::ptree parse_ini(const std::string& text, const std::string& context) {
  std::istringstream in(text);
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw usage_error(context + ": line " + std::to_string(e.line()) + ": " + e.message());
  }
  return tree;
}

}  // namespace

std::string stages_to_text(const std::vector<StageSpec>& stages) {
  std::string out;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& s = stages[i];
    if (i) out += ',';
    out += std::to_string(s.out_channels) + ':' + std::to_string(s.kernel_size) + ':' + std::to_string(s.stride) + ':' +
           std::to_string(s.padding) + ':' + std::to_string(s.pool_window);
  }
  return out;
}

std::vector<StageSpec> stages_from_text(const std::string& text) {
  std::vector<StageSpec> stages;
  std::istringstream list(text);
  std::string item;
  while (std::getline(list, item, ',')) {
    std::vector<std::size_t> fields;
    std::istringstream parts(item);
    std::string part;
    while (std::getline(parts, part, ':')) {
      const auto b = part.find_first_not_of(" \t");
      const auto e = part.find_last_not_of(" \t");
      fields.push_back(parse_size(b == std::string::npos ? "" : part.substr(b, e - b + 1), "network.stages"));
    }
    if (fields.size() != 5) {
      throw usage_error("network.stages: each stage is channels:kernel:stride:padding:pool, got '" + item + "'");
    }
    stages.push_back({fields[0], fields[1], fields[2], fields[3], fields[4]});
  }
  return stages;
}

void set_option(RunConfig& config, const std::string& dotted_key, const std::string& value) {
  const auto dot = dotted_key.find('.');
  const Option* opt = dot == std::string::npos ? nullptr : find_option(dotted_key.substr(0, dot), dotted_key.substr(dot + 1));
  if (opt == nullptr) throw usage_error("unknown config key '" + dotted_key + "'");
  opt->set(config, value, dotted_key);
}

std::vector<std::string> option_names() {
  std::vector<std::string> names;
  for (const auto& o : options()) names.push_back(o.section + "." + o.key);
  return names;
}

RunConfig parse_run_config(const std::string& text, const std::string& context) {
  const auto tree = parse_ini(text, context);
  RunConfig config;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw usage_error(context + ": key '" + section + "' must live inside a section");
    }
    for (const auto& [key, value] : body) {
      const Option* opt = find_option(section, key);
      if (opt == nullptr) throw usage_error(context + ": unknown key '" + section + "." + key + "'");
      opt->set(config, value.data(), context + ": " + section + "." + key);
    }
  }
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw usage_error(path.string() + ": cannot open config file");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), path.string());
}

std::string to_ini(const RunConfig& config) {
  std::string out;
  std::string current;
  for (const auto& o : options()) {
    if (o.section != current) {
      if (!current.empty()) out += '\n';
      out += '[' + o.section + "]\n";
      current = o.section;
    }
    out += o.key + " = " + o.get(config) + '\n';
  }
  return out;
}

void write_run_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error(path.string() + ": cannot open for writing");
  out << to_ini(config);
}

std::string network_config_to_text(const NetworkConfig& network) {
  RunConfig c;
  c.train.network = network;
  std::string out = "[network]\n";
  for (const auto& o : options()) {
    if (o.section == "network") out += o.key + " = " + o.get(c) + '\n';
  }
  return out;
}

NetworkConfig network_config_from_text(const std::string& text) {
  const auto tree = parse_ini(text, "checkpoint config");
  const auto section = tree.get_child_optional("network");
  if (!section) throw data_error("checkpoint config has no [network] section");
  RunConfig c;
  for (const auto& [key, value] : *section) {
    const Option* opt = find_option("network", key);
    if (opt == nullptr) throw data_error("checkpoint config: unknown key 'network." + key + "'");
    opt->set(c, value.data(), "network." + key);
  }
  c.train.network.validate();
  return c.train.network;
}

}  // namespace ubr
