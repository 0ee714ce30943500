#include "ltc/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace ltc {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
T parse_number(const std::string& value, const std::string& key, int line,
               T (*conv)(const std::string&, std::size_t*)) {
  try {
    std::size_t pos = 0;
    T out = conv(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("line " + std::to_string(line) + ": key '" + key +
                      "' has malformed value '" + value + "'");
  }
}

long long to_ll(const std::string& s, std::size_t* pos) { return std::stoll(s, pos); }
double to_d(const std::string& s, std::size_t* pos) { return std::stod(s, pos); }
unsigned long long to_ull(const std::string& s, std::size_t* pos) {
  return std::stoull(s, pos);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

// Setter registry: full key -> handler(value, line).
using Setter = std::function<void(const std::string&, int)>;

std::map<std::string, Setter> build_setters(ExperimentConfig& cfg) {
  std::map<std::string, Setter> s;
  auto ll = [](const std::string& v, const std::string& k, int line) {
    return parse_number<long long>(v, k, line, to_ll);
  };
  auto dd = [](const std::string& v, const std::string& k, int line) {
    return parse_number<double>(v, k, line, to_d);
  };
  auto uu = [](const std::string& v, const std::string& k, int line) {
    return parse_number<unsigned long long>(v, k, line, to_ull);
  };

  s["dataset.classes"] = [&cfg, ll](const std::string& v, int line) {
    cfg.dataset.classes = static_cast<int>(ll(v, "dataset.classes", line));
  };
  s["dataset.head_count"] = [&cfg, ll](const std::string& v, int line) {
    cfg.dataset.head_count = ll(v, "dataset.head_count", line);
  };
  s["dataset.imbalance_factor"] = [&cfg, dd](const std::string& v, int line) {
    cfg.dataset.imbalance_factor = dd(v, "dataset.imbalance_factor", line);
  };
  s["dataset.input_dim"] = [&cfg, ll](const std::string& v, int line) {
    cfg.dataset.input_dim = static_cast<int>(ll(v, "dataset.input_dim", line));
  };
  s["dataset.center_separation"] = [&cfg, dd](const std::string& v, int line) {
    cfg.dataset.center_separation = dd(v, "dataset.center_separation", line);
  };
  s["dataset.within_stddev"] = [&cfg, dd](const std::string& v, int line) {
    cfg.dataset.within_stddev = dd(v, "dataset.within_stddev", line);
  };
  s["dataset.test_per_class"] = [&cfg, ll](const std::string& v, int line) {
    cfg.dataset.test_per_class = static_cast<int>(ll(v, "dataset.test_per_class", line));
  };
  s["dataset.seed"] = [&cfg, uu](const std::string& v, int line) {
    cfg.dataset.seed = uu(v, "dataset.seed", line);
  };

  s["views.many_min"] = [&cfg, ll](const std::string& v, int line) {
    cfg.train.view_policy.many_min = ll(v, "views.many_min", line);
  };
  s["views.few_max"] = [&cfg, ll](const std::string& v, int line) {
    cfg.train.view_policy.few_max = ll(v, "views.few_max", line);
  };
  s["views.views_many"] = [&cfg, ll](const std::string& v, int line) {
    cfg.train.view_policy.views_many = static_cast<int>(ll(v, "views.views_many", line));
  };
  s["views.views_medium"] = [&cfg, ll](const std::string& v, int line) {
    cfg.train.view_policy.views_medium =
        static_cast<int>(ll(v, "views.views_medium", line));
  };
  s["views.views_few"] = [&cfg, ll](const std::string& v, int line) {
    cfg.train.view_policy.views_few = static_cast<int>(ll(v, "views.views_few", line));
  };
  s["views.noise_scales"] = [&cfg, dd](const std::string& v, int line) {
    std::vector<double> scales;
    for (const auto& tok : split_list(v))
      scales.push_back(dd(tok, "views.noise_scales", line));
    if (scales.empty())
      throw ConfigError("line " + std::to_string(line) +
                        ": key 'views.noise_scales' needs at least one value");
    cfg.train.view_policy.noise_scales = std::move(scales);
  };
  s["views.uniform_views"] = [&cfg, ll](const std::string& v, int line) {
    cfg.train.uniform_views = static_cast<int>(ll(v, "views.uniform_views", line));
  };

  s["train.epochs"] = [&cfg, ll](const std::string& v, int line) {
    cfg.train.epochs = static_cast<int>(ll(v, "train.epochs", line));
  };
  s["train.batch_base"] = [&cfg, ll](const std::string& v, int line) {
    cfg.train.batch_base = static_cast<std::size_t>(ll(v, "train.batch_base", line));
  };
  s["train.learning_rate"] = [&cfg, dd](const std::string& v, int line) {
    cfg.train.learning_rate = dd(v, "train.learning_rate", line);
  };
  s["train.momentum"] = [&cfg, dd](const std::string& v, int line) {
    cfg.train.momentum = dd(v, "train.momentum", line);
  };
  s["train.weight_decay"] = [&cfg, dd](const std::string& v, int line) {
    cfg.train.weight_decay = dd(v, "train.weight_decay", line);
  };
  s["train.alpha"] = [&cfg, dd](const std::string& v, int line) {
    cfg.train.alpha = dd(v, "train.alpha", line);
  };
  s["train.tau"] = [&cfg, dd](const std::string& v, int line) {
    cfg.train.tau = dd(v, "train.tau", line);
  };
  s["train.classifier_tau"] = [&cfg, dd](const std::string& v, int line) {
    cfg.train.classifier_tau = dd(v, "train.classifier_tau", line);
  };
  s["train.center_momentum"] = [&cfg, dd](const std::string& v, int line) {
    cfg.train.center_momentum = dd(v, "train.center_momentum", line);
  };
  s["train.loss_kind"] = [&cfg](const std::string& v, int line) {
    try {
      cfg.train.loss_kind = parse_loss_kind(v);
    } catch (const std::exception& e) {
      throw ConfigError("line " + std::to_string(line) + ": " + e.what());
    }
  };
  s["train.view_mode"] = [&cfg](const std::string& v, int line) {
    if (v == "by_kind") cfg.train.view_mode = ViewMode::by_kind;
    else if (v == "uniform") cfg.train.view_mode = ViewMode::uniform;
    else if (v == "aware") cfg.train.view_mode = ViewMode::aware;
    else
      throw ConfigError("line " + std::to_string(line) +
                        ": key 'train.view_mode' must be by_kind, uniform or aware");
  };
  s["train.lr_decay_epochs"] = [&cfg, ll](const std::string& v, int line) {
    cfg.train.lr_decay_epochs.clear();
    for (const auto& tok : split_list(v))
      cfg.train.lr_decay_epochs.push_back(
          static_cast<int>(ll(tok, "train.lr_decay_epochs", line)));
  };
  s["train.lr_decay_factor"] = [&cfg, dd](const std::string& v, int line) {
    cfg.train.lr_decay_factor = dd(v, "train.lr_decay_factor", line);
  };
  s["train.seed"] = [&cfg, uu](const std::string& v, int line) {
    cfg.train.seed = uu(v, "train.seed", line);
  };
  s["train.hidden_dims"] = [&cfg, ll](const std::string& v, int line) {
    cfg.train.encoder.hidden.clear();
    for (const auto& tok : split_list(v))
      cfg.train.encoder.hidden.push_back(
          static_cast<int>(ll(tok, "train.hidden_dims", line)));
  };
  s["train.embedding_dim"] = [&cfg, ll](const std::string& v, int line) {
    cfg.train.encoder.embedding_dim =
        static_cast<int>(ll(v, "train.embedding_dim", line));
  };

  s["run.output_dir"] = [&cfg](const std::string& v, int) { cfg.output_dir = v; };
  s["run.seeds"] = [&cfg, uu](const std::string& v, int line) {
    cfg.seeds.clear();
    for (const auto& tok : split_list(v)) cfg.seeds.push_back(uu(tok, "run.seeds", line));
  };
  s["run.diagnose_batches"] = [&cfg, ll](const std::string& v, int line) {
    cfg.diagnose_batches = static_cast<int>(ll(v, "run.diagnose_batches", line));
  };
  return s;
}

void finalize(ExperimentConfig& cfg) {
  cfg.train.encoder.input_dim = cfg.dataset.input_dim;
  if (cfg.seeds.empty()) cfg.seeds.push_back(cfg.train.seed);
  try {
    cfg.train.view_policy.validate();
    const int uni = cfg.train.uniform_views;
    if (uni < 1 || static_cast<std::size_t>(uni) >
                       cfg.train.view_policy.noise_scales.size())
      throw std::invalid_argument("uniform_views exceeds configured noise scales");
    if (cfg.train.epochs < 0) throw std::invalid_argument("negative epochs");
    if (cfg.train.batch_base < 2)
      throw std::invalid_argument("batch_base must be at least 2");
    if (cfg.train.alpha < 0.0) throw std::invalid_argument("negative alpha");
    if (!(cfg.train.tau > 0.0)) throw std::invalid_argument("tau must be positive");
    if (cfg.train.learning_rate < 0.0)
      throw std::invalid_argument("negative learning rate");
    if (cfg.dataset.classes < 2)
      throw std::invalid_argument("dataset needs at least two classes");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
}

void apply_line(std::map<std::string, Setter>& setters, const std::string& full_key,
                const std::string& value, int line) {
  auto it = setters.find(full_key);
  if (it == setters.end())
    throw ConfigError("line " + std::to_string(line) + ": unknown key '" +
                      full_key + "'");
  it->second(value, line);
}

}  // namespace

ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  finalize(cfg);
  return cfg;
}

ExperimentConfig parse_experiment_text(const std::string& text,
                                       std::span<const std::string> overrides) {
  ExperimentConfig cfg;
  auto setters = build_setters(cfg);

  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(line_no) +
                          ": malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError("line " + std::to_string(line_no) + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (section.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": key '" + key +
                        "' appears before any [section]");
    apply_line(setters, section + "." + key, value, line_no);
  }

  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override '" + ov + "' is not of the form section.key=value");
    const std::string key = trim(ov.substr(0, eq));
    const std::string value = trim(ov.substr(eq + 1));
    apply_line(setters, key, value, 0);
  }

  finalize(cfg);
  return cfg;
}

ExperimentConfig parse_experiment_file(const std::string& path,
                                       std::span<const std::string> overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_experiment_text(buffer.str(), overrides);
}

std::string canonical_config(const ExperimentConfig& cfg) {
  std::map<std::string, std::string> kv;
  kv["dataset.classes"] = std::to_string(cfg.dataset.classes);
  kv["dataset.head_count"] = std::to_string(cfg.dataset.head_count);
  kv["dataset.imbalance_factor"] = fmt_double(cfg.dataset.imbalance_factor);
  kv["dataset.input_dim"] = std::to_string(cfg.dataset.input_dim);
  kv["dataset.center_separation"] = fmt_double(cfg.dataset.center_separation);
  kv["dataset.within_stddev"] = fmt_double(cfg.dataset.within_stddev);
  kv["dataset.test_per_class"] = std::to_string(cfg.dataset.test_per_class);
  kv["dataset.seed"] = std::to_string(cfg.dataset.seed);

  kv["views.many_min"] = std::to_string(cfg.train.view_policy.many_min);
  kv["views.few_max"] = std::to_string(cfg.train.view_policy.few_max);
  kv["views.views_many"] = std::to_string(cfg.train.view_policy.views_many);
  kv["views.views_medium"] = std::to_string(cfg.train.view_policy.views_medium);
  kv["views.views_few"] = std::to_string(cfg.train.view_policy.views_few);
  {
    std::string scales;
    for (double x : cfg.train.view_policy.noise_scales) {
      if (!scales.empty()) scales += ',';
      scales += fmt_double(x);
    }
    kv["views.noise_scales"] = scales;
  }
  kv["views.uniform_views"] = std::to_string(cfg.train.uniform_views);

  kv["train.epochs"] = std::to_string(cfg.train.epochs);
  kv["train.batch_base"] = std::to_string(cfg.train.batch_base);
  kv["train.learning_rate"] = fmt_double(cfg.train.learning_rate);
  kv["train.momentum"] = fmt_double(cfg.train.momentum);
  kv["train.weight_decay"] = fmt_double(cfg.train.weight_decay);
  kv["train.alpha"] = fmt_double(cfg.train.alpha);
  kv["train.tau"] = fmt_double(cfg.train.tau);
  kv["train.classifier_tau"] = fmt_double(cfg.train.classifier_tau);
  kv["train.center_momentum"] = fmt_double(cfg.train.center_momentum);
  kv["train.loss_kind"] = to_string(cfg.train.loss_kind);
  switch (cfg.train.view_mode) {
    case ViewMode::by_kind: kv["train.view_mode"] = "by_kind"; break;
    case ViewMode::uniform: kv["train.view_mode"] = "uniform"; break;
    case ViewMode::aware: kv["train.view_mode"] = "aware"; break;
  }
  {
    std::string decays;
    for (int e : cfg.train.lr_decay_epochs) {
      if (!decays.empty()) decays += ',';
      decays += std::to_string(e);
    }
    kv["train.lr_decay_epochs"] = decays;
  }
  kv["train.lr_decay_factor"] = fmt_double(cfg.train.lr_decay_factor);
  kv["train.seed"] = std::to_string(cfg.train.seed);
  {
    std::string hidden;
    for (int w : cfg.train.encoder.hidden) {
      if (!hidden.empty()) hidden += ',';
      hidden += std::to_string(w);
    }
    kv["train.hidden_dims"] = hidden;
  }
  kv["train.embedding_dim"] = std::to_string(cfg.train.encoder.embedding_dim);

  // The [run] section (output location, sweep seeds, diagnose batch count)
  // is operational, not part of the experiment's identity, so it stays out
  // of the canonical form and the hash.

  std::string out;
  for (const auto& [k, v] : kv) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

std::uint64_t fnv1a64(std::span<const char> bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  const std::string text = canonical_config(cfg);
  return fnv1a64({text.data(), text.size()});
}

}  // namespace ltc
