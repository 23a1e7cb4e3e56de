#include "specmon/spec_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "specmon/errors.hpp"

namespace specmon {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

int parse_int(const std::string& s, const std::string& key, int line) {
  int v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || p != end) {
    throw ConfigError("line " + std::to_string(line) + ": '" + key + "' expects an integer, got '" + s + "'");
  }
  return v;
}

IntRange parse_range(const std::string& value, const std::string& key, int line) {
  if (!value.empty() && value.front() == '[') {
    if (value.back() != ']') throw ConfigError("line " + std::to_string(line) + ": unterminated range for '" + key + "'");
    const auto inner = value.substr(1, value.size() - 2);
    const auto comma = inner.find(',');
    if (comma == std::string::npos) {
      throw ConfigError("line " + std::to_string(line) + ": range for '" + key + "' needs two values");
    }
    const IntRange r{parse_int(trim(inner.substr(0, comma)), key, line),
                     parse_int(trim(inner.substr(comma + 1)), key, line)};
    if (r.lo > r.hi) throw ConfigError("line " + std::to_string(line) + ": empty range for '" + key + "'");
    return r;
  }
  return IntRange::fixed(parse_int(value, key, line));
}

std::string format_range(IntRange r) {
  if (r.degenerate()) return std::to_string(r.lo);
  return "[" + std::to_string(r.lo) + ", " + std::to_string(r.hi) + "]";
}

}  // namespace

EnvSpec parse_spec(const std::string& text, const std::string& name) {
  EnvSpec spec;
  spec.name = name;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  std::map<std::string, int> seen;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const auto content = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line) + ": expected 'key = value'");
    const auto key = trim(content.substr(0, eq));
    auto value = trim(content.substr(eq + 1));
    if (seen.count(key)) throw ConfigError("line " + std::to_string(line) + ": duplicate key '" + key + "'");
    seen[key] = line;

    if (key == "number") {
      spec.number = parse_range(value, key, line);
    } else if (key == "width") {
      spec.width = parse_range(value, key, line);
    } else if (key == "period") {
      spec.period = parse_range(value, key, line);
    } else if (key == "duty_cycle") {
      spec.duty_cycle = parse_range(value, key, line);
    } else if (key == "freq") {
      std::string lower = value;
      std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
      if (lower == "random" || lower == "rand") {
        spec.freq.reset();
      } else {
        spec.freq = parse_range(value, key, line);
      }
    } else if (key == "start") {
      spec.start = parse_range(value, key, line);
    } else if (key == "n_bands") {
      spec.n_bands = parse_int(value, key, line);
    } else if (key == "n_classes") {
      spec.n_classes = parse_int(value, key, line);
    } else if (key == "change_prob") {
      try {
        std::size_t used = 0;
        spec.change_prob = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ConfigError("line " + std::to_string(line) + ": 'change_prob' expects a number, got '" + value + "'");
      }
    } else {
      throw ConfigError("line " + std::to_string(line) + ": unknown key '" + key + "'");
    }
  }
  return spec;
}

EnvSpec load_spec(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open spec file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  auto name = path;
  if (const auto slash = name.find_last_of('/'); slash != std::string::npos) name = name.substr(slash + 1);
  if (const auto dot = name.rfind('.'); dot != std::string::npos && dot > 0) name = name.substr(0, dot);
  try {
    return parse_spec(ss.str(), name);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string format_spec(const EnvSpec& spec) {
  std::ostringstream os;
  if (!spec.name.empty()) os << "# " << spec.name << "\n";
  os << "number = " << format_range(spec.number) << "\n"
     << "width = " << format_range(spec.width) << "\n"
     << "period = " << format_range(spec.period) << "\n"
     << "duty_cycle = " << format_range(spec.duty_cycle) << "\n"
     << "freq = " << (spec.freq ? format_range(*spec.freq) : std::string("random")) << "\n"
     << "start = " << format_range(spec.start) << "\n"
     << "n_bands = " << spec.n_bands << "\n"
     << "n_classes = " << spec.n_classes << "\n"
     << "change_prob = " << spec.change_prob << "\n";
  return os.str();
}

void write_truth_csv(std::ostream& os, const std::vector<std::vector<int>>& grid, int n_bands) {
  os << "t";
  for (int b = 0; b < n_bands; ++b) os << ",band_" << b;
  os << "\n";
  for (std::size_t t = 0; t < grid.size(); ++t) {
    os << t;
    for (int v : grid[t]) os << "," << v;
    os << "\n";
  }
}

std::vector<std::vector<int>> read_truth_csv(std::istream& is, int* n_bands_out) {
  std::string header;
  if (!std::getline(is, header)) throw ConfigError("truth csv: missing header");
  const int n_bands = static_cast<int>(std::count(header.begin(), header.end(), ','));
  if (header.rfind("t,band_0", 0) != 0 && n_bands > 0) throw ConfigError("truth csv: bad header");
  std::vector<std::vector<int>> grid;
  std::string line;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    std::vector<int> values;
    values.reserve(n_bands);
    while (std::getline(row, cell, ',')) values.push_back(parse_int(trim(cell), "cell", lineno));
    if (static_cast<int>(values.size()) != n_bands) {
      throw ConfigError("truth csv: row " + std::to_string(lineno) + " has wrong width");
    }
    grid.push_back(std::move(values));
  }
  if (n_bands_out) *n_bands_out = n_bands;
  return grid;
}

EnvSpec builtin_spec(const std::string& name) {
  EnvSpec s;
  s.name = name;
  s.freq.reset();
  s.start = IntRange::fixed(0);
  if (name == "A") {
    s.number = IntRange::fixed(2); s.width = IntRange::fixed(2); s.period = {8, 9}; s.duty_cycle = IntRange::fixed(4);
  } else if (name == "B1") {
    s.number = {1, 2}; s.width = {2, 3}; s.period = {8, 9}; s.duty_cycle = {4, 5};
  } else if (name == "B2") {
    s.number = {1, 2}; s.width = {2, 3}; s.period = {8, 9}; s.duty_cycle = {4, 5}; s.start = {0, 10};
  } else if (name == "C1") {
    s.number = {1, 2}; s.width = IntRange::fixed(3); s.period = {8, 9}; s.duty_cycle = IntRange::fixed(4);
  } else if (name == "C2") {
    s.number = IntRange::fixed(2); s.width = IntRange::fixed(2); s.period = {6, 9}; s.duty_cycle = {2, 5};
  } else if (name == "F1") {
    s.number = IntRange::fixed(1); s.width = IntRange::fixed(3); s.period = {8, 9}; s.duty_cycle = IntRange::fixed(4);
  } else if (name == "F2") {
    s.number = IntRange::fixed(2); s.width = IntRange::fixed(2); s.period = {8, 9}; s.duty_cycle = IntRange::fixed(7);
    s.start = {5, 10};
  } else if (name == "F3") {
    s.number = {1, 2}; s.width = {2, 3}; s.period = {6, 7}; s.duty_cycle = {3, 4}; s.start = {0, 5};
  } else if (name == "stationary") {
    s.number = {1, 3}; s.width = {2, 3}; s.period = {6, 10}; s.duty_cycle = {2, 5};
  } else if (name == "nonstationary") {
    s.number = IntRange::fixed(2); s.width = IntRange::fixed(2); s.period = {8, 9}; s.duty_cycle = IntRange::fixed(4);
    s.change_prob = 0.02;
  } else if (name == "multiclass") {
    s.number = {3, 6}; s.width = {2, 4}; s.period = {4, 12}; s.duty_cycle = {1, 3};
    s.n_bands = 100; s.n_classes = 3;
    s.class_period = {{4, 6}, {7, 9}, {10, 12}};
  } else {
    throw ConfigError("unknown built-in spec '" + name + "'");
  }
  return s;
}

std::vector<std::string> builtin_spec_names() {
  return {"A", "B1", "B2", "C1", "C2", "F1", "F2", "F3", "stationary", "nonstationary", "multiclass"};
}

}  // namespace specmon
