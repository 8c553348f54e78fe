#include "hopelab/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "hopelab/error.hpp"

namespace hope {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(std::string(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  s = std::string_view(s).substr(0, s.size());
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if constexpr (std::is_floating_point_v<T>) {
    // strtod handles inf/nan and exponents uniformly.
    std::string tmp(s);
    char* end = nullptr;
    const double v = std::strtod(tmp.c_str(), &end);
    if (end != tmp.c_str() + tmp.size()) return std::nullopt;
    return static_cast<T>(v);
  } else {
    T v{};
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
    return v;
  }
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

// ------------------------------------------------------------ FlatConfig

FlatConfig FlatConfig::parse(std::string_view text) {
  FlatConfig cfg;
  int lineno = 0;
  for (const auto& raw_line : split(text, '\n')) {
    ++lineno;
    std::string line = raw_line;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno), "expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno), "empty key");
    if (cfg.values_.count(key)) throw ConfigError(key, "duplicate key");
    cfg.values_[key] = value;
  }
  return cfg;
}

FlatConfig FlatConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

const std::string& FlatConfig::raw(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "missing required field");
  used_[key] = true;
  return it->second;
}

std::string FlatConfig::str(const std::string& key) const {
  const auto& v = raw(key);
  if (v.empty()) throw ConfigError(key, "empty value");
  return v;
}

int FlatConfig::integer(const std::string& key) const {
  const auto v = parse_number<int>(raw(key));
  if (!v) throw ConfigError(key, "expected an integer, got '" + raw(key) + "'");
  return *v;
}

std::uint64_t FlatConfig::u64(const std::string& key) const {
  const auto v = parse_number<std::uint64_t>(raw(key));
  if (!v) throw ConfigError(key, "expected a non-negative integer, got '" + raw(key) + "'");
  return *v;
}

double FlatConfig::real(const std::string& key) const {
  const auto v = parse_number<double>(raw(key));
  if (!v || !std::isfinite(*v)) throw ConfigError(key, "expected a number, got '" + raw(key) + "'");
  return *v;
}

bool FlatConfig::boolean(const std::string& key) const {
  const auto& v = raw(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key, "expected true/false, got '" + v + "'");
}

std::vector<std::string> FlatConfig::list(const std::string& key) const {
  std::vector<std::string> out;
  for (auto& item : split(raw(key), ',')) {
    auto t = trim(item);
    if (t.empty()) throw ConfigError(key, "empty list element");
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<int> FlatConfig::int_list(const std::string& key) const {
  std::vector<int> out;
  for (const auto& item : list(key)) {
    const auto v = parse_number<int>(item);
    if (!v) throw ConfigError(key, "expected integers, got '" + item + "'");
    out.push_back(*v);
  }
  return out;
}

std::vector<std::uint64_t> FlatConfig::u64_list(const std::string& key) const {
  std::vector<std::uint64_t> out;
  for (const auto& item : list(key)) {
    const auto v = parse_number<std::uint64_t>(item);
    if (!v) throw ConfigError(key, "expected non-negative integers, got '" + item + "'");
    out.push_back(*v);
  }
  return out;
}

std::string FlatConfig::str_or(const std::string& key, std::string fallback) const {
  return has(key) ? str(key) : fallback;
}
int FlatConfig::integer_or(const std::string& key, int fallback) const {
  return has(key) ? integer(key) : fallback;
}
double FlatConfig::real_or(const std::string& key, double fallback) const {
  return has(key) ? real(key) : fallback;
}
bool FlatConfig::boolean_or(const std::string& key, bool fallback) const {
  return has(key) ? boolean(key) : fallback;
}

std::vector<std::string> FlatConfig::unused() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) {
    if (!used_.count(k)) out.push_back(k);
  }
  return out;
}

// ------------------------------------------------------------------- CSV

std::string fmt_double(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

CsvTable read_csv(const std::filesystem::path& path,
                  const std::vector<std::string>& numeric_columns) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) {
    throw FormatError(path.string() + " has no header row");
  }
  for (auto& h : split(trim(line), ',')) t.header.push_back(trim(h));
  std::vector<int> numeric;
  for (const auto& c : numeric_columns) {
    const auto it = std::find(t.header.begin(), t.header.end(), c);
    if (it == t.header.end()) throw FormatError(path.string() + " lacks column " + c);
    numeric.push_back(static_cast<int>(it - t.header.begin()));
  }
  while (std::getline(in, line)) {
    const auto trimmed = trim(line);
    if (trimmed.empty()) continue;
    auto fields = split(trimmed, ',');
    bool ok = fields.size() == t.header.size();
    for (int c : numeric) {
      if (!ok) break;
      const auto v = parse_number<double>(fields[c]);
      ok = v && std::isfinite(*v);
    }
    if (!ok) {
      ++t.skipped;
      continue;
    }
    for (auto& f : fields) f = trim(f);
    t.rows.push_back(std::move(fields));
  }
  return t;
}

int column_index(const CsvTable& table, std::string_view name) {
  const auto it = std::find(table.header.begin(), table.header.end(), name);
  if (it == table.header.end()) throw FormatError("missing column " + std::string(name));
  return static_cast<int>(it - table.header.begin());
}

// ------------------------------------------------------------------- SVG

std::string svg_line_chart(const std::vector<ChartSeries>& series, const std::string& title,
                           const std::string& x_label, const std::string& y_label) {
  constexpr double W = 720, H = 420, left = 70, right = 160, top = 40, bottom = 50;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << xml_escape(title) << "</text>\n";
  o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = x0 + (x1 - x0) * t / 4, yv = y0 + (y1 - y0) * t / 4;
    o << "<text x=\"" << px(xv) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">"
      << fmt_double(xv, 4) << "</text>\n";
    o << "<text x=\"" << left - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">"
      << fmt_double(yv, 4) << "</text>\n";
  }
  o << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
    << xml_escape(x_label) << "</text>\n";
  o << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << top + ph / 2 << ")\">" << xml_escape(y_label) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = colors[s % 10];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    const auto& sr = series[s];
    for (std::size_t i = 0; i < sr.x.size() && i < sr.y.size(); ++i) {
      if (!std::isfinite(sr.x[i]) || !std::isfinite(sr.y[i])) continue;
      o << fmt_double(px(sr.x[i]), 6) << ',' << fmt_double(py(sr.y[i]), 6) << ' ';
    }
    o << "\"/>\n";
    const double ly = top + 14 + 16.0 * s;
    o << "<line x1=\"" << W - right + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - right + 30
      << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << W - right + 36 << "\" y=\"" << ly + 4 << "\">" << xml_escape(sr.label)
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace hope
