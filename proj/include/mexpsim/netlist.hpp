#pragma once

// SPICE-subset netlist front end: R/C/L elements, DC and piece-wise-linear
// V/I sources, .tran/.probe directives, plus a synthetic power-delivery-mesh
// generator for the stiff test circuits.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

namespace mexpsim {

struct ParseError : std::runtime_error {
  ParseError(int line_no, const std::string& token_text, const std::string& what_text)
      : std::runtime_error("line " + std::to_string(line_no) + ": " + what_text +
                           (token_text.empty() ? "" : " near '" + token_text + "'")),
        line(line_no),
        token(token_text) {}
  int line;
  std::string token;
};

/// Piece-wise-linear waveform. Times are strictly increasing; evaluation
/// holds the first value before the first point and the last value after the
/// last point.
struct PwlWaveform {
  std::vector<std::pair<double, double>> points;  // (seconds, value)

  static PwlWaveform dc(double value) { return {{{0.0, value}}}; }

  double eval(double t) const {
    const auto it = std::upper_bound(
        points.begin(), points.end(), t,
        [](double lhs, const std::pair<double, double>& p) { return lhs < p.first; });
    if (it == points.begin()) return points.front().second;
    if (it == points.end()) return points.back().second;
    const auto& lo = *(it - 1);
    const auto& hi = *it;
    const double u = (t - lo.first) / (hi.first - lo.first);
    return lo.second + u * (hi.second - lo.second);
  }

  bool operator==(const PwlWaveform&) const = default;
};

inline double pwl_eval(const PwlWaveform& w, double t) { return w.eval(t); }

/// Smallest source breakpoint strictly greater than t, if any.
inline std::optional<double> next_breakpoint(const std::vector<PwlWaveform>& sources, double t) {
  std::optional<double> best;
  for (const auto& w : sources)
    for (const auto& p : w.points)
      if (p.first > t) {
        if (!best || p.first < *best) best = p.first;
        break;  // points are increasing
      }
  return best;
}

enum class ElementKind { Resistor, Capacitor, Inductor, VoltageSource, CurrentSource };

struct Element {
  ElementKind kind = ElementKind::Resistor;
  std::string name;
  std::string node_pos;
  std::string node_neg;
  double value = 0.0;       // ohms / farads / henries for passives
  PwlWaveform source;       // V/I waveform (DC stored as a single point)
  bool source_is_dc = false;

  bool operator==(const Element&) const = default;
};

struct Netlist {
  std::vector<Element> elements;
  std::vector<std::string> probes;
  bool has_tran = false;
  double tstop = 0.0;
  double tstep = 0.0;  // suggested output interval; 0 when absent
};

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

/// Number with optional SPICE engineering suffix (f p n u m k meg g); any
/// trailing alphabetic unit letters are ignored, e.g. "10pF" == 10e-12.
inline double parse_spice_number(const std::string& token, int line_no) {
  double v = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr == first) throw ParseError(line_no, token, "expected a number");
  std::string rest = lower(std::string_view(ptr, static_cast<std::size_t>(last - ptr)));
  if (!rest.empty()) {
    double factor = 1.0;
    std::size_t used = 1;
    if (rest.rfind("meg", 0) == 0) {
      factor = 1e6;
      used = 3;
    } else {
      switch (rest[0]) {
        case 'f': factor = 1e-15; break;
        case 'p': factor = 1e-12; break;
        case 'n': factor = 1e-9; break;
        case 'u': factor = 1e-6; break;
        case 'm': factor = 1e-3; break;
        case 'k': factor = 1e3; break;
        case 'g': factor = 1e9; break;
        default:
          throw ParseError(line_no, token, "unknown suffix");
      }
    }
    for (std::size_t i = used; i < rest.size(); ++i)
      if (!std::isalpha(static_cast<unsigned char>(rest[i])))
        throw ParseError(line_no, token, "trailing characters after number");
    v *= factor;
  }
  return v;
}

inline std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t b = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > b) out.emplace_back(s.substr(b, i - b));
  }
  return out;
}

inline std::string format_double(double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

inline PwlWaveform parse_pwl_body(const std::string& body, int line_no) {
  std::string cleaned = body;
  std::replace(cleaned.begin(), cleaned.end(), ',', ' ');
  const auto toks = split_ws(cleaned);
  if (toks.empty() || toks.size() % 2 != 0)
    throw ParseError(line_no, body, "PWL needs an even number of values");
  PwlWaveform w;
  for (std::size_t i = 0; i < toks.size(); i += 2) {
    const double t = parse_spice_number(toks[i], line_no);
    const double v = parse_spice_number(toks[i + 1], line_no);
    if (!w.points.empty() && t <= w.points.back().first)
      throw ParseError(line_no, toks[i], "PWL times must be strictly increasing");
    w.points.emplace_back(t, v);
  }
  return w;
}

}  // namespace detail

inline Netlist parse_netlist(std::string_view text) {
  Netlist nl;
  std::unordered_set<std::string> names;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string_view::npos) continue;
    line.remove_prefix(first);
    if (line[0] == '*') continue;

    const char head = static_cast<char>(std::toupper(static_cast<unsigned char>(line[0])));
    if (head == '.') {
      const auto toks = detail::split_ws(line);
      const std::string dir = detail::lower(toks[0]);
      if (dir == ".tran") {
        if (toks.size() < 2 || toks.size() > 3)
          throw ParseError(line_no, std::string(line), ".tran expects <tstop> [<tstep>]");
        nl.has_tran = true;
        nl.tstop = detail::parse_spice_number(toks[1], line_no);
        nl.tstep = toks.size() == 3 ? detail::parse_spice_number(toks[2], line_no) : 0.0;
        if (nl.tstop <= 0.0) throw ParseError(line_no, toks[1], ".tran stop time must be positive");
      } else if (dir == ".probe") {
        if (toks.size() < 2) throw ParseError(line_no, std::string(line), ".probe expects node labels");
        for (std::size_t i = 1; i < toks.size(); ++i) nl.probes.push_back(toks[i]);
      } else if (dir == ".end") {
        break;
      } else {
        throw ParseError(line_no, toks[0], "unknown directive");
      }
      continue;
    }

    if (head != 'R' && head != 'C' && head != 'L' && head != 'V' && head != 'I')
      throw ParseError(line_no, std::string(line.substr(0, line.find_first_of(" \t"))),
                       "unknown element type");

    // Pull a PWL(...) group out before whitespace splitting.
    std::string pwl_body;
    bool has_pwl = false;
    std::string flat(line);
    {
      const std::string low = detail::lower(flat);
      std::size_t at = low.find("pwl");
      while (at != std::string::npos && at > 0 &&
             !std::isspace(static_cast<unsigned char>(low[at - 1])))
        at = low.find("pwl", at + 1);
      if (at != std::string::npos) {
        std::size_t open = flat.find('(', at);
        if (open == std::string::npos) throw ParseError(line_no, "PWL", "expected '(' after PWL");
        std::size_t close = flat.find(')', open);
        if (close == std::string::npos) throw ParseError(line_no, "PWL", "missing ')'");
        pwl_body = flat.substr(open + 1, close - open - 1);
        has_pwl = true;
        flat = flat.substr(0, at) + flat.substr(close + 1);
      }
    }
    auto toks = detail::split_ws(flat);
    if (toks.size() < 3) throw ParseError(line_no, std::string(line), "incomplete element line");

    Element e;
    e.name = toks[0];
    if (!names.insert(e.name).second)
      throw ParseError(line_no, e.name, "duplicate element name");
    e.node_pos = toks[1];
    e.node_neg = toks[2];

    switch (head) {
      case 'R': e.kind = ElementKind::Resistor; break;
      case 'C': e.kind = ElementKind::Capacitor; break;
      case 'L': e.kind = ElementKind::Inductor; break;
      case 'V': e.kind = ElementKind::VoltageSource; break;
      case 'I': e.kind = ElementKind::CurrentSource; break;
      default: break;
    }

    if (head == 'R' || head == 'C' || head == 'L') {
      if (toks.size() != 4) throw ParseError(line_no, std::string(line), "expected a single value");
      e.value = detail::parse_spice_number(toks[3], line_no);
      if (e.value <= 0.0) throw ParseError(line_no, toks[3], "non-positive passive value");
    } else {
      if (has_pwl) {
        if (toks.size() != 3) throw ParseError(line_no, std::string(line), "unexpected tokens around PWL");
        e.source = detail::parse_pwl_body(pwl_body, line_no);
        e.source_is_dc = false;
      } else if (toks.size() == 5 && detail::lower(toks[3]) == "dc") {
        e.source = PwlWaveform::dc(detail::parse_spice_number(toks[4], line_no));
        e.source_is_dc = true;
      } else if (toks.size() == 4) {
        e.source = PwlWaveform::dc(detail::parse_spice_number(toks[3], line_no));
        e.source_is_dc = true;
      } else {
        throw ParseError(line_no, std::string(line), "expected DC <value> or PWL(...)");
      }
    }
    nl.elements.push_back(std::move(e));
  }
  return nl;
}

inline std::string to_netlist_text(const Netlist& nl) {
  std::string out;
  for (const Element& e : nl.elements) {
    out += e.name + ' ' + e.node_pos + ' ' + e.node_neg;
    switch (e.kind) {
      case ElementKind::Resistor:
      case ElementKind::Capacitor:
      case ElementKind::Inductor:
        out += ' ' + detail::format_double(e.value);
        break;
      case ElementKind::VoltageSource:
      case ElementKind::CurrentSource:
        if (e.source_is_dc) {
          out += " DC " + detail::format_double(e.source.points.front().second);
        } else {
          out += " PWL(";
          for (std::size_t i = 0; i < e.source.points.size(); ++i) {
            if (i) out += ' ';
            out += detail::format_double(e.source.points[i].first) + ' ' +
                   detail::format_double(e.source.points[i].second);
          }
          out += ')';
        }
        break;
    }
    out += '\n';
  }
  if (nl.has_tran) {
    out += ".tran " + detail::format_double(nl.tstop);
    if (nl.tstep > 0.0) out += ' ' + detail::format_double(nl.tstep);
    out += '\n';
  }
  if (!nl.probes.empty()) {
    out += ".probe";
    for (const auto& p : nl.probes) out += ' ' + p;
    out += '\n';
  }
  return out;
}

/// Grid spec for generated power-delivery meshes. Resistances and
/// capacitances are sampled log-uniformly so a wide spread of per-node time
/// constants (stiffness) is reachable.
struct MeshSpec {
  int rows = 1;
  int cols = 1;
  double r_min = 1e-2;  // ohms
  double r_max = 1e2;
  double c_min = 1e-15;  // farads
  double c_max = 1e-12;
  PwlWaveform input{{{0.0, 0.0}, {1e-11, 1.0}}};  // 10 ps step by default
  std::uint64_t seed = 1;
  bool current_source = false;  // voltage source at the corner unless set
  double tstop = 1e-8;
  double tstep = 1e-10;
};

namespace detail {

struct LogUniform {
  std::mt19937_64& rng;
  double sample(double lo, double hi) {
    // 53-bit mantissa draw; avoids distribution-object portability issues.
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    if (lo == hi) return lo;
    return std::exp(std::log(lo) + u * (std::log(hi) - std::log(lo)));
  }
};

inline std::string mesh_node(int r, int c) {
  return "n" + std::to_string(r) + "_" + std::to_string(c);
}

}  // namespace detail

/// rows x cols RC mesh: adjacent nodes joined by resistors, a capacitor to
/// ground at every node, and one PWL source at corner (0,0). Deterministic
/// under a fixed seed; the probe defaults to the farthest corner.
inline Netlist generate_pdn_mesh(const MeshSpec& spec) {
  if (spec.rows < 1 || spec.cols < 1) throw std::invalid_argument("mesh: rows*cols must be >= 1");
  if (!(spec.r_min > 0.0) || spec.r_min > spec.r_max)
    throw std::invalid_argument("mesh: bad resistance range");
  if (!(spec.c_min > 0.0) || spec.c_min > spec.c_max)
    throw std::invalid_argument("mesh: bad capacitance range");
  if (spec.input.points.empty()) throw std::invalid_argument("mesh: empty input waveform");

  std::mt19937_64 rng(spec.seed);
  detail::LogUniform draw{rng};
  Netlist nl;

  Element src;
  src.name = spec.current_source ? "Iin" : "Vin";
  src.kind = spec.current_source ? ElementKind::CurrentSource : ElementKind::VoltageSource;
  if (spec.current_source) {
    src.node_pos = "0";  // inject into the corner node
    src.node_neg = detail::mesh_node(0, 0);
  } else {
    src.node_pos = detail::mesh_node(0, 0);
    src.node_neg = "0";
  }
  src.source = spec.input;
  nl.elements.push_back(std::move(src));

  for (int r = 0; r < spec.rows; ++r)
    for (int c = 0; c < spec.cols; ++c) {
      Element cap;
      cap.kind = ElementKind::Capacitor;
      cap.name = "C" + std::to_string(r) + "_" + std::to_string(c);
      cap.node_pos = detail::mesh_node(r, c);
      cap.node_neg = "0";
      cap.value = draw.sample(spec.c_min, spec.c_max);
      nl.elements.push_back(std::move(cap));
    }
  for (int r = 0; r < spec.rows; ++r)
    for (int c = 0; c + 1 < spec.cols; ++c) {
      Element res;
      res.kind = ElementKind::Resistor;
      res.name = "Rh" + std::to_string(r) + "_" + std::to_string(c);
      res.node_pos = detail::mesh_node(r, c);
      res.node_neg = detail::mesh_node(r, c + 1);
      res.value = draw.sample(spec.r_min, spec.r_max);
      nl.elements.push_back(std::move(res));
    }
  for (int r = 0; r + 1 < spec.rows; ++r)
    for (int c = 0; c < spec.cols; ++c) {
      Element res;
      res.kind = ElementKind::Resistor;
      res.name = "Rv" + std::to_string(r) + "_" + std::to_string(c);
      res.node_pos = detail::mesh_node(r, c);
      res.node_neg = detail::mesh_node(r + 1, c);
      res.value = draw.sample(spec.r_min, spec.r_max);
      nl.elements.push_back(std::move(res));
    }

  nl.probes.push_back(detail::mesh_node(spec.rows - 1, spec.cols - 1));
  nl.has_tran = true;
  nl.tstop = spec.tstop;
  nl.tstep = spec.tstep;
  return nl;
}

}  // namespace mexpsim
