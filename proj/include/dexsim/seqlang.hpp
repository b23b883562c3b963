#pragma once

// The .dexseq pulse-sequence format.
//
//   # comment
//   format = 1
//   rep_rate = 76 MHz           (or rep_period = 13.2 ns)
//   t_end = 100 ns
//   t2_star = 100 ns            (any SystemParams field)
//   pulse pump { t0 = 0 ns; duration = 60 ns; shape = square
//                transition = VAC_DE; polarization = H; area = pi }
//
// Separators are newlines or ';'. Units: ns, ps, us (time); ueV (energy);
// MHz (rate); /ns (cw Rabi frequency, key `power`). Areas are `pi`, `<k>pi`,
// `<k> pi` or radians (optionally `rad`).

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dexsim/physics.hpp"
#include "dexsim/pulses.hpp"

namespace dexsim {

class ParseError : public Error {
 public:
  ParseError(int line, int col, const std::string& msg)
      : Error("line " + std::to_string(line) + ", col " + std::to_string(col) + ": " + msg),
        line_(line),
        col_(col),
        msg_(msg) {}
  int line() const { return line_; }
  int column() const { return col_; }
  const std::string& message() const { return msg_; }

 private:
  int line_, col_;
  std::string msg_;
};

struct SeqDocument {
  int format = 1;
  std::optional<double> rep_rate_mhz;
  std::optional<double> rep_period;
  std::optional<double> t_end;
  std::optional<std::uint64_t> seed;
  std::optional<int> trajectories;
  std::map<std::string, double> overrides;  // SystemParams fields, internal units
  std::vector<Pulse> pulses;                // t0 order

  bool operator==(const SeqDocument&) const = default;
};

struct ParsedSequence {
  SeqDocument doc;
  PulseSequence seq;
  SystemParams params;
};

namespace seq_detail {

enum class Tok { kWord, kEq, kLBrace, kRBrace, kSep, kEnd };

struct Token {
  Tok kind;
  std::string text;
  int line, col;
};

inline std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  int line = 1, col = 1;
  std::size_t i = 0;
  auto special = [](char c) {
    return c == '=' || c == '{' || c == '}' || c == ';' || c == '#' || c == '\n' || c == ' ' || c == '\t' ||
           c == '\r';
  };
  while (i < s.size()) {
    const char c = s[i];
    if (c == '#') {
      while (i < s.size() && s[i] != '\n') ++i, ++col;
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\r') {
      ++i, ++col;
      continue;
    }
    if (c == '\n' || c == ';') {
      out.push_back({Tok::kSep, std::string(1, c), line, col});
      ++i;
      if (c == '\n') ++line, col = 1;
      else ++col;
      continue;
    }
    if (c == '=' || c == '{' || c == '}') {
      out.push_back({c == '=' ? Tok::kEq : (c == '{' ? Tok::kLBrace : Tok::kRBrace), std::string(1, c), line, col});
      ++i, ++col;
      continue;
    }
    const int c0 = col;
    std::size_t j = i;
    while (j < s.size() && !special(s[j])) {
      const auto u = static_cast<unsigned char>(s[j]);
      if (u < 0x20 || u == 0x7f) throw ParseError(line, col + static_cast<int>(j - i), "control character in input");
      ++j;
    }
    out.push_back({Tok::kWord, std::string(s.substr(i, j - i)), line, c0});
    col += static_cast<int>(j - i);
    i = j;
  }
  out.push_back({Tok::kEnd, "", line, col});
  return out;
}

inline std::optional<double> to_number(std::string_view w) {
  if (w == "inf" || w == "+inf") return kInf;
  if (w.empty()) return std::nullopt;
  if (w.front() == '+') w.remove_prefix(1);
  double v = 0.0;
  const auto [p, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
  if (ec != std::errc() || p != w.data() + w.size() || std::isnan(v)) return std::nullopt;
  return v;
}

inline std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// A `key = value [unit]` line.
struct Assignment {
  std::string key;
  std::string value;
  std::optional<std::string> unit;
  int line, col, value_col;
};

enum class Dim { kTime, kEnergy, kNone, kInt };

// Known SystemParams override keys.
inline const std::map<std::string, Dim>& param_keys() {
  static const std::map<std::string, Dim> k = {
      {"tau_de", Dim::kTime},      {"tau_be", Dim::kTime},      {"t_larmor_de", Dim::kTime},
      {"tau_xx_ss", Dim::kTime},   {"tau_xx_sp", Dim::kTime},   {"tau_hh", Dim::kTime},
      {"t_larmor_xx", Dim::kTime}, {"t2_star", Dim::kTime},     {"irf_fwhm", Dim::kTime},
      {"efficiency", Dim::kNone},  {"h_planck", Dim::kNone},
  };
  return k;
}

inline double* param_field(SystemParams& p, const std::string& k) {
  if (k == "tau_de") return &p.tau_de;
  if (k == "tau_be") return &p.tau_be;
  if (k == "t_larmor_de") return &p.t_larmor_de;
  if (k == "tau_xx_ss") return &p.tau_xx_ss;
  if (k == "tau_xx_sp") return &p.tau_xx_sp;
  if (k == "tau_hh") return &p.tau_hh;
  if (k == "t_larmor_xx") return &p.t_larmor_xx;
  if (k == "t2_star") return &p.t2_star;
  if (k == "irf_fwhm") return &p.irf_fwhm;
  if (k == "efficiency") return &p.efficiency;
  if (k == "h_planck") return &p.h_planck;
  return nullptr;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : toks_(tokenize(text)) {}

  ParsedSequence run() {
    SeqDocument doc;
    std::set<std::string> seen_globals;
    std::set<std::string> names;
    std::vector<std::pair<Pulse, int>> pulses;  // with block line
    std::map<std::string, int> global_lines;
    for (;;) {
      const Token& t = peek();
      if (t.kind == Tok::kEnd) break;
      if (t.kind == Tok::kSep) {
        ++pos_;
        continue;
      }
      if (t.kind != Tok::kWord) throw ParseError(t.line, t.col, "expected a key or 'pulse', found '" + t.text + "'");
      if (t.text == "pulse" && peek(1).kind == Tok::kWord) {
        const int line = t.line;
        Pulse p = pulse_block(names);
        pulses.emplace_back(std::move(p), line);
        continue;
      }
      const Assignment a = assignment();
      if (!seen_globals.insert(a.key).second) throw ParseError(a.line, a.col, "duplicate key '" + a.key + "'");
      global_lines[a.key] = a.line;
      global(doc, a);
    }
    if (doc.rep_rate_mhz && doc.rep_period)
      throw ParseError(std::max(global_lines["rep_rate"], global_lines["rep_period"]), 1,
                       "rep_rate and rep_period are mutually exclusive");

    std::stable_sort(pulses.begin(), pulses.end(),
                     [](const auto& a, const auto& b) { return a.first.t0 < b.first.t0; });
    for (auto& [p, l] : pulses) doc.pulses.push_back(p);

    ParsedSequence out;
    out.doc = doc;
    out.params = default_params();
    for (const auto& [k, v] : doc.overrides) *param_field(out.params, k) = v;
    try {
      out.params.validate();
    } catch (const ValidationError& e) {
      int line = 1;
      for (const auto& [k, l] : global_lines)
        if (std::string(e.what()).find(k) != std::string::npos) line = l;
      throw ParseError(line, 1, std::string("invalid parameters: ") + e.what());
    }
    out.seq = build(doc);
    try {
      out.seq.validate();
    } catch (const ValidationError& e) {
      const std::string msg = e.what();
      int line = 0;
      for (const auto& [p, l] : pulses)
        if (msg.find("'" + p.name + "'") != std::string::npos) line = std::max(line, l);
      if (line == 0) {
        for (const char* k : {"t_end", "rep_rate", "rep_period"})
          if (global_lines.count(k)) line = std::max(line, global_lines[k]);
      }
      throw ParseError(std::max(line, 1), 1, "invalid sequence: " + msg);
    }
    return out;
  }

  static PulseSequence build(const SeqDocument& doc) {
    PulseSequence s;
    s.pulses = doc.pulses;
    if (doc.rep_rate_mhz) s.rep_period = 1000.0 / *doc.rep_rate_mhz;
    else if (doc.rep_period) s.rep_period = *doc.rep_period;
    double latest = 0.0;
    for (const auto& p : s.pulses) latest = std::max(latest, p.t0 + p.duration);
    s.t_end = doc.t_end ? *doc.t_end : latest;
    return s;
  }

 private:
  const Token& peek(std::size_t k = 0) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }

  Assignment assignment() {
    const Token key = toks_[pos_++];
    if (key.kind != Tok::kWord) throw ParseError(key.line, key.col, "expected a key");
    const Token& eq = peek();
    if (eq.kind != Tok::kEq) throw ParseError(eq.line, eq.col, "expected '=' after '" + key.text + "'");
    ++pos_;
    const Token& val = peek();
    if (val.kind != Tok::kWord) throw ParseError(val.line, val.col, "missing value for '" + key.text + "'");
    ++pos_;
    Assignment a{key.text, val.text, std::nullopt, key.line, key.col, val.col};
    if (peek().kind == Tok::kWord) a.unit = toks_[pos_++].text;
    const Token& end = peek();
    if (end.kind == Tok::kWord) throw ParseError(end.line, end.col, "unexpected '" + end.text + "'");
    if (end.kind == Tok::kEq) throw ParseError(end.line, end.col, "unexpected '='");
    if (end.kind == Tok::kLBrace) throw ParseError(end.line, end.col, "unexpected '{'");
    return a;
  }

  static double number(const Assignment& a) {
    const auto v = to_number(a.value);
    if (!v) throw ParseError(a.line, a.value_col, "'" + a.value + "' is not a number");
    return *v;
  }

  static void no_unit(const Assignment& a) {
    if (a.unit) throw ParseError(a.line, a.value_col, "unit mismatch: '" + a.key + "' takes no unit");
  }

  static double time(const Assignment& a) {
    const double v = number(a);
    if (!a.unit) throw ParseError(a.line, a.value_col, "missing time unit (ns, ps, us) for '" + a.key + "'");
    if (*a.unit == "ns") return v;
    if (*a.unit == "ps") return v / 1000.0;
    if (*a.unit == "us") return v * 1000.0;
    throw ParseError(a.line, a.value_col, "unit mismatch: '" + *a.unit + "' is not a time unit");
  }

  static double energy(const Assignment& a) {
    const double v = number(a);
    if (!a.unit || *a.unit != "ueV") throw ParseError(a.line, a.value_col, "unit mismatch: '" + a.key + "' needs ueV");
    return v;
  }

  static std::int64_t integer(const Assignment& a, std::int64_t lo) {
    no_unit(a);
    std::int64_t v = 0;
    const auto [p, ec] = std::from_chars(a.value.data(), a.value.data() + a.value.size(), v);
    if (ec != std::errc() || p != a.value.data() + a.value.size() || v < lo)
      throw ParseError(a.line, a.value_col, "'" + a.key + "' needs an integer >= " + std::to_string(lo));
    return v;
  }

  static double area(const Assignment& a) {
    std::string v = a.value;
    bool times_pi = false;
    if (a.unit) {
      if (*a.unit == "pi") times_pi = true;
      else if (*a.unit != "rad") throw ParseError(a.line, a.value_col, "unit mismatch: area takes pi or rad");
    }
    if (!times_pi && v.size() >= 2 && v.compare(v.size() - 2, 2, "pi") == 0) {
      if (a.unit) throw ParseError(a.line, a.value_col, "unit mismatch: area already in units of pi");
      times_pi = true;
      v.resize(v.size() - 2);
      if (!v.empty() && v.back() == '*') v.pop_back();
      if (v.empty() || v == "+") v = "1";
      else if (v == "-") v = "-1";
    }
    const auto k = to_number(v);
    if (!k || std::isinf(*k)) throw ParseError(a.line, a.value_col, "'" + a.value + "' is not a valid area");
    return times_pi ? *k * kPi : *k;
  }

  void global(SeqDocument& doc, const Assignment& a) {
    if (a.key == "format") {
      if (integer(a, 0) != 1) throw ParseError(a.line, a.value_col, "unsupported format version");
      doc.format = 1;
    } else if (a.key == "rep_rate") {
      const double v = number(a);
      if (!a.unit || *a.unit != "MHz") throw ParseError(a.line, a.value_col, "unit mismatch: rep_rate needs MHz");
      if (!(v > 0.0) || std::isinf(v)) throw ParseError(a.line, a.value_col, "rep_rate must be > 0");
      doc.rep_rate_mhz = v;
    } else if (a.key == "rep_period") {
      const double v = time(a);
      if (!(v >= 0.0) || std::isinf(v)) throw ParseError(a.line, a.value_col, "rep_period must be >= 0");
      doc.rep_period = v;
    } else if (a.key == "t_end") {
      const double v = time(a);
      if (!(v >= 0.0) || std::isinf(v)) throw ParseError(a.line, a.value_col, "t_end must be >= 0");
      doc.t_end = v;
    } else if (a.key == "seed") {
      no_unit(a);
      std::uint64_t v = 0;
      const auto [p, ec] = std::from_chars(a.value.data(), a.value.data() + a.value.size(), v);
      if (ec != std::errc() || p != a.value.data() + a.value.size())
        throw ParseError(a.line, a.value_col, "seed must be a nonnegative integer");
      doc.seed = v;
    } else if (a.key == "trajectories") {
      const auto v = integer(a, 1);
      if (v > 1'000'000'000) throw ParseError(a.line, a.value_col, "trajectories too large");
      doc.trajectories = static_cast<int>(v);
    } else if (auto it = param_keys().find(a.key); it != param_keys().end()) {
      double v = 0.0;
      if (it->second == Dim::kTime) v = time(a);
      else if (a.key == "h_planck") {
        if (!a.unit || *a.unit != "ueV*ns") throw ParseError(a.line, a.value_col, "unit mismatch: h_planck needs ueV*ns");
        v = number(a);
      } else {
        no_unit(a);
        v = number(a);
      }
      doc.overrides[a.key] = v;
    } else if (a.key == "delta_de") {
      throw ParseError(a.line, a.col, "delta_de is derived from t_larmor_de and cannot be set");
    } else {
      throw ParseError(a.line, a.col, "unknown key '" + a.key + "'");
    }
  }

  Pulse pulse_block(std::set<std::string>& names) {
    const Token kw = toks_[pos_++];
    const Token name = toks_[pos_++];
    if (!valid_name(name.text)) throw ParseError(name.line, name.col, "invalid pulse name '" + name.text + "'");
    if (!names.insert(name.text).second)
      throw ParseError(name.line, name.col, "duplicate pulse name '" + name.text + "'");
    if (peek().kind != Tok::kLBrace) throw ParseError(peek().line, peek().col, "expected '{' after pulse name");
    ++pos_;
    std::map<std::string, Assignment> kv;
    for (;;) {
      const Token& t = peek();
      if (t.kind == Tok::kRBrace) break;
      if (t.kind == Tok::kSep) {
        ++pos_;
        continue;
      }
      if (t.kind == Tok::kEnd) throw ParseError(kw.line, kw.col, "unterminated pulse block '" + name.text + "'");
      if (t.kind != Tok::kWord) throw ParseError(t.line, t.col, "expected a key, found '" + t.text + "'");
      Assignment a = assignment();
      if (!kv.emplace(a.key, a).second) throw ParseError(a.line, a.col, "duplicate key '" + a.key + "'");
    }
    const Token close = toks_[pos_++];
    const Token& after = peek();
    if (after.kind != Tok::kSep && after.kind != Tok::kEnd)
      throw ParseError(after.line, after.col, "expected end of line after '}'");

    static const std::set<std::string> known = {"t0",    "duration", "shape",    "transition", "polarization",
                                                "area", "power",    "detuning", "bandwidth"};
    for (const auto& [k, a] : kv)
      if (!known.count(k)) throw ParseError(a.line, a.col, "unknown pulse key '" + k + "'");
    auto require = [&](const char* k) -> const Assignment& {
      auto it = kv.find(k);
      if (it == kv.end())
        throw ParseError(close.line, close.col, "pulse '" + name.text + "' is missing required key '" + k + "'");
      return it->second;
    };

    Pulse p;
    p.name = name.text;
    p.t0 = time(require("t0"));
    {
      const Assignment& a = require("shape");
      no_unit(a);
      if (a.value == "square") p.shape = PulseShape::kSquare;
      else if (a.value == "gaussian") p.shape = PulseShape::kGaussian;
      else if (a.value == "sech") p.shape = PulseShape::kSech;
      else if (a.value == "cw") p.shape = PulseShape::kCw;
      else throw ParseError(a.line, a.value_col, "unknown shape '" + a.value + "'");
    }
    {
      const Assignment& a = require("transition");
      no_unit(a);
      if (a.value == "VAC_DE") p.transition = Transition::kVacDe;
      else if (a.value == "DE_XX") p.transition = Transition::kDeXx;
      else throw ParseError(a.line, a.value_col, "unknown transition '" + a.value + "'");
    }
    {
      const Assignment& a = require("polarization");
      no_unit(a);
      if (a.value == "H") p.polarization = Jones::horizontal();
      else if (a.value == "V") p.polarization = Jones::vertical();
      else if (a.value == "sigma+") p.polarization = Jones::sigma_plus();
      else if (a.value == "sigma-") p.polarization = Jones::sigma_minus();
      else throw ParseError(a.line, a.value_col, "unknown polarization '" + a.value + "'");
    }
    const bool has_area = kv.count("area"), has_power = kv.count("power");
    if (has_area == has_power)
      throw ParseError(close.line, close.col, "pulse '" + name.text + "' needs exactly one of 'area' or 'power'");
    if (p.shape == PulseShape::kCw && !has_power) {
      const auto& a = kv.at("area");
      throw ParseError(a.line, a.col, "cw pulses take 'power', not 'area'");
    }
    if (p.shape != PulseShape::kCw && has_power) {
      const auto& a = kv.at("power");
      throw ParseError(a.line, a.col, "finite pulses take 'area', not 'power'");
    }
    if (has_area) p.area = area(kv.at("area"));
    if (has_power) {
      const Assignment& a = kv.at("power");
      const double v = number(a);
      if (!a.unit || (*a.unit != "/ns" && *a.unit != "rad/ns"))
        throw ParseError(a.line, a.value_col, "unit mismatch: power needs /ns");
      if (std::isinf(v)) throw ParseError(a.line, a.value_col, "power must be finite");
      p.peak_rabi = v;
    }
    if (kv.count("detuning")) {
      p.detuning = energy(kv.at("detuning"));
      if (std::isinf(p.detuning)) throw ParseError(kv.at("detuning").line, kv.at("detuning").value_col, "detuning must be finite");
    }
    const bool has_dur = kv.count("duration"), has_bw = kv.count("bandwidth");
    if (has_dur) p.duration = time(kv.at("duration"));
    if (p.shaped()) {
      if (!has_dur && !has_bw)
        throw ParseError(close.line, close.col, "pulse '" + name.text + "' needs 'duration' or 'bandwidth'");
      if (has_bw) {
        const Assignment& a = kv.at("bandwidth");
        p.bandwidth_sigma = energy(a);
        if (!(p.bandwidth_sigma > 0.0) || std::isinf(p.bandwidth_sigma))
          throw ParseError(a.line, a.value_col, "bandwidth must be > 0");
        const double d = duration_from_bandwidth(p.shape, p.bandwidth_sigma);
        if (has_dur && std::abs(d - p.duration) > 1e-9 * d)
          throw ParseError(a.line, a.col, "duration and bandwidth disagree");
        if (!has_dur) p.duration = d;
      } else {
        if (!(p.duration > 0.0)) throw ParseError(kv.at("duration").line, kv.at("duration").value_col, "duration must be > 0");
        p.bandwidth_sigma = bandwidth_from_duration(p.shape, p.duration);
      }
    } else {
      if (has_bw) {
        const auto& a = kv.at("bandwidth");
        throw ParseError(a.line, a.col, "bandwidth applies only to gaussian and sech pulses");
      }
      require("duration");
    }
    try {
      p.validate();
    } catch (const ValidationError& e) {
      throw ParseError(kw.line, kw.col, e.what());
    }
    return p;
  }

  static bool valid_name(const std::string& s) {
    if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
      return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
    });
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

inline std::string area_text(double a) {
  const double k = a / kPi;
  const std::string ks = fmt(k);
  if (to_number(ks).value() * kPi == a && ks.size() <= 8) {
    if (ks == "1") return "pi";
    if (ks == "-1") return "-pi";
    return ks + "pi";
  }
  return fmt(a);
}

}  // namespace seq_detail

/// Parse a document; throws ParseError.
inline ParsedSequence parse_sequence(std::string_view text) { return seq_detail::Parser(text).run(); }

struct ParseOutcome {
  std::optional<ParsedSequence> value;
  std::optional<ParseError> error;
  bool ok() const { return value.has_value(); }
};

/// Total version of parse_sequence: never throws.
inline ParseOutcome try_parse_sequence(std::string_view text) {
  try {
    return {parse_sequence(text), std::nullopt};
  } catch (const ParseError& e) {
    return {std::nullopt, e};
  } catch (const std::exception& e) {
    return {std::nullopt, ParseError(1, 1, std::string("internal error: ") + e.what())};
  }
}

inline PulseSequence to_sequence(const SeqDocument& doc) { return seq_detail::Parser::build(doc); }

/// Canonical text: sorted globals, pulses in t0 order, fixed key order, times in ns.
inline std::string serialize(const SeqDocument& doc) {
  using seq_detail::fmt;
  std::map<std::string, std::string> g;
  g["format"] = std::to_string(doc.format);
  if (doc.rep_rate_mhz) g["rep_rate"] = fmt(*doc.rep_rate_mhz) + " MHz";
  if (doc.rep_period) g["rep_period"] = fmt(*doc.rep_period) + " ns";
  if (doc.t_end) g["t_end"] = fmt(*doc.t_end) + " ns";
  if (doc.seed) g["seed"] = std::to_string(*doc.seed);
  if (doc.trajectories) g["trajectories"] = std::to_string(*doc.trajectories);
  for (const auto& [k, v] : doc.overrides) {
    const auto dim = seq_detail::param_keys().at(k);
    if (dim == seq_detail::Dim::kTime) g[k] = fmt(v) + " ns";
    else if (k == "h_planck") g[k] = fmt(v) + " ueV*ns";
    else g[k] = fmt(v);
  }
  std::string out = "# dexsim pulse sequence\n";
  for (const auto& [k, v] : g) out += k + " = " + v + "\n";

  std::vector<Pulse> ps = doc.pulses;
  std::stable_sort(ps.begin(), ps.end(), [](const Pulse& a, const Pulse& b) { return a.t0 < b.t0; });
  for (const auto& p : ps) {
    const auto pol = name_of(p.polarization);
    out += "\npulse " + p.name + " {\n";
    out += "  t0 = " + fmt(p.t0) + " ns\n";
    out += "  duration = " + fmt(p.duration) + " ns\n";
    out += "  shape = " + std::string(shape_name(p.shape)) + "\n";
    out += "  transition = " + std::string(transition_name(p.transition)) + "\n";
    out += "  polarization = " + std::string(pol ? polarization_name(*pol) : "H") + "\n";
    if (p.area) out += "  area = " + seq_detail::area_text(*p.area) + "\n";
    if (p.peak_rabi) out += "  power = " + fmt(*p.peak_rabi) + " /ns\n";
    out += "  detuning = " + fmt(p.detuning) + " ueV\n";
    if (p.shaped()) out += "  bandwidth = " + fmt(p.bandwidth_sigma) + " ueV\n";
    out += "}\n";
  }
  return out;
}

/// Document describing an in-memory sequence (for provenance files).
inline SeqDocument document_of(const PulseSequence& seq, const SystemParams& params,
                               std::optional<std::uint64_t> seed = std::nullopt,
                               std::optional<int> trajectories = std::nullopt) {
  SeqDocument d;
  d.pulses = seq.pulses;
  if (seq.rep_period > 0.0) d.rep_period = seq.rep_period;
  d.t_end = seq.t_end;
  d.seed = seed;
  d.trajectories = trajectories;
  SystemParams p = params;
  SystemParams def = default_params();
  for (const auto& [k, dim] : seq_detail::param_keys()) {
    const double v = *seq_detail::param_field(p, k);
    if (v != *seq_detail::param_field(def, k)) d.overrides[k] = v;
  }
  return d;
}

}  // namespace dexsim
