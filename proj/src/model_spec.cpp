#include "latentfit/model_spec.hpp"

#include "latentfit/error.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

namespace latentfit {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void fail(const char* kind, int line, const std::string& what) { throw SpecError(kind, line, what); }

double parse_double(const std::string& v, int line, const std::string& key) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out))
    fail("TypeMismatch", line, key + " expects a number, got '" + v + "'");
  return out;
}

int parse_int(const std::string& v, int line, const std::string& key) {
  int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) fail("TypeMismatch", line, key + " expects an integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& v, int line, const std::string& key) {
  if (v == "true") return true;
  if (v == "false") return false;
  fail("TypeMismatch", line, key + " expects true or false, got '" + v + "'");
}

GammaPrior parse_prior(const std::string& v, int line, const std::string& key) {
  std::istringstream in(v);
  std::string name, a, b, extra;
  in >> name >> a >> b;
  if (name != "loggamma" || b.empty() || (in >> extra))
    fail("TypeMismatch", line, key + " expects 'loggamma <shape> <rate>', got '" + v + "'");
  GammaPrior p{parse_double(a, line, key), parse_double(b, line, key)};
  if (!(p.shape > 0.0) || !(p.rate > 0.0)) fail("TypeMismatch", line, key + ": shape and rate must be positive");
  return p;
}

enum class Section { None, Model, Data, Priors, Component };

}  // namespace

ModelSpec parse_model_spec(std::istream& in) {
  ModelSpec spec;
  Section section = Section::None;
  std::set<std::string> seen_sections, seen_keys, names;
  std::vector<bool> has_kind;
  std::vector<int> component_line;
  std::string raw;
  int line = 0;
  bool has_model = false;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;

    if (text.front() == '[') {
      if (text.back() != ']') fail("SyntaxError", line, "section header must end with ']'");
      const std::string header = trim(text.substr(1, text.size() - 2));
      seen_keys.clear();
      if (header.rfind("component", 0) == 0 && header.size() > 9 && (header[9] == ' ' || header[9] == '\t')) {
        const std::string name = trim(header.substr(9));
        if (name.empty()) fail("SyntaxError", line, "component section needs a name");
        if (!names.insert(name).second) fail("SyntaxError", line, "duplicate component '" + name + "'");
        spec.components.push_back({.name = name});
        has_kind.push_back(false);
        component_line.push_back(line);
        section = Section::Component;
        continue;
      }
      if (header == "component") fail("SyntaxError", line, "component section needs a name");
      if (header == "model") section = Section::Model, has_model = true;
      else if (header == "data") section = Section::Data;
      else if (header == "priors") section = Section::Priors;
      else fail("UnknownField", line, "unknown section '" + header + "'");
      if (!seen_sections.insert(header).second) fail("SyntaxError", line, "duplicate section [" + header + "]");
      continue;
    }

    const auto eq = text.find('=');
    if (eq == std::string::npos) fail("SyntaxError", line, "expected 'key = value'");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key.empty()) fail("SyntaxError", line, "missing key before '='");
    if (value.empty()) fail("SyntaxError", line, "missing value for '" + key + "'");
    if (section == Section::None) fail("SyntaxError", line, "'" + key + "' appears before any section");
    if (!seen_keys.insert(key).second) fail("SyntaxError", line, "duplicate key '" + key + "'");

    switch (section) {
      case Section::Model:
        if (key == "family") {
          try {
            spec.family = family_from_string(value);
          } catch (const Error&) {
            fail("TypeMismatch", line, "family must be gaussian, poisson or binomial, got '" + value + "'");
          }
        } else if (key == "fixed_precision") {
          spec.fixed_effect_precision = parse_double(value, line, key);
          if (!(spec.fixed_effect_precision > 0.0)) fail("TypeMismatch", line, "fixed_precision must be positive");
        } else {
          fail("UnknownField", line, "unknown key '" + key + "' in [model]");
        }
        break;
      case Section::Data:
        if (key == "response") spec.response = value;
        else if (key == "exposure") spec.exposure = value;
        else if (key == "offset") spec.offset = value;
        else if (key == "trials") spec.trials = value;
        else fail("UnknownField", line, "unknown key '" + key + "' in [data]");
        break;
      case Section::Priors:
        if (key == "gaussian.precision") spec.likelihood_prior = parse_prior(value, line, key);
        else fail("UnknownField", line, "unknown prior '" + key + "'");
        break;
      case Section::Component: {
        auto& c = spec.components.back();
        if (key == "kind") {
          try {
            c.kind = component_kind_from_string(value);
          } catch (const Error&) {
            fail("TypeMismatch", line, "kind must be intercept, linear, iid, rw1 or rw2, got '" + value + "'");
          }
          has_kind.back() = true;
        } else if (key == "column") {
          c.column = value;
        } else if (key == "size") {
          c.size = parse_int(value, line, key);
          if (c.size < 0) fail("TypeMismatch", line, "size must be non-negative");
        } else if (key == "weight") {
          c.weight = parse_double(value, line, key);
        } else if (key == "scaled") {
          c.scaled = parse_bool(value, line, key);
        } else if (key == "constrained") {
          c.constrained = parse_bool(value, line, key);
        } else if (key == "precision") {
          c.fixed_precision = parse_double(value, line, key);
          if (!(*c.fixed_precision > 0.0)) fail("TypeMismatch", line, "precision must be positive");
        } else if (key == "prior") {
          c.prior = parse_prior(value, line, key);
        } else {
          fail("UnknownField", line, "unknown key '" + key + "' in component '" + c.name + "'");
        }
        break;
      }
      case Section::None:
        break;
    }
  }
  if (!has_model) fail("SyntaxError", 0, "missing [model] section");
  for (std::size_t k = 0; k < spec.components.size(); ++k)
    if (!has_kind[k]) fail("SyntaxError", component_line[k], "component '" + spec.components[k].name + "' has no kind");
  if (spec.response.empty()) fail("SyntaxError", 0, "missing response column in [data]");
  return spec;
}

ModelSpec parse_model_spec_string(const std::string& text) {
  std::istringstream in(text);
  return parse_model_spec(in);
}

ModelSpec parse_model_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open model spec '" + path + "'");
  return parse_model_spec(in);
}

std::string emit_model_spec(const ModelSpec& spec) {
  std::ostringstream out;
  auto prior = [](const GammaPrior& p) {
    return "loggamma " + format_number(p.shape) + " " + format_number(p.rate);
  };
  out << "[model]\n"
      << "family = " << to_string(spec.family) << "\n"
      << "fixed_precision = " << format_number(spec.fixed_effect_precision) << "\n\n"
      << "[data]\n"
      << "response = " << spec.response << "\n";
  if (!spec.exposure.empty()) out << "exposure = " << spec.exposure << "\n";
  if (!spec.offset.empty()) out << "offset = " << spec.offset << "\n";
  if (!spec.trials.empty()) out << "trials = " << spec.trials << "\n";
  out << "\n[priors]\n"
      << "gaussian.precision = " << prior(spec.likelihood_prior) << "\n";
  for (const auto& c : spec.components) {
    out << "\n[component " << c.name << "]\n"
        << "kind = " << to_string(c.kind) << "\n";
    if (!c.column.empty()) out << "column = " << c.column << "\n";
    out << "size = " << c.size << "\n"
        << "weight = " << format_number(c.weight) << "\n"
        << "scaled = " << (c.scaled ? "true" : "false") << "\n"
        << "constrained = " << (c.constrained ? "true" : "false") << "\n";
    if (c.fixed_precision) out << "precision = " << format_number(*c.fixed_precision) << "\n";
    out << "prior = " << prior(c.prior) << "\n";
  }
  return out.str();
}

}  // namespace latentfit
