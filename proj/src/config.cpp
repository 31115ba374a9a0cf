#include "impulse/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "impulse/presets.hpp"

namespace ic {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

KeyTree KeyTree::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IcError("malformed config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str());
}

KeyTree KeyTree::parse_string(const std::string& text) {
  KeyTree tree;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw IcError("malformed config: bad section at line " +
                      std::to_string(lineno));
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw IcError("malformed config: empty section at line " +
                      std::to_string(lineno));
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw IcError("malformed config: expected key = value at line " +
                    std::to_string(lineno));
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw IcError("malformed config: empty key at line " +
                    std::to_string(lineno));
    tree.kv_[section.empty() ? key : section + "." + key] = value;
  }
  return tree;
}

bool KeyTree::has(const std::string& key) const { return kv_.count(key) > 0; }

std::string KeyTree::get(const std::string& key,
                         const std::string& fallback) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

double KeyTree::get_double(const std::string& key, double fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    std::size_t used = 0;
    double v = std::stod(it->second, &used);
    if (trim(it->second.substr(used)).empty()) return v;
  } catch (const std::exception&) {
  }
  throw IcError("malformed config: " + key + " is not a number");
}

int KeyTree::get_int(const std::string& key, int fallback) const {
  double v = get_double(key, static_cast<double>(fallback));
  int i = static_cast<int>(v);
  if (static_cast<double>(i) != v)
    throw IcError("malformed config: " + key + " is not an integer");
  return i;
}

std::uint64_t KeyTree::get_u64(const std::string& key,
                               std::uint64_t fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    std::size_t used = 0;
    unsigned long long v = std::stoull(it->second, &used);
    if (trim(it->second.substr(used)).empty()) return v;
  } catch (const std::exception&) {
  }
  throw IcError("malformed config: " + key + " is not an unsigned integer");
}

std::vector<double> KeyTree::get_list(const std::string& key) const {
  std::vector<double> out;
  auto it = kv_.find(key);
  if (it == kv_.end()) return out;
  std::string s = it->second;
  for (char& c : s)
    if (c == ',') c = ' ';
  std::istringstream in(s);
  double v;
  while (in >> v) out.push_back(v);
  if (!in.eof())
    throw IcError("malformed config: " + key + " is not a numeric list");
  return out;
}

void KeyTree::set(const std::string& key, const std::string& value) {
  kv_[key] = value;
}

namespace {

Form parse_form(const std::string& name, const std::string& key) {
  if (name == "constant") return Form::Constant;
  if (name == "affine") return Form::AffineInX;
  if (name == "bounded-rational") return Form::BoundedRational;
  if (name == "bounded-trig") return Form::BoundedTrig;
  if (name == "power-norm") return Form::PowerNorm;
  throw IcError("malformed config: unknown form '" + name + "' for " + key);
}

TauForm parse_tau_form(const std::string& name, const std::string& key) {
  if (name == "none") return TauForm::None;
  if (name == "affine") return TauForm::Affine;
  if (name == "bounded-trig") return TauForm::BoundedTrig;
  throw IcError("malformed config: unknown tau form '" + name + "' for " +
                key);
}

void fill_family(const KeyTree& tree, const std::string& section,
                 CoefficientFamily* fam) {
  if (tree.has(section + ".kind"))
    fam->kind = parse_form(tree.get(section + ".kind", ""), section);
  if (tree.has(section + ".params")) fam->params = tree.get_list(section + ".params");
  if (tree.has(section + ".tau_kind"))
    fam->tau_kind = parse_tau_form(tree.get(section + ".tau_kind", ""), section);
  if (tree.has(section + ".tau_params"))
    fam->tau_params = tree.get_list(section + ".tau_params");
}

}  // namespace

ProblemSpec problem_from_tree(const KeyTree& tree) {
  ProblemSpec spec;
  std::string preset = tree.get("problem.preset", "");
  if (!preset.empty()) {
    spec = make_preset(preset);
  } else {
    // without a preset the coefficient sections are required
    for (const char* sec :
         {"coefficients.drift", "coefficients.diffusion", "costs.running",
          "costs.terminal", "costs.impulse"}) {
      if (!tree.has(std::string(sec) + ".kind"))
        throw IcError("malformed config: missing section [" +
                      std::string(sec) + "]");
    }
  }
  spec.dim_state = tree.get_int("problem.dim", spec.dim_state);
  spec.horizon = tree.get_double("problem.horizon", spec.horizon);
  spec.tau0 = tree.get_double("problem.tau0", spec.tau0);
  spec.ell0 = tree.get_double("problem.ell0", spec.ell0);
  spec.mu = tree.get_double("problem.mu", spec.mu);
  std::string sem = tree.get("problem.semantics",
                             spec.semantics == Semantics::Stacking ? "stacking"
                                                                   : "frozen");
  if (sem == "stacking")
    spec.semantics = Semantics::Stacking;
  else if (sem == "frozen")
    spec.semantics = Semantics::Frozen;
  else
    throw IcError("malformed config: problem.semantics must be "
                  "stacking or frozen");

  fill_family(tree, "coefficients.drift", &spec.drift);
  fill_family(tree, "coefficients.diffusion", &spec.diffusion);
  fill_family(tree, "costs.running", &spec.running_cost);
  fill_family(tree, "costs.terminal", &spec.terminal_cost);
  fill_family(tree, "costs.impulse", &spec.impulse_cost);

  if (tree.has("cone.generators")) {
    std::vector<double> flat = tree.get_list("cone.generators");
    int n = spec.dim_state;
    if (flat.empty() || flat.size() % static_cast<std::size_t>(n) != 0)
      throw IcError("malformed config: cone.generators must hold " +
                    std::to_string(n) + " entries per generator");
    spec.cone.dimension = n;
    spec.cone.generators.clear();
    for (std::size_t i = 0; i < flat.size(); i += n) {
      Vec g = vzero();
      for (int c = 0; c < n; ++c) g[c] = flat[i + c];
      spec.cone.generators.push_back(g);
    }
  }
  spec.cone.size_cap = tree.get_double("cone.size_cap", spec.cone.size_cap);
  return spec;
}

ImpulseControl control_from_tree(const KeyTree& tree, const std::string& key,
                                 double start_time, const ProblemSpec& spec) {
  std::vector<Impulse> raw;
  std::string s = tree.get(key, "");
  for (char& c : s)
    if (c == ',') c = ' ';
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) {
    std::size_t colon = tok.find(':');
    if (colon == std::string::npos)
      throw IcError("malformed config: " + key + " entries are time:size");
    try {
      Impulse im;
      im.time = std::stod(tok.substr(0, colon));
      im.size[0] = std::stod(tok.substr(colon + 1));
      raw.push_back(im);
    } catch (const std::exception&) {
      throw IcError("malformed config: bad impulse entry '" + tok + "'");
    }
  }
  return normalize_control(raw, start_time, spec.horizon, spec.cone);
}

}  // namespace ic
