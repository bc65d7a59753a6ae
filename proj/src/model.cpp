#include "hybridsens/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace hybridsens {

int Reaction::reactant_count(std::size_t species) const {
  for (auto [i, n] : reactants)
    if (i == species) return n;
  return 0;
}

int Reaction::product_count(std::size_t species) const {
  for (auto [i, n] : products)
    if (i == species) return n;
  return 0;
}

std::vector<int> StoichiometryMatrix::column(std::size_t k) const {
  std::vector<int> c(rows);
  for (std::size_t i = 0; i < rows; ++i) c[i] = (*this)(i, k);
  return c;
}

bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_'))
    return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  });
}

namespace {

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

bool reserved(std::string_view s) {
  return s == "exp" || s == "log" || s == "min" || s == "max";
}

}  // namespace

NodePtr mass_action_tree(const Reaction& r, const std::vector<Species>& species) {
  NodePtr tree = r.rate.expr.root_ptr();
  double denom = 1.0;
  for (auto [i, nu] : r.reactants) {
    if (nu == 0) continue;
    NodePtr x = make_symbol(SymbolRef::species(i));
    if (species[i].continuous) {
      tree = make_binary(NodeKind::Mul, tree, nu == 1 ? x : make_pow(x, nu));
    } else {
      for (int j = 0; j < nu; ++j) {
        NodePtr f = j == 0 ? x
                           : make_binary(NodeKind::Sub, x,
                                         make_number(static_cast<double>(j)));
        tree = make_binary(NodeKind::Mul, tree, f);
      }
    }
    denom *= factorial(nu);
  }
  if (denom != 1.0)
    tree = make_binary(NodeKind::Div, tree, make_number(denom));
  return tree;
}

ReactionNetwork::ReactionNetwork(
    std::vector<Species> species, std::vector<Reaction> reactions,
    std::vector<std::pair<std::string, double>> parameters,
    std::vector<std::pair<std::string, Expression>> observables)
    : species_(std::move(species)),
      reactions_(std::move(reactions)),
      observables_(std::move(observables)) {
  for (auto& [name, value] : parameters) {
    symbols_.params.push_back(name);
    param_values_.push_back(value);
  }
  for (const Species& s : species_) symbols_.species.push_back(s.name);
  bind();
}

void ReactionNetwork::bind() {
  if (species_.empty()) throw ValidationError("network declares no species");
  if (reactions_.empty()) throw ValidationError("network declares no reactions");

  std::set<std::string> names;
  for (const Species& s : species_) {
    if (!is_identifier(s.name) || reserved(s.name))
      throw ValidationError("invalid species name '" + s.name + "'");
    if (!names.insert(s.name).second)
      throw ValidationError("duplicate species name '" + s.name + "'");
    if (!(s.initial >= 0.0) || !std::isfinite(s.initial))
      throw ValidationError("species '" + s.name +
                            "' has a negative or non-finite initial value");
    if (!s.continuous && s.initial != std::floor(s.initial))
      throw ValidationError("discrete species '" + s.name +
                            "' needs an integer initial copy number");
  }
  for (std::size_t p = 0; p < symbols_.params.size(); ++p) {
    const std::string& name = symbols_.params[p];
    if (!is_identifier(name) || reserved(name))
      throw ValidationError("invalid parameter name '" + name + "'");
    if (!names.insert(name).second)
      throw ValidationError("name '" + name +
                            "' is declared as both a species and a parameter "
                            "(or twice)");
    if (!std::isfinite(param_values_[p]))
      throw ValidationError("parameter '" + name + "' is not finite");
  }
  std::set<std::string> rnames;
  for (const Reaction& r : reactions_)
    if (!rnames.insert(r.name).second)
      throw ValidationError("duplicate reaction name '" + r.name + "'");

  const std::size_t S = species_.size();
  zeta_.clear();
  propensity_exprs_.clear();
  dependencies_.clear();
  for (const Reaction& r : reactions_) {
    std::vector<int> z(S, 0);
    for (auto [i, n] : r.reactants) {
      if (n < 0) throw ValidationError("negative coefficient in " + r.name);
      z[i] -= n;
    }
    for (auto [i, n] : r.products) {
      if (n < 0) throw ValidationError("negative coefficient in " + r.name);
      z[i] += n;
    }
    if (std::all_of(z.begin(), z.end(), [](int v) { return v == 0; }))
      throw ValidationError("reaction '" + r.name +
                            "' has zero net stoichiometry");
    zeta_.push_back(std::move(z));

    if (r.rate.expr.empty())
      throw ValidationError("reaction '" + r.name + "' has no rate law");
    if (r.rate.kind == RateLaw::Kind::MassAction) {
      if (!r.rate.expr.species_used().empty())
        throw ValidationError("mass-action kappa of '" + r.name +
                              "' may only reference parameters");
      double kappa = evaluate(r.rate.expr, {{}, param_values_});
      if (!(kappa >= 0.0))
        throw ValidationError("mass-action kappa of '" + r.name +
                              "' is negative for the declared parameters");
      propensity_exprs_.emplace_back(mass_action_tree(r, species_),
                                     r.rate.expr.source());
    } else {
      propensity_exprs_.push_back(r.rate.expr);
    }
    dependencies_.push_back(propensity_exprs_.back().species_used());
  }
}

std::optional<std::size_t> ReactionNetwork::find_species(
    std::string_view name) const {
  for (std::size_t i = 0; i < species_.size(); ++i)
    if (species_[i].name == name) return i;
  return std::nullopt;
}

std::optional<std::size_t> ReactionNetwork::find_param(
    std::string_view name) const {
  for (std::size_t i = 0; i < symbols_.params.size(); ++i)
    if (symbols_.params[i] == name) return i;
  return std::nullopt;
}

std::optional<std::size_t> ReactionNetwork::find_reaction(
    std::string_view name) const {
  for (std::size_t i = 0; i < reactions_.size(); ++i)
    if (reactions_[i].name == name) return i;
  return std::nullopt;
}

std::size_t ReactionNetwork::param_index(std::string_view name) const {
  if (auto p = find_param(name)) return *p;
  throw ValidationError("unknown parameter '" + std::string(name) + "'");
}

const Expression& ReactionNetwork::observable(std::string_view name) const {
  for (auto& [n, e] : observables_)
    if (n == name) return e;
  throw ValidationError("unknown observable '" + std::string(name) + "'");
}

std::vector<double> ReactionNetwork::initial_state() const {
  std::vector<double> x;
  x.reserve(species_.size());
  for (const Species& s : species_) x.push_back(s.initial);
  return x;
}

StoichiometryMatrix ReactionNetwork::stoichiometry() const {
  StoichiometryMatrix m;
  m.rows = species_.size();
  m.cols = reactions_.size();
  m.data.assign(m.rows * m.cols, 0);
  for (std::size_t k = 0; k < m.cols; ++k)
    for (std::size_t i = 0; i < m.rows; ++i) m.data[i * m.cols + k] = zeta_[k][i];
  return m;
}

void clamp_state(std::span<const double> state, std::span<double> out) {
  double scale = 1.0;
  for (double v : state) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < state.size(); ++i) {
    double v = state[i];
    if (v < 0.0) {
      if (v < -kNegativeStateTolerance * scale)
        throw NumericDomainError(
            "state coordinate " + std::to_string(i) + " is negative (" +
                std::to_string(v) + ")",
            0);
      v = 0.0;
    }
    out[i] = v;
  }
}

double ReactionNetwork::propensity(std::size_t k, std::span<const double> state,
                                   std::span<const double> params) const {
  bool negative = false;
  for (std::size_t i : dependencies_[k])
    if (state[i] < 0.0) negative = true;
  double v;
  if (negative) {
    std::vector<double> clamped(state.size());
    clamp_state(state, clamped);
    v = evaluate(propensity_exprs_[k], {clamped, params});
  } else {
    v = evaluate(propensity_exprs_[k], {state, params});
  }
  if (v < 0.0) {
    if (v < -kNegativeStateTolerance)
      throw NumericDomainError("propensity of '" + reactions_[k].name +
                                   "' is negative",
                               0);
    v = 0.0;
  }
  return v;
}

double ReactionNetwork::observable_value(std::string_view name,
                                         std::span<const double> state,
                                         std::span<const double> params) const {
  return evaluate(observable(name), {state, params});
}

std::vector<double> ReactionNetwork::observable_gradient(
    std::string_view name, std::span<const double> state,
    std::span<const double> params,
    std::span<const std::size_t> continuous) const {
  const Expression& e = observable(name);
  std::vector<double> g;
  g.reserve(continuous.size());
  for (std::size_t i : continuous) {
    if (i >= species_.size())
      throw ValidationError("gradient requested for undeclared species index");
    g.push_back(derivative_eval(e, {state, params}, SymbolRef::species(i)));
  }
  return g;
}

ReactionNetwork ReactionNetwork::with_param(std::string_view name,
                                            double value) const {
  ReactionNetwork copy = *this;
  copy.param_values_[param_index(name)] = value;
  copy.bind();
  return copy;
}

ReactionNetwork ReactionNetwork::with_initial(
    std::span<const double> initial) const {
  ReactionNetwork copy = *this;
  for (std::size_t i = 0; i < copy.species_.size(); ++i)
    copy.species_[i].initial = initial[i];
  copy.bind();
  return copy;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

std::vector<std::pair<std::size_t, int>> parse_side(const Json& side,
                                                    const SymbolTable& sym,
                                                    const std::string& rname) {
  std::vector<std::pair<std::size_t, int>> out;
  if (side.is_null()) return out;
  if (!side.is_object())
    throw ValidationError("reaction '" + rname +
                          "': reactants/products must be objects");
  for (auto it = side.begin(); it != side.end(); ++it) {
    auto s = std::find(sym.species.begin(), sym.species.end(), it.key());
    if (s == sym.species.end())
      throw ValidationError("reaction '" + rname + "' references unknown species '" +
                            it.key() + "'");
    if (!it.value().is_number_integer() || it.value().get<long long>() < 0)
      throw ValidationError("reaction '" + rname +
                            "': coefficients must be nonnegative integers");
    int n = it.value().get<int>();
    if (n > 0)
      out.emplace_back(static_cast<std::size_t>(s - sym.species.begin()), n);
  }
  return out;
}

Expression parse_bound(const std::string& text, const SymbolTable& sym,
                       const std::string& where) {
  try {
    return parse(text, sym);
  } catch (const UnknownIdentifier& e) {
    throw ValidationError(where + ": unbound symbol '" + e.symbol() + "'");
  } catch (const ParseError& e) {
    throw ValidationError(where + ": " + e.what());
  }
}

const Json& require(const Json& doc, const char* key) {
  if (!doc.contains(key))
    throw ValidationError(std::string("missing required field '") + key + "'");
  return doc.at(key);
}

}  // namespace

ReactionNetwork parse_network(const Json& doc) {
  if (!doc.is_object()) throw ValidationError("model document must be an object");
  std::vector<Species> species;
  const Json& sp = require(doc, "species");
  if (!sp.is_array()) throw ValidationError("'species' must be an array");
  std::set<std::string> continuous;
  if (doc.contains("continuous_species"))
    for (const Json& c : doc.at("continuous_species"))
      continuous.insert(c.get<std::string>());
  for (const Json& s : sp) {
    if (!s.is_object() || !s.contains("name") || !s.at("name").is_string())
      throw ValidationError("each species needs a string 'name'");
    Species out;
    out.name = s.at("name").get<std::string>();
    if (s.contains("initial")) {
      if (!s.at("initial").is_number())
        throw ValidationError("species '" + out.name + "': initial must be a number");
      out.initial = s.at("initial").get<double>();
    }
    out.continuous = continuous.count(out.name) > 0;
    species.push_back(std::move(out));
  }

  std::vector<std::pair<std::string, double>> params;
  if (doc.contains("parameters")) {
    const Json& ps = doc.at("parameters");
    if (!ps.is_object()) throw ValidationError("'parameters' must be an object");
    for (auto it = ps.begin(); it != ps.end(); ++it) {
      if (!it.value().is_number())
        throw ValidationError("parameter '" + it.key() + "' must be a number");
      params.emplace_back(it.key(), it.value().get<double>());
    }
  }

  SymbolTable sym;
  for (const Species& s : species) sym.species.push_back(s.name);
  for (auto& [n, v] : params) sym.params.push_back(n);

  std::vector<Reaction> reactions;
  const Json& rs = require(doc, "reactions");
  if (!rs.is_array()) throw ValidationError("'reactions' must be an array");
  for (std::size_t k = 0; k < rs.size(); ++k) {
    const Json& r = rs[k];
    Reaction out;
    out.name = r.contains("name") ? r.at("name").get<std::string>()
                                  : "R" + std::to_string(k + 1);
    out.reactants = parse_side(r.value("reactants", Json::object()), sym, out.name);
    out.products = parse_side(r.value("products", Json::object()), sym, out.name);
    if (!r.contains("rate") || !r.at("rate").is_object())
      throw ValidationError("reaction '" + out.name + "' needs a 'rate' object");
    const Json& rate = r.at("rate");
    const std::string type = rate.value("type", "");
    if (type == "mass_action") {
      out.rate.kind = RateLaw::Kind::MassAction;
      if (!rate.contains("kappa"))
        throw ValidationError("reaction '" + out.name + "': missing 'kappa'");
      const Json& kappa = rate.at("kappa");
      std::string text = kappa.is_string() ? kappa.get<std::string>()
                                           : kappa.dump();
      out.rate.expr = parse_bound(text, SymbolTable{{}, sym.params},
                                  "kappa of '" + out.name + "'");
    } else if (type == "expr") {
      out.rate.kind = RateLaw::Kind::Custom;
      if (!rate.contains("formula") || !rate.at("formula").is_string())
        throw ValidationError("reaction '" + out.name + "': missing 'formula'");
      out.rate.expr = parse_bound(rate.at("formula").get<std::string>(), sym,
                                  "rate of '" + out.name + "'");
    } else {
      throw ValidationError("reaction '" + out.name +
                            "': rate type must be 'mass_action' or 'expr'");
    }
    reactions.push_back(std::move(out));
  }

  std::vector<std::pair<std::string, Expression>> observables;
  if (doc.contains("observables")) {
    const Json& os = doc.at("observables");
    if (!os.is_object()) throw ValidationError("'observables' must be an object");
    for (auto it = os.begin(); it != os.end(); ++it)
      observables.emplace_back(
          it.key(), parse_bound(it.value().get<std::string>(), sym,
                                "observable '" + it.key() + "'"));
  }
  return ReactionNetwork(std::move(species), std::move(reactions),
                         std::move(params), std::move(observables));
}

Json ReactionNetwork::to_json() const {
  Json doc = Json::object();
  Json sp = Json::array();
  for (const Species& s : species_) {
    Json e = Json::object();
    e["name"] = s.name;
    if (!s.continuous && s.initial == std::floor(s.initial) &&
        std::abs(s.initial) < 9e15)
      e["initial"] = static_cast<long long>(s.initial);
    else
      e["initial"] = s.initial;
    sp.push_back(e);
  }
  doc["species"] = sp;
  Json rs = Json::array();
  for (const Reaction& r : reactions_) {
    Json e = Json::object();
    e["name"] = r.name;
    Json re = Json::object(), pr = Json::object();
    for (auto [i, n] : r.reactants) re[species_[i].name] = n;
    for (auto [i, n] : r.products) pr[species_[i].name] = n;
    e["reactants"] = re;
    e["products"] = pr;
    Json rate = Json::object();
    if (r.rate.kind == RateLaw::Kind::MassAction) {
      rate["type"] = "mass_action";
      rate["kappa"] = r.rate.expr.source();
    } else {
      rate["type"] = "expr";
      rate["formula"] = r.rate.expr.source();
    }
    e["rate"] = rate;
    rs.push_back(e);
  }
  doc["reactions"] = rs;
  Json ps = Json::object();
  for (std::size_t p = 0; p < param_values_.size(); ++p)
    ps[symbols_.params[p]] = param_values_[p];
  doc["parameters"] = ps;
  Json os = Json::object();
  for (auto& [n, e] : observables_) os[n] = e.source();
  doc["observables"] = os;
  return doc;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ValidationError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

ReactionNetwork load_model(const std::filesystem::path& path) {
  return parse_network(read_json_file(path));
}

}  // namespace hybridsens
