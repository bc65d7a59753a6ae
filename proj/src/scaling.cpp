#include "hybridsens/scaling.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

namespace hybridsens {

Rational parse_rational(const Json& v) {
  if (v.is_number_integer()) return Rational(v.get<std::int64_t>());
  if (v.is_number_float()) {
    double d = v.get<double>();
    if (d == std::floor(d) && std::abs(d) < 1e15)
      return Rational(static_cast<std::int64_t>(d));
    throw ValidationError("non-integer exponent " + v.dump() +
                          " must be written as a \"p/q\" string");
  }
  if (!v.is_string()) throw ValidationError("expected a rational, got " + v.dump());
  std::string s = v.get<std::string>();
  s.erase(std::remove_if(s.begin(), s.end(), ::isspace), s.end());
  auto parse_int = [&](std::string_view t, std::int64_t& out) {
    if (!t.empty() && t[0] == '+') t.remove_prefix(1);
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
    return ec == std::errc() && p == t.data() + t.size() && !t.empty();
  };
  std::int64_t num = 0, den = 1;
  auto slash = s.find('/');
  bool ok = slash == std::string::npos
                ? parse_int(s, num)
                : parse_int(std::string_view(s).substr(0, slash), num) &&
                      parse_int(std::string_view(s).substr(slash + 1), den);
  if (!ok || den == 0) throw ValidationError("malformed rational '" + s + "'");
  return Rational(num, den);
}

std::string to_string(const Rational& q) {
  if (q.denominator() == 1) return std::to_string(q.numerator());
  return std::to_string(q.numerator()) + "/" + std::to_string(q.denominator());
}

double to_double(const Rational& q) {
  return static_cast<double>(q.numerator()) / static_cast<double>(q.denominator());
}

const std::string* ScalingSpec::reduced_formula(std::string_view reaction) const {
  for (auto& [name, f] : reduced_formulas)
    if (name == reaction) return &f;
  return nullptr;
}

ScalingSpec parse_scaling(const Json& doc, const ReactionNetwork& n) {
  if (!doc.is_object()) throw ValidationError("scaling document must be an object");
  ScalingSpec s;
  auto read_map = [&](const char* key, std::size_t count, auto&& lookup,
                      const char* what) {
    if (!doc.contains(key) || !doc.at(key).is_object())
      throw ValidationError(std::string("scaling: '") + key + "' must be an object");
    const Json& m = doc.at(key);
    if (m.size() != count)
      throw ValidationError(std::string("scaling: '") + key + "' has " +
                            std::to_string(m.size()) + " entries, expected " +
                            std::to_string(count) + " (one per " + what + ")");
    std::vector<std::optional<Rational>> out(count);
    for (auto it = m.begin(); it != m.end(); ++it) {
      auto idx = lookup(it.key());
      if (!idx)
        throw ValidationError(std::string("scaling: '") + key +
                              "' names unknown " + what + " '" + it.key() + "'");
      out[*idx] = parse_rational(it.value());
    }
    std::vector<Rational> r;
    for (std::size_t i = 0; i < count; ++i) {
      if (!out[i]) throw ValidationError(std::string("scaling: '") + key +
                                         "' is missing an entry");
      r.push_back(*out[i]);
    }
    return r;
  };
  s.alpha = read_map("alpha", n.num_species(),
                     [&](const std::string& k) { return n.find_species(k); },
                     "species");
  s.beta = read_map("beta", n.num_reactions(),
                    [&](const std::string& k) { return n.find_reaction(k); },
                    "reaction");
  for (std::size_t i = 0; i < s.alpha.size(); ++i)
    if (s.alpha[i] < Rational(0))
      throw ValidationError("scaling: alpha of '" + n.species()[i].name +
                            "' is negative");
  if (!doc.contains("N0") || !doc.at("N0").is_number())
    throw ValidationError("scaling: 'N0' must be a number");
  s.N0 = doc.at("N0").get<double>();
  if (!(s.N0 > 1.0)) throw ValidationError("scaling: N0 must exceed 1");
  if (doc.contains("gamma")) {
    const Json& g = doc.at("gamma");
    if (!(g.is_string() && g.get<std::string>() == "auto"))
      s.gamma = parse_rational(g);
  }
  if (doc.contains("reduced_formulas")) {
    const Json& rf = doc.at("reduced_formulas");
    if (!rf.is_object())
      throw ValidationError("scaling: 'reduced_formulas' must be an object");
    for (auto it = rf.begin(); it != rf.end(); ++it) {
      if (!n.find_reaction(it.key()))
        throw ValidationError("scaling: reduced formula for unknown reaction '" +
                              it.key() + "'");
      std::string f = it.value().get<std::string>();
      try {
        parse(f, n.symbols());
      } catch (const UnknownIdentifier& e) {
        throw ValidationError("scaling: reduced formula of '" + it.key() +
                              "': unbound symbol '" + e.symbol() + "'");
      } catch (const ParseError& e) {
        throw ValidationError("scaling: reduced formula of '" + it.key() +
                              "': " + e.what());
      }
      s.reduced_formulas.emplace_back(it.key(), std::move(f));
    }
  }
  return s;
}

ScalingSpec load_scaling(const std::filesystem::path& path,
                         const ReactionNetwork& n) {
  return parse_scaling(read_json_file(path), n);
}

const char* to_string(ReactionClass c) {
  switch (c) {
    case ReactionClass::Continuous: return "continuous";
    case ReactionClass::Discrete: return "discrete";
    case ReactionClass::Dropped: return "dropped";
  }
  return "?";
}

std::vector<Rational> natural_timescales(const ReactionNetwork& n,
                                         const ScalingSpec& s) {
  std::vector<Rational> rho;
  for (std::size_t k = 0; k < n.num_reactions(); ++k) {
    Rational v = s.beta[k];
    for (auto [i, nu] : n.reactions()[k].reactants) v += s.alpha[i] * nu;
    rho.push_back(v);
  }
  return rho;
}

std::pair<std::vector<std::optional<Rational>>, Rational>
species_timescales_and_r(const ReactionNetwork& n, const ScalingSpec& s,
                         const std::vector<Rational>& rho) {
  std::vector<std::optional<Rational>> g(n.num_species());
  std::optional<Rational> r;
  for (std::size_t i = 0; i < n.num_species(); ++i) {
    std::optional<Rational> fastest;
    for (std::size_t k = 0; k < n.num_reactions(); ++k)
      if (n.zeta(k)[i] != 0 && (!fastest || rho[k] > *fastest)) fastest = rho[k];
    if (!fastest) continue;
    g[i] = s.alpha[i] - *fastest;
    if (!r || *g[i] < *r) r = g[i];
  }
  if (!r) throw DerivationError("no species is changed by any reaction");
  return {g, *r};
}

TimescaleReport classify_and_truncate(const ReactionNetwork& n,
                                      const ScalingSpec& s,
                                      const std::vector<Rational>& rho,
                                      const Rational& r) {
  TimescaleReport rep;
  rep.rho = rho;
  rep.r = r;
  rep.gamma = s.gamma.value_or(r);
  rep.gamma_i = species_timescales_and_r(n, s, rho).first;
  const std::size_t S = n.num_species(), K = n.num_reactions();
  rep.zeta_hat.rows = S;
  rep.zeta_hat.cols = K;
  rep.zeta_hat.data.assign(S * K, 0);
  for (std::size_t k = 0; k < K; ++k) {
    Rational v = rep.gamma + rho[k];
    ReactionClass c = v == Rational(0)  ? ReactionClass::Discrete
                      : v > Rational(0) ? ReactionClass::Continuous
                              : ReactionClass::Dropped;
    rep.classification.push_back(c);
    if (c == ReactionClass::Dropped) {
      rep.warnings.push_back("reaction '" + n.reactions()[k].name +
                             "' is dropped: gamma + rho = " + to_string(v) +
                             " < 0, its limiting rate vanishes");
      continue;
    }
    for (std::size_t i = 0; i < S; ++i)
      if (s.alpha[i] == v) rep.zeta_hat.data[i * K + k] = n.zeta(k)[i];
  }
  return rep;
}

TimescaleReport timescale_report(const ReactionNetwork& n, const ScalingSpec& s) {
  auto rho = natural_timescales(n, s);
  auto [g, r] = species_timescales_and_r(n, s, rho);
  return classify_and_truncate(n, s, rho, r);
}

std::string TimescaleReport::to_text(const ReactionNetwork& n) const {
  std::ostringstream os;
  os << "rho:";
  for (std::size_t k = 0; k < rho.size(); ++k)
    os << ' ' << n.reactions()[k].name << '=' << to_string(rho[k]);
  os << "\ngamma_i:";
  for (std::size_t i = 0; i < gamma_i.size(); ++i)
    os << ' ' << n.species()[i].name << '='
       << (gamma_i[i] ? to_string(*gamma_i[i]) : std::string("untouched"));
  os << "\nr = " << to_string(r) << ", observation gamma = " << to_string(gamma)
     << '\n';
  for (std::size_t k = 0; k < classification.size(); ++k) {
    os << n.reactions()[k].name << ": " << hybridsens::to_string(classification[k])
       << " (gamma+rho=" << to_string(gamma + rho[k]) << "), zeta_hat=(";
    for (std::size_t i = 0; i < zeta_hat.rows; ++i)
      os << (i ? "," : "") << zeta_hat(i, k);
    os << ")";
    bool truncated = false;
    for (std::size_t i = 0; i < zeta_hat.rows; ++i)
      if (classification[k] != ReactionClass::Dropped &&
          zeta_hat(i, k) != n.zeta(k)[i])
        truncated = true;
    if (truncated) os << " truncated";
    os << '\n';
  }
  for (const auto& w : warnings) os << "warning: " << w << '\n';
  return os.str();
}

Json TimescaleReport::to_json(const ReactionNetwork& n) const {
  Json j = Json::object();
  Json jr = Json::object(), jg = Json::object(), jc = Json::object(),
       jz = Json::object();
  for (std::size_t k = 0; k < rho.size(); ++k) {
    const std::string& name = n.reactions()[k].name;
    jr[name] = to_string(rho[k]);
    jc[name] = hybridsens::to_string(classification[k]);
    Json col = Json::object();
    for (std::size_t i = 0; i < zeta_hat.rows; ++i)
      col[n.species()[i].name] = zeta_hat(i, k);
    jz[name] = col;
  }
  for (std::size_t i = 0; i < gamma_i.size(); ++i)
    jg[n.species()[i].name] =
        gamma_i[i] ? Json(to_string(*gamma_i[i])) : Json(nullptr);
  j["rho"] = jr;
  j["gamma_i"] = jg;
  j["r"] = to_string(r);
  j["gamma"] = to_string(gamma);
  j["classification"] = jc;
  j["zeta_hat"] = jz;
  j["warnings"] = warnings;
  return j;
}

double scaled_propensity(const ReactionNetwork& n, const ScalingSpec& s,
                         std::size_t k, std::span<const double> z, double N,
                         std::span<const double> params) {
  const Reaction& r = n.reactions()[k];
  if (r.rate.kind != RateLaw::Kind::MassAction)
    throw DerivationError("reaction '" + r.name +
                          "' has a custom rate law; its scaled propensity must "
                          "be supplied by the user");
  std::vector<double> p(params.begin(), params.end());
  if (auto idx = n.find_param("N0")) p[*idx] = N;
  double v = evaluate(r.rate.expr, {{}, p}) * std::pow(N, -to_double(s.beta[k]));
  for (auto [i, nu] : r.reactants) {
    const double step = std::pow(N, -to_double(s.alpha[i]));
    double fact = 1.0;
    for (int j = 0; j < nu; ++j) {
      v *= z[i] - j * step;
      fact *= j + 1;
    }
    v /= fact;
  }
  return v;
}

namespace {

std::string format_factor(double f) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, f);
  return std::string(buf, res.ptr);
}

std::vector<Species> flagged_species(const ReactionNetwork& n,
                                     const ScalingSpec& s) {
  std::vector<Species> sp = n.species();
  for (std::size_t i = 0; i < sp.size(); ++i) sp[i].continuous = s.alpha[i] > Rational(0);
  return sp;
}

// kappa_k = kappa'_k N0^-beta_k, spelled so the reduced file stays readable.
Expression scaled_kappa(const ReactionNetwork& n, const ScalingSpec& s,
                        std::size_t k) {
  const Expression& kappa = n.reactions()[k].rate.expr;
  if (s.beta[k] == Rational(0)) return kappa;
  double factor = std::pow(s.N0, -to_double(s.beta[k]));
  std::string src = "(" + kappa.source() + ")*" + format_factor(factor);
  return parse(src, SymbolTable{{}, n.param_names()});
}

}  // namespace

Expression limit_propensity(const ReactionNetwork& n, const ScalingSpec& s,
                            const TimescaleReport& rep, std::size_t k) {
  (void)rep;
  const Reaction& r = n.reactions()[k];
  if (const std::string* f = s.reduced_formula(r.name)) return parse(*f, n.symbols());
  if (r.rate.kind == RateLaw::Kind::Custom)
    throw DerivationError("reaction '" + r.name +
                          "' has a custom rate law and needs a reduced formula "
                          "in the scaling file");
  Reaction scaled = r;
  scaled.rate.expr = scaled_kappa(n, s, k);
  return Expression(mass_action_tree(scaled, flagged_species(n, s)),
                    "limit of " + r.name);
}

ReducedPDMP derive_reduced_model(const ReactionNetwork& n, const ScalingSpec& s,
                                 const TimescaleReport& rep) {
  const std::size_t S = n.num_species(), K = n.num_reactions();

  // Reactions that move a species faster than its abundance scale would need
  // a fast-subnetwork (QSA) elimination first.
  std::vector<std::string> fast;
  std::set<std::string> fast_species;
  for (std::size_t k = 0; k < K; ++k) {
    if (rep.classification[k] == ReactionClass::Dropped) continue;
    Rational v = rep.gamma + rep.rho[k];
    bool flagged = false;
    for (std::size_t i = 0; i < S; ++i)
      if (n.zeta(k)[i] != 0 && v > s.alpha[i]) {
        flagged = true;
        fast_species.insert(n.species()[i].name);
      }
    if (flagged) fast.push_back(n.reactions()[k].name);
  }
  if (!fast.empty()) {
    std::string msg = "fast reactions change low-abundance species (";
    bool first = true;
    for (const auto& sp : fast_species) {
      msg += (first ? "" : ", ") + sp;
      first = false;
    }
    msg += ") faster than the observation timescale: ";
    for (std::size_t j = 0; j < fast.size(); ++j)
      msg += (j ? ", " : "") + fast[j];
    msg +=
        ". Eliminate them with a quasi-stationary reduction and supply the "
        "reduced propensities in a QSA-reduced model.";
    throw DerivationError(msg);
  }

  std::vector<Species> species = flagged_species(n, s);
  for (std::size_t i = 0; i < S; ++i)
    if (species[i].continuous)
      species[i].initial *= std::pow(s.N0, -to_double(s.alpha[i]));

  ReducedPDMP out;
  std::vector<Reaction> reactions;
  std::vector<ReactionClass> kept;
  for (std::size_t k = 0; k < K; ++k) {
    if (rep.classification[k] == ReactionClass::Dropped) continue;
    const Reaction& r = n.reactions()[k];
    bool moves = false;
    for (std::size_t i = 0; i < S; ++i) moves |= rep.zeta_hat(i, k) != 0;
    if (!moves) continue;  // nothing moves at this scale
    Reaction nr;
    nr.name = r.name;
    nr.reactants = r.reactants;
    for (std::size_t i = 0; i < S; ++i) {
      int p = r.reactant_count(i) + rep.zeta_hat(i, k);
      if (p > 0) nr.products.emplace_back(i, p);
    }
    if (const std::string* f = s.reduced_formula(r.name)) {
      nr.rate.kind = RateLaw::Kind::Custom;
      nr.rate.expr = parse(*f, n.symbols());
    } else if (r.rate.kind == RateLaw::Kind::Custom) {
      throw DerivationError("reaction '" + r.name +
                            "' has a custom rate law and needs a reduced "
                            "formula in the scaling file");
    } else {
      nr.rate.kind = RateLaw::Kind::MassAction;
      nr.rate.expr = scaled_kappa(n, s, k);
    }
    reactions.push_back(std::move(nr));
    kept.push_back(rep.classification[k]);
  }
  if (reactions.empty())
    throw DerivationError("no reaction survives the reduction");

  out.net = ReactionNetwork(std::move(species), std::move(reactions),
                            [&] {
                              std::vector<std::pair<std::string, double>> p;
                              for (std::size_t j = 0; j < n.param_names().size(); ++j)
                                p.emplace_back(n.param_names()[j], n.param_values()[j]);
                              return p;
                            }(),
                            n.observables());
  for (std::size_t i = 0; i < S; ++i)
    (out.net.species()[i].continuous ? out.continuous_species
                                     : out.discrete_species)
        .push_back(i);
  for (std::size_t k = 0; k < kept.size(); ++k) {
    if (kept[k] == ReactionClass::Continuous) {
      for (std::size_t i : out.discrete_species)
        if (out.net.zeta(k)[i] != 0)
          throw DerivationError("internal: continuous reaction '" +
                                out.net.reactions()[k].name +
                                "' moves a discrete species after truncation");
      out.continuous_reactions.push_back(k);
    } else {
      out.discrete_reactions.push_back(k);
    }
  }
  return out;
}

ReducedPDMP derive_reduced_model(const ReactionNetwork& n, const ScalingSpec& s) {
  return derive_reduced_model(n, s, timescale_report(n, s));
}

Json ReducedPDMP::to_json() const {
  Json doc = Json::object();
  doc["kind"] = "pdmp";
  Json body = net.to_json();
  for (auto it = body.begin(); it != body.end(); ++it) doc[it.key()] = it.value();
  auto names = [](const auto& idx, auto&& get) {
    Json a = Json::array();
    for (std::size_t i : idx) a.push_back(get(i));
    return a;
  };
  auto sp = [&](std::size_t i) { return net.species()[i].name; };
  auto rx = [&](std::size_t k) { return net.reactions()[k].name; };
  doc["continuous_species"] = names(continuous_species, sp);
  doc["discrete_species"] = names(discrete_species, sp);
  doc["continuous_reactions"] = names(continuous_reactions, rx);
  doc["discrete_reactions"] = names(discrete_reactions, rx);
  return doc;
}

namespace {

std::vector<std::size_t> name_list(const Json& doc, const char* key,
                                   auto&& lookup, const char* what) {
  std::vector<std::size_t> out;
  if (!doc.contains(key)) return out;
  if (!doc.at(key).is_array())
    throw ValidationError(std::string("'") + key + "' must be an array");
  for (const Json& e : doc.at(key)) {
    auto idx = lookup(e.get<std::string>());
    if (!idx)
      throw ValidationError(std::string("'") + key + "' names unknown " + what +
                            " '" + e.get<std::string>() + "'");
    out.push_back(*idx);
  }
  return out;
}

void check_partition(std::vector<std::size_t> a, std::vector<std::size_t> b,
                     std::size_t total, const char* what) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  bool ok = a.size() == total;
  for (std::size_t i = 0; ok && i < total; ++i) ok = a[i] == i;
  if (!ok)
    throw ValidationError(std::string("reduced model: continuous and discrete ") +
                          what + " lists must partition the declared " + what);
}

}  // namespace

ReducedPDMP parse_reduced(const Json& doc) {
  if (!doc.is_object() || doc.value("kind", "") != "pdmp")
    throw ValidationError("reduced model needs \"kind\": \"pdmp\"");
  ReducedPDMP m;
  m.net = parse_network(doc);
  const ReactionNetwork& n = m.net;
  auto sp = [&](const std::string& s) { return n.find_species(s); };
  auto rx = [&](const std::string& s) { return n.find_reaction(s); };
  m.continuous_species = name_list(doc, "continuous_species", sp, "species");
  m.discrete_species = name_list(doc, "discrete_species", sp, "species");
  m.continuous_reactions = name_list(doc, "continuous_reactions", rx, "reaction");
  m.discrete_reactions = name_list(doc, "discrete_reactions", rx, "reaction");
  if (!doc.contains("discrete_species"))
    for (std::size_t i = 0; i < n.num_species(); ++i)
      if (!n.species()[i].continuous) m.discrete_species.push_back(i);
  check_partition(m.continuous_species, m.discrete_species, n.num_species(),
                  "species");
  check_partition(m.continuous_reactions, m.discrete_reactions,
                  n.num_reactions(), "reactions");
  for (std::size_t k : m.continuous_reactions)
    for (std::size_t i : m.discrete_species)
      if (n.zeta(k)[i] != 0)
        throw DerivationError("continuous reaction '" + n.reactions()[k].name +
                              "' changes discrete species '" +
                              n.species()[i].name +
                              "'; a QSA pre-reduction is needed");
  for (std::size_t k : m.discrete_reactions)
    for (std::size_t i : m.continuous_species)
      if (n.zeta(k)[i] != 0)
        throw ValidationError("discrete reaction '" + n.reactions()[k].name +
                              "' changes continuous species '" +
                              n.species()[i].name + "'");
  std::sort(m.continuous_species.begin(), m.continuous_species.end());
  std::sort(m.discrete_species.begin(), m.discrete_species.end());
  std::sort(m.continuous_reactions.begin(), m.continuous_reactions.end());
  std::sort(m.discrete_reactions.begin(), m.discrete_reactions.end());
  return m;
}

ReducedPDMP load_reduced(const std::filesystem::path& path) {
  return parse_reduced(read_json_file(path));
}

ReducedPDMP trivial_reduction(const ReactionNetwork& n) {
  ReducedPDMP m;
  m.net = n;
  for (std::size_t i = 0; i < n.num_species(); ++i) m.discrete_species.push_back(i);
  for (std::size_t k = 0; k < n.num_reactions(); ++k)
    m.discrete_reactions.push_back(k);
  return m;
}

}  // namespace hybridsens
