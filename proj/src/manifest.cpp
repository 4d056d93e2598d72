#include "bglmm/manifest.hpp"

#include "bglmm/tabular.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace bglmm {

using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError("cannot read '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ManifestError("malformed " + what + ": " + e.what());
  }
}

PriorSpec spec_from_json(const json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("dist") || !j["dist"].is_string())
    throw ManifestError("prior for '" + where + "' needs a \"dist\" string");
  std::map<std::string, double> params;
  for (const auto& [k, v] : j.items()) {
    if (k == "dist") continue;
    if (!v.is_number()) throw ManifestError("prior parameter '" + k + "' for '" + where + "' must be a number");
    params[k] = v.get<double>();
  }
  try {
    return PriorSpec(parse_distribution(j["dist"].get<std::string>()), params);
  } catch (const PriorError& e) {
    throw ManifestError("prior for '" + where + "': " + e.what());
  }
}

// Group entries: an SD prior, or a Normal(0, SD prior) wrapper.
PriorSpec group_spec_from_json(const json& j, const std::string& where) {
  if (j.is_object() && j.value("dist", "") == "Normal" && j.contains("sigma") && j["sigma"].is_object()) {
    if (j.contains("mu") && (!j["mu"].is_number() || j["mu"].get<double>() != 0.0))
      throw ManifestError("group-specific prior for '" + where + "' must have mu 0");
    for (const auto& [k, v] : j.items())
      if (k != "dist" && k != "mu" && k != "sigma")
        throw ManifestError("unknown parameter '" + k + "' in group-specific prior for '" + where + "'");
    return spec_from_json(j["sigma"], where);
  }
  if (j.is_object() && j.value("dist", "") == "Normal")
    throw ManifestError("group-specific prior for '" + where + "' needs a prior on sigma");
  return spec_from_json(j, where);
}

json spec_to_json(const PriorSpec& p) {
  json j;
  j["dist"] = p.distribution_name();
  for (const auto& [k, v] : p.params()) j[k] = v;
  return j;
}

json entry_to_json(const PriorEntry& e) {
  return {{"name", e.name},
          {"term", e.term},
          {"prior", spec_to_json(e.spec)},
          {"provenance", e.provenance == Provenance::Default ? "default" : "override"},
          {"n_levels", e.n_levels}};
}

PriorEntry entry_from_json(const json& j) {
  PriorEntry e;
  e.name = j.at("name").get<std::string>();
  e.term = j.at("term").get<std::string>();
  e.spec = spec_from_json(j.at("prior"), e.name);
  e.provenance = j.at("provenance").get<std::string>() == "default" ? Provenance::Default : Provenance::Override;
  e.n_levels = j.at("n_levels").get<Eigen::Index>();
  return e;
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

// Finds the factor named `name` among the formula's terms.
const Factor* find_factor(const TermSet& terms, const std::string& name) {
  const auto search = [&](const std::vector<Term>& ts) -> const Factor* {
    for (const auto& t : ts)
      for (const auto& f : t.factors)
        if (f.name == name) return &f;
    return nullptr;
  };
  if (const Factor* f = search(terms.common)) return f;
  for (const auto& g : terms.group)
    if (const Factor* f = search(g.expr)) return f;
  return nullptr;
}

}  // namespace

PriorOverrides parse_prior_overrides(std::string_view json_text) {
  const json j = parse_json(json_text, "prior override document");
  if (!j.is_object()) throw ManifestError("prior override document must be a JSON object");
  PriorOverrides out;
  for (const auto& [key, value] : j.items()) {
    if (key == "common") {
      out.common = spec_from_json(value, "common");
    } else if (key == "group_specific") {
      out.group_specific = group_spec_from_json(value, "group_specific");
    } else if (key == "terms") {
      if (!value.is_object()) throw ManifestError("\"terms\" must be an object");
      for (const auto& [name, v] : value.items())
        out.terms[name] = name.find('|') != std::string::npos ? group_spec_from_json(v, name) : spec_from_json(v, name);
    } else {
      throw ManifestError("unknown key '" + key + "' in prior override document");
    }
  }
  return out;
}

PriorOverrides read_prior_overrides(const std::filesystem::path& path) { return parse_prior_overrides(slurp(path)); }

std::string manifest_json(const Model& model, const PosteriorDraws& draws, bool dropna) {
  const DesignMatrices& d = model.design();
  json j;
  j["schema_version"] = kManifestSchemaVersion;
  j["formula"] = model.formula();
  j["family"] = model.family().name;
  j["link"] = std::string(link_name(model.link()));
  j["dropna"] = dropna;
  j["dropped_rows"] = model.dropped_rows();
  j["observations"] = d.n_obs();
  j["parameters"] = model.parameter_names();

  json design;
  design["x_names"] = d.x_names;
  design["x_terms"] = d.x_terms;
  design["column_means"] = to_vec(d.column_means);
  design["has_intercept"] = d.has_intercept;
  design["centered"] = d.centered;
  design["z_names"] = d.z_names;
  design["factor_levels"] = d.factor_levels;
  design["group_levels"] = d.group_levels;
  json groups = json::array();
  for (const auto& g : d.groups)
    groups.push_back({{"factor", g.factor}, {"expr_names", g.expr_names}, {"expr_terms", g.expr_terms}, {"levels", g.levels}});
  design["groups"] = groups;
  design["response"] = {{"name", d.response.name}};
  if (d.response.success_level) design["response"]["success_level"] = *d.response.success_level;
  j["design"] = design;

  json transforms = json::array();
  for (const auto& [name, t] : model.transforms().transforms)
    transforms.push_back({{"name", name},
                          {"kind", t.kind == Transform::Kind::Scale ? "scale" : "center"},
                          {"mean", t.mean},
                          {"sd", t.sd}});
  j["transforms"] = transforms;

  const PriorSet& p = model.priors();
  json priors;
  priors["intercept"] = p.intercept ? entry_to_json(*p.intercept) : json(nullptr);
  for (const char* key : {"common", "group_sd", "auxiliary"}) priors[key] = json::array();
  for (const auto& e : p.common) priors["common"].push_back(entry_to_json(e));
  for (const auto& e : p.group_sd) priors["group_sd"].push_back(entry_to_json(e));
  for (const auto& e : p.auxiliary) priors["auxiliary"].push_back(entry_to_json(e));
  j["priors"] = priors;

  j["sampler"] = {{"seed", draws.metadata.seed},
                  {"chains", draws.n_chains()},
                  {"draws", draws.n_draws()},
                  {"tune", draws.metadata.tune},
                  {"target_accept", draws.metadata.target_accept},
                  {"step_size", draws.metadata.step_size}};
  return j.dump(2) + "\n";
}

FitManifest parse_manifest(std::string_view json_text) {
  const json j = parse_json(json_text, "model manifest");
  try {
    if (j.at("schema_version").get<int>() != kManifestSchemaVersion)
      throw ManifestError("unsupported manifest schema version " + j.at("schema_version").dump());
    FitManifest m;
    m.formula = j.at("formula").get<std::string>();
    m.family = j.at("family").get<std::string>();
    m.link = j.at("link").get<std::string>();
    m.dropna = j.at("dropna").get<bool>();
    m.dropped_rows = j.at("dropped_rows").get<std::size_t>();
    m.n_obs = j.at("observations").get<Eigen::Index>();
    m.parameter_names = j.at("parameters").get<std::vector<std::string>>();

    Predictor& p = m.predictor;
    p.terms = parse_terms(m.formula);
    p.family = &get_family(m.family);
    p.link = parse_link(m.link);
    DesignMatrices& d = p.reference;
    const json& design = j.at("design");
    d.x_names = design.at("x_names").get<std::vector<std::string>>();
    d.x_terms = design.at("x_terms").get<std::vector<std::string>>();
    const auto means = design.at("column_means").get<std::vector<double>>();
    d.column_means = Eigen::Map<const Eigen::VectorXd>(means.data(), static_cast<Eigen::Index>(means.size()));
    d.has_intercept = design.at("has_intercept").get<bool>();
    d.centered = design.at("centered").get<bool>();
    d.z_names = design.at("z_names").get<std::vector<std::string>>();
    d.factor_levels = design.at("factor_levels").get<std::map<std::string, std::vector<std::string>>>();
    d.group_levels = design.at("group_levels").get<std::map<std::string, std::vector<std::string>>>();
    for (const auto& g : design.at("groups")) {
      GroupBlock b;
      b.factor = g.at("factor").get<std::string>();
      b.expr_names = g.at("expr_names").get<std::vector<std::string>>();
      b.expr_terms = g.at("expr_terms").get<std::vector<std::string>>();
      b.levels = g.at("levels").get<std::vector<std::string>>();
      d.groups.push_back(std::move(b));
    }
    d.response.name = design.at("response").at("name").get<std::string>();
    if (design.at("response").contains("success_level"))
      d.response.success_level = design.at("response").at("success_level").get<std::string>();

    for (const auto& t : j.at("transforms")) {
      const auto name = t.at("name").get<std::string>();
      const Factor* f = find_factor(p.terms, name);
      if (!f || f->args.empty()) throw ManifestError("transform '" + name + "' does not occur in the formula");
      Transform tr;
      tr.kind = t.at("kind").get<std::string>() == "scale" ? Transform::Kind::Scale : Transform::Kind::Center;
      tr.argument = f->args.front();
      tr.mean = t.at("mean").get<double>();
      tr.sd = t.at("sd").get<double>();
      p.state.transforms[name] = tr;
    }

    const json& priors = j.at("priors");
    if (!priors.at("intercept").is_null()) m.priors.intercept = entry_from_json(priors.at("intercept"));
    for (const auto& e : priors.at("common")) m.priors.common.push_back(entry_from_json(e));
    for (const auto& e : priors.at("group_sd")) m.priors.group_sd.push_back(entry_from_json(e));
    for (const auto& e : priors.at("auxiliary")) m.priors.auxiliary.push_back(entry_from_json(e));

    const json& s = j.at("sampler");
    m.sampler.seed = s.at("seed").get<std::uint64_t>();
    m.sampler.tune = s.at("tune").get<int>();
    m.sampler.target_accept = s.at("target_accept").get<double>();
    m.sampler.step_size = s.at("step_size").get<std::vector<double>>();
    m.chains = s.at("chains").get<int>();
    m.draws = s.at("draws").get<int>();
    if (p.n_params() != static_cast<Eigen::Index>(m.parameter_names.size()))
      throw ManifestError("manifest parameter list does not match its design");
    return m;
  } catch (const json::exception& e) {
    throw ManifestError(std::string("malformed model manifest: ") + e.what());
  }
}

FitManifest read_manifest(const std::filesystem::path& path) { return parse_manifest(slurp(path)); }

std::string draws_csv(const PosteriorDraws& draws) {
  std::ostringstream os;
  os << "chain,draw";
  for (const auto& n : draws.names) os << ',' << csv_escape(n);
  os << '\n';
  for (Eigen::Index c = 0; c < draws.n_chains(); ++c) {
    const auto& m = draws.chains[static_cast<std::size_t>(c)];
    for (Eigen::Index d = 0; d < m.rows(); ++d) {
      os << c << ',' << d;
      for (Eigen::Index p = 0; p < m.cols(); ++p) os << ',' << format_double(m(d, p));
      os << '\n';
    }
  }
  return os.str();
}

PosteriorDraws read_draws_csv(const std::filesystem::path& path, const std::vector<std::string>& names) {
  const DataTable t = read_csv(path);
  if (!t.has("chain") || !t.has("draw")) throw ManifestError("draws file lacks chain/draw columns");
  const Column& chain = t.column("chain");
  if (!chain.is_numeric()) throw ManifestError("draws file has a non-numeric chain column");
  std::vector<const Column*> cols;
  for (const auto& n : names) {
    if (!t.has(n)) throw ManifestError("draws file lacks parameter '" + n + "'");
    cols.push_back(&t.column(n));
    if (!cols.back()->is_numeric()) throw ManifestError("draws column '" + n + "' is not numeric");
  }
  if (t.n_cols() != names.size() + 2) throw ManifestError("draws file and manifest list different parameters");
  PosteriorDraws out;
  out.names = names;
  std::vector<std::vector<std::size_t>> rows;
  for (std::size_t r = 0; r < t.n_rows(); ++r) {
    const double c = chain.numeric[r];
    if (!(c >= 0) || c != std::floor(c)) throw ManifestError("invalid chain index in draws file");
    const auto ci = static_cast<std::size_t>(c);
    if (ci >= rows.size()) rows.resize(ci + 1);
    rows[ci].push_back(r);
  }
  for (const auto& rs : rows) {
    if (rs.size() != rows.front().size()) throw ManifestError("chains in draws file have different lengths");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rs.size()), static_cast<Eigen::Index>(names.size()));
    for (std::size_t i = 0; i < rs.size(); ++i)
      for (std::size_t p = 0; p < cols.size(); ++p)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) = cols[p]->numeric[rs[i]];
    out.chains.push_back(std::move(m));
  }
  return out;
}

}  // namespace bglmm
