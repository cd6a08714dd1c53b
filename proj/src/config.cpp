#include "qshift/config.hpp"

#include <fstream>
#include <initializer_list>
#include <string_view>

#include "qshift/errors.hpp"

namespace qshift {

using nlohmann::json;

namespace {

void require_object(const json& j, std::string_view where) {
  if (!j.is_object()) throw Error(ErrorKind::BadConfig, std::string(where) + " must be an object");
}

void reject_unknown(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw Error(ErrorKind::BadConfig, "unknown key '" + key + "' in " + std::string(where));
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::BadConfig, std::string("key '") + key + "': " + e.what());
  }
}

std::size_t read_count(const json& j, const char* key, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw Error(ErrorKind::BadConfig, std::string("key '") + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

}  // namespace

CorruptionSpec corruption_from_json(const json& j) {
  require_object(j, "corruption");
  std::string kind;
  read(j, "kind", kind);
  CorruptionSpec spec;
  if (kind == "gaussian_noise") {
    reject_unknown(j, "gaussian_noise", {"kind", "sigma"});
    spec = CorruptionSpec::gaussian_noise(0.0);
    read(j, "sigma", spec.sigma);
  } else if (kind == "mean_shift") {
    reject_unknown(j, "mean_shift", {"kind", "direction", "delta"});
    spec = CorruptionSpec::mean_shift(0, 0.0);
    read(j, "direction", spec.direction);
    read(j, "delta", spec.delta);
  } else if (kind == "uniformity_collapse") {
    reject_unknown(j, "uniformity_collapse", {"kind", "rho"});
    spec = CorruptionSpec::uniformity_collapse(0.0);
    read(j, "rho", spec.rho);
  } else if (kind == "compose") {
    reject_unknown(j, "compose", {"kind", "steps"});
    if (!j.contains("steps") || !j.at("steps").is_array()) {
      throw Error(ErrorKind::BadConfig, "compose needs a 'steps' array");
    }
    std::vector<CorruptionSpec> steps;
    for (const auto& s : j.at("steps")) steps.push_back(corruption_from_json(s));
    spec = CorruptionSpec::compose(std::move(steps));
  } else {
    throw Error(ErrorKind::BadConfig, "unknown corruption kind '" + kind + "'");
  }
  try {
    spec.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::BadConfig, e.what());
  }
  return spec;
}

json corruption_to_json(const CorruptionSpec& spec) {
  switch (spec.kind) {
    case CorruptionSpec::Kind::gaussian_noise: return {{"kind", "gaussian_noise"}, {"sigma", spec.sigma}};
    case CorruptionSpec::Kind::mean_shift:
      return {{"kind", "mean_shift"}, {"direction", spec.direction}, {"delta", spec.delta}};
    case CorruptionSpec::Kind::uniformity_collapse:
      return {{"kind", "uniformity_collapse"}, {"rho", spec.rho}};
    case CorruptionSpec::Kind::compose: {
      json steps = json::array();
      for (const auto& s : spec.steps) steps.push_back(corruption_to_json(s));
      return {{"kind", "compose"}, {"steps", steps}};
    }
  }
  return {};
}

RunConfig RunConfig::from_json(const json& j) {
  require_object(j, "config");
  reject_unknown(j, "config",
                 {"method", "tau", "k", "batch", "lr", "decouple", "seed", "paths", "synth", "probe", "gradcheck"});
  RunConfig c;
  if (j.contains("method")) {
    std::string m;
    read(j, "method", m);
    try {
      c.method = parse_method(m);
    } catch (const Error&) {
      throw Error(ErrorKind::BadConfig, "unknown method '" + m + "'");
    }
  }
  read(j, "tau", c.session.tau);
  c.session.k = read_count(j, "k", c.session.k);
  c.session.batch = read_count(j, "batch", c.session.batch);
  read(j, "lr", c.session.lr);
  read(j, "seed", c.session.seed);
  if (j.contains("decouple")) {
    bool d = false;
    read(j, "decouple", d);
    c.decouple = d;
  }

  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    require_object(p, "paths");
    reject_unknown(p, "paths", {"gallery", "queries", "ground_truth"});
    DataPaths paths;
    std::string s;
    for (auto [key, target] : {std::pair{"gallery", &paths.gallery}, std::pair{"queries", &paths.queries},
                               std::pair{"ground_truth", &paths.ground_truth}}) {
      if (!p.contains(key)) throw Error(ErrorKind::BadConfig, std::string("paths.") + key + " is required");
      read(p, key, s);
      *target = s;
    }
    c.paths = paths;
  }

  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    require_object(s, "synth");
    reject_unknown(s, "synth", {"classes", "dim", "gallery_size", "stream_length", "query_noise",
                                "gallery_noise", "seed", "mode", "corruptions"});
    SynthBlock b;
    b.spec.classes = read_count(s, "classes", b.spec.classes);
    b.spec.dim = read_count(s, "dim", b.spec.dim);
    b.spec.gallery_size = read_count(s, "gallery_size", b.spec.gallery_size);
    b.spec.stream_length = read_count(s, "stream_length", b.spec.stream_length);
    read(s, "query_noise", b.spec.query_noise);
    read(s, "gallery_noise", b.spec.gallery_noise);
    b.explicit_seed = s.contains("seed");
    b.spec.seed = c.session.seed;
    read(s, "seed", b.spec.seed);
    std::string mode = "oqs";
    read(s, "mode", mode);
    if (mode == "oqs") {
      b.mode = ShiftMode::oqs;
    } else if (mode == "dqs") {
      b.mode = ShiftMode::dqs;
    } else {
      throw Error(ErrorKind::BadConfig, "synth.mode must be 'oqs' or 'dqs'");
    }
    if (s.contains("corruptions")) {
      if (!s.at("corruptions").is_array()) throw Error(ErrorKind::BadConfig, "synth.corruptions must be an array");
      for (const auto& cj : s.at("corruptions")) b.corruptions.push_back(corruption_from_json(cj));
    }
    if (b.mode == ShiftMode::dqs && b.corruptions.empty()) {
      throw Error(ErrorKind::BadConfig, "dqs mode needs at least one corruption domain");
    }
    try {
      b.spec.validate();
    } catch (const Error& e) {
      throw Error(ErrorKind::BadConfig, e.what());
    }
    c.synth = std::move(b);
  }

  if (j.contains("probe")) {
    const auto& p = j.at("probe");
    require_object(p, "probe");
    reject_unknown(p, "probe", {"scale", "offset"});
    read(p, "scale", c.probe.scale);
    read(p, "offset", c.probe.offset);
  }

  if (j.contains("gradcheck")) {
    const auto& g = j.at("gradcheck");
    require_object(g, "gradcheck");
    reject_unknown(g, "gradcheck",
                   {"dim", "batch", "k", "gallery_size", "instances", "tau", "h", "tolerance", "perturb"});
    auto& o = c.gradcheck;
    o.dim = read_count(g, "dim", o.dim);
    o.batch = read_count(g, "batch", o.batch);
    o.k = read_count(g, "k", o.k);
    o.gallery_size = read_count(g, "gallery_size", o.gallery_size);
    o.instances = read_count(g, "instances", o.instances);
    read(g, "tau", o.tau);
    read(g, "h", o.h);
    read(g, "tolerance", o.tolerance);
    read(g, "perturb", o.perturb);
    if (o.dim < 1 || o.batch < 2 || o.k < 1 || o.gallery_size < o.k + 1 || o.instances < 1) {
      throw Error(ErrorKind::BadConfig, "gradcheck sizes out of range");
    }
    if (!(o.h >= 1e-7 && o.h <= 1e-3)) throw Error(ErrorKind::BadConfig, "gradcheck.h must lie in [1e-7, 1e-3]");
  }

  try {
    c.session.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::BadConfig, e.what());
  }
  return c;
}

json RunConfig::to_json() const {
  json j;
  j["method"] = std::string(to_string(method));
  j["tau"] = session.tau;
  j["k"] = session.k;
  j["batch"] = session.batch;
  j["lr"] = session.lr;
  j["decouple"] = decouple_enabled();
  j["seed"] = session.seed;
  if (paths) {
    j["paths"] = {{"gallery", paths->gallery.string()},
                  {"queries", paths->queries.string()},
                  {"ground_truth", paths->ground_truth.string()}};
  }
  if (synth) {
    json corruptions = json::array();
    for (const auto& cs : synth->corruptions) corruptions.push_back(corruption_to_json(cs));
    j["synth"] = {{"classes", synth->spec.classes},
                  {"dim", synth->spec.dim},
                  {"gallery_size", synth->spec.gallery_size},
                  {"stream_length", synth->spec.stream_length},
                  {"query_noise", synth->spec.query_noise},
                  {"gallery_noise", synth->spec.gallery_noise},
                  {"seed", synth->spec.seed},
                  {"mode", synth->mode == ShiftMode::oqs ? "oqs" : "dqs"},
                  {"corruptions", corruptions}};
  }
  return j;
}

void RunConfig::override_seed(std::uint64_t seed) {
  session.seed = seed;
  if (synth && !synth->explicit_seed) synth->spec.seed = seed;
}

bool RunConfig::decouple_enabled() const {
  if (decouple) return *decouple;
  return synth && synth->mode == ShiftMode::dqs;
}

SessionConfig RunConfig::session_config() const {
  SessionConfig s = session;
  s.decouple = decouple_enabled();
  return s;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::BadConfig, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::BadConfig, path.string() + ": " + e.what());
  }
  return RunConfig::from_json(j);
}

}  // namespace qshift
