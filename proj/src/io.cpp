// Apache License, Version 2.0, refer to LICENSE.txt

#include "cloglog/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "cloglog/draws.hpp"
#include "cloglog/error.hpp"
#include "cloglog/rng.hpp"

namespace cloglog {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// One CSV record; quoted fields may contain commas and doubled quotes.
std::vector<std::string> split_csv(const std::string& line, const std::string& where) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false, was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = was_quoted = true;
    } else if (c == ',') {
      out.push_back(was_quoted ? cur : trim(cur));
      cur.clear();
      was_quoted = false;
    } else {
      cur += c;
    }
  }
  if (quoted) throw DataError(where + ": unterminated quote");
  out.push_back(was_quoted ? cur : trim(cur));
  return out;
}

bool parse_double(const std::string& s, double& v) {
  if (s.empty()) return false;
  const char* b = s.data();
  const char* e = b + s.size();
  if (*b == '+') ++b;
  const auto res = std::from_chars(b, e, v);
  return res.ec == std::errc() && res.ptr == e && std::isfinite(v);
}

bool is_missing(const std::string& s) {
  std::string l(s);
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  return l.empty() || l == "na" || l == "nan" || l == "null";
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------- datasets

std::vector<double> Dataset::column(Role role) const {
  for (std::size_t j = 0; j < roles.size(); ++j) {
    if (roles[j] != role) continue;
    std::vector<double> out(rows());
    for (std::size_t i = 0; i < rows(); ++i) out[i] = values(i, j);
    return out;
  }
  throw SchemaError("dataset has no column with the requested role");
}

std::vector<int> Dataset::int_column(Role role) const {
  const std::vector<double> v = column(role);
  std::vector<int> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<int>(std::lround(v[i]));
  return out;
}

Matrix Dataset::predictors() const {
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < roles.size(); ++j) {
    if (roles[j] == Role::kPredictor) cols.push_back(j);
  }
  Matrix x(rows(), cols.size());
  for (std::size_t i = 0; i < rows(); ++i) {
    for (std::size_t c = 0; c < cols.size(); ++c) x(i, c) = values(i, cols[c]);
  }
  return x;
}

std::vector<std::string> Dataset::predictor_names() const {
  std::vector<std::string> out;
  for (std::size_t j = 0; j < roles.size(); ++j) {
    if (roles[j] == Role::kPredictor) out.push_back(columns[j]);
  }
  return out;
}

Dataset parse_dataset(std::istream& in, const Schema& schema, const std::string& label) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(label + ": empty file");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const std::vector<std::string> header = split_csv(line, label + " header");
  std::map<std::string, std::size_t> index;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j].empty()) throw SchemaError(label + ": empty column name at position " + std::to_string(j + 1));
    if (!index.emplace(header[j], j).second) throw SchemaError(label + ": duplicate column '" + header[j] + "'");
  }
  auto find = [&](const std::string& name) {
    const auto it = index.find(name);
    if (it == index.end()) throw SchemaError(label + ": unknown column '" + name + "'");
    return it->second;
  };

  std::vector<std::vector<std::string>> cells;
  for (std::size_t row = 2; std::getline(in, line); ++row) {
    if (trim(line).empty()) continue;
    const std::string where = label + " row " + std::to_string(row);
    cells.push_back(split_csv(line, where));
    if (cells.back().size() != header.size()) {
      throw DataError(where + ": expected " + std::to_string(header.size()) + " fields, found " +
                      std::to_string(cells.back().size()));
    }
  }
  if (cells.empty()) throw DataError(label + ": no data rows");
  const std::size_t n = cells.size();
  auto cell_where = [&](std::size_t i, std::size_t j) {
    return label + " row " + std::to_string(i + 2) + ", column '" + header[j] + "'";
  };
  auto numeric = [&](std::size_t j) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string& s = cells[i][j];
      if (is_missing(s)) throw DataError(cell_where(i, j) + ": missing value");
      if (!parse_double(s, v[i])) throw DataError(cell_where(i, j) + ": non-numeric value '" + s + "'");
    }
    return v;
  };

  std::vector<std::string> special;
  for (const std::string* s : {&schema.outcome, &schema.time, &schema.status}) {
    if (!s->empty()) special.push_back(*s);
  }
  for (const auto& c : schema.categorical) find(c);
  std::vector<std::string> preds = schema.predictors;
  if (preds.empty()) {
    for (const auto& h : header) {
      if (std::find(special.begin(), special.end(), h) == special.end()) preds.push_back(h);
    }
  }
  for (const auto& c : schema.categorical) {
    if (std::find(preds.begin(), preds.end(), c) == preds.end()) {
      throw SchemaError(label + ": categorical column '" + c + "' is not a predictor");
    }
  }

  Dataset d;
  std::vector<std::vector<double>> cols;
  for (const auto& p : preds) {
    const std::size_t j = find(p);
    if (std::find(special.begin(), special.end(), p) != special.end()) {
      throw SchemaError(label + ": column '" + p + "' has two roles");
    }
    const bool categorical =
        std::find(schema.categorical.begin(), schema.categorical.end(), p) != schema.categorical.end();
    if (!categorical) {
      d.columns.push_back(p);
      d.roles.push_back(Role::kPredictor);
      cols.push_back(numeric(j));
      continue;
    }
    CategoryEncoding enc{p, {}};
    for (std::size_t i = 0; i < n; ++i) {
      if (is_missing(cells[i][j])) throw DataError(cell_where(i, j) + ": missing value");
      enc.levels.push_back(cells[i][j]);
    }
    std::sort(enc.levels.begin(), enc.levels.end());
    enc.levels.erase(std::unique(enc.levels.begin(), enc.levels.end()), enc.levels.end());
    for (const auto& level : enc.levels) {
      d.columns.push_back(p + "=" + level);
      d.roles.push_back(Role::kPredictor);
      std::vector<double> ind(n);
      for (std::size_t i = 0; i < n; ++i) ind[i] = cells[i][j] == level ? 1.0 : 0.0;
      cols.push_back(std::move(ind));
    }
    d.encodings.push_back(std::move(enc));
  }

  if (!schema.outcome.empty()) {
    const std::size_t j = find(schema.outcome);
    std::vector<double> y = numeric(j);
    for (std::size_t i = 0; i < n; ++i) {
      if (schema.outcome_kind == OutcomeKind::kOrdinal) {
        const bool ok = y[i] == std::floor(y[i]) && y[i] >= 1 &&
                        (schema.num_categories < 2 || y[i] <= schema.num_categories);
        if (!ok) {
          throw DataError(cell_where(i, j) + ": ordinal outcome must be an integer in 1.." +
                          (schema.num_categories >= 2 ? std::to_string(schema.num_categories) : std::string("K")));
        }
      } else if (schema.outcome_kind == OutcomeKind::kBinary && y[i] != 0.0 && y[i] != 1.0) {
        throw DataError(cell_where(i, j) + ": binary outcome must be 0 or 1");
      }
    }
    d.columns.push_back(schema.outcome);
    d.roles.push_back(Role::kOutcome);
    cols.push_back(std::move(y));
  }
  if (schema.time.empty() != schema.status.empty()) {
    throw SchemaError(label + ": survival data need both a time and a status column");
  }
  if (!schema.time.empty()) {
    const std::size_t jt = find(schema.time), js = find(schema.status);
    std::vector<double> t = numeric(jt), s = numeric(js);
    for (std::size_t i = 0; i < n; ++i) {
      if (!(t[i] > 0.0)) throw DataError(cell_where(i, jt) + ": survival time must be positive");
      if (s[i] != 0.0 && s[i] != 1.0) throw DataError(cell_where(i, js) + ": status must be 0 or 1");
    }
    d.columns.push_back(schema.time);
    d.roles.push_back(Role::kTime);
    cols.push_back(std::move(t));
    d.columns.push_back(schema.status);
    d.roles.push_back(Role::kStatus);
    cols.push_back(std::move(s));
  }

  d.values = Matrix(n, cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c) {
    for (std::size_t i = 0; i < n; ++i) d.values(i, c) = cols[c][i];
  }
  return d;
}

Dataset load_dataset(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return parse_dataset(in, schema, path);
}

void write_dataset(std::ostream& out, const Dataset& data) {
  for (std::size_t j = 0; j < data.columns.size(); ++j) out << (j ? "," : "") << csv_quote(data.columns[j]);
  out << '\n';
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (std::size_t j = 0; j < data.columns.size(); ++j) out << (j ? "," : "") << format_double(data.values(i, j));
    out << '\n';
  }
}

void write_dataset(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  write_dataset(out, data);
  if (!out) throw DataError("write failed for '" + path + "'");
}

// ---------------------------------------------------------------- simulators

namespace {

Dataset two_column(std::vector<std::string> names, std::vector<Role> roles, Matrix values) {
  Dataset d;
  d.columns = std::move(names);
  d.roles = std::move(roles);
  d.values = std::move(values);
  return d;
}

constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

Dataset simulate_dunson(std::size_t n, std::uint64_t seed) {
  if (n < 1) throw UsageError("simulate_dunson: need n >= 1");
  Rng rng(seed);
  Matrix v(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform();
    const bool first = rng.uniform() < std::exp(-2.0 * x);
    const double z = rng.normal();
    v(i, 0) = x;
    v(i, 1) = first ? x + 0.1 * z : std::pow(x, 4) + 0.2 * z;
  }
  return two_column({"x", "y"}, {Role::kPredictor, Role::kOutcome}, std::move(v));
}

double dunson_density(double y, double x) {
  const double w = std::exp(-2.0 * x);
  const double z1 = (y - x) / 0.1, z2 = (y - std::pow(x, 4)) / 0.2;
  return w * kInvSqrt2Pi / 0.1 * std::exp(-0.5 * z1 * z1) + (1 - w) * kInvSqrt2Pi / 0.2 * std::exp(-0.5 * z2 * z2);
}

double dunson_mean(double x) {
  const double w = std::exp(-2.0 * x);
  return w * x + (1 - w) * std::pow(x, 4);
}

Dataset simulate_ph_survival(std::size_t n, double censor_rate, std::uint64_t seed) {
  if (n < 1) throw UsageError("simulate_ph_survival: need n >= 1");
  if (!(censor_rate >= 0.0)) throw UsageError("simulate_ph_survival: censoring rate must be >= 0");
  Rng rng(seed);
  Matrix v(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform();
    const double t = rng.exponential() / (0.5 * std::exp(x));
    const double c = censor_rate > 0.0 ? rng.exponential() / censor_rate : INFINITY;
    v(i, 0) = x;
    v(i, 1) = std::min(t, c);
    v(i, 2) = t <= c ? 1.0 : 0.0;
  }
  return two_column({"x", "time", "status"}, {Role::kPredictor, Role::kTime, Role::kStatus}, std::move(v));
}

double ph_survival_truth(double t, double x) { return std::exp(-0.5 * std::exp(x) * t); }

double crossing_change_point() {
  // median event time of the pooled population
  double lo = 0.0, hi = 5.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (0.5 * (std::exp(-0.5 * mid) + std::exp(-2.0 * mid)) > 0.5 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Dataset simulate_crossing(std::size_t n, std::uint64_t seed) {
  if (n < 1) throw UsageError("simulate_crossing: need n >= 1");
  const double t0 = crossing_change_point();
  Rng rng(seed);
  Matrix v(n, 4);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = rng.uniform();
    const double noise = rng.uniform();
    double t = rng.exponential();
    if (g > 0.5) {
      t = t <= 2.0 * t0 ? t / 2.0 : t0 + (t - 2.0 * t0) / 0.25;
    } else {
      t /= 0.5;
    }
    const double c = rng.exponential() / 0.1;
    v(i, 0) = g;
    v(i, 1) = noise;
    v(i, 2) = std::min(t, c);
    v(i, 3) = t <= c ? 1.0 : 0.0;
  }
  return two_column({"g", "noise", "time", "status"},
                    {Role::kPredictor, Role::kPredictor, Role::kTime, Role::kStatus}, std::move(v));
}

// ---------------------------------------------------------------- config

namespace {

struct KeyInfo {
  const char* name;
  const char* fallback;
  Origin origin;
  bool affects_results;
};

// "auto" is resolved per model by the pipeline.
constexpr KeyInfo kKeys[] = {
    {"model", "", Origin::kDecision, true},
    {"data", "", Origin::kDecision, false},
    {"outcome", "", Origin::kDecision, true},
    {"time", "", Origin::kDecision, true},
    {"status", "", Origin::kDecision, true},
    {"predictors", "", Origin::kDecision, true},
    {"categorical", "", Origin::kDecision, true},
    {"out_dir", "out", Origin::kDecision, false},
    {"fit_dir", "", Origin::kDecision, false},
    {"seed", "", Origin::kUser, true},
    {"chains", "1", Origin::kDecision, true},
    {"threads", "1", Origin::kDecision, false},
    {"trees", "50", Origin::kMethod, true},
    {"burnin", "auto", Origin::kMethod, true},
    {"iters", "auto", Origin::kMethod, true},
    {"thin", "1", Origin::kDecision, true},
    {"K", "auto", Origin::kDecision, true},
    {"Kmax", "25", Origin::kDecision, true},
    {"bins", "auto", Origin::kMethod, true},
    {"max_nph_bins", "20", Origin::kDecision, true},
    {"mode", "auto", Origin::kDecision, true},
    {"link", "cloglog", Origin::kDecision, true},
    {"augment_zeros", "false", Origin::kDecision, true},
    {"sigma_mu", "auto", Origin::kMethod, true},
    {"a_gamma", "1", Origin::kDecision, true},
    {"b_gamma", "1", Origin::kDecision, true},
    {"a_lambda", "1", Origin::kMethod, true},
    {"b_lambda", "1", Origin::kMethod, true},
    {"w", "0.5", Origin::kDecision, true},
    {"alpha", "0.95", Origin::kDecision, true},
    {"beta", "2", Origin::kDecision, true},
    {"max_cuts", "100", Origin::kDecision, true},
    {"mu0", "0", Origin::kMethod, true},
    {"query", "", Origin::kDecision, true},
    {"grid_points", "101", Origin::kDecision, true},
    {"folds", "5", Origin::kMethod, true},
    {"splits", "10", Origin::kMethod, true},
    {"compare", "false", Origin::kDecision, true},
    {"dgp", "dunson", Origin::kDecision, true},
    {"n", "500", Origin::kMethod, true},
    {"censoring", "0.3", Origin::kDecision, true},
    {"checks", "all", Origin::kDecision, true},
    {"replications", "200", Origin::kDecision, true},
    {"sbc_model", "ordinal", Origin::kDecision, true},
    {"sbc_draws", "100", Origin::kDecision, true},
    {"sbc_bins", "20", Origin::kDecision, true},
    {"exposure_scale", "1", Origin::kDecision, true},
};

const KeyInfo* info(const std::string& key) {
  for (const KeyInfo& k : kKeys) {
    if (key == k.name) return &k;
  }
  return nullptr;
}

}  // namespace

const char* origin_name(Origin origin) {
  switch (origin) {
    case Origin::kMethod: return "method";
    case Origin::kDecision: return "decision";
    case Origin::kUser: return "user";
  }
  return "decision";
}

RunConfig::RunConfig() = default;

bool RunConfig::known(const std::string& key) { return info(key) != nullptr; }

bool RunConfig::affects_results(const std::string& key) {
  const KeyInfo* k = info(key);
  return k != nullptr && k->affects_results;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!known(key)) throw UsageError("unknown configuration key '" + key + "'");
  for (auto& kv : values_) {
    if (kv.first == key) {
      kv.second = value;
      return;
    }
  }
  values_.emplace_back(key, value);
}

void RunConfig::load(std::istream& in, const std::string& label) {
  std::string line;
  for (int row = 1; std::getline(in, line); ++row) {
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line.erase(hash_pos);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(label + " line " + std::to_string(row) + ": expected key = value");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config '" + path + "'");
  load(in, path);
}

bool RunConfig::has(const std::string& key) const {
  return std::any_of(values_.begin(), values_.end(), [&](const auto& kv) { return kv.first == key; });
}

std::string RunConfig::get(const std::string& key) const {
  const KeyInfo* k = info(key);
  if (!k) throw UsageError("unknown configuration key '" + key + "'");
  for (const auto& kv : values_) {
    if (kv.first == key) return kv.second;
  }
  return k->fallback;
}

long long RunConfig::get_int(const std::string& key) const {
  const std::string s = get(key);
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw UsageError("configuration key '" + key + "' needs an integer, got '" + s + "'");
  }
  return v;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string s = get(key);
  double v = 0.0;
  if (!parse_double(s, v)) throw UsageError("configuration key '" + key + "' needs a number, got '" + s + "'");
  return v;
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string s = get(key);
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off" || s.empty()) return false;
  throw UsageError("configuration key '" + key + "' needs true or false, got '" + s + "'");
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Origin RunConfig::origin(const std::string& key) const {
  if (has(key)) return Origin::kUser;
  const KeyInfo* k = info(key);
  if (!k) throw UsageError("unknown configuration key '" + key + "'");
  // the method prescribes no survival run length
  if ((key == "burnin" || key == "iters") && get("model") == "survival") return Origin::kDecision;
  return k->origin;
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const KeyInfo& k : kKeys) out.emplace_back(k.name, get(k.name));
  return out;
}

std::string RunConfig::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const KeyInfo& k : kKeys) {
    if (!k.affects_results) continue;
    const std::string line = std::string(k.name) + "=" + get(k.name) + "\n";
    for (unsigned char c : line) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<double> parse_numbers(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v = 0.0;
    if (!parse_double(trim(item), v)) throw UsageError("cannot parse number '" + trim(item) + "'");
    out.push_back(v);
  }
  return out;
}

Matrix parse_points(const std::string& text, std::size_t cols) {
  Matrix out;
  std::stringstream ss(text);
  std::string point;
  while (std::getline(ss, point, ';')) {
    if (trim(point).empty()) continue;
    const std::vector<double> v = parse_numbers(point);
    if (v.size() != cols) {
      throw UsageError("query point '" + trim(point) + "' has " + std::to_string(v.size()) + " values, expected " +
                       std::to_string(cols));
    }
    out.append_row(v);
  }
  return out;
}

// ---------------------------------------------------------------- draws

void write_draws(std::ostream& out, const PosteriorDraws& draws) {
  for (const auto& [k, v] : draws.metadata) out << "# " << k << "=" << v << '\n';
  for (std::size_t j = 0; j < draws.columns.size(); ++j) out << (j ? "\t" : "") << draws.columns[j];
  out << '\n';
  for (const auto& row : draws.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "\t" : "") << format_double(row[j]);
    out << '\n';
  }
}

PosteriorDraws read_draws(std::istream& in, const std::string& label) {
  PosteriorDraws d;
  std::string line;
  bool header = false;
  for (std::size_t row = 1; std::getline(in, line); ++row) {
    if (line.rfind("# ", 0) == 0 && !header) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw DataError(label + " line " + std::to_string(row) + ": bad manifest entry");
      d.metadata.emplace_back(line.substr(2, eq - 2), line.substr(eq + 1));
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (!header) {
      d.columns = std::move(fields);
      header = true;
      continue;
    }
    if (fields.size() != d.columns.size()) {
      throw DataError(label + " line " + std::to_string(row) + ": wrong number of fields");
    }
    std::vector<double> v(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) {
      if (!parse_double(fields[j], v[j])) throw DataError(label + " line " + std::to_string(row) + ": bad number");
    }
    d.rows.push_back(std::move(v));
  }
  if (!header) throw DataError(label + ": missing header");
  return d;
}

void write_matrix(std::ostream& out, const Matrix& m) {
  out << m.rows() << '\t' << m.cols() << '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out << (j ? "\t" : "") << format_double(m(i, j));
    out << '\n';
  }
}

Matrix read_matrix(std::istream& in, const std::string& label) {
  std::size_t r = 0, c = 0;
  if (!(in >> r >> c)) throw DataError(label + ": missing dimensions");
  Matrix m(r, c);
  std::string tok;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      if (!(in >> tok) || !parse_double(tok, m(i, j))) throw DataError(label + ": bad or missing value");
    }
  }
  return m;
}

double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw DomainError("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double split_rhat(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> halves;
  for (const auto& c : chains) {
    const std::size_t h = c.size() / 2;
    if (h < 2) return NAN;
    halves.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(h));
    halves.emplace_back(c.end() - static_cast<std::ptrdiff_t>(h), c.end());
  }
  const double n = static_cast<double>(halves[0].size());
  const double m = static_cast<double>(halves.size());
  std::vector<double> means;
  double w = 0.0;
  for (const auto& h : halves) {
    const double mu = std::accumulate(h.begin(), h.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : h) ss += (v - mu) * (v - mu);
    w += ss / (n - 1.0) / m;
    means.push_back(mu);
  }
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / m;
  double b = 0.0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b *= n / (m - 1.0);
  if (w <= 0.0) return b <= 0.0 ? 1.0 : INFINITY;
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

std::vector<SummaryRow> summarize(const std::vector<PosteriorDraws>& chains) {
  if (chains.empty()) return {};
  std::vector<SummaryRow> out;
  for (std::size_t j = 0; j < chains[0].columns.size(); ++j) {
    SummaryRow r;
    r.name = chains[0].columns[j];
    std::vector<double> all;
    std::vector<std::vector<double>> per;
    for (const auto& c : chains) {
      per.push_back(c.column(r.name));
      all.insert(all.end(), per.back().begin(), per.back().end());
    }
    if (all.empty()) continue;
    r.mean = std::accumulate(all.begin(), all.end(), 0.0) / static_cast<double>(all.size());
    double ss = 0.0;
    for (double v : all) ss += (v - r.mean) * (v - r.mean);
    r.sd = all.size() > 1 ? std::sqrt(ss / static_cast<double>(all.size() - 1)) : 0.0;
    r.q025 = quantile(all, 0.025);
    r.q50 = quantile(all, 0.5);
    r.q975 = quantile(all, 0.975);
    r.rhat = chains.size() > 1 ? split_rhat(per) : NAN;
    out.push_back(std::move(r));
  }
  return out;
}

void write_summary(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "quantity\tmean\tsd\tq2.5\tq50\tq97.5\trhat\n";
  for (const auto& r : rows) {
    out << r.name << '\t' << format_double(r.mean) << '\t' << format_double(r.sd) << '\t' << format_double(r.q025)
        << '\t' << format_double(r.q50) << '\t' << format_double(r.q975) << '\t'
        << (std::isnan(r.rhat) ? std::string("NA") : format_double(r.rhat)) << '\n';
  }
}

}  // namespace cloglog
