// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "cloglog/matrix.hpp"

namespace cloglog {

// ---------------------------------------------------------------- datasets

enum class Role { kPredictor, kOutcome, kTime, kStatus };

struct CategoryEncoding {
  std::string column;
  std::vector<std::string> levels;  // alphabetical; one indicator column each
  bool operator==(const CategoryEncoding&) const = default;
};

enum class OutcomeKind { kContinuous, kOrdinal, kBinary };

struct Schema {
  std::string outcome;
  std::string time;
  std::string status;
  // Empty means every column without another role.
  std::vector<std::string> predictors;
  std::vector<std::string> categorical;
  OutcomeKind outcome_kind = OutcomeKind::kContinuous;
  int num_categories = 0;  // ordinal upper bound; 0 accepts any K >= 2
};

struct Dataset {
  std::vector<std::string> columns;
  std::vector<Role> roles;
  Matrix values;
  std::vector<CategoryEncoding> encodings;

  std::size_t rows() const { return values.rows(); }
  // Column with the given role; throws SchemaError when absent.
  std::vector<double> column(Role role) const;
  std::vector<int> int_column(Role role) const;
  Matrix predictors() const;
  std::vector<std::string> predictor_names() const;
  bool operator==(const Dataset&) const = default;
};

Dataset parse_dataset(std::istream& in, const Schema& schema, const std::string& label = "input");
Dataset load_dataset(const std::string& path, const Schema& schema);
// Writes the encoded columns, so categorical inputs come back as indicators.
void write_dataset(std::ostream& out, const Dataset& data);
void write_dataset(const std::string& path, const Dataset& data);

// X ~ U(0, 1), Y ~ e^{-2x} N(x, 0.1^2) + (1 - e^{-2x}) N(x^4, 0.2^2).
Dataset simulate_dunson(std::size_t n, std::uint64_t seed);
double dunson_density(double y, double x);
double dunson_mean(double x);

// hazard 0.5 e^x, x ~ U(0, 1), exponential censoring at `censor_rate`.
Dataset simulate_ph_survival(std::size_t n, double censor_rate, std::uint64_t seed);
double ph_survival_truth(double t, double x);

// Columns g, noise ~ U(0, 1). Rows with g > 0.5 have hazard 2 before the
// pooled median event time t0 and 0.25 after; the rest have hazard 0.5, so
// the hazard ratio reverses at t0. Exponential censoring at rate 0.1.
double crossing_change_point();
Dataset simulate_crossing(std::size_t n, std::uint64_t seed);

// ---------------------------------------------------------------- config

// kMethod: a default the method prescribes; kDecision: an implementation
// choice; kUser: set explicitly.
enum class Origin { kMethod, kDecision, kUser };

// Flat key=value configuration. Unknown keys are rejected; every key has a
// documented default whose origin is recorded in output metadata.
class RunConfig {
 public:
  RunConfig();
  void set(const std::string& key, const std::string& value);
  // Lines "key = value"; '#' starts a comment.
  void load(std::istream& in, const std::string& label = "config");
  void load_file(const std::string& path);

  bool has(const std::string& key) const;  // explicitly set
  std::string get(const std::string& key) const;
  long long get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;  // comma separated
  Origin origin(const std::string& key) const;

  // Every key in table order with its effective value.
  std::vector<std::pair<std::string, std::string>> entries() const;
  // FNV-1a of the entries that affect results (paths excluded).
  std::string hash() const;

  static bool known(const std::string& key);
  // False for paths and thread counts, which never change the draws.
  static bool affects_results(const std::string& key);

 private:
  std::vector<std::pair<std::string, std::string>> values_;
};

const char* origin_name(Origin origin);

// Query points "a,b;c,d" -> rows.
Matrix parse_points(const std::string& text, std::size_t cols);
std::vector<double> parse_numbers(const std::string& text);

// ---------------------------------------------------------------- draws on disk

struct PosteriorDraws;

// "# key=value" manifest lines, a tab-separated header, one line per draw.
void write_draws(std::ostream& out, const PosteriorDraws& draws);
PosteriorDraws read_draws(std::istream& in, const std::string& label = "draws");
void write_matrix(std::ostream& out, const Matrix& m);
Matrix read_matrix(std::istream& in, const std::string& label = "matrix");

// Classic split R-hat over chains of equal length (each chain halved).
double split_rhat(const std::vector<std::vector<double>>& chains);

struct SummaryRow {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
  double rhat = 1.0;  // NaN with a single chain
};

std::vector<SummaryRow> summarize(const std::vector<PosteriorDraws>& chains);
void write_summary(std::ostream& out, const std::vector<SummaryRow>& rows);

// Type-7 quantile of unsorted values.
double quantile(std::vector<double> v, double p);

std::string format_double(double v);

}  // namespace cloglog
