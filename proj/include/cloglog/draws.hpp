// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cloglog/matrix.hpp"

namespace cloglog {

// Chain length settings shared by every sampler.
struct McmcConfig {
  int burn_in = 2000;
  int kept = 2000;
  int thin = 1;

  int retained() const { return thin > 0 ? kept / thin : 0; }
  void validate() const;
};

// Retained posterior draws as a table of named scalar columns plus the
// pointwise log-likelihood matrix (draws x observations).
struct PosteriorDraws {
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  Matrix loglik;

  std::size_t num_draws() const { return rows.size(); }
  void set_meta(const std::string& key, const std::string& value);
  // Empty string when absent.
  std::string meta(const std::string& key) const;
  // Throws UsageError for an unknown column.
  std::size_t column_index(const std::string& name) const;
  std::vector<double> column(const std::string& name) const;
};

}  // namespace cloglog
