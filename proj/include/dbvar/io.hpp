#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dbvar/estimators.hpp"
#include "dbvar/layout.hpp"

namespace dbvar {

// Shortest decimal that parses back to the same double.
std::string format_double(double v);
// Accepts decimals and exact "a/b" fractions.
double parse_number(std::string_view text, const std::string& what);

// Row-major CSV with a header row of 1-based flat indices.
void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_csv(std::istream& in, const std::string& what);
void write_matrix_csv_file(const std::string& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_csv_file(const std::string& path);

// Long format: unit_id,arm,y with 1-based ids. k and n default to the
// largest ids seen; every (unit, arm) pair must appear once.
PotentialOutcomes read_outcomes_csv(std::istream& in, std::optional<IndexLayout> layout = std::nullopt);
PotentialOutcomes read_outcomes_csv_file(const std::string& path, std::optional<IndexLayout> layout = std::nullopt);

// unit_id,x1,...,xl; returns an n x l matrix ordered by unit id.
Eigen::MatrixXd read_covariates_csv(std::istream& in, int n);
Eigen::MatrixXd read_covariates_csv_file(const std::string& path, int n);

// unit_id,arm_assigned,y_obs; every unit exactly once.
ObservedData read_observed_csv(std::istream& in, const IndexLayout& layout);
ObservedData read_observed_csv_file(const std::string& path, const IndexLayout& layout);

// Long format unit_id,arm,m for WLS weights.
Eigen::VectorXd read_weights_csv_file(const std::string& path, const IndexLayout& layout);

// "-1,1" -> vector; fractions allowed.
Eigen::VectorXd parse_vector_list(std::string_view text, const std::string& what);

}  // namespace dbvar
