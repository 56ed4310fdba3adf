#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "auxlearn/csv.hpp"
#include "auxlearn/errors.hpp"
#include "auxlearn/types.hpp"

namespace auxlearn {

// Maps CSV columns onto a MultiTaskDataset.  `covariates` left empty means
// every column not named as a response.  `binary` lists response columns
// holding 0/1 labels.
struct DatasetSchema {
  std::string primary;
  std::vector<std::string> auxiliary;
  std::vector<std::string> covariates;
  std::vector<std::string> binary;
};

namespace detail {

inline void require_unique(const std::vector<std::string>& names,
                           const std::string& what) {
  std::vector<std::string> sorted = names;
  std::sort(sorted.begin(), sorted.end());
  const auto dup = std::adjacent_find(sorted.begin(), sorted.end());
  if (dup != sorted.end()) {
    throw DomainError("duplicate " + what + " '" + *dup + "'");
  }
}

}  // namespace detail

inline MultiTaskDataset load_dataset(const std::filesystem::path& path,
                                     const DatasetSchema& schema) {
  if (schema.primary.empty()) {
    throw DomainError("schema does not name a primary response column");
  }

  const csv::ParsedCsv parsed = csv::read_file(path);
  if (parsed.rows.size() < 2) {
    throw IoError("'" + path.string() +
                  "' needs a header row plus at least one data row");
  }
  const std::vector<std::string>& header = parsed.rows[0];

  std::map<std::string, std::size_t> column_of;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j].empty()) {
      throw IoError("empty column name in header of '" + path.string() + "'");
    }
    if (!column_of.emplace(header[j], j).second) {
      throw IoError("duplicate column '" + header[j] + "' in '" +
                    path.string() + "'");
    }
  }
  const auto find_column = [&](const std::string& name) {
    const auto it = column_of.find(name);
    if (it == column_of.end()) {
      throw IoError("column '" + name + "' not found in '" + path.string() +
                    "'");
    }
    return it->second;
  };

  std::vector<std::string> response_names;
  response_names.push_back(schema.primary);
  response_names.insert(response_names.end(), schema.auxiliary.begin(),
                        schema.auxiliary.end());
  detail::require_unique(response_names, "response column");

  std::vector<std::size_t> response_cols;
  for (const std::string& name : response_names) {
    response_cols.push_back(find_column(name));
  }

  std::vector<std::string> covariate_names = schema.covariates;
  if (covariate_names.empty()) {
    std::vector<bool> taken(header.size(), false);
    for (std::size_t j : response_cols) taken[j] = true;
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (!taken[j]) covariate_names.push_back(header[j]);
    }
  } else {
    detail::require_unique(covariate_names, "covariate column");
    for (const std::string& name : covariate_names) {
      if (std::find(response_names.begin(), response_names.end(), name) !=
          response_names.end()) {
        throw DomainError("column '" + name +
                          "' listed as both response and covariate");
      }
    }
  }
  if (covariate_names.empty()) {
    throw DomainError("no covariate columns remain in '" + path.string() +
                      "'");
  }
  std::vector<std::size_t> covariate_cols;
  for (const std::string& name : covariate_names) {
    covariate_cols.push_back(find_column(name));
  }

  std::vector<TaskKind> kinds(response_names.size(), TaskKind::continuous);
  for (const std::string& name : schema.binary) {
    const auto it =
        std::find(response_names.begin(), response_names.end(), name);
    if (it == response_names.end()) {
      throw DomainError("binary flag names '" + name +
                        "' which is not a response column");
    }
    kinds[static_cast<std::size_t>(it - response_names.begin())] =
        TaskKind::binary;
  }

  const auto n = static_cast<Eigen::Index>(parsed.rows.size() - 1);
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(covariate_cols.size()));
  Eigen::MatrixXd y(n, static_cast<Eigen::Index>(response_cols.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::vector<std::string>& cells =
        parsed.rows[static_cast<std::size_t>(i) + 1];
    if (cells.size() != header.size()) {
      throw IoError("row " + std::to_string(i + 1) + " of '" + path.string() +
                    "' has " + std::to_string(cells.size()) +
                    " cells, expected " + std::to_string(header.size()));
    }
    const auto cell_at = [&](std::size_t j, const std::string& name) {
      return csv::parse_double(cells[j], "at data row " + std::to_string(i + 1) +
                                             ", column '" + name + "' of '" +
                                             path.string() + "'");
    };
    for (std::size_t c = 0; c < covariate_cols.size(); ++c) {
      x(i, static_cast<Eigen::Index>(c)) =
          cell_at(covariate_cols[c], covariate_names[c]);
    }
    for (std::size_t k = 0; k < response_cols.size(); ++k) {
      y(i, static_cast<Eigen::Index>(k)) =
          cell_at(response_cols[k], response_names[k]);
    }
  }

  // Binary label validation (values outside {0, 1}) happens in the
  // MultiTaskDataset constructor; it reports the offending row and column.
  return MultiTaskDataset(std::move(x), std::move(y), std::move(kinds),
                          std::move(response_names),
                          std::move(covariate_names));
}

// Plain CSV with responses first, then covariates.  load_dataset restores
// the result bit for bit given the matching schema.
inline void write_dataset(const MultiTaskDataset& data,
                          const std::filesystem::path& path) {
  csv::Writer out(path);
  std::vector<std::string> cells;
  cells.reserve(static_cast<std::size_t>(data.responses().cols() + data.p()));
  for (const std::string& name : data.response_names()) cells.push_back(name);
  for (const std::string& name : data.covariate_names()) cells.push_back(name);
  out.row(cells);
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    cells.clear();
    for (Eigen::Index k = 0; k < data.responses().cols(); ++k) {
      cells.push_back(csv::format_double(data.responses()(i, k)));
    }
    for (Eigen::Index j = 0; j < data.p(); ++j) {
      cells.push_back(csv::format_double(data.covariates()(i, j)));
    }
    out.row(cells);
  }
  out.close();
}

}  // namespace auxlearn
