#ifndef MANIFOLD_ILPR_IO_HPP
#define MANIFOLD_ILPR_IO_HPP

// CSV interchange. Files start with `# key=value` metadata lines, then a
// header row, then one record per line. Floats are written with 17
// significant digits so a write/read cycle is exact.
//
// Dataset rows hold the covariates followed by vech of the response:
//   x0,...,x{p-1},v0,...,v{n(n+1)/2-1}

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "manifold_ilpr/errors.hpp"
#include "manifold_ilpr/ilpr.hpp"
#include "manifold_ilpr/linalg.hpp"
#include "manifold_ilpr/simulation.hpp"

namespace milpr::io {

using Metadata = std::map<std::string, std::string>;

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

/// Non-comment, non-blank lines of a CSV stream with their 1-based line numbers.
struct CsvTable {
  Metadata meta;
  std::optional<std::vector<std::string>> header;
  std::size_t header_line = 0;
  std::vector<std::pair<std::size_t, std::vector<double>>> rows;
};

inline CsvTable read_table(std::istream& in) {
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view s = trim(line);
    if (s.empty()) continue;
    if (s.front() == '#') {
      const std::string_view body = trim(s.substr(1));
      const auto eq = body.find('=');
      if (eq != std::string_view::npos) {
        t.meta[std::string(trim(body.substr(0, eq)))] = std::string(trim(body.substr(eq + 1)));
      }
      continue;
    }
    const auto fields = split_fields(s);
    if (!t.header && t.rows.empty() && !parse_double(fields.front())) {
      t.header.emplace(fields.begin(), fields.end());
      t.header_line = lineno;
      continue;
    }
    std::vector<double> values;
    values.reserve(fields.size());
    for (std::size_t k = 0; k < fields.size(); ++k) {
      const auto v = parse_double(fields[k]);
      if (!v) {
        throw ParseError("column " + std::to_string(k + 1) + ": invalid number '" + std::string(fields[k]) + "'",
                         lineno);
      }
      values.push_back(*v);
    }
    t.rows.emplace_back(lineno, std::move(values));
  }
  if (in.bad()) throw IoError("read failure");
  return t;
}

namespace detail {

inline std::optional<long> meta_int(const Metadata& meta, const std::string& key, std::size_t line) {
  const auto it = meta.find(key);
  if (it == meta.end()) return std::nullopt;
  long v = 0;
  const auto& s = it->second;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v < 0) {
    throw ParseError("metadata '" + key + "' is not a non-negative integer", line);
  }
  return v;
}

inline long count_prefixed(const std::vector<std::string>& header, char prefix) {
  long c = 0;
  for (const auto& h : header)
    if (!h.empty() && h.front() == prefix) ++c;
  return c;
}

}  // namespace detail

/// Parses a dataset. Malformed content raises ParseError, responses that
/// are not symmetric positive definite raise DataError; both carry the line.
inline Dataset read_dataset(std::istream& in, Metadata* meta_out = nullptr) {
  CsvTable t = read_table(in);
  std::optional<long> p = detail::meta_int(t.meta, "p", 0);
  std::optional<long> n = detail::meta_int(t.meta, "n", 0);
  if (t.header) {
    if (!p) p = detail::count_prefixed(*t.header, 'x');
    if (!n) {
      const Index dim = vech_dim(detail::count_prefixed(*t.header, 'v'));
      if (dim < 0) throw ParseError("header response columns do not form vech of a square matrix", t.header_line);
      n = dim;
    }
  }
  if (!p || !n || *p < 1 || *n < 1) {
    throw ParseError("cannot determine n and p: add '# n=' and '# p=' metadata or an x/v header", t.header_line);
  }
  const std::size_t width = static_cast<std::size_t>(*p + vech_length(*n));
  if (t.header && t.header->size() != width) {
    throw ParseError("header has " + std::to_string(t.header->size()) + " columns, expected " +
                         std::to_string(width),
                     t.header_line);
  }
  if (t.rows.empty()) throw ParseError("no data rows", t.header_line);
  if (const auto count = detail::meta_int(t.meta, "N", 0); count && static_cast<std::size_t>(*count) != t.rows.size()) {
    throw ParseError("metadata N=" + std::to_string(*count) + " but " + std::to_string(t.rows.size()) +
                         " rows present",
                     t.rows.back().first);
  }
  std::vector<Sample> samples;
  samples.reserve(t.rows.size());
  for (const auto& [line, values] : t.rows) {
    if (values.size() != width) {
      throw ParseError("row has " + std::to_string(values.size()) + " columns, expected " + std::to_string(width),
                       line);
    }
    Vector x(*p);
    for (long a = 0; a < *p; ++a) x(a) = values[static_cast<std::size_t>(a)];
    if (!x.allFinite()) throw DataError("non-finite covariate", line);
    Vector v(vech_length(*n));
    for (Index k = 0; k < v.size(); ++k) v(k) = values[static_cast<std::size_t>(*p + k)];
    try {
      samples.push_back({std::move(x), SpdMatrix(vech_inv(v).matrix())});
    } catch (const DomainError& e) {
      throw DataError(std::string("response is not symmetric positive definite: ") + e.what(), line);
    }
  }
  if (meta_out) *meta_out = t.meta;
  return Dataset(std::move(samples));
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

inline void finish_output(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline Dataset read_dataset_file(const std::string& path, Metadata* meta = nullptr) {
  auto in = open_input(path);
  return read_dataset(in, meta);
}

/// Covariates of a query file: either rows of exactly p values, or a dataset
/// file whose covariate columns are used.
inline std::vector<Vector> read_covariates(std::istream& in, Index p) {
  CsvTable t = read_table(in);
  std::optional<long> file_p = detail::meta_int(t.meta, "p", 0);
  if (!file_p && t.header) file_p = detail::count_prefixed(*t.header, 'x');
  if (file_p && *file_p != p) {
    throw ParseError("query covariates have dimension " + std::to_string(*file_p) + ", data has " +
                         std::to_string(p),
                     t.header_line);
  }
  std::optional<std::size_t> width;
  if (t.header) width = t.header->size();
  std::vector<Vector> out;
  for (const auto& [line, values] : t.rows) {
    if (!width) width = static_cast<std::size_t>(p);
    if (values.size() != *width || values.size() < static_cast<std::size_t>(p)) {
      throw ParseError("row has " + std::to_string(values.size()) + " columns, expected " + std::to_string(*width),
                       line);
    }
    Vector x(p);
    for (Index a = 0; a < p; ++a) x(a) = values[static_cast<std::size_t>(a)];
    if (!x.allFinite()) throw DataError("non-finite covariate", line);
    out.push_back(std::move(x));
  }
  if (out.empty()) throw ParseError("no query rows", t.header_line);
  return out;
}

inline void write_metadata(std::ostream& out, const Metadata& meta) {
  for (const auto& [k, v] : meta) out << "# " << k << '=' << v << '\n';
}

/// Writes covariate/response pairs in dataset layout; `meta` entries are
/// added to the n, p, N lines.
inline void write_dataset(std::ostream& out, std::span<const Vector> xs, std::span<const SpdMatrix> ys,
                          Metadata meta = {}) {
  if (xs.size() != ys.size()) throw DimensionError("write_dataset: length mismatch");
  if (xs.empty()) throw DimensionError("write_dataset: no rows");
  const Index p = xs.front().size();
  const Index n = ys.front().dim();
  meta.try_emplace("format", "dataset");
  meta["n"] = std::to_string(n);
  meta["p"] = std::to_string(p);
  meta["N"] = std::to_string(xs.size());
  write_metadata(out, meta);
  for (Index a = 0; a < p; ++a) out << (a ? "," : "") << 'x' << a;
  for (Index k = 0; k < vech_length(n); ++k) out << ",v" << k;
  out << '\n';
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].size() != p || ys[i].dim() != n) throw DimensionError("write_dataset: inconsistent dimensions");
    for (Index a = 0; a < p; ++a) out << (a ? "," : "") << format_double(xs[i](a));
    const Vector v = vech(ys[i].as_sym());
    for (Index k = 0; k < v.size(); ++k) out << ',' << format_double(v(k));
    out << '\n';
  }
}

inline void write_dataset(std::ostream& out, const Dataset& data, Metadata meta = {}) {
  const auto xs = data.covariates();
  const auto ys = data.responses();
  write_dataset(out, xs, ys, std::move(meta));
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c == '\n' ? ' ' : c;
  }
  return q + '"';
}

inline void write_report(std::ostream& out, const McReport& report) {
  out << "p,n,method,realization,rmse,fit_seconds,h_selected,error\n";
  for (const auto& r : report) {
    out << r.p << ',' << r.n << ',' << r.method << ',' << r.realization << ',' << format_double(r.rmse) << ','
        << format_double(r.fit_seconds) << ',' << format_double(r.h_selected) << ',' << csv_escape(r.error)
        << '\n';
  }
}

/// `index,dim0,...,label`, one line per embedded point.
inline void write_embedding(std::ostream& out, const Matrix& points, const std::vector<std::string>& labels) {
  if (static_cast<Index>(labels.size()) != points.rows()) throw DimensionError("write_embedding: label count");
  out << "index";
  for (Index k = 0; k < points.cols(); ++k) out << ",dim" << k;
  out << ",label\n";
  for (Index i = 0; i < points.rows(); ++i) {
    out << i;
    for (Index k = 0; k < points.cols(); ++k) out << ',' << format_double(points(i, k));
    out << ',' << csv_escape(labels[static_cast<std::size_t>(i)]) << '\n';
  }
}

}  // namespace milpr::io

#endif  // MANIFOLD_ILPR_IO_HPP
