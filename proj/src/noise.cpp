#include "fdiv/noise.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "fdiv/errors.hpp"

namespace fdivergence {

namespace {

constexpr double kRowTolerance = 1e-12;
// Rate totals within rounding of one leave no signal (shrink factor ~ 0).
constexpr double kRateSumLimit = 1.0 - 1e-12;
constexpr double kFileTolerance = 1e-6;
constexpr double kRenormalizeTolerance = 2e-2;

void require_rate(double e, const char* what) {
  if (!std::isfinite(e) || e < 0.0 || e >= 1.0) {
    throw ConstraintError(std::string(what) + ": rate " + std::to_string(e) + " not in [0, 1)");
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& text, const std::string& context) {
  try {
    std::size_t used = 0;
    const double v = std::stod(trim(text), &used);
    if (used != trim(text).size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ParseError(context + ": cannot parse number '" + text + "'");
  }
}

}  // namespace

TransitionMatrix::TransitionMatrix(Table matrix, NoiseStructure structure)
    : matrix_(std::move(matrix)), structure_(std::move(structure)) {
  if (matrix_.rows() == 0 || matrix_.rows() != matrix_.cols()) {
    throw ConstraintError("transition matrix must be square and non-empty");
  }
  for (std::size_t i = 0; i < matrix_.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < matrix_.cols(); ++j) {
      const double t = matrix_(i, j);
      if (!std::isfinite(t) || t < 0.0 || t > 1.0) {
        throw ConstraintError("transition matrix: entry (" + std::to_string(i) + "," + std::to_string(j) +
                              ") = " + std::to_string(t) + " not in [0, 1]");
      }
      s += t;
    }
    if (std::abs(s - 1.0) > kRowTolerance) {
      throw ConstraintError("transition matrix: row " + std::to_string(i) + " sums to " + std::to_string(s));
    }
  }
}

std::string TransitionMatrix::structure_name() const {
  return std::visit(
      [](const auto& s) -> std::string {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, BinaryNoise>) return "binary";
        else if constexpr (std::is_same_v<S, UniformOffDiagonalNoise>) return "uniform_offdiagonal";
        else if constexpr (std::is_same_v<S, SparsePairsNoise>) return "sparse_pairs";
        else return "general";
      },
      structure_);
}

bool TransitionMatrix::is_identity() const {
  for (std::size_t i = 0; i < size(); ++i)
    for (std::size_t j = 0; j < size(); ++j)
      if (matrix_(i, j) != (i == j ? 1.0 : 0.0)) return false;
  return true;
}

TransitionMatrix binary(double e_plus, double e_minus) {
  require_rate(e_plus, "binary e_plus");
  require_rate(e_minus, "binary e_minus");
  if (e_plus + e_minus >= kRateSumLimit) {
    throw ConstraintError("binary noise requires e_plus + e_minus < 1, got " + std::to_string(e_plus + e_minus));
  }
  Table t{{1.0 - e_plus, e_plus}, {e_minus, 1.0 - e_minus}};
  return TransitionMatrix(std::move(t), BinaryNoise{e_plus, e_minus});
}

TransitionMatrix uniform_offdiagonal(std::vector<double> e) {
  const std::size_t k = e.size();
  if (k < 2) throw ConstraintError("uniform off-diagonal noise needs at least two classes");
  double total = 0.0;
  for (double ej : e) {
    require_rate(ej, "uniform off-diagonal e_j");
    total += ej;
  }
  if (total >= kRateSumLimit) {
    throw ConstraintError("uniform off-diagonal noise requires sum e_j < 1, got " + std::to_string(total));
  }
  Table t(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    double off = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      t(i, j) = e[j];
      off += e[j];
    }
    t(i, i) = 1.0 - off;
  }
  return TransitionMatrix(std::move(t), UniformOffDiagonalNoise{std::move(e)});
}

TransitionMatrix symmetric_noise(std::size_t num_classes, double rate) {
  if (num_classes < 2) throw ConstraintError("symmetric noise needs at least two classes");
  if (num_classes == 2) return binary(rate, rate);
  return uniform_offdiagonal(std::vector<double>(num_classes, rate / static_cast<double>(num_classes - 1)));
}

TransitionMatrix sparse_pairs(std::vector<SparsePair> pairs, std::size_t num_classes) {
  std::vector<bool> used(num_classes, false);
  Table t(num_classes, num_classes);
  for (std::size_t i = 0; i < num_classes; ++i) t(i, i) = 1.0;
  for (const SparsePair& p : pairs) {
    if (p.i >= p.j || p.j >= num_classes) {
      throw ConstraintError("sparse pair (" + std::to_string(p.i) + "," + std::to_string(p.j) +
                            ") must satisfy i < j < K");
    }
    if (used[p.i] || used[p.j]) {
      throw ConstraintError("sparse pairs overlap at (" + std::to_string(p.i) + "," + std::to_string(p.j) + ")");
    }
    require_rate(p.e_p1, "sparse e_p1");
    require_rate(p.e_p2, "sparse e_p2");
    if (p.e_p1 + p.e_p2 >= kRateSumLimit) {
      throw ConstraintError("sparse pair requires e_p1 + e_p2 < 1, got " + std::to_string(p.e_p1 + p.e_p2));
    }
    used[p.i] = used[p.j] = true;
    t(p.i, p.i) = 1.0 - p.e_p1;
    t(p.i, p.j) = p.e_p1;
    t(p.j, p.i) = p.e_p2;
    t(p.j, p.j) = 1.0 - p.e_p2;
  }
  return TransitionMatrix(std::move(t), SparsePairsNoise{std::move(pairs)});
}

TransitionMatrix random_sparse_pairs(std::size_t num_classes,
                                     std::span<const std::pair<double, double>> rate_options, Rng& rng) {
  if (num_classes % 2 != 0) throw ConstraintError("random sparse pairing needs an even class count");
  if (rate_options.empty()) throw ConstraintError("random sparse pairing needs at least one rate option");
  std::vector<std::size_t> order(num_classes);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng.engine());
  std::vector<SparsePair> pairs;
  for (std::size_t c = 0; c < num_classes; c += 2) {
    const std::size_t a = std::min(order[c], order[c + 1]);
    const std::size_t b = std::max(order[c], order[c + 1]);
    const auto& [t_ji, t_ij] = rate_options[rng.uniform_index(rate_options.size())];
    pairs.push_back({a, b, t_ij, t_ji});
  }
  std::sort(pairs.begin(), pairs.end(), [](const SparsePair& x, const SparsePair& y) { return x.i < y.i; });
  return sparse_pairs(std::move(pairs), num_classes);
}

TransitionMatrix general_matrix(Table matrix) {
  if (matrix.rows() == 0 || matrix.rows() != matrix.cols()) {
    throw ConstraintError("transition matrix must be square and non-empty, got " + std::to_string(matrix.rows()) +
                          "x" + std::to_string(matrix.cols()));
  }
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    double s = 0.0;
    for (double v : matrix.row(i)) {
      if (!std::isfinite(v) || v < 0.0) {
        throw ConstraintError("transition matrix: row " + std::to_string(i) + " has a negative or non-finite entry");
      }
      s += v;
    }
    const double gap = std::abs(s - 1.0);
    if (gap > kRenormalizeTolerance) {
      throw ConstraintError("transition matrix: row " + std::to_string(i) + " sums to " + std::to_string(s) +
                            " (not stochastic)");
    }
    if (gap > kFileTolerance) {
      std::cerr << "warning: transition matrix row " << i << " sums to " << s << "; renormalizing\n";
    }
    if (s != 1.0) {
      for (double& v : matrix.row(i)) v /= s;
    }
    // Absorb residual rounding into the diagonal so the row sum is exact to 1e-12.
    double r = 0.0;
    for (double v : matrix.row(i)) r += v;
    matrix(i, i) = std::clamp(matrix(i, i) + (1.0 - r), 0.0, 1.0);
  }
  return TransitionMatrix(std::move(matrix), GeneralNoise{});
}

TransitionMatrix from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open transition matrix file " + path.string());
  const std::string ext = path.extension().string();
  if (ext == ".json") {
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
    const nlohmann::json& rows = j.is_object() ? j.at("matrix") : j;
    const std::size_t k = rows.size();
    Table t(k, k);
    for (std::size_t i = 0; i < k; ++i) {
      if (rows[i].size() != k) throw ParseError(path.string() + ": row " + std::to_string(i) + " has wrong length");
      for (std::size_t c = 0; c < k; ++c) t(i, c) = rows[i][c].get<double>();
    }
    return general_matrix(std::move(t));
  }
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty() || trim(line)[0] == '#') continue;
    std::vector<double> row;
    for (const std::string& field : split(line, ','))
      row.push_back(parse_double(field, path.string() + ":" + std::to_string(lineno)));
    rows.push_back(std::move(row));
  }
  const std::size_t k = rows.size();
  Table t(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    if (rows[i].size() != k) {
      throw ParseError(path.string() + ": row " + std::to_string(i) + " has " + std::to_string(rows[i].size()) +
                       " values, expected " + std::to_string(k));
    }
    for (std::size_t c = 0; c < k; ++c) t(i, c) = rows[i][c];
  }
  return general_matrix(std::move(t));
}

std::vector<std::string> bundled_matrix_names() {
  return {"mnist_sparse_low",    "mnist_sparse_high",   "mnist_uniform_low",  "mnist_uniform_high",
          "cifar10_sparse_low",  "cifar10_sparse_high", "cifar10_uniform_low", "cifar10_uniform_high",
          "cifar10_random_low",  "cifar10_random_high"};
}

TransitionMatrix bundled_matrix(const std::string& name) {
  const auto names = bundled_matrix_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    std::string valid;
    for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
    throw std::invalid_argument("unknown bundled matrix '" + name + "'; valid names: " + valid);
  }
  return from_file(std::filesystem::path(FDIV_DATA_DIR) / "noise" / (name + ".csv"));
}

TransitionMatrix infer_structure(const TransitionMatrix& t) {
  const std::size_t k = t.size();
  constexpr double tol = 1e-12;
  // Uniform off-diagonal: every column constant off the diagonal.
  bool uniform = true;
  std::vector<double> e(k, 0.0);
  for (std::size_t j = 0; j < k && uniform; ++j) {
    e[j] = t(j == 0 ? 1 : 0, j);
    for (std::size_t i = 0; i < k; ++i)
      if (i != j && std::abs(t(i, j) - e[j]) > tol) uniform = false;
  }
  if (uniform && std::accumulate(e.begin(), e.end(), 0.0) < kRateSumLimit) {
    if (k == 2) return binary(e[1], e[0]);
    return uniform_offdiagonal(e);
  }
  // Sparse: each row has at most one off-diagonal entry, mirrored by its partner.
  std::vector<SparsePair> pairs;
  std::vector<int> partner(k, -1);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j || t(i, j) <= tol) continue;
      if (partner[i] != -1 && partner[i] != static_cast<int>(j)) return t;
      partner[i] = static_cast<int>(j);
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (partner[i] == -1) continue;
    const auto j = static_cast<std::size_t>(partner[i]);
    if (partner[j] != -1 && partner[j] != static_cast<int>(i)) return t;
    if (i < j) pairs.push_back({i, j, t(i, j), t(j, i)});
  }
  for (const auto& p : pairs)
    if (p.e_p1 + p.e_p2 >= kRateSumLimit) return t;
  if (pairs.empty()) return t;
  TransitionMatrix s = sparse_pairs(pairs, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (std::abs(s(i, j) - t(i, j)) > tol) return t;
  return s;
}

TransitionMatrix compose(const TransitionMatrix& first, const TransitionMatrix& second) {
  if (first.size() != second.size()) throw std::invalid_argument("compose: size mismatch");
  Table product = first.matrix().multiply(second.matrix());
  for (std::size_t i = 0; i < product.rows(); ++i) {
    double r = 0.0;
    for (double v : product.row(i)) r += v;
    product(i, i) = std::clamp(product(i, i) + (1.0 - r), 0.0, 1.0);
  }
  return TransitionMatrix(std::move(product), GeneralNoise{});
}

std::vector<std::size_t> apply_noise(std::span<const std::size_t> labels, const TransitionMatrix& t,
                                     std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> out(labels.size());
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n] >= t.size()) {
      throw std::out_of_range("apply_noise: label " + std::to_string(labels[n]) + " at position " +
                              std::to_string(n) + " out of range");
    }
    out[n] = rng.categorical(t.row(labels[n]));
  }
  return out;
}

JointDistribution corrupt_joint(const JointDistribution& clean, const TransitionMatrix& t) {
  if (clean.cols() != t.size()) {
    throw std::invalid_argument("corrupt_joint: joint has " + std::to_string(clean.cols()) +
                                " label classes, transition matrix has " + std::to_string(t.size()));
  }
  return JointDistribution(clean.cells().multiply(t.matrix()));
}

TransitionMatrix parse_noise_spec(const std::string& text, std::size_t num_classes) {
  const std::string spec = trim(text);
  if (spec.empty() || spec == "none") return symmetric_noise(num_classes, 0.0);
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string body = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (kind == "binary") {
    const auto parts = split(body, ',');
    if (parts.size() != 2) throw ParseError("binary noise expects E_PLUS,E_MINUS");
    return binary(parse_double(parts[0], "binary"), parse_double(parts[1], "binary"));
  }
  if (kind == "symmetric") return symmetric_noise(num_classes, parse_double(body, "symmetric"));
  if (kind == "uniform") {
    std::vector<double> e;
    for (const auto& p : split(body, ',')) e.push_back(parse_double(p, "uniform"));
    return uniform_offdiagonal(std::move(e));
  }
  if (kind == "sparse") {
    std::vector<SparsePair> pairs;
    for (const auto& item : split(body, ',')) {
      const auto fields = split(item, ':');
      const auto ends = fields.empty() ? std::vector<std::string>{} : split(fields[0], '-');
      if (fields.size() != 3 || ends.size() != 2) throw ParseError("sparse pair expects I-J:EP1:EP2, got '" + item + "'");
      pairs.push_back({static_cast<std::size_t>(std::stoul(ends[0])), static_cast<std::size_t>(std::stoul(ends[1])),
                       parse_double(fields[1], "sparse"), parse_double(fields[2], "sparse")});
    }
    return sparse_pairs(std::move(pairs), num_classes);
  }
  if (kind == "file") return infer_structure(from_file(body));
  if (kind == "bundled") return infer_structure(bundled_matrix(body));
  throw ParseError("unknown noise spec '" + text +
                   "'; expected none|binary:|symmetric:|uniform:|sparse:|file:|bundled:");
}

nlohmann::json to_json(const TransitionMatrix& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto r = t.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return {{"structure", t.structure_name()}, {"matrix", rows}};
}

}  // namespace fdivergence
