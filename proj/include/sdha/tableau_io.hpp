#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sdha/tableau.hpp"

namespace sdha {

// Text format:
//   # comment
//   s = 2
//   name = stormer_verlet        (optional)
//   noise = single               (optional, weak tableaus)
//   a                            label line, then s rows of s numbers
//   0 0
//   0.5 0.5
//   alpha                        label line, then one row of s numbers
//   0.5 0.5
namespace detail {

struct RawTableau {
  int s = 0;
  std::string name;
  std::string noise;
  std::map<std::string, std::vector<std::vector<double>>> blocks;
};

inline std::string trim(const std::string& x) {
  const auto b = x.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = x.find_last_not_of(" \t\r");
  return x.substr(b, e - b + 1);
}

inline RawTableau parse_raw_tableau(std::istream& in, const std::string& src,
                                    const std::vector<std::string>& matrices,
                                    const std::vector<std::string>& vectors) {
  RawTableau raw;
  std::string line, current;
  int lineno = 0;
  auto fail = [&](const std::string& msg) { throw ParseError(src + ":" + std::to_string(lineno) + ": " + msg); };
  auto is_label = [&](const std::string& w) {
    for (const auto& m : matrices)
      if (w == m) return true;
    for (const auto& v : vectors)
      if (w == v) return true;
    return false;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    if (const auto eq = line.find('='); eq != std::string::npos) {
      const std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
      if (key == "s") {
        try {
          std::size_t used = 0;
          raw.s = std::stoi(val, &used);
          if (used != val.size() || raw.s < 1) fail("bad stage count '" + val + "'");
        } catch (const std::logic_error&) {
          fail("bad stage count '" + val + "'");
        }
      } else if (key == "name") {
        raw.name = val;
      } else if (key == "noise") {
        if (val != "single" && val != "any") fail("noise must be 'single' or 'any'");
        raw.noise = val;
      } else {
        fail("unknown header key '" + key + "'");
      }
      continue;
    }
    if (is_label(line)) {
      if (raw.s == 0) fail("block '" + line + "' before the 's = <int>' header");
      if (raw.blocks.count(line)) fail("duplicate block '" + line + "'");
      current = line;
      raw.blocks[current];
      continue;
    }
    if (current.empty()) fail("numbers outside any labeled block");
    std::istringstream row(line);
    row.imbue(std::locale::classic());
    std::vector<double> vals;
    std::string tok;
    while (row >> tok) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(tok, &used));
        if (used != tok.size()) fail("bad number '" + tok + "'");
      } catch (const std::logic_error&) {
        fail("bad number '" + tok + "'");
      }
    }
    if (static_cast<int>(vals.size()) != raw.s)
      fail("row in block '" + current + "' has " + std::to_string(vals.size()) + " entries, expected " +
           std::to_string(raw.s));
    raw.blocks[current].push_back(std::move(vals));
  }
  if (raw.s == 0) throw ParseError(src + ": missing 's = <int>' header");
  auto need = [&](const std::string& label, int rows) {
    const auto it = raw.blocks.find(label);
    if (it == raw.blocks.end()) throw ParseError(src + ": missing block '" + label + "'");
    if (static_cast<int>(it->second.size()) != rows)
      throw ParseError(src + ": block '" + label + "' has " + std::to_string(it->second.size()) + " rows, expected " +
                       std::to_string(rows));
  };
  for (const auto& m : matrices) need(m, raw.s);
  for (const auto& v : vectors) need(v, 1);
  return raw;
}

inline Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& rows) {
  Eigen::MatrixXd M(rows.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.size(); ++j) M(i, j) = rows[i][j];
  return M;
}

inline Eigen::VectorXd to_vector(const std::vector<std::vector<double>>& rows) {
  return Eigen::Map<const Eigen::VectorXd>(rows[0].data(), rows[0].size());
}

inline std::ifstream open_tableau(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  return in;
}

inline void write_block(std::ostream& o, const std::string& label, const Eigen::MatrixXd& M) {
  o << label << "\n";
  char buf[64];
  for (int i = 0; i < M.rows(); ++i) {
    for (int j = 0; j < M.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", M(i, j));
      o << (j ? " " : "") << buf;
    }
    o << "\n";
  }
}

}  // namespace detail

inline SprkTableau parse_sprk_tableau(std::istream& in, const std::string& src = "<tableau>") {
  const auto raw = detail::parse_raw_tableau(in, src, {"a", "abar", "ahat", "b", "bbar", "bhat"},
                                             {"alpha", "alphahat", "beta", "betahat"});
  if (!raw.noise.empty()) throw ParseError(src + ": 'noise' header is only valid for weak tableaus");
  SprkTableau t;
  t.s = raw.s;
  t.name = raw.name.empty() ? src : raw.name;
  t.a = detail::to_matrix(raw.blocks.at("a"));
  t.abar = detail::to_matrix(raw.blocks.at("abar"));
  t.ahat = detail::to_matrix(raw.blocks.at("ahat"));
  t.b = detail::to_matrix(raw.blocks.at("b"));
  t.bbar = detail::to_matrix(raw.blocks.at("bbar"));
  t.bhat = detail::to_matrix(raw.blocks.at("bhat"));
  t.alpha = detail::to_vector(raw.blocks.at("alpha"));
  t.alphahat = detail::to_vector(raw.blocks.at("alphahat"));
  t.beta = detail::to_vector(raw.blocks.at("beta"));
  t.betahat = detail::to_vector(raw.blocks.at("betahat"));
  return t;
}

inline WrkTableau parse_wrk_tableau(std::istream& in, const std::string& src = "<tableau>") {
  const auto raw = detail::parse_raw_tableau(in, src, {"a0", "b0", "a1", "b1", "b3"}, {"alpha", "beta"});
  WrkTableau t;
  t.s = raw.s;
  t.name = raw.name.empty() ? src : raw.name;
  t.single_noise = raw.noise == "single";
  t.a0 = detail::to_matrix(raw.blocks.at("a0"));
  t.b0 = detail::to_matrix(raw.blocks.at("b0"));
  t.a1 = detail::to_matrix(raw.blocks.at("a1"));
  t.b1 = detail::to_matrix(raw.blocks.at("b1"));
  t.b3 = detail::to_matrix(raw.blocks.at("b3"));
  t.alpha = detail::to_vector(raw.blocks.at("alpha"));
  t.beta = detail::to_vector(raw.blocks.at("beta"));
  return t;
}

inline SprkTableau load_sprk_tableau(const std::string& path) {
  auto in = detail::open_tableau(path);
  return parse_sprk_tableau(in, path);
}

inline WrkTableau load_wrk_tableau(const std::string& path) {
  auto in = detail::open_tableau(path);
  return parse_wrk_tableau(in, path);
}

inline void write_tableau(std::ostream& o, const SprkTableau& t) {
  o << "s = " << t.s << "\nname = " << t.name << "\n";
  detail::write_block(o, "a", t.a);
  detail::write_block(o, "abar", t.abar);
  detail::write_block(o, "ahat", t.ahat);
  detail::write_block(o, "b", t.b);
  detail::write_block(o, "bbar", t.bbar);
  detail::write_block(o, "bhat", t.bhat);
  detail::write_block(o, "alpha", t.alpha.transpose());
  detail::write_block(o, "alphahat", t.alphahat.transpose());
  detail::write_block(o, "beta", t.beta.transpose());
  detail::write_block(o, "betahat", t.betahat.transpose());
}

inline void write_tableau(std::ostream& o, const WrkTableau& t) {
  o << "s = " << t.s << "\nname = " << t.name << "\n";
  if (t.single_noise) o << "noise = single\n";
  detail::write_block(o, "a0", t.a0);
  detail::write_block(o, "b0", t.b0);
  detail::write_block(o, "a1", t.a1);
  detail::write_block(o, "b1", t.b1);
  detail::write_block(o, "b3", t.b3);
  detail::write_block(o, "alpha", t.alpha.transpose());
  detail::write_block(o, "beta", t.beta.transpose());
}

}  // namespace sdha
