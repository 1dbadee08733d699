#pragma once

// Energy-precision ratio: M = error^alpha * EPI, lower is better.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "perfmodel/arch.hpp"
#include "perfmodel/dataset.hpp"
#include "perfmodel/error.hpp"
#include "perfmodel/json_util.hpp"
#include "perfmodel/network.hpp"

namespace perfmodel {

struct CandidateArch {
  std::string name;
  double error = 0.0;   // classification error as a fraction, 0..1
  double epi_mj = 0.0;  // energy per classified item, millijoules

  friend bool operator==(const CandidateArch&, const CandidateArch&) = default;
};

inline void validate(const CandidateArch& c) {
  if (c.name.empty()) throw DataError("candidate name is blank");
  if (!(c.error >= 0.0 && c.error <= 1.0)) {
    throw DataError("candidate '" + c.name + "': error must lie in [0, 1]");
  }
  if (!(c.epi_mj > 0.0) || !std::isfinite(c.epi_mj)) {
    throw DataError("candidate '" + c.name + "': epi_mj must be positive");
  }
}

inline void check_alpha(int alpha) {
  if (alpha < 1) throw DataError("alpha must be a positive integer, got " + std::to_string(alpha));
}

inline double epr_score(const CandidateArch& c, int alpha) {
  validate(c);
  check_alpha(alpha);
  double power = 1.0;
  for (int i = 0; i < alpha; ++i) power *= c.error;
  return power * c.epi_mj;
}

struct RankedCandidate {
  CandidateArch candidate;
  double score = 0.0;
};

// Ascending score; ties go to the lower error, then the name.
inline std::vector<RankedCandidate> rank(std::span<const CandidateArch> candidates, int alpha) {
  if (candidates.empty()) throw DataError("no candidates to rank");
  std::vector<RankedCandidate> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) out.push_back({c, epr_score(c, alpha)});
  std::sort(out.begin(), out.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
    if (a.score != b.score) return a.score < b.score;
    if (a.candidate.error != b.candidate.error) return a.candidate.error < b.candidate.error;
    return a.candidate.name < b.candidate.name;
  });
  return out;
}

// Energy per item in mJ from a predicted network, using the batch size of the
// network's first layer.
inline double epi_from_report(const PredictionReport& report, const NetworkSpec& net) {
  if (net.layers.empty()) throw DataError("network '" + net.name + "' has no layers");
  const Count batch = batch_of(net.layers.front());
  if (batch < 1) throw DataError("network '" + net.name + "': first layer batch must be positive");
  return report.total_energy_j * 1000.0 / static_cast<double>(batch);
}

// Input parsing -------------------------------------------------------------------

inline constexpr std::string_view kCandidateCsvHeader = "name,error,epi_mj";

namespace epr_detail {

inline double parse_number(std::string_view text, const char* what) {
  double v = 0.0;
  text = csv_detail::trim(text);
  if (!parse_double(text, v) || !std::isfinite(v)) {
    throw DataError(std::string(what) + " is not a decimal number: '" + std::string(text) + "'");
  }
  return v;
}

inline CandidateArch make_candidate(std::string_view name, std::string_view error, std::string_view epi) {
  CandidateArch c{std::string(csv_detail::trim(name)), parse_number(error, "error"), parse_number(epi, "epi_mj")};
  validate(c);
  return c;
}

}  // namespace epr_detail

inline std::vector<CandidateArch> parse_candidates_csv(std::string_view text) {
  using namespace csv_detail;
  const auto rows = lines(text);
  if (rows.empty() || trim(rows.front()) != kCandidateCsvHeader) {
    throw DataError("candidate CSV header must be: " + std::string(kCandidateCsvHeader));
  }
  std::vector<CandidateArch> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (trim(rows[r]).empty()) continue;
    try {
      const auto f = split(rows[r]);
      if (f.size() != 3) throw DataError("expected 3 fields, found " + std::to_string(f.size()));
      out.push_back(epr_detail::make_candidate(f[0], f[1], f[2]));
    } catch (const Error& e) {
      throw DataError("row " + std::to_string(r) + " (line " + std::to_string(r + 1) + "): " + e.what());
    }
  }
  if (out.empty()) throw DataError("candidate CSV has no rows");
  return out;
}

// "name:error:epi,name:error:epi"
inline std::vector<CandidateArch> parse_inline_candidates(std::string_view text) {
  std::vector<CandidateArch> out;
  std::size_t item = 0;
  for (std::string_view entry : csv_detail::split(text, ',')) {
    ++item;
    try {
      const auto f = csv_detail::split(entry, ':');
      if (f.size() != 3) throw DataError("expected name:error:epi_mj");
      out.push_back(epr_detail::make_candidate(f[0], f[1], f[2]));
    } catch (const Error& e) {
      throw DataError("candidate " + std::to_string(item) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<int> parse_alpha_list(std::string_view text) {
  std::vector<int> out;
  for (std::string_view entry : csv_detail::split(text, ',')) {
    entry = csv_detail::trim(entry);
    int v = 0;
    auto [end, ec] = std::from_chars(entry.data(), entry.data() + entry.size(), v);
    if (entry.empty() || ec != std::errc{} || end != entry.data() + entry.size()) {
      throw DataError("alpha must be a positive integer, got '" + std::string(entry) + "'");
    }
    check_alpha(v);
    out.push_back(v);
  }
  return out;
}

// Output ------------------------------------------------------------------------

struct EprTable {
  std::vector<CandidateArch> candidates;  // input order
  std::vector<int> alphas;
  std::vector<std::vector<double>> scores;  // scores[candidate][alpha]
  std::vector<std::string> winners;         // one per alpha
};

inline EprTable epr_table(std::span<const CandidateArch> candidates, std::span<const int> alphas) {
  if (alphas.empty()) throw DataError("no alpha values given");
  EprTable t;
  t.candidates.assign(candidates.begin(), candidates.end());
  t.alphas.assign(alphas.begin(), alphas.end());
  t.scores.assign(candidates.size(), std::vector<double>(alphas.size()));
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    t.winners.push_back(rank(candidates, alphas[a]).front().candidate.name);
    for (std::size_t c = 0; c < candidates.size(); ++c) t.scores[c][a] = epr_score(candidates[c], alphas[a]);
  }
  return t;
}

// Winners are marked with '*'.
inline std::string epr_table_to_text(const EprTable& t) {
  std::size_t name_width = 4;
  for (const auto& c : t.candidates) name_width = std::max(name_width, c.name.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(name_width) + 2) << "name" << std::right << std::setw(10)
      << "error" << std::setw(12) << "epi_mj";
  for (int a : t.alphas) out << std::setw(14) << ("M(a=" + std::to_string(a) + ")");
  out << "\n";
  for (std::size_t c = 0; c < t.candidates.size(); ++c) {
    const auto& cand = t.candidates[c];
    std::ostringstream err;
    err << std::fixed << std::setprecision(2) << cand.error * 100.0 << "%";
    std::ostringstream epi;
    epi << std::fixed << std::setprecision(1) << cand.epi_mj;
    out << std::left << std::setw(static_cast<int>(name_width) + 2) << cand.name << std::right << std::setw(10)
        << err.str() << std::setw(12) << epi.str();
    for (std::size_t a = 0; a < t.alphas.size(); ++a) {
      std::ostringstream m;
      m << std::fixed << std::setprecision(3) << t.scores[c][a] << (t.winners[a] == cand.name ? "*" : " ");
      out << std::setw(14) << m.str();
    }
    out << "\n";
  }
  for (std::size_t a = 0; a < t.alphas.size(); ++a) {
    out << "best for alpha=" << t.alphas[a] << ": " << t.winners[a] << "\n";
  }
  return out.str();
}

}  // namespace perfmodel
