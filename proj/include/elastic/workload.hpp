#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "elastic/domain_model.hpp"
#include "elastic/error.hpp"
#include "elastic/random.hpp"

namespace elastic {

inline constexpr std::string_view kTraceVersionLine = "# trace-v1";
inline constexpr std::string_view kTraceHeader = "job_id,submit_s,demand_node_hours,n_min,n_max,failure";

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  if (text.empty()) return false;
  const char* first = text.data();
  const char* last = first + text.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline std::string format_failure(const FailureKind& failure) {
  if (const auto* bug = std::get_if<BugFailure>(&failure)) return "bug:" + std::to_string(bug->hang_time);
  if (const auto* kill = std::get_if<UserKill>(&failure)) return "kill:" + std::to_string(kill->kill_time);
  return "none";
}

/// Serializes jobs in the trace-v1 CSV layout; demand uses the shortest
/// round-trip decimal form.
inline std::string write_trace(const std::vector<JobSpec>& jobs) {
  std::string out;
  out += kTraceVersionLine;
  out += '\n';
  out += kTraceHeader;
  out += '\n';
  for (const auto& job : jobs) {
    out += job.id + ',' + std::to_string(job.submit_time) + ',' + detail::format_double(job.demand) + ',' +
           std::to_string(job.n_min) + ',' + std::to_string(job.n_max) + ',' + format_failure(job.failure) + '\n';
  }
  return out;
}

/// Parses and validates a trace. Rows must be sorted by submit time with
/// unique ids; the version line is optional, the header is required.
inline std::vector<JobSpec> load_trace(std::istream& in) {
  std::vector<JobSpec> jobs;
  std::set<JobId> seen;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  auto parse_error = [&](const std::string& what) {
    throw Error(ErrorKind::parse, "line " + std::to_string(line_no) + ": " + what);
  };
  auto invalid = [&](const std::string& what) {
    throw Error(ErrorKind::validation, "line " + std::to_string(line_no) + ": " + what);
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      if (line != kTraceHeader) parse_error("expected header '" + std::string(kTraceHeader) + "'");
      header_seen = true;
      continue;
    }
    const auto fields = detail::split_commas(line);
    if (fields.size() != 6) parse_error("expected 6 fields, found " + std::to_string(fields.size()));

    JobSpec job;
    job.id = std::string(fields[0]);
    if (job.id.empty()) parse_error("empty job id");
    if (!detail::parse_number(fields[1], job.submit_time)) parse_error("bad submit_s '" + std::string(fields[1]) + "'");
    if (!detail::parse_number(fields[2], job.demand))
      parse_error("bad demand_node_hours '" + std::string(fields[2]) + "'");
    if (!detail::parse_number(fields[3], job.n_min)) parse_error("bad n_min '" + std::string(fields[3]) + "'");
    if (!detail::parse_number(fields[4], job.n_max)) parse_error("bad n_max '" + std::string(fields[4]) + "'");

    const std::string_view failure = fields[5];
    if (failure == "none") {
      job.failure = NoFailure{};
    } else if (failure.starts_with("bug:")) {
      Seconds s = 0;
      if (!detail::parse_number(failure.substr(4), s)) parse_error("bad failure '" + std::string(failure) + "'");
      job.failure = BugFailure{s};
    } else if (failure.starts_with("kill:")) {
      Seconds s = 0;
      if (!detail::parse_number(failure.substr(5), s)) parse_error("bad failure '" + std::string(failure) + "'");
      job.failure = UserKill{s};
    } else {
      parse_error("bad failure '" + std::string(failure) + "'");
    }

    try {
      validate_job(job);
    } catch (const Error& e) {
      invalid(e.what());
    }
    if (!seen.insert(job.id).second) invalid("duplicate job id '" + job.id + "'");
    if (!jobs.empty() && job.submit_time < jobs.back().submit_time)
      invalid("rows out of order: '" + job.id + "' submitted at " + std::to_string(job.submit_time) +
              " after '" + jobs.back().id + "' at " + std::to_string(jobs.back().submit_time));
    jobs.push_back(std::move(job));
  }
  if (!header_seen) throw Error(ErrorKind::parse, "trace has no header line");
  return jobs;
}

inline std::vector<JobSpec> load_trace_text(const std::string& text) {
  std::istringstream in(text);
  return load_trace(in);
}

/// Synthetic workload: memoryless arrivals, a mixture of small jobs uniform
/// on (0, cutoff) minutes and large jobs lognormal (>= cutoff) with a
/// prescribed mean, all durations measured at 1-node speed.
struct SyntheticProfile {
  double arrival_rate = 447.0 / 50.0;  // jobs per hour
  double large_mean_minutes = 232.6;
  double large_sigma = 1.0;
  double small_fraction = 0.0;
  double small_cutoff_minutes = 5.0;
  std::size_t count = 447;
  int n_min = 1;
  int n_max = 16;
  double bug_fraction = 0.0;
  double terminate_fraction = 0.0;

  void validate() const {
    if (!(arrival_rate > 0.0)) throw Error(ErrorKind::config, "arrival rate must be positive");
    if (!(large_mean_minutes > 0.0) || !(large_sigma > 0.0) || !(small_cutoff_minutes > 0.0))
      throw Error(ErrorKind::config, "duration parameters must be positive");
    if (!(small_fraction >= 0.0 && small_fraction <= 1.0))
      throw Error(ErrorKind::config, "small-job fraction must lie in [0, 1]");
    if (!(bug_fraction >= 0.0 && terminate_fraction >= 0.0 && bug_fraction + terminate_fraction <= 1.0))
      throw Error(ErrorKind::config, "failure fractions must be non-negative and sum to at most 1");
    if (n_min < 1 || n_max < n_min || !is_power_of_two(n_min) || !is_power_of_two(n_max))
      throw Error(ErrorKind::config, "job node bounds must be powers of two with n_min <= n_max");
    if (large_mean_minutes <= small_cutoff_minutes)
      throw Error(ErrorKind::config, "large-job mean must exceed the small-job cutoff");
  }

  /// 447 jobs of >= 5 minutes over about 50 hours, mean 232.6 minutes.
  static SyntheticProfile baseline() { return {}; }

  /// 1252 jobs over about 50 hours, 64% of them under 5 minutes.
  static SyntheticProfile heterogeneous() {
    SyntheticProfile p;
    p.count = 1252;
    p.arrival_rate = 1252.0 / 50.0;
    p.small_fraction = 0.64;
    return p;
  }

  /// Baseline with 15% buggy and 10% user-terminated jobs.
  static SyntheticProfile harsh() {
    SyntheticProfile p;
    p.bug_fraction = 0.15;
    p.terminate_fraction = 0.10;
    return p;
  }
};

namespace detail {
enum Stream : std::uint64_t { arrivals = 1, durations = 2, failures = 3 };
}

/// Deterministic under `seed`: arrivals, durations and failure annotations
/// draw from separate substreams of one Rng algorithm.
inline std::vector<JobSpec> generate(const SyntheticProfile& profile, std::uint64_t seed) {
  profile.validate();
  Rng arrivals = Rng::substream(seed, detail::arrivals);
  Rng durations = Rng::substream(seed, detail::durations);
  Rng failures = Rng::substream(seed, detail::failures);

  const double sigma = profile.large_sigma;
  const double mu = std::log(profile.large_mean_minutes) - 0.5 * sigma * sigma;
  const int width = std::max<int>(4, static_cast<int>(std::to_string(profile.count).size()));

  std::vector<JobSpec> jobs;
  jobs.reserve(profile.count);
  double clock = 0.0;  // seconds
  for (std::size_t n = 0; n < profile.count; ++n) {
    if (n > 0) clock += arrivals.exponential(profile.arrival_rate) * 3600.0;

    double minutes;
    if (durations.bernoulli(profile.small_fraction)) {
      minutes = profile.small_cutoff_minutes * durations.uniform_open01();
    } else {
      do {
        minutes = durations.lognormal(mu, sigma);
      } while (minutes < profile.small_cutoff_minutes);
    }

    JobSpec job;
    char id[32];
    std::snprintf(id, sizeof id, "j%0*zu", width, n + 1);
    job.id = id;
    job.submit_time = static_cast<Seconds>(std::floor(clock));
    job.demand = minutes / 60.0;
    job.n_min = profile.n_min;
    job.n_max = profile.n_max;

    const double u = failures.uniform01();
    if (u < profile.bug_fraction) {
      job.failure = BugFailure{failures.uniform_int(1, kMaxBugHang)};
    } else if (u < profile.bug_fraction + profile.terminate_fraction) {
      const auto nominal = std::max<Seconds>(1, static_cast<Seconds>(std::ceil(minutes * 60.0)));
      job.failure = UserKill{failures.uniform_int(1, nominal)};
    }
    jobs.push_back(std::move(job));
  }
  return jobs;
}

}  // namespace elastic
