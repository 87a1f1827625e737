#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sim.hpp"

namespace twrelay {

inline constexpr char kVersion[] = "1.0.0";

enum class OutFormat { csv, json };

// Everything a run needs: the experiment itself plus output plumbing. The
// config file is flat `key = value` text; see emit_config for the canonical
// form and the full key list.
struct RunConfig {
  ExperimentSpec spec;
  std::vector<Scheme> schemes;  // comparison runs; empty means spec.scheme only
  std::string out;              // empty writes the table to stdout
  OutFormat format = OutFormat::csv;
  int threads = 1;
  int verbosity = 0;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline Scheme parse_scheme(std::string_view v) {
  if (v == "iterative") return Scheme::iterative;
  if (v == "cp") return Scheme::cp;
  if (v == "cp-uniform") return Scheme::cp_uniform;
  if (v == "sas") return Scheme::sas;
  if (v == "none") return Scheme::none;
  throw ConfigError("unknown scheme '" + std::string(v) +
                    "' (expected iterative, cp, cp-uniform, sas, or none)");
}

inline std::vector<std::string_view> split(std::string_view v, char sep) {
  std::vector<std::string_view> parts;
  while (!v.empty()) {
    std::size_t pos = v.find(sep);
    std::string_view part = v.substr(0, pos);
    while (!part.empty() && part.front() == ' ') part.remove_prefix(1);
    while (!part.empty() && part.back() == ' ') part.remove_suffix(1);
    if (!part.empty()) parts.push_back(part);
    if (pos == std::string_view::npos) break;
    v.remove_prefix(pos + 1);
  }
  return parts;
}

}  // namespace detail

inline RunConfig parse_config(std::string_view text) {
  RunConfig rc;
  std::vector<std::string> seen;
  int line_no = 0;
  auto fail = [&](const std::string& what) {
    throw ConfigError("config line " + std::to_string(line_no) + ": " + what);
  };
  auto to_i64 = [&](std::string_view v, const char* key) {
    std::int64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
      fail(std::string("key '") + key + "': expected an integer, got '" +
           std::string(v) + "'");
    return out;
  };
  auto to_u64 = [&](std::string_view v, const char* key) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
      fail(std::string("key '") + key + "': expected an unsigned integer, got '" +
           std::string(v) + "'");
    return out;
  };
  auto to_f64 = [&](std::string_view v, const char* key) {
    double out = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
      fail(std::string("key '") + key + "': expected a number, got '" + std::string(v) +
           "'");
    return out;
  };
  auto to_bool = [&](std::string_view v, const char* key) {
    if (v == "true") return true;
    if (v == "false") return false;
    fail(std::string("key '") + key + "': expected true or false, got '" +
         std::string(v) + "'");
    return false;
  };

  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    std::string_view line = text.substr(
        start, end == std::string_view::npos ? text.size() - start : end - start);
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;

    if (std::size_t hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t' ||
                             line.back() == '\r'))
      line.remove_suffix(1);
    while (!line.empty() && (line.front() == ' ' || line.front() == '\t'))
      line.remove_prefix(1);
    if (line.empty()) continue;

    std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) fail("expected 'key = value'");
    std::string_view key = line.substr(0, eq);
    std::string_view value = line.substr(eq + 1);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t'))
      key.remove_suffix(1);
    while (!value.empty() && (value.front() == ' ' || value.front() == '\t'))
      value.remove_prefix(1);
    if (key.empty()) fail("missing key before '='");

    std::string key_s(key);
    for (const std::string& k : seen)
      if (k == key_s) fail("duplicate key '" + key_s + "'");
    seen.push_back(key_s);

    try {
      if (key == "n") {
        rc.spec.cfg.n = Eigen::Index(to_i64(value, "n"));
      } else if (key == "m") {
        rc.spec.cfg.m = Eigen::Index(to_i64(value, "m"));
      } else if (key == "streams") {
        if (value == "multi")
          rc.spec.streams = StreamMode::multi;
        else if (value == "single")
          rc.spec.streams = StreamMode::single;
        else
          fail("key 'streams': expected multi or single, got '" + std::string(value) +
               "'");
      } else if (key == "scheme") {
        rc.spec.scheme = detail::parse_scheme(value);
      } else if (key == "schemes") {
        for (std::string_view part : detail::split(value, ','))
          rc.schemes.push_back(detail::parse_scheme(part));
      } else if (key == "init") {
        if (value == "identity")
          rc.spec.init = InitKind::identity;
        else if (value == "random")
          rc.spec.init = InitKind::random;
        else
          fail("key 'init': expected identity or random, got '" + std::string(value) +
               "'");
      } else if (key == "restarts") {
        rc.spec.restarts = int(to_i64(value, "restarts"));
      } else if (key == "trials") {
        rc.spec.trials = int(to_i64(value, "trials"));
      } else if (key == "symbols") {
        rc.spec.symbols_per_trial = int(to_i64(value, "symbols"));
      } else if (key == "seed") {
        rc.spec.seed = to_u64(value, "seed");
      } else if (key == "reciprocal") {
        rc.spec.reciprocal = to_bool(value, "reciprocal");
      } else if (key == "snr_db") {
        rc.spec.snr_db.clear();
        for (std::string_view part : detail::split(value, ','))
          rc.spec.snr_db.push_back(to_f64(part, "snr_db"));
      } else if (key == "out") {
        rc.out = std::string(value);
      } else if (key == "format") {
        if (value == "csv")
          rc.format = OutFormat::csv;
        else if (value == "json")
          rc.format = OutFormat::json;
        else
          fail("key 'format': expected csv or json, got '" + std::string(value) + "'");
      } else if (key == "threads") {
        rc.threads = int(to_i64(value, "threads"));
      } else if (key == "verbosity") {
        rc.verbosity = int(to_i64(value, "verbosity"));
      } else {
        fail("unknown key '" + key_s + "'");
      }
    } catch (const ConfigError& e) {
      // scheme names are parsed by a helper that lacks the line context
      std::string msg = e.what();
      if (msg.rfind("config line", 0) == 0) throw;
      fail(msg);
    }
  }
  return rc;
}

// Canonical form: every key, fixed order, one per line. Parsing the emitted
// text reproduces the same RunConfig, and emitting again is a fixed point.
inline std::string emit_config(const RunConfig& rc) {
  std::string out;
  auto kv = [&](const char* key, const std::string& value) {
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  };
  kv("n", std::to_string(rc.spec.cfg.n));
  kv("m", std::to_string(rc.spec.cfg.m));
  kv("streams", rc.spec.streams == StreamMode::multi ? "multi" : "single");
  kv("scheme", scheme_name(rc.spec.scheme));
  std::string schemes;
  for (Scheme s : rc.schemes) {
    if (!schemes.empty()) schemes += ',';
    schemes += scheme_name(s);
  }
  kv("schemes", schemes);
  kv("init", rc.spec.init == InitKind::identity ? "identity" : "random");
  kv("restarts", std::to_string(rc.spec.restarts));
  kv("trials", std::to_string(rc.spec.trials));
  kv("symbols", std::to_string(rc.spec.symbols_per_trial));
  kv("seed", std::to_string(rc.spec.seed));
  kv("reciprocal", rc.spec.reciprocal ? "true" : "false");
  std::string grid;
  for (double v : rc.spec.snr_db) {
    if (!grid.empty()) grid += ',';
    grid += detail::format_double(v);
  }
  kv("snr_db", grid);
  kv("out", rc.out);
  kv("format", rc.format == OutFormat::csv ? "csv" : "json");
  kv("threads", std::to_string(rc.threads));
  kv("verbosity", std::to_string(rc.verbosity));
  return out;
}

// One row per (SNR point, scheme), point-major so schemes sit side by side.
inline std::string to_csv(const std::vector<SweepResult>& sweeps) {
  std::string out =
      "snr_db,scheme,mean_total_mse,mean_ber_s1,mean_ber_s2,trials,failures,"
      "mean_iters\n";
  if (sweeps.empty()) return out;
  std::size_t points = sweeps.front().points.size();
  for (std::size_t k = 0; k < points; ++k)
    for (const SweepResult& sweep : sweeps) {
      const PointResult& p = sweep.points.at(k);
      out += detail::format_double(p.snr_db);
      out += ',';
      out += scheme_name(sweep.scheme);
      out += ',';
      out += detail::format_double(p.mean_total_mse);
      out += ',';
      out += detail::format_double(p.mean_ber_s1);
      out += ',';
      out += detail::format_double(p.mean_ber_s2);
      out += ',';
      out += std::to_string(p.trials);
      out += ',';
      out += std::to_string(p.failures);
      out += ',';
      out += detail::format_double(p.mean_iters);
      out += '\n';
    }
  return out;
}

inline std::string to_json(const std::vector<SweepResult>& sweeps) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  if (!sweeps.empty()) {
    std::size_t points = sweeps.front().points.size();
    for (std::size_t k = 0; k < points; ++k)
      for (const SweepResult& sweep : sweeps) {
        const PointResult& p = sweep.points.at(k);
        rows.push_back({{"snr_db", p.snr_db},
                        {"scheme", scheme_name(sweep.scheme)},
                        {"mean_total_mse", p.mean_total_mse},
                        {"mean_ber_s1", p.mean_ber_s1},
                        {"mean_ber_s2", p.mean_ber_s2},
                        {"trials", p.trials},
                        {"failures", p.failures},
                        {"mean_iters", p.mean_iters},
                        {"flagged", p.flagged}});
      }
  }
  return rows.dump(2) + "\n";
}

// Write via a sibling temp file and rename, so failures leave no partial file.
inline void write_atomic(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  std::FILE* f = std::fopen(tmp.c_str(), "wb");
  if (!f) throw IoError("cannot open '" + tmp + "' for writing");
  std::size_t written = std::fwrite(content.data(), 1, content.size(), f);
  bool ok = written == content.size() && std::fclose(f) == 0;
  if (!ok) {
    std::remove(tmp.c_str());
    throw IoError("failed writing '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw IoError("failed renaming '" + tmp + "' to '" + path + "'");
  }
}

// Runs every requested scheme over shared channel draws and emits the table
// plus a metadata record. Returns 0, or 3 when any point was flagged for
// excessive trial failures. Config and I/O problems throw instead.
inline int run(const RunConfig& rc) {
  if (rc.threads < 1) throw ConfigError("threads must be at least 1");
  if (rc.verbosity < 0) throw ConfigError("verbosity must not be negative");
  std::vector<Scheme> schemes = rc.schemes;
  if (schemes.empty()) schemes.push_back(rc.spec.scheme);

  std::vector<SweepResult> sweeps;
  for (Scheme scheme : schemes) {
    ExperimentSpec spec = rc.spec;
    spec.scheme = scheme;
    validate_spec(spec);
    sweeps.push_back(run_sweep(spec, rc.threads));
    if (rc.verbosity > 0) {
      const SweepResult& sweep = sweeps.back();
      for (const PointResult& p : sweep.points)
        std::cerr << scheme_name(scheme) << " @ " << p.snr_db
                  << " dB: mse=" << p.mean_total_mse << " ber=" << p.mean_ber_s1 << "/"
                  << p.mean_ber_s2 << " failures=" << p.failures << "\n";
    }
  }

  std::string table = rc.format == OutFormat::csv ? to_csv(sweeps) : to_json(sweeps);
  if (rc.out.empty()) {
    std::cout << table;
  } else {
    write_atomic(rc.out, table);
    nlohmann::ordered_json meta;
    meta["seed"] = rc.spec.seed;
    meta["version"] = kVersion;
    nlohmann::ordered_json names = nlohmann::ordered_json::array();
    for (Scheme s : schemes) names.push_back(scheme_name(s));
    meta["schemes"] = names;
    meta["config"] = emit_config(rc);
    write_atomic(rc.out + ".meta.json", meta.dump(2) + "\n");
  }

  for (const SweepResult& sweep : sweeps)
    for (const PointResult& p : sweep.points)
      if (p.flagged) return 3;
  return 0;
}

}  // namespace twrelay
