#pragma once

// Recording files (text and EARK1 binary), pipeline/cohort configuration JSON,
// stage-file CSVs and JSON reports.

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "earmark/classifier.hpp"
#include "earmark/errors.hpp"
#include "earmark/pipeline.hpp"
#include "earmark/sigcore.hpp"
#include "earmark/stats.hpp"
#include "earmark/studysim.hpp"

namespace earmark::io {

using nlohmann::json;

enum class RecordingFormat { text, binary };

inline RecordingFormat parse_format(std::string_view s) {
  if (s == "text") return RecordingFormat::text;
  if (s == "binary") return RecordingFormat::binary;
  fail(ErrorKind::config, "unknown recording format '" + std::string(s) + "'");
}

inline constexpr std::string_view kBinaryMagic = "EARK1";

// ---------------------------------------------------------------------------
// Numbers

/// Shortest decimal that reads back to the same double.
inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return {buf.data(), r.ptr};
}

/// Rounds to 6 significant digits (the report precision).
inline double round6(double v) {
  if (!std::isfinite(v)) return v;
  std::array<char, 32> buf{};
  std::snprintf(buf.data(), buf.size(), "%.6g", v);
  return std::strtod(buf.data(), nullptr);
}

inline std::string format6(double v) {
  std::array<char, 32> buf{};
  std::snprintf(buf.data(), buf.size(), "%.6g", v);
  return buf.data();
}

inline bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc{} && r.ptr == s.data() + s.size();
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = s.find(sep, pos);
    out.push_back(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::data, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes via a temporary sibling and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::data, "cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) fail(ErrorKind::data, "short write to '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Recordings

struct RecordingFile {
  Recording recording;
  std::string subject;  // empty when the header has none
};

namespace detail {

inline std::string header_text(const Recording& rec, const std::string& subject) {
  std::string h = "# fs_hz=" + format_double(rec.sample_rate_hz()) + "\n# channels=";
  bool first = true;
  for (const auto& ch : rec.channels()) {
    if (!first) h += ",";
    h += ch.name + ":" + std::string(to_string(ch.role));
    first = false;
  }
  h += "\n";
  if (!subject.empty()) h += "# subject=" + subject + "\n";
  return h;
}

struct Header {
  double fs_hz = 0.0;
  std::vector<std::pair<std::string, ChannelRole>> channels;
  std::string subject;
  bool has_fs = false;
  bool has_channels = false;
};

inline void parse_header_line(std::string_view line, std::size_t line_no, Header& h) {
  auto where = [&] { return "line " + std::to_string(line_no) + ": "; };
  line.remove_prefix(1);
  while (!line.empty() && line.front() == ' ') line.remove_prefix(1);
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  if (line.empty()) return;
  const auto eq = line.find('=');
  if (eq == std::string_view::npos) fail(ErrorKind::parse, where() + "header line lacks key=value");
  const auto key = line.substr(0, eq);
  const auto value = line.substr(eq + 1);
  if (key == "fs_hz") {
    if (!parse_double(value, h.fs_hz) || !(h.fs_hz > 0.0) || !std::isfinite(h.fs_hz)) {
      fail(ErrorKind::parse, where() + "fs_hz must be a positive number");
    }
    h.has_fs = true;
  } else if (key == "channels") {
    h.channels.clear();
    for (auto item : split(value, ',')) {
      const auto colon = item.find(':');
      if (colon == std::string_view::npos || colon == 0) fail(ErrorKind::parse, where() + "channel entry must be name:role");
      try {
        h.channels.emplace_back(std::string(item.substr(0, colon)), parse_channel_role(item.substr(colon + 1)));
      } catch (const Error& e) {
        fail(ErrorKind::parse, where() + e.what());
      }
    }
    h.has_channels = true;
  } else if (key == "subject") {
    h.subject = std::string(value);
  }
}

inline Recording assemble(const Header& h, std::vector<std::vector<double>> columns) {
  std::vector<Channel> chans;
  for (std::size_t c = 0; c < h.channels.size(); ++c) {
    chans.push_back({h.channels[c].first, h.channels[c].second, std::move(columns[c])});
  }
  try {
    return Recording(h.fs_hz, std::move(chans));
  } catch (const Error& e) {
    fail(ErrorKind::parse, e.what());
  }
}

inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& s, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_le(std::string_view s, std::size_t pos, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[pos + static_cast<std::size_t>(i)])) << (8 * i);
  return v;
}

inline RecordingFile parse_text(std::string_view text) {
  Header h;
  std::vector<std::vector<double>> cols;
  std::size_t line_no = 0, pos = 0;
  bool in_body = false;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (in_body) fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": header line after data");
      parse_header_line(line, line_no, h);
      continue;
    }
    if (!in_body) {
      if (!h.has_fs) fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": missing fs_hz header");
      if (!h.has_channels) fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": missing channels header");
      cols.resize(h.channels.size());
      in_body = true;
    }
    const auto fields = split(line, ',');
    if (fields.size() != h.channels.size()) {
      fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": expected " + std::to_string(h.channels.size()) +
                                 " columns, found " + std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      double v = 0.0;
      if (!parse_double(fields[c], v)) {
        fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": bad number '" + std::string(fields[c]) + "'");
      }
      if (!std::isfinite(v)) fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": non-finite sample");
      cols[c].push_back(v);
    }
  }
  if (!h.has_fs || !h.has_channels) fail(ErrorKind::parse, "missing fs_hz or channels header");
  cols.resize(h.channels.size());
  return {assemble(h, std::move(cols)), h.subject};
}

inline RecordingFile parse_binary(std::string_view data) {
  const std::size_t fixed = kBinaryMagic.size() + 4;
  if (data.size() < fixed) fail(ErrorKind::parse, "truncated EARK1 header");
  const auto hlen = static_cast<std::size_t>(get_le(data, kBinaryMagic.size(), 4));
  if (data.size() < fixed + hlen + 8) fail(ErrorKind::parse, "truncated EARK1 header");
  Header h;
  const auto header = data.substr(fixed, hlen);
  std::size_t line_no = 0;
  for (auto line : split(header, '\n')) {
    ++line_no;
    if (line.empty()) continue;
    if (line.front() != '#') fail(ErrorKind::parse, "line " + std::to_string(line_no) + ": EARK1 header lines must start with '#'");
    parse_header_line(line, line_no, h);
  }
  if (!h.has_fs || !h.has_channels) fail(ErrorKind::parse, "missing fs_hz or channels header");
  const auto n = get_le(data, fixed + hlen, 8);
  const std::size_t body = fixed + hlen + 8;
  const std::size_t nc = h.channels.size();
  if (n > (data.size() - body) / 4 / std::max<std::size_t>(nc, 1) || (data.size() - body) != n * nc * 4) {
    fail(ErrorKind::parse, "EARK1 body size does not match header (" + std::to_string(nc) + " channels, " +
                               std::to_string(n) + " samples)");
  }
  std::vector<std::vector<double>> cols(nc, std::vector<double>(n));
  std::size_t p = body;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < nc; ++c, p += 4) {
      const auto bits = static_cast<std::uint32_t>(get_le(data, p, 4));
      const float v = std::bit_cast<float>(bits);
      if (!std::isfinite(v)) fail(ErrorKind::parse, "non-finite sample at row " + std::to_string(i));
      cols[c][i] = static_cast<double>(v);
    }
  }
  return {assemble(h, std::move(cols)), h.subject};
}

}  // namespace detail

/// Text: '#'-prefixed key=value header, then one comma-separated row per
/// sample in shortest round-trip decimal. Binary: "EARK1", u32 header length,
/// the same header text, u64 sample count, then little-endian float32 rows.
inline std::string serialize_recording(const Recording& rec, RecordingFormat format, const std::string& subject = {}) {
  const auto header = detail::header_text(rec, subject);
  const auto chans = rec.channels();
  const std::size_t n = rec.n_samples();
  std::string out;
  if (format == RecordingFormat::text) {
    out = header;
    out.reserve(header.size() + n * chans.size() * 12);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < chans.size(); ++c) {
        if (c) out.push_back(',');
        out += format_double(chans[c].samples[i]);
      }
      out.push_back('\n');
    }
    return out;
  }
  out = std::string(kBinaryMagic);
  detail::put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  detail::put_u64(out, n);
  out.reserve(out.size() + n * chans.size() * 4);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& ch : chans) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(ch.samples[i])));
  }
  return out;
}

inline RecordingFile parse_recording(std::string_view data) {
  if (data.substr(0, kBinaryMagic.size()) == kBinaryMagic) return detail::parse_binary(data);
  return detail::parse_text(data);
}

inline RecordingFile read_recording(const std::filesystem::path& path) {
  const auto data = read_file(path);
  try {
    return parse_recording(data);
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

inline void write_recording(const std::filesystem::path& path, const Recording& rec, RecordingFormat format,
                            const std::string& subject = {}) {
  write_file_atomic(path, serialize_recording(rec, format, subject));
}

// ---------------------------------------------------------------------------
// Strict JSON field access

namespace detail {

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(ErrorKind::config, path_ + " must be an object");
  }

  ~Reader() = default;

  template <typename T>
  void get(const char* key, T& out) {
    seen_.push_back(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      fail(ErrorKind::config, path_ + "." + key + " has the wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.push_back(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (std::find(seen_.begin(), seen_.end(), k) == seen_.end()) fail(ErrorKind::config, "unknown key " + path_ + "." + k);
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

inline json span_to_json(const PhaseSpan& s) {
  json j = json::object();
  if (s.start_s) j["start_s"] = *s.start_s;
  if (s.end_s) j["end_s"] = *s.end_s;
  if (s.last_s) j["last_s"] = *s.last_s;
  return j;
}

inline PhaseSpan span_from_json(const json& j, const std::string& path) {
  Reader r(j, path);
  PhaseSpan s;
  double v = 0.0;
  if (j.contains("start_s")) { r.get("start_s", v); s.start_s = v; }
  if (j.contains("end_s")) { r.get("end_s", v); s.end_s = v; }
  if (j.contains("last_s")) { r.get("last_s", v); s.last_s = v; }
  r.finish();
  return s;
}

}  // namespace detail

inline json config_to_json(const PipelineConfig& c) {
  json j;
  j["filter"] = {{"lo_hz", c.filter_lo_hz}, {"hi_hz", c.filter_hi_hz}, {"order", c.filter_order}};
  j["artifacts"] = {
      {"blink_removal", c.blink_removal},
      {"cardiac_removal", c.cardiac_removal},
      {"veog_channel", c.veog_channel},
      {"ecg_channel", c.ecg_channel},
      {"per_event_scaling", c.per_event_scaling},
      {"rejection_threshold_uv", c.rejection_threshold_uv},
      {"rejection_epoch_s", c.rejection_epoch_s},
      {"blink",
       {{"band_lo_hz", c.blink.band_lo_hz},
        {"band_hi_hz", c.blink.band_hi_hz},
        {"filter_order", c.blink.filter_order},
        {"threshold_k", c.blink.threshold_k},
        {"min_amplitude_uv", c.blink.min_amplitude_uv},
        {"min_separation_s", c.blink.min_separation_s}}},
      {"qrs",
       {{"integration_window_s", c.qrs.integration_window_s},
        {"refractory_s", c.qrs.refractory_s},
        {"localize_window_s", c.qrs.localize_window_s}}},
  };
  j["welch"] = {{"segment_s", c.welch.segment_s}, {"overlap", c.welch.overlap_fraction}};
  j["epochs"] = {{"length_s", c.epoch_s}, {"overlap", c.epoch_overlap}};
  j["phases"] = {{"alert", detail::span_to_json(c.alert)}, {"fatigued", detail::span_to_json(c.fatigued)}};
  j["stat_channels"] = c.stat_channels;
  j["cv_sets"] = c.cv_sets;
  j["classifier"] = {{"max_splits", c.boost.max_splits}, {"n_learners", c.boost.n_learners}, {"learning_rate", c.boost.learning_rate}};
  j["cv"] = {{"folds", c.cv.folds}, {"strategy", std::string(to_string(c.cv.strategy))}, {"downsample_majority", c.cv.downsample_majority}};
  j["seed"] = c.seed;
  return j;
}

/// Missing keys keep their defaults; unknown keys and wrong types are config errors.
inline PipelineConfig config_from_json(const json& j) {
  PipelineConfig c;
  detail::Reader top(j, "config");
  if (const auto* f = top.child("filter")) {
    detail::Reader r(*f, "config.filter");
    r.get("lo_hz", c.filter_lo_hz);
    r.get("hi_hz", c.filter_hi_hz);
    r.get("order", c.filter_order);
    r.finish();
  }
  if (const auto* a = top.child("artifacts")) {
    detail::Reader r(*a, "config.artifacts");
    r.get("blink_removal", c.blink_removal);
    r.get("cardiac_removal", c.cardiac_removal);
    r.get("veog_channel", c.veog_channel);
    r.get("ecg_channel", c.ecg_channel);
    r.get("per_event_scaling", c.per_event_scaling);
    r.get("rejection_threshold_uv", c.rejection_threshold_uv);
    r.get("rejection_epoch_s", c.rejection_epoch_s);
    if (const auto* b = r.child("blink")) {
      detail::Reader rb(*b, "config.artifacts.blink");
      rb.get("band_lo_hz", c.blink.band_lo_hz);
      rb.get("band_hi_hz", c.blink.band_hi_hz);
      rb.get("filter_order", c.blink.filter_order);
      rb.get("threshold_k", c.blink.threshold_k);
      rb.get("min_amplitude_uv", c.blink.min_amplitude_uv);
      rb.get("min_separation_s", c.blink.min_separation_s);
      rb.finish();
    }
    if (const auto* q = r.child("qrs")) {
      detail::Reader rq(*q, "config.artifacts.qrs");
      rq.get("integration_window_s", c.qrs.integration_window_s);
      rq.get("refractory_s", c.qrs.refractory_s);
      rq.get("localize_window_s", c.qrs.localize_window_s);
      rq.finish();
    }
    r.finish();
  }
  if (const auto* w = top.child("welch")) {
    detail::Reader r(*w, "config.welch");
    r.get("segment_s", c.welch.segment_s);
    r.get("overlap", c.welch.overlap_fraction);
    r.finish();
  }
  if (const auto* e = top.child("epochs")) {
    detail::Reader r(*e, "config.epochs");
    r.get("length_s", c.epoch_s);
    r.get("overlap", c.epoch_overlap);
    r.finish();
  }
  if (const auto* p = top.child("phases")) {
    detail::Reader r(*p, "config.phases");
    if (const auto* a = r.child("alert")) c.alert = detail::span_from_json(*a, "config.phases.alert");
    if (const auto* f = r.child("fatigued")) c.fatigued = detail::span_from_json(*f, "config.phases.fatigued");
    r.finish();
  }
  top.get("stat_channels", c.stat_channels);
  top.get("cv_sets", c.cv_sets);
  if (const auto* b = top.child("classifier")) {
    detail::Reader r(*b, "config.classifier");
    r.get("max_splits", c.boost.max_splits);
    r.get("n_learners", c.boost.n_learners);
    r.get("learning_rate", c.boost.learning_rate);
    r.finish();
  }
  if (const auto* v = top.child("cv")) {
    detail::Reader r(*v, "config.cv");
    std::string strategy(to_string(c.cv.strategy));
    r.get("folds", c.cv.folds);
    r.get("strategy", strategy);
    r.get("downsample_majority", c.cv.downsample_majority);
    r.finish();
    c.cv.strategy = parse_cv_strategy(strategy);
  }
  top.get("seed", c.seed);
  top.finish();
  c.validate();
  return c;
}

inline PipelineConfig read_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    fail(ErrorKind::config, path.string() + ": " + e.what());
  } catch (const Error& e) {
    fail(ErrorKind::config, e.what());
  }
  return config_from_json(j);
}

inline json cohort_to_json(const CohortSpec& s) {
  json mult = json::array();
  for (const auto& m : s.multipliers) mult.push_back({{"channel", m.channel}, {"band", m.band}, {"ratio", m.ratio}});
  const auto& n = s.noise;
  const auto& a = s.artifacts;
  return {
      {"n_subjects", s.n_subjects},
      {"fs_hz", s.fs_hz},
      {"alert_duration_s", s.alert_duration_s},
      {"fatigued_duration_s", s.fatigued_duration_s},
      {"multipliers", mult},
      {"noise",
       {{"exponent", n.exponent},
        {"rms_uv", n.rms_uv},
        {"envelope_sigma", n.envelope_sigma},
        {"envelope_tau_s", n.envelope_tau_s},
        {"session_jitter", n.session_jitter},
        {"beta_session_jitter", n.beta_session_jitter},
        {"subject_spread", n.subject_spread},
        {"veog_noise_uv", n.veog_noise_uv},
        {"ecg_noise_uv", n.ecg_noise_uv}}},
      {"artifacts",
       {{"blinks", a.blinks},
        {"cardiac", a.cardiac},
        {"motion", a.motion},
        {"blink_rate_per_min", a.blink_rate_per_min},
        {"blink_amplitude_uv", a.blink_amplitude_uv},
        {"blink_duration_s", a.blink_duration_s},
        {"heart_rate_bpm", a.heart_rate_bpm},
        {"motion_rate_per_min", a.motion_rate_per_min},
        {"motion_amplitude_uv", a.motion_amplitude_uv},
        {"motion_duration_s", a.motion_duration_s}}},
      {"seed", s.seed},
  };
}

inline CohortSpec cohort_from_json(const json& j) {
  CohortSpec s;
  detail::Reader top(j, "cohort");
  top.get("n_subjects", s.n_subjects);
  top.get("fs_hz", s.fs_hz);
  top.get("alert_duration_s", s.alert_duration_s);
  top.get("fatigued_duration_s", s.fatigued_duration_s);
  if (const auto* m = top.child("multipliers")) {
    if (!m->is_array()) fail(ErrorKind::config, "cohort.multipliers must be an array");
    s.multipliers.clear();
    for (const auto& item : *m) {
      detail::Reader r(item, "cohort.multipliers[]");
      BandMultiplier bm;
      r.get("channel", bm.channel);
      r.get("band", bm.band);
      r.get("ratio", bm.ratio);
      r.finish();
      s.multipliers.push_back(bm);
    }
  }
  if (const auto* n = top.child("noise")) {
    detail::Reader r(*n, "cohort.noise");
    r.get("exponent", s.noise.exponent);
    r.get("rms_uv", s.noise.rms_uv);
    r.get("envelope_sigma", s.noise.envelope_sigma);
    r.get("envelope_tau_s", s.noise.envelope_tau_s);
    r.get("session_jitter", s.noise.session_jitter);
    r.get("beta_session_jitter", s.noise.beta_session_jitter);
    r.get("subject_spread", s.noise.subject_spread);
    r.get("veog_noise_uv", s.noise.veog_noise_uv);
    r.get("ecg_noise_uv", s.noise.ecg_noise_uv);
    r.finish();
  }
  if (const auto* a = top.child("artifacts")) {
    detail::Reader r(*a, "cohort.artifacts");
    r.get("blinks", s.artifacts.blinks);
    r.get("cardiac", s.artifacts.cardiac);
    r.get("motion", s.artifacts.motion);
    r.get("blink_rate_per_min", s.artifacts.blink_rate_per_min);
    r.get("blink_amplitude_uv", s.artifacts.blink_amplitude_uv);
    r.get("blink_duration_s", s.artifacts.blink_duration_s);
    r.get("heart_rate_bpm", s.artifacts.heart_rate_bpm);
    r.get("motion_rate_per_min", s.artifacts.motion_rate_per_min);
    r.get("motion_amplitude_uv", s.artifacts.motion_amplitude_uv);
    r.get("motion_duration_s", s.artifacts.motion_duration_s);
    r.finish();
  }
  top.get("seed", s.seed);
  top.finish();
  try {
    s.validate();
  } catch (const Error& e) {
    fail(ErrorKind::config, e.what());
  }
  return s;
}

inline json truth_to_json(const GroundTruth& t) {
  json mult = json::array();
  for (const auto& m : t.multipliers) mult.push_back({{"channel", m.channel}, {"band", m.band}, {"ratio", m.ratio}});
  return {
      {"blink_indices", t.blink_indices},
      {"qrs_indices", t.qrs_indices},
      {"motion_indices", t.motion_indices},
      {"multipliers", mult},
      {"alert_span_s", {t.alert_start_s, t.alert_end_s}},
      {"fatigued_span_s", {t.fatigued_start_s, t.fatigued_end_s}},
  };
}

// ---------------------------------------------------------------------------
// Result documents (6 significant digits)

inline json confusion_to_json(const ConfusionMatrix& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
}

inline json stat_table_to_json(const StatTable& t) {
  json rows = json::array();
  for (const auto& r : t.rows) {
    rows.push_back({
        {"band", r.band},
        {"channel", r.channel},
        {"d", round6(r.d)},
        {"ci95", {round6(r.ci_lo), round6(r.ci_hi)}},
        {"t", round6(r.t)},
        {"p", round6(r.p_raw)},
        {"p_adj", round6(r.p_adj)},
        {"n", r.n},
        {"stars", r.stars()},
    });
  }
  return {{"rows", rows}, {"correction", "benjamini-hochberg"}};
}

inline StatTable stat_table_from_json(const json& j) {
  StatTable t;
  try {
    for (const auto& r : j.at("rows")) {
      StatRow row;
      row.band = r.at("band").get<std::string>();
      row.channel = r.at("channel").get<std::string>();
      row.d = r.at("d").get<double>();
      row.ci_lo = r.at("ci95").at(0).get<double>();
      row.ci_hi = r.at("ci95").at(1).get<double>();
      row.t = r.at("t").get<double>();
      row.p_raw = r.at("p").get<double>();
      row.p_adj = r.at("p_adj").get<double>();
      row.n = r.at("n").get<std::size_t>();
      t.rows.push_back(row);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("malformed stat table: ") + e.what());
  }
  return t;
}

inline std::string stat_table_csv(const StatTable& t) {
  std::string out = "band,channel,d,ci_lo,ci_hi,t,p,p_adj,n,stars\n";
  for (const auto& r : t.rows) {
    out += r.band + "," + r.channel + "," + format6(r.d) + "," + format6(r.ci_lo) + "," + format6(r.ci_hi) + "," +
           format6(r.t) + "," + format6(r.p_raw) + "," + format6(r.p_adj) + "," + std::to_string(r.n) + "," + r.stars() + "\n";
  }
  return out;
}

inline json cv_report_to_json(const CvReport& r) {
  json folds = json::array();
  for (const auto& f : r.folds) {
    folds.push_back({{"confusion", confusion_to_json(f.confusion)},
                     {"accuracy", round6(f.accuracy)},
                     {"mcc", round6(f.mcc)},
                     {"n_train", f.n_train},
                     {"n_test", f.n_test}});
  }
  json imp = json::array();
  for (const auto& [name, v] : r.feature_importance) imp.push_back({{"feature", name}, {"importance", round6(v)}});
  return {
      {"accuracy", round6(r.accuracy)},
      {"mcc", round6(r.mcc)},
      {"ppv", round6(r.ppv)},
      {"fdr", round6(r.fdr_rate)},
      {"confusion", confusion_to_json(r.pooled)},
      {"folds", folds},
      {"feature_importance", imp},
      {"hyperparameters",
       {{"max_splits", r.params.max_splits}, {"n_learners", r.params.n_learners}, {"learning_rate", r.params.learning_rate}}},
      {"cv",
       {{"folds", r.options.folds},
        {"strategy", std::string(to_string(r.options.strategy))},
        {"downsample_majority", r.options.downsample_majority},
        {"seed", r.options.seed}}},
  };
}

inline constexpr const char* kModelFormat = "earmark-logitboost";
inline constexpr int kModelVersion = 1;

namespace detail {

inline json node_to_json(const std::vector<TreeNode>& nodes, int i) {
  const auto& n = nodes[static_cast<std::size_t>(i)];
  if (n.feature < 0) return {{"leaf", n.value}};
  return {{"feature", n.feature},
          {"threshold", n.threshold},
          {"gain", n.gain},
          {"left", node_to_json(nodes, n.left)},
          {"right", node_to_json(nodes, n.right)}};
}

inline int node_from_json(const json& j, std::vector<TreeNode>& nodes, std::size_t n_features, int depth) {
  if (depth > 64) fail(ErrorKind::parse, "model tree too deep");
  const int idx = static_cast<int>(nodes.size());
  nodes.emplace_back();
  if (j.contains("leaf")) {
    nodes[static_cast<std::size_t>(idx)].value = j.at("leaf").get<double>();
    return idx;
  }
  const int f = j.at("feature").get<int>();
  if (f < 0 || static_cast<std::size_t>(f) >= n_features) fail(ErrorKind::parse, "split references an unknown feature");
  const double thr = j.at("threshold").get<double>();
  const double gain = j.value("gain", 0.0);
  const int left = node_from_json(j.at("left"), nodes, n_features, depth + 1);
  const int right = node_from_json(j.at("right"), nodes, n_features, depth + 1);
  auto& n = nodes[static_cast<std::size_t>(idx)];
  n.feature = f;
  n.threshold = thr;
  n.gain = gain;
  n.left = left;
  n.right = right;
  return idx;
}

}  // namespace detail

/// Full-precision model document; reading it back predicts identically.
inline json model_to_json(const BoostModel& m) {
  json trees = json::array();
  for (const auto& t : m.trees) trees.push_back(detail::node_to_json(t.nodes(), 0));
  return {
      {"format", kModelFormat},
      {"version", kModelVersion},
      {"feature_set", kFeatureSetVersion},
      {"feature_names", m.feature_names},
      {"f0", m.f0},
      {"hyperparameters",
       {{"max_splits", m.params.max_splits}, {"n_learners", m.params.n_learners}, {"learning_rate", m.params.learning_rate}}},
      {"trees", trees},
  };
}

inline BoostModel model_from_json(const json& j) {
  BoostModel m;
  try {
    if (j.at("format").get<std::string>() != kModelFormat) fail(ErrorKind::parse, "not an earmark model document");
    if (j.at("version").get<int>() != kModelVersion) fail(ErrorKind::parse, "unsupported model version");
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.f0 = j.at("f0").get<double>();
    const auto& hp = j.at("hyperparameters");
    m.params = {hp.at("max_splits").get<int>(), hp.at("n_learners").get<int>(), hp.at("learning_rate").get<double>()};
    for (const auto& t : j.at("trees")) {
      std::vector<TreeNode> nodes;
      detail::node_from_json(t, nodes, m.feature_names.size(), 0);
      m.trees.emplace_back(std::move(nodes));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("malformed model: ") + e.what());
  }
  if (m.trees.size() > static_cast<std::size_t>(m.params.n_learners)) fail(ErrorKind::parse, "model has more trees than learners");
  return m;
}

inline json rejection_to_json(const RejectionReport& r) {
  return {{"threshold_uv", r.threshold_uv},
          {"n_epochs", r.n_epochs},
          {"n_rejected", r.n_rejected},
          {"rejection_rate", round6(r.rejection_rate())},
          {"rejected_indices", r.rejected_indices}};
}

// ---------------------------------------------------------------------------
// Stage CSVs

/// One row per labeled epoch: every feature column, then the label (0 alert, 1 fatigued).
inline std::string features_csv(const SubjectFeatures& sf, const std::vector<std::string>& channels) {
  const auto m = build_feature_matrix({sf}, channels);
  std::string out;
  for (const auto& n : m.feature_names) out += n + ",";
  out += "label\n";
  for (std::size_t r = 0; r < m.n_rows; ++r) {
    for (double v : m.row(r)) out += format_double(v) + ",";
    out += std::to_string(m.labels[r]) + "\n";
  }
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline CsvTable parse_csv(std::string_view text, const std::string& name) {
  CsvTable t;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    for (auto f : split(line, ',')) fields.emplace_back(f);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      fail(ErrorKind::parse, name + " line " + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) +
                                 " columns, found " + std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) fail(ErrorKind::parse, name + ": empty CSV");
  return t;
}

inline double csv_number(const std::string& s, const std::string& name, std::size_t row) {
  double v = 0.0;
  if (!parse_double(s, v) || !std::isfinite(v)) {
    fail(ErrorKind::parse, name + " row " + std::to_string(row + 1) + ": bad number '" + s + "'");
  }
  return v;
}

/// Appends the rows of one features CSV to `m` under `group`. The first file
/// fixes the column set; later files must match it.
inline void append_features_csv(FeatureMatrix& m, std::string_view text, const std::string& name, int group) {
  const auto t = parse_csv(text, name);
  if (t.header.back() != "label") fail(ErrorKind::parse, name + ": last column must be 'label'");
  const std::vector<std::string> names(t.header.begin(), t.header.end() - 1);
  if (m.feature_names.empty()) {
    m.feature_names = names;
    m.n_features = names.size();
  } else if (m.feature_names != names) {
    fail(ErrorKind::shape, name + ": feature columns differ from the first file");
  }
  std::vector<double> row(names.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (std::size_t c = 0; c < names.size(); ++c) row[c] = csv_number(t.rows[r][c], name, r);
    const auto& l = t.rows[r].back();
    if (l != "0" && l != "1") fail(ErrorKind::parse, name + " row " + std::to_string(r + 1) + ": label must be 0 or 1");
    m.append_row(row, l == "1" ? kFatigued : kAlert, group);
  }
}

inline std::string bandpower_csv(const std::vector<SubjectBandPower>& rows) {
  std::string out = "subject,channel,band,alert,fatigued\n";
  for (const auto& r : rows) {
    out += r.subject + "," + r.channel + "," + r.band + "," + format_double(r.alert) + "," + format_double(r.fatigued) + "\n";
  }
  return out;
}

inline std::vector<SubjectBandPower> parse_bandpower_csv(std::string_view text, const std::string& name) {
  const auto t = parse_csv(text, name);
  const std::vector<std::string> expected{"subject", "channel", "band", "alert", "fatigued"};
  if (t.header != expected) fail(ErrorKind::parse, name + ": expected header subject,channel,band,alert,fatigued");
  std::vector<SubjectBandPower> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& f = t.rows[r];
    out.push_back({f[0], f[1], f[2], csv_number(f[3], name, r), csv_number(f[4], name, r)});
  }
  return out;
}

/// Columns: freq_hz, then <channel>_alert and <channel>_fatigued per channel.
inline std::string spectra_csv(const std::vector<double>& freqs, const std::map<std::string, std::vector<double>>& alert,
                               const std::map<std::string, std::vector<double>>& fatigued, bool rounded) {
  auto fmt = [&](double v) { return rounded ? format6(v) : format_double(v); };
  std::string out = "freq_hz";
  for (const auto& [c, v] : alert) out += "," + c + "_alert," + c + "_fatigued";
  out += "\n";
  for (std::size_t k = 0; k < freqs.size(); ++k) {
    out += fmt(freqs[k]);
    for (const auto& [c, v] : alert) out += "," + fmt(v.at(k)) + "," + fmt(fatigued.at(c).at(k));
    out += "\n";
  }
  return out;
}

struct SpectraTable {
  std::vector<double> freqs_hz;
  std::map<std::string, std::vector<double>> alert;
  std::map<std::string, std::vector<double>> fatigued;
};

inline SpectraTable parse_spectra_csv(std::string_view text, const std::string& name) {
  const auto t = parse_csv(text, name);
  if (t.header.front() != "freq_hz" || t.header.size() % 2 != 1) fail(ErrorKind::parse, name + ": malformed spectra header");
  SpectraTable s;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    s.freqs_hz.push_back(csv_number(t.rows[r][0], name, r));
    for (std::size_t c = 1; c < t.header.size(); ++c) {
      const auto& h = t.header[c];
      const auto us = h.rfind('_');
      if (us == std::string::npos) fail(ErrorKind::parse, name + ": bad spectra column '" + h + "'");
      const auto ch = h.substr(0, us), phase = h.substr(us + 1);
      if (phase != "alert" && phase != "fatigued") fail(ErrorKind::parse, name + ": bad spectra column '" + h + "'");
      auto& dst = phase == "alert" ? s.alert : s.fatigued;
      dst[ch].push_back(csv_number(t.rows[r][c], name, r));
    }
  }
  return s;
}

inline json rejection_summary(const std::string& subject, const RejectionReport& r) {
  json j = rejection_to_json(r);
  j.erase("rejected_indices");
  j["subject"] = subject;
  return j;
}

/// Single report document: resolved config, stats, CV reports, rejection
/// summary. Shared by the one-shot pipeline and the stage-file report.
inline json compose_report(const json& config, const json& stat_table, const json& crossval, const json& rejection,
                           const std::vector<std::string>& subjects) {
  return {
      {"config", config},
      {"feature_set", kFeatureSetVersion},
      {"subjects", subjects},
      {"stat_table", stat_table},
      {"crossval", crossval},
      {"rejection", rejection},
  };
}

inline json report_to_json(const PipelineConfig& cfg, const PipelineResult& res) {
  json cv = json::object();
  for (const auto& [name, r] : res.cv) cv[name] = cv_report_to_json(r);
  json rej = json::array();
  for (std::size_t i = 0; i < res.rejection.size(); ++i) rej.push_back(rejection_summary(res.subjects.at(i), res.rejection[i]));
  return compose_report(config_to_json(cfg), stat_table_to_json(res.stats), cv, rej, res.subjects);
}

}  // namespace earmark::io
