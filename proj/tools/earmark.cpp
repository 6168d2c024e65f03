#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "earmark/io.hpp"
#include "earmark/pipeline.hpp"
#include "earmark/studysim.hpp"

namespace fs = std::filesystem;
using earmark::io::json;

namespace {

struct Options {
  std::string config;
  std::vector<std::string> inputs;
  std::string output_dir = ".";
  std::optional<std::uint64_t> seed;
  std::string format = "text";
};

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("earmark");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("EARMARK_LOG");
  spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::info);
}

earmark::PipelineConfig load_config(const Options& o) {
  auto cfg = o.config.empty() ? earmark::PipelineConfig{} : earmark::io::read_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  return cfg;
}

// "sub-01.clean.rec" -> "sub-01"
std::string stem_of(const fs::path& p) {
  auto s = p.filename().string();
  const auto dot = s.find('.');
  return dot == std::string::npos ? s : s.substr(0, dot);
}

std::string subject_of(const earmark::io::RecordingFile& f, const fs::path& p) {
  return f.subject.empty() ? stem_of(p) : f.subject;
}

void require_inputs(const Options& o) {
  if (o.inputs.empty()) earmark::fail(earmark::ErrorKind::config, "no --input given");
}

std::string format_ext(earmark::io::RecordingFormat f) {
  return f == earmark::io::RecordingFormat::text ? ".rec" : ".eark";
}

void write_json(const fs::path& path, const json& j) {
  earmark::io::write_file_atomic(path, earmark::io::dump(j));
  spdlog::info("wrote {}", path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  earmark::io::write_file_atomic(path, text);
  spdlog::info("wrote {}", path.string());
}

int cmd_synth(const Options& o) {
  auto spec = earmark::CohortSpec{};
  if (!o.config.empty()) {
    json j;
    try {
      j = json::parse(earmark::io::read_file(o.config));
    } catch (const json::parse_error& e) {
      earmark::fail(earmark::ErrorKind::config, o.config + ": " + e.what());
    }
    spec = earmark::io::cohort_from_json(j);
  }
  if (o.seed) spec.seed = *o.seed;
  const auto format = earmark::io::parse_format(o.format);
  const fs::path out(o.output_dir);
  write_json(out / "cohort.json", earmark::io::cohort_to_json(spec));
  for (int s = 0; s < spec.n_subjects; ++s) {
    char name[32];
    std::snprintf(name, sizeof name, "sub-%02d", s + 1);
    spdlog::debug("generating {}", name);
    const auto trial = earmark::gen_trial(spec, s);
    earmark::io::write_recording(out / (std::string(name) + format_ext(format)), trial.recording, format, name);
    write_json(out / (std::string(name) + ".truth.json"), earmark::io::truth_to_json(trial.truth));
    const auto steer = earmark::gen_steering(spec, s);
    std::string csv = "window,steering_std\n";
    const auto w = earmark::steering_std_windows(steer);
    for (std::size_t i = 0; i < w.size(); ++i) csv += std::to_string(i + 1) + "," + earmark::io::format6(w[i]) + "\n";
    write_text(out / (std::string(name) + ".steering.csv"), csv);
  }
  return 0;
}

int cmd_preprocess(const Options& o) {
  require_inputs(o);
  const auto cfg = load_config(o);
  const auto format = earmark::io::parse_format(o.format);
  const fs::path out(o.output_dir);
  for (const auto& in : o.inputs) {
    const auto file = earmark::io::read_recording(in);
    const auto subject = subject_of(file, in);
    const auto pre = earmark::preprocess(cfg, file.recording);
    spdlog::info("{}: {} blinks, {} beats, rejection {:.3f}", subject, pre.blinks.sample_indices.size(),
                 pre.qrs.sample_indices.size(), pre.rejection.rejection_rate());
    earmark::io::write_recording(out / (subject + ".clean" + format_ext(format)), pre.cleaned, format, subject);
    json rej = earmark::io::rejection_to_json(pre.rejection);
    rej["subject"] = subject;
    write_json(out / (subject + ".rejection.json"), rej);
    write_json(out / (subject + ".events.json"),
               {{"blink_indices", pre.blinks.sample_indices}, {"qrs_indices", pre.qrs.sample_indices}});
  }
  return 0;
}

int cmd_features(const Options& o) {
  require_inputs(o);
  const auto cfg = load_config(o);
  const fs::path out(o.output_dir);
  for (const auto& in : o.inputs) {
    auto file = earmark::io::read_recording(in);
    const auto subject = subject_of(file, in);
    const auto pre = earmark::from_cleaned(cfg, std::move(file.recording));
    const auto sf = earmark::extract_subject(cfg, pre, subject);
    for (const auto& [set, chans] : cfg.cv_sets) {
      write_text(out / (subject + ".features_" + set + ".csv"), earmark::io::features_csv(sf, chans));
    }
    write_text(out / (subject + ".bandpower.csv"), earmark::io::bandpower_csv(sf.band_powers));
    write_text(out / (subject + ".spectra.csv"),
               earmark::io::spectra_csv(sf.freqs_hz, sf.alert_spectrum, sf.fatigued_spectrum, false));
  }
  return 0;
}

int cmd_stats(const Options& o) {
  require_inputs(o);
  const auto cfg = load_config(o);
  std::vector<earmark::SubjectBandPower> powers;
  for (const auto& in : o.inputs) {
    const auto rows = earmark::io::parse_bandpower_csv(earmark::io::read_file(in), in);
    powers.insert(powers.end(), rows.begin(), rows.end());
  }
  std::vector<std::string> bands;
  for (const auto& b : earmark::stat_bands()) bands.push_back(b.name);
  const auto table = earmark::build_stat_table(powers, bands, cfg.stat_channels);
  const fs::path out(o.output_dir);
  write_json(out / "stat_table.json", earmark::io::stat_table_to_json(table));
  write_text(out / "stat_table.csv", earmark::io::stat_table_csv(table));
  return 0;
}

int cmd_crossval(const Options& o) {
  require_inputs(o);
  const auto cfg = load_config(o);
  // Inputs are grouped by the set name in "<subject>.features_<set>.csv";
  // each file is one group.
  std::map<std::string, std::vector<std::string>> by_set;
  for (const auto& in : o.inputs) {
    const auto name = fs::path(in).filename().string();
    const auto pos = name.find(".features_");
    if (pos == std::string::npos || name.size() < 4 || name.substr(name.size() - 4) != ".csv") {
      earmark::fail(earmark::ErrorKind::config, "expected <subject>.features_<set>.csv, got " + name);
    }
    by_set[name.substr(pos + 10, name.size() - pos - 14)].push_back(in);
  }
  earmark::CvOptions opt = cfg.cv;
  opt.seed = cfg.seed;
  const fs::path out(o.output_dir);
  for (const auto& [set, files] : by_set) {
    earmark::FeatureMatrix m;
    for (std::size_t g = 0; g < files.size(); ++g) {
      earmark::io::append_features_csv(m, earmark::io::read_file(files[g]), files[g], static_cast<int>(g));
    }
    const auto report = earmark::cross_validate(m, cfg.boost, opt);
    spdlog::info("{}: accuracy {:.3f}, MCC {:.3f}", set, report.accuracy, report.mcc);
    write_json(out / ("cv_" + set + ".json"), earmark::io::cv_report_to_json(report));
    write_json(out / ("model_" + set + ".json"), earmark::io::model_to_json(earmark::train_logitboost(m, cfg.boost, cfg.seed)));
  }
  return 0;
}

json read_json(const fs::path& p) {
  try {
    return json::parse(earmark::io::read_file(p));
  } catch (const json::parse_error& e) {
    earmark::fail(earmark::ErrorKind::parse, p.string() + ": " + e.what());
  }
}

// Mean over subjects of per-subject spectra files.
void write_mean_spectra(const fs::path& out, const std::vector<fs::path>& files) {
  if (files.empty()) return;
  std::vector<earmark::SubjectFeatures> subjects;
  for (const auto& f : files) {
    const auto t = earmark::io::parse_spectra_csv(earmark::io::read_file(f), f.string());
    earmark::SubjectFeatures sf;
    sf.freqs_hz = t.freqs_hz;
    sf.alert_spectrum = t.alert;
    sf.fatigued_spectrum = t.fatigued;
    subjects.push_back(std::move(sf));
  }
  const auto ps = earmark::cohort_spectra(subjects);
  write_text(out / "spectra_mean.csv", earmark::io::spectra_csv(ps.freqs_hz, ps.alert, ps.fatigued, true));
}

int cmd_report(const Options& o) {
  require_inputs(o);
  const auto cfg = load_config(o);
  json stat_table;
  json crossval = json::object();
  json rejection = json::array();
  std::vector<std::string> subjects;
  std::vector<fs::path> spectra;
  std::vector<fs::path> files;
  for (const auto& in : o.inputs) {
    if (fs::is_directory(in)) {
      for (const auto& e : fs::directory_iterator(in)) files.push_back(e.path());
    } else {
      files.push_back(in);
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const auto name = f.filename().string();
    auto ends_with = [&](const std::string& suf) {
      return name.size() >= suf.size() && name.compare(name.size() - suf.size(), suf.size(), suf) == 0;
    };
    if (name == "stat_table.json") {
      stat_table = earmark::io::stat_table_to_json(earmark::io::stat_table_from_json(read_json(f)));
    } else if (name.rfind("cv_", 0) == 0 && ends_with(".json")) {
      crossval[name.substr(3, name.size() - 8)] = read_json(f);
    } else if (ends_with(".rejection.json")) {
      auto j = read_json(f);
      j.erase("rejected_indices");
      subjects.push_back(j.value("subject", stem_of(f)));
      rejection.push_back(j);
    } else if (ends_with(".spectra.csv")) {
      spectra.push_back(f);
    }
  }
  if (stat_table.is_null()) earmark::fail(earmark::ErrorKind::config, "report needs stat_table.json among the inputs");
  const fs::path out(o.output_dir);
  write_mean_spectra(out, spectra);
  write_json(out / "report.json", earmark::io::compose_report(earmark::io::config_to_json(cfg), stat_table, crossval, rejection, subjects));
  return 0;
}

int cmd_pipeline(const Options& o) {
  require_inputs(o);
  const auto cfg = load_config(o);
  std::vector<earmark::SubjectFeatures> subjects;
  for (const auto& in : o.inputs) {
    const auto file = earmark::io::read_recording(in);
    const auto subject = subject_of(file, in);
    spdlog::info("processing {}", subject);
    subjects.push_back(earmark::process_subject(cfg, file.recording, subject));
  }
  const auto res = earmark::aggregate(cfg, subjects);
  const fs::path out(o.output_dir);
  write_json(out / "stat_table.json", earmark::io::stat_table_to_json(res.stats));
  write_text(out / "stat_table.csv", earmark::io::stat_table_csv(res.stats));
  for (const auto& [set, report] : res.cv) {
    spdlog::info("{}: accuracy {:.3f}, MCC {:.3f}", set, report.accuracy, report.mcc);
    write_json(out / ("cv_" + set + ".json"), earmark::io::cv_report_to_json(report));
  }
  write_text(out / "spectra_mean.csv", earmark::io::spectra_csv(res.spectra.freqs_hz, res.spectra.alert, res.spectra.fatigued, true));
  write_json(out / "report.json", earmark::io::report_to_json(cfg, res));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"earmark: ear-EEG fatigue analysis"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub, bool inputs) {
    sub->add_option("--config", o.config, "JSON configuration file");
    if (inputs) sub->add_option("--input", o.inputs, "input file (repeatable)")->take_all();
    sub->add_option("--output-dir", o.output_dir, "output directory");
    sub->add_option("--seed", o.seed, "override the configured seed");
    sub->add_option("--format", o.format, "recording format")->check(CLI::IsMember({"text", "binary"}));
  };
  std::map<std::string, int (*)(const Options&)> handlers{
      {"synth", cmd_synth},       {"preprocess", cmd_preprocess}, {"features", cmd_features}, {"stats", cmd_stats},
      {"crossval", cmd_crossval}, {"report", cmd_report},         {"pipeline", cmd_pipeline},
  };
  const std::map<std::string, std::string> help{
      {"synth", "generate a synthetic cohort (config = cohort JSON)"},
      {"preprocess", "filter, remove artifacts, reject epochs"},
      {"features", "epoch features, band powers and spectra from cleaned recordings"},
      {"stats", "paired statistics table from band-power files"},
      {"crossval", "cross-validate and train models from feature files"},
      {"report", "merge stage outputs into report.json"},
      {"pipeline", "all stages in one run"},
  };
  for (const auto& [name, fn] : handlers) add_common(app.add_subcommand(name, help.at(name)), name != "synth");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    for (const auto* sub : app.get_subcommands()) return handlers.at(sub->get_name())(o);
  } catch (const earmark::Error& e) {
    spdlog::error("{}", e.what());
    return earmark::exit_code(e.kind());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 3;
  }
  return 0;
}
