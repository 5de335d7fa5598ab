#include "cmckit/cli.hpp"

#include "cmckit/coherence.hpp"
#include "cmckit/feature_table.hpp"
#include "cmckit/preprocess.hpp"
#include "cmckit/signal_io.hpp"
#include "cmckit/spectral.hpp"
#include "cmckit/state_engine.hpp"
#include "cmckit/stats.hpp"
#include "cmckit/synth.hpp"
#include "cmckit/text.hpp"
#include "cmckit/topomap.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

namespace cmckit {

namespace {

using nlohmann::json;

void assign_if(const json& j, const char* key, double& target) {
  if (j.contains(key)) target = j.at(key).get<double>();
}
void assign_if(const json& j, const char* key, int& target) {
  if (j.contains(key)) target = j.at(key).get<int>();
}
void assign_if(const json& j, const char* key, bool& target) {
  if (j.contains(key)) target = j.at(key).get<bool>();
}
void assign_if(const json& j, const char* key, std::uint64_t& target) {
  if (j.contains(key)) target = j.at(key).get<std::uint64_t>();
}

void validate_config(const RunConfig& cfg) {
  if (!(cfg.welch_segment_fraction > 0.0 && cfg.welch_segment_fraction <= 1.0)) {
    throw ArgumentError("welch_segment_fraction must lie in (0, 1]");
  }
  if (!(cfg.welch_overlap >= 0.0 && cfg.welch_overlap < 1.0)) {
    throw ArgumentError("welch_overlap must lie in [0, 1)");
  }
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ArgumentError("alpha must lie in (0, 1)");
  if (cfg.resample_hz < 0.0) throw ArgumentError("resample_hz must be nonnegative");
  if (cfg.bandpass_lo_hz < 0.0 || cfg.bandpass_hi_hz <= cfg.bandpass_lo_hz) {
    throw ArgumentError("bandpass needs 0 <= lo < hi");
  }
  if (cfg.notch_hz < 0.0) throw ArgumentError("notch_hz must be nonnegative");
  if (!(cfg.notch_q > 0.0)) throw ArgumentError("notch_q must be positive");
  if (!(cfg.artifact_window_s > 0.0)) throw ArgumentError("artifact_window_s must be positive");
  if (!(cfg.artifact_z > 0.0)) throw ArgumentError("artifact_z must be positive");
  if (!(cfg.window_s > 0.0 && cfg.step_s > 0.0 && cfg.step_s <= cfg.window_s)) {
    throw ArgumentError("windows need 0 < step_s <= window_s");
  }
  if (!(cfg.segment_fraction > 0.0 && cfg.segment_fraction <= 1.0)) {
    throw ArgumentError("segment_fraction must lie in (0, 1]");
  }
  if (!(cfg.overlap_fraction >= 0.0 && cfg.overlap_fraction < 1.0)) {
    throw ArgumentError("overlap_fraction must lie in [0, 1)");
  }
  if (cfg.tree_depth < 1) throw ArgumentError("tree_depth must be at least 1");
  if (cfg.hysteresis_k < 1) throw ArgumentError("hysteresis_k must be at least 1");
  if (!(cfg.calibration_s > 0.0)) throw ArgumentError("calibration_s must be positive");
  if (cfg.topomap_resolution < 16) throw ArgumentError("topomap_resolution must be >= 16");
}

json load_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("invalid JSON in '" + path + "': " + std::string(e.what()));
  }
}

constexpr const char* kKnownConfigKeys[] = {
    "welch_segment_fraction", "welch_overlap", "alpha", "threshold_no_sqrt",
    "resample_hz", "bandpass_lo_hz", "bandpass_hi_hz", "notch_hz", "notch_q",
    "artifact_window_s", "artifact_z", "window_s", "step_s", "segment_fraction",
    "overlap_fraction", "tree_depth", "seed", "hysteresis_k", "calibration_s",
    "topomap_resolution", "pipeline"};

}  // namespace

RunConfig load_run_config(const std::string& path, RunConfig base) {
  const json j = load_json_file(path);
  if (!j.is_object()) throw SchemaError("config root must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool known = false;
    for (const char* k : kKnownConfigKeys) known = known || key == k;
    if (!known) throw SchemaError("unknown config key '" + key + "'");
  }
  try {
    assign_if(j, "welch_segment_fraction", base.welch_segment_fraction);
    assign_if(j, "welch_overlap", base.welch_overlap);
    assign_if(j, "alpha", base.alpha);
    assign_if(j, "threshold_no_sqrt", base.threshold_no_sqrt);
    assign_if(j, "resample_hz", base.resample_hz);
    assign_if(j, "bandpass_lo_hz", base.bandpass_lo_hz);
    assign_if(j, "bandpass_hi_hz", base.bandpass_hi_hz);
    assign_if(j, "notch_hz", base.notch_hz);
    assign_if(j, "notch_q", base.notch_q);
    assign_if(j, "artifact_window_s", base.artifact_window_s);
    assign_if(j, "artifact_z", base.artifact_z);
    assign_if(j, "window_s", base.window_s);
    assign_if(j, "step_s", base.step_s);
    assign_if(j, "segment_fraction", base.segment_fraction);
    assign_if(j, "overlap_fraction", base.overlap_fraction);
    assign_if(j, "tree_depth", base.tree_depth);
    assign_if(j, "seed", base.seed);
    assign_if(j, "hysteresis_k", base.hysteresis_k);
    assign_if(j, "calibration_s", base.calibration_s);
    assign_if(j, "topomap_resolution", base.topomap_resolution);
  } catch (const json::exception& e) {
    throw SchemaError("config '" + path + "': " + e.what());
  }
  validate_config(base);
  return base;
}

namespace {

WelchConfig welch_for(const RunConfig& cfg, Eigen::Index n, double fs) {
  WelchConfig w;
  w.segment_len_samples =
      static_cast<Eigen::Index>(cfg.welch_segment_fraction * static_cast<double>(n));
  w.overlap_fraction = cfg.welch_overlap;
  w.sample_rate_hz = fs;
  return w;
}

ThresholdForm threshold_form(const RunConfig& cfg) {
  return cfg.threshold_no_sqrt ? ThresholdForm::NoSqrt : ThresholdForm::Sqrt;
}

ExtractConfig extract_config(const RunConfig& cfg) {
  ExtractConfig e;
  e.cmc_alpha = cfg.alpha;
  e.threshold_form = threshold_form(cfg);
  e.segment_fraction = cfg.segment_fraction;
  e.overlap_fraction = cfg.overlap_fraction;
  return e;
}

// Rebuild the feature schema from a table whose columns were produced by
// FeatureSchema::keys().
FeatureSchema schema_from_table(const FeatureTable& table) {
  FeatureSchema schema;
  for (const auto& key : table.columns) {
    if (key.band == "alpha" && key.metric == "band_power") {
      schema.eeg_channels.push_back(key.channel);
    }
  }
  if (schema.eeg_channels.empty() ||
      schema.keys() != table.columns) {
    throw SchemaError("feature columns do not follow the channel-major schema");
  }
  return schema;
}

std::vector<FeatureVector> vectors_from_table(const FeatureTable& table, double step_s) {
  std::vector<FeatureVector> out;
  out.reserve(static_cast<size_t>(table.n_rows()));
  for (Eigen::Index r = 0; r < table.n_rows(); ++r) {
    FeatureVector fv;
    fv.window_start_s = step_s * static_cast<double>(r);
    fv.values = table.values.row(r).transpose();
    out.push_back(std::move(fv));
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw IoError("write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

struct CommonArgs {
  std::string metadata;
  std::string input;
  std::string output;
};

int cmd_synth(const RunConfig& cfg, const CommonArgs& io, const std::string& band,
              double duration_s, double rate_hz, double snr1, double snr2) {
  SharedSourceSpec spec;
  spec.duration_s = duration_s;
  spec.sample_rate_hz = rate_hz;
  spec.band = parse_band(band);
  spec.snr1 = snr1;
  spec.snr2 = snr2;
  spec.seed = cfg.seed;
  const Recording rec = shared_source_recording(spec);
  save_recording(rec, io.output + ".json", io.output + ".csv");
  return 0;
}

int cmd_preprocess(const RunConfig& cfg, const CommonArgs& io, const std::string& marker) {
  Recording rec = load_recording(io.metadata, io.input);
  if (!marker.empty()) rec = slice_by_marker(rec, marker);
  if (cfg.resample_hz > 0.0 && cfg.resample_hz != rec.sample_rate_hz) {
    rec = resample(rec, cfg.resample_hz);
  }
  rec = bandpass(rec, cfg.bandpass_lo_hz, cfg.bandpass_hi_hz);
  if (cfg.notch_hz > 0.0) rec = notch(rec, cfg.notch_hz, cfg.notch_q);
  const ArtifactMask mask = reject_artifacts(rec, cfg.artifact_window_s, cfg.artifact_z);

  save_recording(rec, io.output + ".json", io.output + ".csv");
  std::string mask_csv = "window,start_sample,end_sample,keep,reason\n";
  for (size_t i = 0; i < mask.n_windows(); ++i) {
    const auto start = static_cast<Eigen::Index>(i) * mask.window_samples;
    mask_csv += std::to_string(i) + ',' + std::to_string(start) + ',' +
                std::to_string(start + mask.window_samples) + ',' +
                (mask.keep[i] ? "1" : "0") + ',' + mask.reason[i] + '\n';
  }
  write_text_file(io.output + ".mask.csv", mask_csv);
  return 0;
}

int cmd_psd(const RunConfig& cfg, const CommonArgs& io) {
  const Recording rec = load_recording(io.metadata, io.input);
  const WelchConfig welch = welch_for(cfg, rec.n_samples(), rec.sample_rate_hz);

  std::vector<SpectralEstimate> estimates;
  estimates.reserve(static_cast<size_t>(rec.n_channels()));
  for (Eigen::Index c = 0; c < rec.n_channels(); ++c) {
    estimates.push_back(welch_psd(rec.channel(c), welch));
  }

  std::string csv = "freq_hz";
  for (const auto& ch : rec.channels) csv += ',' + ch.name;
  csv += '\n';
  for (Eigen::Index k = 0; k < estimates.front().freqs_hz.size(); ++k) {
    csv += format_double(estimates.front().freqs_hz[k]);
    for (const auto& est : estimates) csv += ',' + format_double(est.values[k]);
    csv += '\n';
  }
  write_text_file(io.output, csv);
  return 0;
}

std::string cmc_feature_csv(const CoherenceSpectrum& coh, const CmcFeature& feat,
                            double mean_coh) {
  std::string csv =
      "eeg,emg,band,lo_hz,hi_hz,n_segments,threshold,n_significant_bins,"
      "significant_area,mean_coherence\n";
  csv += coh.eeg_channel + ',' + coh.emg_channel + ',' + feat.band.name + ',' +
         format_double(feat.band.lo_hz) + ',' + format_double(feat.band.hi_hz) + ',' +
         std::to_string(feat.n_segments) + ',' + format_double(feat.threshold) + ',' +
         std::to_string(feat.n_significant_bins) + ',' +
         format_double(feat.significant_area) + ',' + format_double(mean_coh) + '\n';
  return csv;
}

int cmd_cmc(const RunConfig& cfg, const CommonArgs& io, const std::string& eeg,
            const std::string& emg, const std::string& band) {
  const Recording rec = load_recording(io.metadata, io.input);
  const Eigen::Index ce = rec.channel_index(eeg);
  const Eigen::Index cm = rec.channel_index(emg);
  if (ce < 0) throw NotFoundError("no channel named '" + eeg + "'");
  if (cm < 0) throw NotFoundError("no channel named '" + emg + "'");

  const BandSpec band_spec = parse_band(band);
  const WelchConfig welch = welch_for(cfg, rec.n_samples(), rec.sample_rate_hz);
  const CoherenceSpectrum coh = coherence(rec.channel(ce), rec.channel(cm), welch, eeg, emg);
  const CmcFeature feat = significant_area(coh, band_spec, cfg.alpha, threshold_form(cfg));
  const double mean_coh = mean_band_coherence(coh, band_spec);

  const std::string csv = cmc_feature_csv(coh, feat, mean_coh);
  if (io.output.empty()) {
    std::cout << csv;
  } else {
    write_text_file(io.output, csv);
  }
  return 0;
}

int cmd_stats(const CommonArgs& io, const std::string& expert_path,
              const std::string& novice_path, bool one_sided) {
  const FeatureTable expert = read_feature_table(expert_path);
  const FeatureTable novice = read_feature_table(novice_path);
  const auto rows = group_compare(expert, novice, one_sided ? Tail::Greater : Tail::TwoSided);
  write_comparison_csv(rows, io.output);
  return 0;
}

int cmd_topomap(const RunConfig& cfg, const CommonArgs& io, const std::string& band) {
  const Recording rec = load_recording(io.metadata, io.input);
  const BandSpec band_spec = parse_band(band);
  const WelchConfig welch = welch_for(cfg, rec.n_samples(), rec.sample_rate_hz);

  std::vector<Eigen::Vector3d> positions;
  std::vector<double> powers;
  for (Eigen::Index c = 0; c < rec.n_channels(); ++c) {
    const auto& ch = rec.channels[static_cast<size_t>(c)];
    if (ch.kind != ChannelKind::EEG) continue;
    positions.push_back(*ch.position);
    powers.push_back(band_power(welch_psd(rec.channel(c), welch), band_spec));
  }
  if (positions.size() < 3) throw ArgumentError("topomap needs at least 3 EEG channels");

  // Min-max normalization across channels.
  const double lo = *std::min_element(powers.begin(), powers.end());
  const double hi = *std::max_element(powers.begin(), powers.end());
  Eigen::VectorXd values(static_cast<Eigen::Index>(powers.size()));
  for (size_t i = 0; i < powers.size(); ++i) {
    values[static_cast<Eigen::Index>(i)] = hi > lo ? (powers[i] - lo) / (hi - lo) : 0.5;
  }

  const SplineModel model = spline_fit(positions, values);
  const ScalpField field = evaluate_field(model, cfg.topomap_resolution);
  write_field_csv(field, io.output + ".csv");
  render_map(field, io.output + ".ppm", {0.0, 1.0});
  return 0;
}

int cmd_train(const RunConfig& cfg, const CommonArgs& io) {
  const FeatureTable table = read_feature_table(io.input);
  if (table.row_labels.empty()) throw SchemaError("training table needs a label column");
  const std::vector<FeatureVector> xs = vectors_from_table(table, cfg.step_s);
  std::vector<State> ys;
  ys.reserve(table.row_labels.size());
  for (const auto& label : table.row_labels) ys.push_back(state_from_string(label));
  const TreeModel model = train_tree(xs, ys, cfg.tree_depth, cfg.seed);
  save_tree(model, io.output);
  return 0;
}

int cmd_classify(const RunConfig& cfg, const CommonArgs& io, const std::string& model_path,
                 const std::string& calibration_path) {
  if (model_path.empty() == calibration_path.empty()) {
    throw ArgumentError("classify needs exactly one of --model or --calibration");
  }
  const FeatureTable table = read_feature_table(io.input);
  const std::vector<FeatureVector> xs = vectors_from_table(table, cfg.step_s);

  std::vector<StateLabel> labels;
  labels.reserve(xs.size());
  if (!model_path.empty()) {
    const TreeModel model = load_tree(model_path);
    for (const auto& fv : xs) labels.push_back(tree_classify(model, fv));
  } else {
    const FeatureSchema schema = schema_from_table(table);
    const FeatureTable calib = read_feature_table(calibration_path);
    if (calib.columns != table.columns) {
      throw SchemaError("calibration columns do not match the input table");
    }
    const Baseline baseline = fit_baseline(vectors_from_table(calib, cfg.step_s));
    for (const auto& fv : xs) labels.push_back(rule_classify(fv, schema, baseline));
  }

  std::string csv = "row,label,confidence\n";
  for (size_t i = 0; i < labels.size(); ++i) {
    csv += std::to_string(i) + ',' + to_string(labels[i].state) + ',' +
           format_double(labels[i].confidence) + '\n';
  }
  write_text_file(io.output, csv);
  return 0;
}

int cmd_simulate(const RunConfig& cfg, const CommonArgs& io, const std::string& features_path,
                 const std::string& calibration_path, const std::string& model_path) {
  SimConfig sim;
  sim.window_s = cfg.window_s;
  sim.step_s = cfg.step_s;
  sim.hysteresis_k = cfg.hysteresis_k;
  sim.calibration_s = cfg.calibration_s;
  sim.extract = extract_config(cfg);
  TreeModel model;
  if (!model_path.empty()) {
    model = load_tree(model_path);
    sim.tree = &model;
  }

  SimulationLog log;
  if (!features_path.empty()) {
    const FeatureTable table = read_feature_table(features_path);
    const FeatureSchema schema = schema_from_table(table);
    Baseline baseline;
    if (calibration_path.empty()) {
      if (!sim.tree) {
        throw ArgumentError("feature-stream simulation needs --calibration or --model");
      }
    } else {
      const FeatureTable calib = read_feature_table(calibration_path);
      if (calib.columns != table.columns) {
        throw SchemaError("calibration columns do not match the feature stream");
      }
      baseline = fit_baseline(vectors_from_table(calib, cfg.step_s));
    }
    log = run_simulation(vectors_from_table(table, cfg.step_s), schema, baseline, sim);
  } else {
    if (io.metadata.empty() || io.input.empty()) {
      throw ArgumentError("simulate needs --metadata/--input or --features");
    }
    const Recording rec = load_recording(io.metadata, io.input);
    log = run_simulation(rec, sim);
  }

  write_simulation_ndjson(log, io.output);
  if (log.n_deadline_overruns > 0) {
    std::cerr << "simulate: " << log.n_deadline_overruns
              << " window(s) processed slower than the step duration\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

struct PipelineEntry {
  std::string metadata;
  std::string data;
  std::string group;
  std::string marker;  // optional
};

struct PipelinePlan {
  std::string output_dir;
  std::vector<PipelineEntry> entries;
  std::vector<std::string> topomap_bands = {"alpha", "beta"};
};

PipelinePlan parse_pipeline_plan(const json& j) {
  if (!j.contains("pipeline")) throw SchemaError("config lacks a \"pipeline\" section");
  const json& p = j.at("pipeline");
  PipelinePlan plan;
  try {
    plan.output_dir = p.at("output_dir").get<std::string>();
    for (const auto& je : p.at("recordings")) {
      PipelineEntry e;
      e.metadata = je.at("metadata").get<std::string>();
      e.data = je.at("data").get<std::string>();
      e.group = je.at("group").get<std::string>();
      e.marker = je.value("marker", "");
      if (e.group != "expert" && e.group != "novice") {
        throw SchemaError("recording group must be expert or novice");
      }
      plan.entries.push_back(std::move(e));
    }
    if (p.contains("topomap_bands")) {
      plan.topomap_bands.clear();
      for (const auto& b : p.at("topomap_bands")) {
        plan.topomap_bands.push_back(b.get<std::string>());
      }
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("pipeline config: ") + e.what());
  }
  if (plan.entries.empty()) throw SchemaError("pipeline config lists no recordings");
  return plan;
}

// Windowed features over the artifact-clean parts of a preprocessed
// recording, reduced to one row (per-feature median across windows).
Eigen::VectorXd recording_feature_row(const Recording& rec, const FeatureSchema& schema,
                                      const RunConfig& cfg, const ArtifactMask& mask,
                                      std::vector<FeatureVector>* windows_out) {
  std::vector<Eigen::Index> eeg_cols;
  Eigen::Index emg_col = -1;
  for (Eigen::Index c = 0; c < rec.n_channels(); ++c) {
    if (rec.channels[static_cast<size_t>(c)].kind == ChannelKind::EEG) {
      eeg_cols.push_back(c);
    } else if (emg_col < 0) {
      emg_col = c;
    }
  }
  if (emg_col < 0) throw ArgumentError("pipeline recordings need an EMG channel");

  const double fs = rec.sample_rate_hz;
  const auto w = static_cast<Eigen::Index>(cfg.window_s * fs);
  const auto s = static_cast<Eigen::Index>(cfg.step_s * fs);
  const ExtractConfig ecfg = extract_config(cfg);

  auto window_clean = [&](Eigen::Index start) {
    if (mask.window_samples <= 0) return true;
    const Eigen::Index first = start / mask.window_samples;
    const Eigen::Index last = (start + w - 1) / mask.window_samples;
    for (Eigen::Index i = first; i <= last; ++i) {
      if (i < static_cast<Eigen::Index>(mask.keep.size()) && !mask.keep[static_cast<size_t>(i)]) {
        return false;
      }
    }
    return true;
  };

  std::vector<FeatureVector> windows;
  for (const Eigen::Index start : epoch_starts(rec.n_samples(), w, s)) {
    if (!window_clean(start)) continue;
    Epoch eeg;
    eeg.start_sample = start;
    eeg.sample_rate_hz = fs;
    eeg.samples.resize(w, static_cast<Eigen::Index>(eeg_cols.size()));
    for (size_t k = 0; k < eeg_cols.size(); ++k) {
      eeg.samples.col(static_cast<Eigen::Index>(k)) =
          rec.samples.col(eeg_cols[k]).segment(start, w).cast<double>();
    }
    Epoch emg;
    emg.start_sample = start;
    emg.sample_rate_hz = fs;
    emg.samples = rec.samples.col(emg_col).segment(start, w).cast<double>();
    windows.push_back(extract_features(eeg, emg, schema, ecfg));
  }
  if (windows.empty()) throw DataError("no artifact-free analysis windows remain");

  Eigen::VectorXd row(schema.size());
  std::vector<double> column(windows.size());
  for (Eigen::Index f = 0; f < schema.size(); ++f) {
    for (size_t i = 0; i < windows.size(); ++i) column[i] = windows[i].values[f];
    std::sort(column.begin(), column.end());
    const size_t n = column.size();
    row[f] = n % 2 ? column[n / 2] : 0.5 * (column[n / 2 - 1] + column[n / 2]);
  }
  if (windows_out) *windows_out = std::move(windows);
  return row;
}

int cmd_pipeline(const RunConfig& cfg, const std::string& config_path) {
  const json j = load_json_file(config_path);
  const PipelinePlan plan = parse_pipeline_plan(j);

  // Load and preprocess everything before writing anything.
  struct Prepared {
    PipelineEntry entry;
    Recording rec;
    ArtifactMask mask;
  };
  std::vector<Prepared> prepared;
  FeatureSchema schema;
  std::vector<Eigen::Vector3d> positions;
  for (const auto& entry : plan.entries) {
    Recording rec = load_recording(entry.metadata, entry.data);
    if (!entry.marker.empty()) rec = slice_by_marker(rec, entry.marker);
    if (cfg.resample_hz > 0.0 && cfg.resample_hz != rec.sample_rate_hz) {
      rec = resample(rec, cfg.resample_hz);
    }
    rec = bandpass(rec, cfg.bandpass_lo_hz, cfg.bandpass_hi_hz);
    if (cfg.notch_hz > 0.0) rec = notch(rec, cfg.notch_hz, cfg.notch_q);

    FeatureSchema rec_schema;
    std::vector<Eigen::Vector3d> rec_positions;
    for (const auto& ch : rec.channels) {
      if (ch.kind == ChannelKind::EEG) {
        rec_schema.eeg_channels.push_back(ch.name);
        rec_positions.push_back(*ch.position);
      }
    }
    if (schema.eeg_channels.empty()) {
      schema = rec_schema;
      positions = rec_positions;
    } else if (schema.eeg_channels != rec_schema.eeg_channels) {
      throw SchemaError("recordings disagree on the EEG channel layout");
    }

    Prepared p{entry, std::move(rec), {}};
    p.mask = reject_artifacts(p.rec, cfg.artifact_window_s, cfg.artifact_z);
    prepared.push_back(std::move(p));
  }

  // Features and simulations.
  FeatureTable expert, novice;
  expert.columns = novice.columns = schema.keys();
  std::vector<Eigen::VectorXd> expert_rows, novice_rows;
  std::vector<std::pair<std::string, SimulationLog>> sims;
  SimConfig sim;
  sim.window_s = cfg.window_s;
  sim.step_s = cfg.step_s;
  sim.hysteresis_k = cfg.hysteresis_k;
  sim.calibration_s = cfg.calibration_s;
  sim.extract = extract_config(cfg);
  for (size_t i = 0; i < prepared.size(); ++i) {
    const auto& p = prepared[i];
    Eigen::VectorXd row = recording_feature_row(p.rec, schema, cfg, p.mask, nullptr);
    (p.entry.group == "expert" ? expert_rows : novice_rows).push_back(std::move(row));
    char name[64];
    std::snprintf(name, sizeof(name), "sim_%03zu_%s.ndjson", i, p.entry.group.c_str());
    sims.emplace_back(name, run_simulation(p.rec, sim));
  }
  if (expert_rows.empty() || novice_rows.empty()) {
    throw ArgumentError("pipeline needs at least one expert and one novice recording");
  }
  auto fill = [](FeatureTable& t, const std::vector<Eigen::VectorXd>& rows) {
    t.values.resize(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(t.columns.size()));
    for (size_t r = 0; r < rows.size(); ++r) {
      t.values.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
    }
  };
  fill(expert, expert_rows);
  fill(novice, novice_rows);

  const auto comparison = group_compare(expert, novice);

  // Group topomaps: per-band min-max normalization over both groups.
  struct MapProduct {
    std::string stem;
    ScalpField field;
  };
  std::vector<MapProduct> maps;
  for (const auto& band_name : plan.topomap_bands) {
    const BandSpec band = parse_band(band_name);
    auto channel_median = [&](const FeatureTable& t, Eigen::Index ch) {
      std::vector<double> v;
      Eigen::Index col = -1;
      const FeatureKey key{schema.eeg_channels[static_cast<size_t>(ch)], band.name,
                           "band_power"};
      for (size_t c = 0; c < t.columns.size(); ++c) {
        if (t.columns[c] == key) col = static_cast<Eigen::Index>(c);
      }
      if (col < 0) throw SchemaError("band '" + band.name + "' is not a feature column");
      for (Eigen::Index r = 0; r < t.n_rows(); ++r) v.push_back(t.values(r, col));
      std::sort(v.begin(), v.end());
      const size_t n = v.size();
      return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    Eigen::VectorXd ve(schema.n_channels()), vn(schema.n_channels());
    for (Eigen::Index c = 0; c < schema.n_channels(); ++c) {
      ve[c] = channel_median(expert, c);
      vn[c] = channel_median(novice, c);
    }
    const double lo = std::min(ve.minCoeff(), vn.minCoeff());
    const double hi = std::max(ve.maxCoeff(), vn.maxCoeff());
    auto normalize = [&](Eigen::VectorXd& v) {
      if (hi > lo) {
        v = (v.array() - lo) / (hi - lo);
      } else {
        v.setConstant(0.5);
      }
    };
    normalize(ve);
    normalize(vn);
    maps.push_back({"topomap_expert_" + band.name,
                    evaluate_field(spline_fit(positions, ve), cfg.topomap_resolution)});
    maps.push_back({"topomap_novice_" + band.name,
                    evaluate_field(spline_fit(positions, vn), cfg.topomap_resolution)});
  }

  // All products computed; write the output tree.
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(plan.output_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + plan.output_dir + "'");
  const fs::path out(plan.output_dir);

  write_feature_table(expert, (out / "features_expert.csv").string());
  write_feature_table(novice, (out / "features_novice.csv").string());
  write_comparison_csv(comparison, (out / "comparison.csv").string());
  for (const auto& m : maps) {
    write_field_csv(m.field, (out / (m.stem + ".csv")).string());
    render_map(m.field, (out / (m.stem + ".ppm")).string(), {0.0, 1.0});
  }
  for (const auto& [name, log] : sims) {
    write_simulation_ndjson(log, (out / name).string());
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  // The config file seeds flag defaults, so it must load before parsing.
  std::string config_path;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") config_path = argv[i + 1];
  }
  RunConfig cfg;
  bool config_has_seed = false;
  try {
    if (!config_path.empty()) {
      cfg = load_run_config(config_path);
      config_has_seed = load_json_file(config_path).contains("seed");
    }

    CLI::App app{"EEG/EMG spectral analysis, corticomuscular coupling and operator-state toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // lets --config appear after the subcommand name
    std::string config_flag;
    app.add_option("--config", config_flag, "JSON config file with stage parameters");

    CommonArgs io;
    std::string band = "beta";
    std::string marker, eeg, emg;
    std::string expert_path, novice_path, features_path, calibration_path, model_path;
    double duration_s = 120.0, rate_hz = 256.0, snr1 = 1.0, snr2 = 1.0;
    bool one_sided = false;

    auto add_io = [&](CLI::App* sub, bool needs_meta, bool needs_out) {
      if (needs_meta) {
        sub->add_option("--metadata", io.metadata, "recording metadata JSON")->required();
        sub->add_option("--input", io.input, "recording data CSV")->required();
      }
      auto* out = sub->add_option("--output", io.output, "output path or prefix");
      if (needs_out) out->required();
    };
    auto add_knobs = [&](CLI::App* sub) {
      sub->add_option("--alpha", cfg.alpha, "coherence significance level");
      sub->add_flag("--threshold-no-sqrt", cfg.threshold_no_sqrt,
                    "use the classical threshold form (no square root)");
      sub->add_option("--window-s", cfg.window_s, "analysis window seconds");
      sub->add_option("--step-s", cfg.step_s, "window step seconds");
      sub->add_option("--segment-fraction", cfg.welch_segment_fraction,
                      "Welch segment length as a fraction of the signal");
      sub->add_option("--overlap", cfg.welch_overlap, "Welch overlap fraction");
    };

    auto* synth = app.add_subcommand("synth", "generate a coupled EEG/EMG surrogate pair");
    add_io(synth, false, true);
    synth->add_option("--band", band, "shared band, name or lo:hi");
    synth->add_option("--duration", duration_s, "seconds");
    synth->add_option("--sample-rate", rate_hz, "Hz");
    synth->add_option("--snr1", snr1, "in-band shared/noise power ratio, channel x");
    synth->add_option("--snr2", snr2, "in-band shared/noise power ratio, channel y");
    auto* synth_seed = synth->add_option("--seed", cfg.seed, "generator seed");
    if (!config_has_seed) synth_seed->required();

    auto* prep = app.add_subcommand("preprocess", "filter, resample and mask artifacts");
    add_io(prep, true, true);
    prep->add_option("--marker", marker, "slice to this marker first");
    prep->add_option("--resample", cfg.resample_hz, "target rate, 0 keeps the input rate");
    prep->add_option("--band", band, "bandpass edges lo:hi (default 0.01:100)");
    prep->add_option("--notch", cfg.notch_hz, "notch center, 0 disables");
    prep->add_option("--notch-q", cfg.notch_q, "notch quality factor");
    prep->add_option("--artifact-window-s", cfg.artifact_window_s, "artifact window");
    prep->add_option("--artifact-z", cfg.artifact_z, "artifact z threshold");

    auto* psd = app.add_subcommand("psd", "per-channel Welch power spectral density");
    add_io(psd, true, true);
    psd->add_option("--segment-fraction", cfg.welch_segment_fraction,
                    "segment length as a fraction of the signal");
    psd->add_option("--overlap", cfg.welch_overlap, "overlap fraction");

    auto* cmc = app.add_subcommand("cmc", "corticomuscular coherence features");
    cmc->add_option("--metadata", io.metadata, "recording metadata JSON")->required();
    cmc->add_option("--input", io.input, "recording data CSV")->required();
    cmc->add_option("--output", io.output, "output CSV (stdout when omitted)");
    cmc->add_option("--eeg", eeg, "EEG channel name")->required();
    cmc->add_option("--emg", emg, "EMG channel name")->required();
    cmc->add_option("--band", band, "band, name or lo:hi");
    add_knobs(cmc);

    auto* stats = app.add_subcommand("stats", "nonparametric expert/novice comparison");
    stats->add_option("--expert", expert_path, "expert feature table CSV")->required();
    stats->add_option("--novice", novice_path, "novice feature table CSV")->required();
    stats->add_option("--output", io.output, "comparison CSV")->required();
    stats->add_flag("--one-sided", one_sided, "one-sided test (expert greater)");

    auto* topo = app.add_subcommand("topomap", "scalp band-power interpolation map");
    add_io(topo, true, true);
    topo->add_option("--band", band, "band, name or lo:hi");
    topo->add_option("--resolution", cfg.topomap_resolution, "grid resolution");
    topo->add_option("--segment-fraction", cfg.welch_segment_fraction,
                     "segment length as a fraction of the signal");

    auto* train = app.add_subcommand("train", "fit the decision-tree state classifier");
    train->add_option("--input", io.input, "labeled feature table CSV")->required();
    train->add_option("--output", io.output, "tree model JSON")->required();
    train->add_option("--depth", cfg.tree_depth, "maximum tree depth");
    train->add_option("--seed", cfg.seed, "recorded training seed");

    auto* classify = app.add_subcommand("classify", "label feature vectors");
    classify->add_option("--input", io.input, "feature table CSV")->required();
    classify->add_option("--output", io.output, "labels CSV")->required();
    classify->add_option("--model", model_path, "tree model JSON");
    classify->add_option("--calibration", calibration_path,
                         "calibration feature CSV for the rule classifier");
    classify->add_option("--step-s", cfg.step_s, "window step seconds");

    auto* simulate = app.add_subcommand("simulate", "streaming dual-loop assistance run");
    simulate->add_option("--metadata", io.metadata, "recording metadata JSON");
    simulate->add_option("--input", io.input, "recording data CSV");
    simulate->add_option("--features", features_path, "feature stream CSV instead of a recording");
    simulate->add_option("--calibration", calibration_path, "calibration feature CSV");
    simulate->add_option("--model", model_path, "tree model JSON");
    simulate->add_option("--output", io.output, "NDJSON log path")->required();
    simulate->add_option("--hysteresis-k", cfg.hysteresis_k, "consecutive windows to switch");
    simulate->add_option("--calibration-s", cfg.calibration_s, "calibration stretch seconds");
    simulate->add_option("--window-s", cfg.window_s, "analysis window seconds");
    simulate->add_option("--step-s", cfg.step_s, "window step seconds");
    simulate->add_option("--alpha", cfg.alpha, "coherence significance level");

    auto* pipeline = app.add_subcommand("pipeline", "batch run driven by the config file");
    (void)pipeline;

    try {
      app.parse(argc, const_cast<char**>(argv));
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);  // prints help, exits 0
    } catch (const CLI::ParseError& e) {
      app.exit(e);
      return 1;
    }

    validate_config(cfg);
    if (synth->parsed()) {
      return cmd_synth(cfg, io, band, duration_s, rate_hz, snr1, snr2);
    }
    if (prep->parsed()) {
      RunConfig c = cfg;
      if (prep->count("--band") > 0) {
        const BandSpec bp = parse_band(band);
        c.bandpass_lo_hz = bp.lo_hz;
        c.bandpass_hi_hz = bp.hi_hz;
      }
      return cmd_preprocess(c, io, marker);
    }
    if (psd->parsed()) return cmd_psd(cfg, io);
    if (cmc->parsed()) return cmd_cmc(cfg, io, eeg, emg, band);
    if (stats->parsed()) return cmd_stats(io, expert_path, novice_path, one_sided);
    if (topo->parsed()) return cmd_topomap(cfg, io, band);
    if (train->parsed()) return cmd_train(cfg, io);
    if (classify->parsed()) return cmd_classify(cfg, io, model_path, calibration_path);
    if (simulate->parsed()) {
      return cmd_simulate(cfg, io, features_path, calibration_path, model_path);
    }
    if (pipeline->parsed()) {
      if (config_path.empty()) throw ArgumentError("pipeline requires --config");
      return cmd_pipeline(cfg, config_path);
    }
    throw ArgumentError("no subcommand selected");
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace cmckit
