#include "basecal/cli.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "basecal/confidence.hpp"
#include "basecal/csv.hpp"
#include "basecal/errors.hpp"
#include "basecal/metrics.hpp"
#include "basecal/projection.hpp"
#include "basecal/records.hpp"
#include "basecal/synthetic.hpp"

namespace basecal::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << j.dump(2) << "\n";
}

fs::path ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
  return fs::path(dir);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep))
    if (!cur.empty()) parts.push_back(cur);
  return parts;
}

std::vector<double> parse_thresholds(const std::string& spec) {
  const auto colon = split(spec, ':');
  if (colon.size() == 3) {
    return threshold_range(csv::parse_double(colon[0]), csv::parse_double(colon[1]), csv::parse_double(colon[2]));
  }
  std::vector<double> out;
  for (const auto& p : split(spec, ',')) out.push_back(csv::parse_double(p));
  if (out.empty()) throw ValidationError("no thresholds given");
  return out;
}

std::string na_or(const std::optional<double>& v) { return v ? csv::format_double(*v) : "NA"; }

// ---------------------------------------------------------------------------
// Labels and confidence tables

struct ScoredMethod {
  std::string name;
  std::vector<std::pair<std::string, double>> rows;  // (sequence_id, confidence)
};

std::vector<ScoredMethod> read_confidences(const fs::path& path) {
  const auto table = csv::read_file(path);
  const auto c_id = table.column("sequence_id");
  const auto c_method = table.column("method");
  const auto c_conf = table.column("confidence");
  std::vector<ScoredMethod> methods;
  std::map<std::string, std::size_t> index;
  for (const auto& r : table.rows) {
    auto [it, fresh] = index.emplace(r[c_method], methods.size());
    if (fresh) methods.push_back({r[c_method], {}});
    methods[it->second].rows.emplace_back(r[c_id], csv::parse_double(r[c_conf]));
  }
  if (methods.empty()) throw ValidationError("confidence table '" + path.string() + "' has no rows");
  return methods;
}

struct LabelSource {
  std::map<std::string, int> labels;
  std::string dataset;
};

LabelSource load_labels(const std::string& records_path, const std::string& labels_path, Streams io) {
  LabelSource src;
  std::set<std::string> tags;
  if (!records_path.empty()) {
    const auto set = load_recordset(records_path);
    for (const auto& s : set.sequences) {
      tags.insert(s.dataset_tag);
      if (s.correctness) src.labels[s.sequence_id] = *s.correctness;
    }
  }
  if (!labels_path.empty()) {
    const auto table = csv::read_file(labels_path);
    const auto c_id = table.column("sequence_id");
    const auto c_z = table.column("correctness");
    std::size_t conflicts = 0;
    for (const auto& r : table.rows) {
      int z;
      if (r[c_z] == "0") z = 0;
      else if (r[c_z] == "1") z = 1;
      else throw ValidationError("label for '" + r[c_id] + "' is '" + r[c_z] + "', expected 0 or 1");
      auto it = src.labels.find(r[c_id]);
      if (it != src.labels.end() && it->second != z) ++conflicts;
      src.labels[r[c_id]] = z;
    }
    if (conflicts) {
      io.err << "warning: sidecar labels override " << conflicts << " conflicting record-set label(s)\n";
    }
  }
  if (tags.size() == 1) src.dataset = *tags.begin();
  else if (tags.size() > 1) src.dataset = "mixed";
  else src.dataset = "unknown";
  return src;
}

std::vector<EvalPair> pair_up(const ScoredMethod& m, const LabelSource& labels) {
  std::vector<EvalPair> pairs;
  std::vector<std::string> missing;
  for (const auto& [id, conf] : m.rows) {
    auto it = labels.labels.find(id);
    if (it == labels.labels.end()) {
      missing.push_back(id);
      continue;
    }
    pairs.push_back({conf, it->second});
  }
  if (!missing.empty()) {
    std::string msg = "method '" + m.name + "': " + std::to_string(missing.size()) +
                      " scored sequence(s) lack correctness labels:";
    for (std::size_t i = 0; i < missing.size() && i < 50; ++i) msg += " " + missing[i];
    if (missing.size() > 50) msg += " ...";
    throw ValidationError(msg);
  }
  return pairs;
}

csv::Table selective_table(const std::vector<ScoredMethod>& methods, const LabelSource& labels,
                           const std::string& dataset, const std::vector<double>& thresholds) {
  csv::Table sel{{"method", "dataset", "threshold", "coverage", "accuracy"}, {}};
  for (const auto& m : methods) {
    const auto pairs = pair_up(m, labels);
    for (const auto& pt : selective_curve(pairs, thresholds)) {
      sel.rows.push_back({m.name, dataset, csv::format_double(pt.threshold), csv::format_double(pt.coverage),
                          na_or(pt.accuracy)});
    }
  }
  return sel;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_validate(const std::string& path, Streams io) {
  RecordSet set;
  try {
    set = load_recordset_unchecked(path);
  } catch (const CorruptionError& e) {
    io.err << "corrupt record set '" << path << "': " << e.what() << "\n";
    return 1;
  }
  const auto violations = validate_recordset(set);
  for (const auto& v : violations) io.out << to_string(v) << "\n";
  if (!violations.empty()) {
    io.err << violations.size() << " violation(s) in '" << path << "'\n";
    return 1;
  }
  io.out << "ok: " << set.manifest.num_sequences << " sequences, " << set.manifest.num_tokens << " tokens\n";
  return 0;
}

struct TrainArgs {
  std::string train, valid, out, log;
  std::string arch = "linear", loss = "mse";
  TrainConfig cfg;
};

int cmd_train(const TrainArgs& a, Streams io) {
  TrainConfig cfg = a.cfg;
  cfg.architecture = parse_architecture(a.arch);
  cfg.loss = parse_loss(a.loss);
  const auto train = load_recordset(a.train);
  TrainResult result;
  json log = {{"architecture", a.arch},
              {"loss", a.loss},
              {"learning_rate", cfg.learning_rate},
              {"batch_size", cfg.batch_size},
              {"max_epochs", cfg.max_epochs},
              {"patience", cfg.patience},
              {"seed", cfg.seed},
              {"warnings", json::array()}};
  if (cfg.loss == LossKind::Cosine) {
    log["warnings"].push_back("cosine-trained projection: projected magnitudes are unconstrained");
    io.err << "warning: cosine loss leaves projected magnitudes unconstrained\n";
  }
  if (a.valid.empty()) {
    log["validation"] = {{"fraction", cfg.validation_fraction}};
    result = train_projection(train, cfg);
  } else {
    log["validation"] = {{"path", fs::path(a.valid).filename().string()}};
    result = train_projection(train, load_recordset(a.valid), cfg);
  }
  json epochs = json::array();
  for (const auto& e : result.history) {
    epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"valid_loss", e.valid_loss}});
  }
  log["epochs"] = std::move(epochs);
  log["best_epoch"] = result.best_epoch;
  log["best_valid_loss"] = *result.model.provenance.best_valid_loss;
  log["train_fingerprint"] = result.model.provenance.train_fingerprint;

  save_projection(result.model, a.out);
  write_json(a.log.empty() ? fs::path(a.out + ".log.json") : fs::path(a.log), log);
  io.out << "trained " << a.arch << "/" << a.loss << " projection: " << result.history.size()
         << " epochs, best epoch " << result.best_epoch << ", valid loss "
         << csv::format_double(*result.model.provenance.best_valid_loss) << "\n";
  return 0;
}

struct FitTemperatureArgs {
  std::string records, labels, mode = "sequence_log_odds", out;
};

int cmd_fit_temperature(const FitTemperatureArgs& a, Streams io) {
  auto set = load_recordset(a.records);
  if (!a.labels.empty()) {
    const auto labels = load_labels("", a.labels, io).labels;
    for (auto& s : set.sequences) {
      auto it = labels.find(s.sequence_id);
      if (it != labels.end()) {
        if (s.correctness && *s.correctness != it->second) io.err << "warning: sidecar overrides label of '" << s.sequence_id << "'\n";
        s.correctness = it->second;
      }
    }
  }
  const auto tm = fit_temperature(set, parse_temperature_mode(a.mode));
  save_temperature(tm, a.out);
  io.out << "tau = " << csv::format_double(tm.tau) << " (" << to_string(tm.mode) << ")\n";
  return 0;
}

struct ScoreArgs {
  std::string records, methods = "vanilla", projection, output_layer, temperature, out_dir = ".", out;
};

int cmd_score(const ScoreArgs& a, Streams io) {
  std::vector<Method> methods;
  for (const auto& m : split(a.methods, ',')) methods.push_back(parse_method(m));
  if (methods.empty()) throw ValidationError("--methods selects nothing");
  const auto set = load_recordset(a.records);

  std::optional<ProjectionModel> proj;
  std::optional<BaseOutputLayer> head;
  std::optional<TemperatureModel> temp;
  json notes = json::object();
  for (auto m : methods) {
    const auto name = to_string(m);
    if (m == Method::Proj) {
      if (a.projection.empty() || a.output_layer.empty()) {
        throw PreconditionError("method proj needs --projection and --output-layer");
      }
      if (!proj) proj = load_projection(a.projection);
      if (!head) head = load_output_layer(a.output_layer);
      if (head->vocab_size != set.manifest.vocab_size || head->hidden_dim != set.manifest.hidden_dim) {
        throw PreconditionError("method proj: output layer dims (V=" + std::to_string(head->vocab_size) +
                                ", d=" + std::to_string(head->hidden_dim) + ") do not match the record set");
      }
      notes[name] = {{"projection_loss", to_string(proj->train_loss)},
                     {"architecture", to_string(proj->architecture)}};
      if (proj->train_loss == LossKind::Cosine) {
        notes[name]["warning"] = "cosine-trained projection: projected magnitudes are unconstrained";
        io.err << "warning: scoring with a cosine-trained projection\n";
      }
    } else if (m == Method::TempScaled) {
      if (a.temperature.empty()) throw PreconditionError("method temp_scaled needs --temperature");
      if (!temp) temp = load_temperature(a.temperature);
      notes[name] = {{"temperature_mode", to_string(temp->mode)}, {"tau", temp->tau}};
    } else if (m == Method::SemanticEntropy) {
      notes[name] = {{"se_normalization", "maxent"}};
    }
  }

  csv::Table table{{"sequence_id", "method", "confidence"}, {}};
  for (auto m : methods) {
    const auto name = to_string(m);
    if (m == Method::SemanticEntropy) {
      for (const auto& s : score_semantic_entropy_all(set.sequences)) {
        table.rows.push_back({s.sequence_id, name, csv::format_double(s.value)});
      }
      continue;
    }
    for (const auto& seq : set.sequences) {
      ConfidenceScore s;
      switch (m) {
        case Method::Vanilla: s = score_vanilla(seq); break;
        case Method::ReEval: s = score_reeval(seq); break;
        case Method::Proj: s = score_proj(seq, *proj, *head); break;
        case Method::TempScaled: s = apply_temperature(seq, *temp); break;
        case Method::SemanticEntropy: break;
      }
      table.rows.push_back({s.sequence_id, name, csv::format_double(s.value)});
    }
  }
  const fs::path out = a.out.empty() ? ensure_dir(a.out_dir) / "confidences.csv" : fs::path(a.out);
  csv::write_file(out, table);
  write_json(fs::path(out.string() + ".meta.json"), {{"methods", notes}});
  io.out << "wrote " << table.rows.size() << " scores to " << out.string() << "\n";
  return 0;
}

struct EvalArgs {
  std::string confidences, records, labels, dataset, out_dir = ".";
  std::size_t bins = kDefaultBins;
  std::string thresholds = "0.5:0.95:0.05";
};

int cmd_eval(const EvalArgs& a, Streams io) {
  if (a.records.empty() && a.labels.empty()) throw PreconditionError("eval needs --records and/or --labels");
  if (a.bins == 0) throw ValidationError("--m-bins must be >= 1");
  const auto methods = read_confidences(a.confidences);
  const auto labels = load_labels(a.records, a.labels, io);
  const auto thresholds = parse_thresholds(a.thresholds);
  const std::string dataset = a.dataset.empty() ? labels.dataset : a.dataset;

  csv::Table summary{{"method", "dataset", "N", "M", "ECE", "Brier"}, {}};
  csv::Table bins{{"method", "dataset", "bin_lo", "bin_hi", "count", "conf", "acc"}, {}};
  for (const auto& m : methods) {
    const auto pairs = pair_up(m, labels);
    const auto rel = reliability(pairs, a.bins);
    const double e = ece_from_bins(rel);
    summary.rows.push_back({m.name, dataset, std::to_string(pairs.size()), std::to_string(a.bins),
                            csv::format_double(e), csv::format_double(brier(pairs))});
    for (const auto& b : rel.bins) {
      bins.rows.push_back({m.name, dataset, csv::format_double(b.lo), csv::format_double(b.hi),
                           std::to_string(b.count), na_or(b.confidence), na_or(b.accuracy)});
    }
    io.out << m.name << ": N=" << pairs.size() << " ECE=" << csv::format_double(e) << "\n";
  }
  const auto dir = ensure_dir(a.out_dir);
  csv::write_file(dir / "summary.csv", summary);
  csv::write_file(dir / "bins.csv", bins);
  csv::write_file(dir / "selective.csv", selective_table(methods, labels, dataset, thresholds));

  const fs::path meta_path = a.confidences + ".meta.json";
  if (fs::exists(meta_path)) {
    std::ifstream in(meta_path);
    json meta;
    try {
      meta = json::parse(in);
    } catch (const json::exception& e) {
      throw FormatError("malformed score metadata '" + meta_path.string() + "': " + e.what());
    }
    write_json(dir / "report_meta.json", meta);
    const json notes = meta.value("methods", json::object());
    for (const auto& [method, note] : notes.items()) {
      if (note.contains("warning")) io.err << "note (" << method << "): " << note["warning"].get<std::string>() << "\n";
    }
  }
  return 0;
}

struct DeltaArgs {
  std::string id_report, ood_report, out;
};

int cmd_delta_ece(const DeltaArgs& a, Streams io) {
  auto read = [](const std::string& p) {
    const auto t = csv::read_file(p);
    const auto cm = t.column("method");
    const auto ce = t.column("ECE");
    std::vector<std::pair<std::string, double>> rows;
    for (const auto& r : t.rows) rows.emplace_back(r[cm], csv::parse_double(r[ce]));
    return rows;
  };
  const auto id_rows = read(a.id_report);
  const auto ood_rows = read(a.ood_report);
  std::map<std::string, double> ood(ood_rows.begin(), ood_rows.end());
  csv::Table table{{"method", "ece_id", "ece_ood", "delta_ece"}, {}};
  for (const auto& [method, e_id] : id_rows) {
    auto it = ood.find(method);
    if (it == ood.end()) continue;
    const double delta = delta_ece(e_id, it->second);
    table.rows.push_back({method, csv::format_double(e_id), csv::format_double(it->second), csv::format_double(delta)});
    io.out << method << " " << csv::format_double(delta) << "\n";
  }
  if (table.rows.empty()) throw ValidationError("the two reports share no methods");
  if (!a.out.empty()) csv::write_file(a.out, table);
  return 0;
}

struct SelectiveArgs {
  std::string confidences, records, labels, dataset, out_dir = ".";
  std::string thresholds = "0.5:0.95:0.05";
};

int cmd_selective(const SelectiveArgs& a, Streams io) {
  if (a.records.empty() && a.labels.empty()) throw PreconditionError("selective needs --records and/or --labels");
  const auto methods = read_confidences(a.confidences);
  const auto labels = load_labels(a.records, a.labels, io);
  const auto table = selective_table(methods, labels, a.dataset.empty() ? labels.dataset : a.dataset,
                                     parse_thresholds(a.thresholds));
  const auto path = ensure_dir(a.out_dir) / "selective.csv";
  csv::write_file(path, table);
  io.out << "wrote " << table.rows.size() << " rows to " << path.string() << "\n";
  return 0;
}

struct SynthArgs {
  std::string kind = "pair", out_dir = ".";
  std::uint64_t seed = 0;
  std::size_t train_tokens = 20000, valid_tokens = 2000, test_sequences = 2000;
};

int cmd_synth(const SynthArgs& a, Streams io) {
  const auto dir = ensure_dir(a.out_dir);
  if (a.kind == "pair") {
    const auto pair = synthetic::make_model_pair({}, a.seed);
    save_output_layer(pair.head, dir / "head.bcol");
    save_recordset(synthetic::sample_traces(pair, 0, a.train_tokens, a.seed + 1, "train"), dir / "train.bcrd");
    save_recordset(synthetic::sample_traces(pair, 0, a.valid_tokens, a.seed + 2, "valid"), dir / "valid.bcrd");
    save_recordset(synthetic::sample_traces(pair, a.test_sequences, 0, a.seed + 3, "test"), dir / "test.bcrd");
    io.out << "wrote head.bcol, train.bcrd, valid.bcrd, test.bcrd to " << dir.string() << "\n";
  } else if (a.kind == "calibrated") {
    save_recordset(synthetic::calibrated(a.test_sequences, a.seed, true), dir / "calibrated.bcrd");
    io.out << "wrote calibrated.bcrd to " << dir.string() << "\n";
  } else {
    throw ValidationError("unknown synth kind '" + a.kind + "' (expected pair or calibrated)");
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Streams io{out, err};
  CLI::App app{"Confidence calibration of post-trained language models against their base models", "basecal"};
  app.require_subcommand(1);

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Check a record set against every invariant");
  validate->add_option("recordset", validate_path, "BCRD record-set file")->required();

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a hidden-state projection with early stopping");
  train->add_option("--train", train_args.train, "Training record set")->required()->check(CLI::ExistingFile);
  train->add_option("--valid", train_args.valid, "Validation record set (default: hold out --valid-fraction)")
      ->check(CLI::ExistingFile);
  train->add_option("--valid-fraction", train_args.cfg.validation_fraction, "Held-out sequence fraction");
  train->add_option("--arch", train_args.arch, "linear | mlp3");
  train->add_option("--loss", train_args.loss, "mse | mae | cosine");
  train->add_option("--lr", train_args.cfg.learning_rate, "Adam learning rate");
  train->add_option("--batch-size", train_args.cfg.batch_size, "Token pairs per batch");
  train->add_option("--max-epochs", train_args.cfg.max_epochs, "Epoch limit");
  train->add_option("--patience", train_args.cfg.patience, "Epochs without validation improvement before stopping");
  train->add_option("--seed", train_args.cfg.seed, "Seed for initialization and shuffling");
  train->add_option("--out", train_args.out, "Output projection file (BCPJ)")->required();
  train->add_option("--log", train_args.log, "Training log JSON (default: <out>.log.json)");

  FitTemperatureArgs temp_args;
  auto* fit_temp = app.add_subcommand("fit-temperature", "Fit the temperature-scaling baseline on labelled traces");
  fit_temp->add_option("--records", temp_args.records, "Labelled record set")->required()->check(CLI::ExistingFile);
  fit_temp->add_option("--labels", temp_args.labels, "Sidecar label CSV (sequence_id, correctness)")
      ->check(CLI::ExistingFile);
  fit_temp->add_option("--mode", temp_args.mode, "token_level | sequence_log_odds");
  fit_temp->add_option("--out", temp_args.out, "Output temperature JSON")->required();

  ScoreArgs score_args;
  auto* score = app.add_subcommand("score", "Compute sequence confidences");
  score->add_option("--records", score_args.records, "Record set to score")->required()->check(CLI::ExistingFile);
  score->add_option("--methods", score_args.methods, "Comma list: vanilla, reeval, proj, temp_scaled, semantic_entropy");
  score->add_option("--projection", score_args.projection, "Projection file (proj)")->check(CLI::ExistingFile);
  score->add_option("--output-layer", score_args.output_layer, "Base output layer file (proj)")->check(CLI::ExistingFile);
  score->add_option("--temperature", score_args.temperature, "Temperature file (temp_scaled)")->check(CLI::ExistingFile);
  score->add_option("--out-dir", score_args.out_dir, "Directory for confidences.csv");
  score->add_option("--out", score_args.out, "Explicit output CSV path");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "ECE / Brier / reliability / selective report");
  eval->add_option("--confidences", eval_args.confidences, "Confidence CSV from `score`")->required()->check(CLI::ExistingFile);
  eval->add_option("--records", eval_args.records, "Record set carrying labels")->check(CLI::ExistingFile);
  eval->add_option("--labels", eval_args.labels, "Sidecar label CSV; wins on conflict")->check(CLI::ExistingFile);
  eval->add_option("--m-bins", eval_args.bins, "Equal-width confidence bins");
  eval->add_option("--thresholds", eval_args.thresholds, "start:stop:step or comma list");
  eval->add_option("--dataset", eval_args.dataset, "Dataset name for report rows");
  eval->add_option("--out-dir", eval_args.out_dir, "Report directory");

  DeltaArgs delta_args;
  auto* delta = app.add_subcommand("delta-ece", "ECE_ID - ECE_OOD per shared method");
  delta->add_option("report_id", delta_args.id_report, "In-domain summary.csv")->required()->check(CLI::ExistingFile);
  delta->add_option("report_ood", delta_args.ood_report, "Out-of-domain summary.csv")->required()->check(CLI::ExistingFile);
  delta->add_option("--out", delta_args.out, "Optional CSV output");

  SelectiveArgs sel_args;
  auto* selective = app.add_subcommand("selective", "Coverage / accuracy over confidence thresholds");
  selective->add_option("--confidences", sel_args.confidences, "Confidence CSV")->required()->check(CLI::ExistingFile);
  selective->add_option("--records", sel_args.records, "Record set carrying labels")->check(CLI::ExistingFile);
  selective->add_option("--labels", sel_args.labels, "Sidecar label CSV")->check(CLI::ExistingFile);
  selective->add_option("--thresholds", sel_args.thresholds, "start:stop:step or comma list");
  selective->add_option("--dataset", sel_args.dataset, "Dataset name for report rows");
  selective->add_option("--out-dir", sel_args.out_dir, "Output directory");

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Write synthetic fixtures (pair: model-pair traces + head; calibrated)");
  synth->add_option("--kind", synth_args.kind, "pair | calibrated");
  synth->add_option("--seed", synth_args.seed, "Generator seed");
  synth->add_option("--out-dir", synth_args.out_dir, "Output directory");
  synth->add_option("--train-tokens", synth_args.train_tokens, "Minimum training tokens (pair)");
  synth->add_option("--valid-tokens", synth_args.valid_tokens, "Minimum validation tokens (pair)");
  synth->add_option("--sequences", synth_args.test_sequences, "Test sequences (pair) or sequences (calibrated)");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*validate) return cmd_validate(validate_path, io);
    if (*train) return cmd_train(train_args, io);
    if (*fit_temp) return cmd_fit_temperature(temp_args, io);
    if (*score) return cmd_score(score_args, io);
    if (*eval) return cmd_eval(eval_args, io);
    if (*delta) return cmd_delta_ece(delta_args, io);
    if (*selective) return cmd_selective(sel_args, io);
    if (*synth) return cmd_synth(synth_args, io);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace basecal::cli
