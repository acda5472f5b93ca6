// mhfa/cli.hpp
//
// Copyright 2026  The mhfa-lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// The mhfa_lab command line: gen, train, eval, gradcheck, sweep, weights.
//
// Data directory written by gen:
//   config.json  manifest.txt  train.txt  eval.txt  trials.txt  utts/*.bin
// Run directory written by train:
//   checkpoint.bin  run_record.json  drift.csv  timing.json  config.json

#pragma once

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mhfa/checkpoint.hpp"
#include "mhfa/config.hpp"
#include "mhfa/gradsuite.hpp"
#include "mhfa/io.hpp"
#include "mhfa/model.hpp"
#include "mhfa/trainer.hpp"

namespace mhfa {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitConfig = 3,
  kExitIo = 4,
  kExitDivergence = 5,
  kExitGradcheck = 6,
};

namespace cli {

struct Options {
  std::string config;
  std::string out;
  std::string data;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  std::string axis;
  std::vector<std::string> values;
  std::string checkpoint;
  std::string trials;
  std::string scores;
  bool inject_fault = false;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

inline LabConfig load_config(const Options& o, const std::string& fallback_dir = "") {
  LabConfig cfg;
  if (!o.config.empty())
    cfg = load_lab_config(o.config);
  else if (!fallback_dir.empty() && fs::exists(fs::path(fallback_dir) / "config.json"))
    cfg = load_lab_config((fs::path(fallback_dir) / "config.json").string());
  cfg.resolve();
  return cfg;
}

inline void require(const std::string& value, const char* flag, const char* cmd) {
  if (value.empty()) throw UsageError(std::string(cmd) + " needs " + flag);
}

inline int cmd_gen(const Options& o, std::ostream& out) {
  require(o.out, "--out", "gen");
  LabConfig cfg = load_config(o);
  if (o.seed) cfg.synth.seed = *o.seed;
  const fs::path dir(o.out);
  const Corpus all = make_corpus(cfg.synth, cfg.data.utts_per_speaker);
  auto split = split_by_speaker(all, cfg.synth.n_speakers, cfg.data.eval_speakers);
  const auto trials = split_trials(split.eval, cfg.data.n_target_trials,
                                   cfg.data.n_nontarget_trials, cfg.data.trial_seed);

  auto rel = [](const Utterance& u) { return "utts/" + u.key + ".bin"; };
  std::vector<ManifestEntry> m_all, m_train, m_eval;
  for (const Utterance& u : all) {
    save_tensor(dir / rel(u), u.frames);
    m_all.push_back({rel(u), u.speaker_id});
  }
  for (const Utterance& u : split.train) m_train.push_back({rel(u), u.speaker_id});
  for (const Utterance& u : split.eval) m_eval.push_back({rel(u), u.speaker_id});
  write_manifest(dir / "manifest.txt", m_all);
  write_manifest(dir / "train.txt", m_train);
  write_manifest(dir / "eval.txt", m_eval);
  std::vector<TrialEntry> t;
  for (const Trial& x : trials)
    t.push_back({x.is_target, rel(split.eval[x.enroll]), rel(split.eval[x.test])});
  write_trials(dir / "trials.txt", t);
  write_text(dir / "config.json", dump_lab_config(cfg));

  out << "gen: " << all.size() << " utterances (" << cfg.synth.n_speakers << " speakers x "
      << cfg.data.utts_per_speaker << "), train " << split.train.size() << " / eval "
      << split.eval.size() << ", trials " << cfg.data.n_target_trials << " target + "
      << cfg.data.n_nontarget_trials << " non-target -> " << dir.string() << "\n";
  return kExitOk;
}

inline Corpus load_split(const fs::path& data, const char* name, std::size_t frame_dim) {
  Corpus c = load_corpus(data / name);
  for (const Utterance& u : c)
    if (u.frames.cols() != frame_dim)
      throw ConfigError("utterance '" + u.key + "' has " + std::to_string(u.frames.cols()) +
                        " features per frame but synth.frame_dim is " + std::to_string(frame_dim));
  return c;
}

inline int cmd_train(const Options& o, std::ostream& out) {
  require(o.data, "--data", "train");
  require(o.out, "--out", "train");
  LabConfig cfg = load_config(o, o.data);
  if (o.seed) cfg.train.seed = *o.seed;
  const fs::path data(o.data), dir(o.out);
  const Corpus train_set = load_split(data, "train.txt", cfg.synth.frame_dim);

  Model m = init_model(cfg, train_set);
  TrainOptions topt;
  topt.threads = o.threads;
  RunRecord rec = train(m, train_set, topt);
  const Checkpoint ck = to_checkpoint(m);
  const std::string hash = checkpoint_hash(ck);
  if (fs::exists(data / "trials.txt")) {
    EmbeddingCache cache;
    rec.metrics = compute_metrics(evaluate(m, hash, data / "trials.txt", cache, o.threads));
  }
  ck.save(dir / "checkpoint.bin");
  write_text(dir / "run_record.json", run_record_json(rec).dump(2) + "\n");
  write_text(dir / "drift.csv", drift_csv(rec));
  write_text(dir / "config.json", dump_lab_config(m.cfg));
  write_text(dir / "timing.json", Json{{"wall_seconds", rec.wall_seconds}}.dump(2) + "\n");

  out << "train: " << to_string(cfg.train.backend) << ", " << rec.epochs.size() << " epochs";
  if (!rec.epochs.empty()) out << ", final loss " << fmt_double(rec.epochs.back().loss);
  out << ", drift " << fmt_double(rec.final_drift_total());
  if (rec.metrics) out << ", eer " << fmt_double(rec.metrics->eer);
  out << " -> " << dir.string() << "\n";
  return kExitOk;
}

inline int cmd_eval(const Options& o, std::ostream& out) {
  require(o.checkpoint, "--checkpoint", "eval");
  require(o.trials, "--trials", "eval");
  require(o.out, "--out", "eval");
  const Checkpoint ck = Checkpoint::load(o.checkpoint);
  const Model m = from_checkpoint(ck);
  EmbeddingCache cache;
  const TrialScoreSet set = evaluate(m, checkpoint_hash(ck), o.trials, cache, o.threads);
  const MetricsReport r = compute_metrics(set);
  write_text(o.out, metrics_json(r).dump(2) + "\n");
  if (!o.scores.empty()) write_scores(o.scores, set);
  out << "eval: eer " << fmt_double(r.eer) << ", dcf1 " << fmt_double(r.dcf1) << ", dcf5 "
      << fmt_double(r.dcf5) << " over " << r.n_target << " target / " << r.n_nontarget
      << " non-target trials\n";
  return kExitOk;
}

inline int cmd_gradcheck(const Options& o, std::ostream& out) {
  if (!o.config.empty()) load_config(o);  // validated, dims are fixed
  bool ok = true;
  char line[160];
  for (const auto& e : run_grad_suite(o.inject_fault)) {
    const bool pass = e.result.max_rel_error < kGradTolerance;
    ok = ok && pass;
    std::snprintf(line, sizeof line, "%-12s max_rel_error %.3e  %s\n", e.component.c_str(),
                  e.result.max_rel_error, pass ? "ok" : "FAIL");
    out << line;
  }
  return ok ? kExitOk : kExitGradcheck;
}

inline int cmd_sweep(const Options& o, std::ostream& out) {
  require(o.out, "--out", "sweep");
  require(o.axis, "--axis", "sweep");
  SweepAxis axis;
  try {
    axis = parse_axis(o.axis);
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
  LabConfig cfg = load_config(o, o.data);
  if (o.seed) cfg.train.seed = *o.seed;
  for (const auto& v : o.values) apply_axis(cfg, axis, v);  // reject bad values before any run

  Dataset d;
  if (!o.data.empty()) {
    const fs::path data(o.data);
    d.train = load_split(data, "train.txt", cfg.synth.frame_dim);
    d.eval = load_split(data, "eval.txt", cfg.synth.frame_dim);
    // Trials are rebuilt as in-memory indices over eval.txt.
    const auto entries = read_manifest(data / "eval.txt");
    for (const auto& t : read_trials(data / "trials.txt")) {
      auto index = [&](const std::string& p) {
        for (std::size_t i = 0; i < entries.size(); ++i)
          if (entries[i].path == p) return i;
        throw IoError("trial utterance '" + p + "' is not listed in eval.txt");
      };
      d.trials.push_back(Trial{index(t.enroll), index(t.test), t.is_target});
    }
  } else if (!o.values.empty()) {
    d = make_dataset(cfg);
  }
  const fs::path dir(o.out);
  auto rows = sweep(cfg, axis, o.values, d, o.threads, [&](const SweepRow& r) {
    out << "sweep " << o.axis << "=" << r.value << ": " << r.status;
    if (r.metrics) out << ", eer " << fmt_double(r.metrics->eer);
    if (!r.message.empty()) out << " (" << r.message << ")";
    out << "\n";
  });
  for (const auto& r : rows)
    if (r.record)
      write_text(dir / "runs" / (o.axis + "_" + r.value + ".json"),
                 run_record_json(*r.record).dump(2) + "\n");
  write_text(dir / ("sweep_" + o.axis + ".csv"), sweep_csv(o.axis, rows));
  out << "sweep: " << rows.size() << " runs -> " << (dir / ("sweep_" + o.axis + ".csv")).string()
      << "\n";
  return kExitOk;
}

inline std::string weights_csv(const LayerWeightReport& r) {
  const bool with_key = !r.key.empty();
  std::string out = with_key ? "layer,key_weight,value_weight\n" : "layer,value_weight\n";
  for (std::size_t l = 0; l < r.value.size(); ++l) {
    out += std::to_string(l) + ",";
    if (with_key) out += fmt_double(r.key[l]) + ",";
    out += fmt_double(r.value[l]) + "\n";
  }
  return out;
}

inline int cmd_weights(const Options& o, std::ostream& out) {
  require(o.checkpoint, "--checkpoint", "weights");
  require(o.out, "--out", "weights");
  const Model m = from_checkpoint(Checkpoint::load(o.checkpoint));
  const LayerWeightReport r = layer_weight_report(m.backend);
  write_text(o.out, weights_csv(r));
  out << "weights: " << r.value.size() << " layers (" << to_string(m.backend.kind()) << ") -> "
      << o.out << "\n";
  return kExitOk;
}

}  // namespace cli

/// Parses argv and runs one subcommand; returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"mhfa_lab: speaker-embedding back-ends on a toy encoder"};
  app.require_subcommand(1);
  cli::Options o;

  auto add_common = [&o](CLI::App* c) {
    c->add_option("--config", o.config, "JSON config file");
    c->add_option("--seed", o.seed, "seed override");
    c->add_option("--threads", o.threads, "worker threads (1 = deterministic)")
        ->check(CLI::PositiveNumber);
  };
  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic corpus and trial list");
  add_common(gen);
  gen->add_option("--out", o.out, "output data directory");

  CLI::App* tr = app.add_subcommand("train", "fine-tune encoder and back-end");
  add_common(tr);
  tr->add_option("--data", o.data, "data directory from gen");
  tr->add_option("--out", o.out, "run output directory");

  CLI::App* ev = app.add_subcommand("eval", "score a trial list with a checkpoint");
  add_common(ev);
  ev->add_option("--checkpoint", o.checkpoint, "checkpoint file");
  ev->add_option("--trials", o.trials, "trial list");
  ev->add_option("--out", o.out, "metrics report path");
  ev->add_option("--scores", o.scores, "also write per-trial scores here");

  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference check of every component");
  add_common(gc);
  gc->add_flag("--inject-fault", o.inject_fault)->group("");

  CLI::App* sw = app.add_subcommand("sweep", "run one ablation axis");
  add_common(sw);
  sw->add_option("--data", o.data, "data directory from gen (default: generate in memory)");
  sw->add_option("--axis", o.axis, "xi | heads | lambda | constraint | backend");
  sw->add_option("--values", o.values, "comma-separated axis values")->delimiter(',');
  sw->add_option("--out", o.out, "output directory");

  CLI::App* wt = app.add_subcommand("weights", "export normalized layer weights");
  add_common(wt);
  wt->add_option("--checkpoint", o.checkpoint, "checkpoint file");
  wt->add_option("--out", o.out, "CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cli::cmd_gen(o, out);
    if (tr->parsed()) return cli::cmd_train(o, out);
    if (ev->parsed()) return cli::cmd_eval(o, out);
    if (gc->parsed()) return cli::cmd_gradcheck(o, out);
    if (sw->parsed()) return cli::cmd_sweep(o, out);
    if (wt->parsed()) return cli::cmd_weights(o, out);
  } catch (const cli::UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DivergenceError& e) {
    err << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const LabelError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ConsistencyError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace mhfa
