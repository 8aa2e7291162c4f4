// djtd/commands.cc

#include "djtd/commands.h"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "djtd/checkpoint.h"
#include "djtd/verify.h"

#include "json.hpp"

namespace djtd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool dir_nonempty(const std::string& dir) {
  std::error_code ec;
  if (!fs::exists(dir, ec)) return false;
  return fs::directory_iterator(dir, ec) != fs::directory_iterator();
}

SecondPassModel build_model(const RunConfig& cfg) {
  return SecondPassModel(cfg.first_pass, cfg.second_pass, variant_from_name(cfg.train.variant),
                         cfg.seed);
}

json set_score_json(const TestSetScore& s) {
  return json{{"wer", s.wer},
              {"sub", s.counts.sub},
              {"ins", s.counts.ins},
              {"del", s.counts.del},
              {"ref_len", s.counts.ref_len}};
}

TestSetScore set_score_from_json(const json& j) {
  TestSetScore s;
  s.wer = j.at("wer");
  s.counts.sub = j.at("sub");
  s.counts.ins = j.at("ins");
  s.counts.del = j.at("del");
  s.counts.ref_len = j.at("ref_len");
  return s;
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  json j;
  j["rows"] = json::array();
  for (const auto& row : report.rows) {
    json r;
    r["name"] = row.name;
    r["training_data"] = row.training_data;
    r["lambdas"] = row.lambdas;
    json sets;
    for (const auto& [set_name, score] : row.pooled) {
      json s = set_score_json(score);
      s["seed_wers"] = row.seed_wers.at(set_name);
      s["mean_wer"] = row.mean_wer(set_name);
      sets[set_name] = s;
    }
    r["sets"] = sets;
    j["rows"].push_back(r);
  }
  j["sample_row_a"] = report.sample_row_a;
  j["sample_row_b"] = report.sample_row_b;
  j["samples"] = json::array();
  for (const auto& s : report.samples)
    j["samples"].push_back(json{{"set", s.set_name},
                                {"ref", s.ref},
                                {"hyp_a", s.hyp_a},
                                {"hyp_b", s.hyp_b},
                                {"win_for_a", s.win_for_a}});
  return j.dump(2);
}

EvalReport report_from_json(const std::string& text) {
  json j = json::parse(text);
  EvalReport report;
  for (const auto& r : j.at("rows")) {
    MatrixRow row;
    row.name = r.at("name");
    row.training_data = r.at("training_data");
    row.lambdas = r.at("lambdas").get<std::vector<double>>();
    for (const auto& [set_name, s] : r.at("sets").items()) {
      row.pooled[set_name] = set_score_from_json(s);
      row.seed_wers[set_name] = s.at("seed_wers").get<std::vector<double>>();
    }
    report.rows.push_back(std::move(row));
  }
  report.sample_row_a = j.value("sample_row_a", "");
  report.sample_row_b = j.value("sample_row_b", "");
  return report;
}

int cmd_gen_data(const RunConfig& cfg, const std::string& config_path, const std::string& out_dir,
                 bool force, bool text_dump, std::ostream& out, std::ostream& err) {
  if (out_dir.empty()) {
    err << "gen-data: --out is required\n";
    return 2;
  }
  if (dir_nonempty(out_dir) && !force) {
    err << "gen-data: output directory '" << out_dir << "' is not empty (use --force)\n";
    return 2;
  }
  const std::string started = now_iso8601();
  Corpus corpus = build_corpus(cfg.corpus);
  save_corpus(out_dir, corpus, text_dump);
  write_run_manifest(out_dir, "gen-data", config_path, cfg, started, now_iso8601());
  out << "corpus written to " << out_dir << ": " << corpus.paired.size() << " paired, "
      << corpus.unpaired.size() << " unpaired, " << corpus.vs_like.size() << " per test set\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& config_path, const std::string& corpus_dir,
              const std::string& out_dir, const std::string& init_from, bool resume,
              std::ostream& out, std::ostream& err) {
  if (corpus_dir.empty() || out_dir.empty()) {
    err << "train: --corpus and --out are required\n";
    return 2;
  }
  const std::string started = now_iso8601();
  Corpus corpus = load_corpus(corpus_dir);
  RunConfig run = cfg;
  // Model dims are bound to the corpus actually used.
  run.corpus = corpus.config;
  run.corpus.seed = corpus.config.seed;
  Vocab vocab = corpus.vocab;
  run.first_pass.feature_dim = corpus.config.feature_dim;
  run.first_pass.vocab_size = vocab.size();
  run.second_pass.eos_id = vocab.eos_id();

  fs::create_directories(out_dir);
  std::ofstream metrics(out_dir + "/metrics.jsonl", resume ? std::ios::app : std::ios::trunc);
  MetricsSink sink = [&metrics](const std::string& line) { metrics << line << '\n'; };

  SecondPassModel model = build_model(run);
  const std::string rnnt_ckpt = out_dir + "/rnnt.ckpt";
  const std::string model_ckpt = out_dir + "/model.ckpt";
  const std::string state_path = out_dir + "/model.state";

  int start_step = 0;
  Adam adam(run.train.adam);
  if (resume && fs::exists(model_ckpt) && fs::exists(state_path)) {
    load_checkpoint_into(model_ckpt, model.param_groups());
    TrainState st = load_train_state(state_path, run.train.adam);
    adam = std::move(st.adam);
    start_step = static_cast<int>(st.step);
    out << "resuming from step " << start_step << "\n";
  } else if (!init_from.empty()) {
    // A first-pass-only checkpoint: skip stage 1.
    load_checkpoint_into(init_from, model.param_groups(), /*allow_missing=*/true);
    out << "first pass initialized from " << init_from << "\n";
  } else {
    FirstPassModel& fp = model.first_pass();
    Adam fp_adam(run.train.adam);
    pretrain_first_pass(fp, corpus.paired, run.train, fp_adam, 0, run.train.pretrain_steps, sink);
    save_checkpoint(rnnt_ckpt, fp.param_groups());
    out << "stage 1 done (" << run.train.pretrain_steps << " steps), checkpoint " << rnnt_ckpt
        << "\n";
  }

  const int total = run.train.second_pass_steps;
  int step = start_step;
  while (step < total) {
    int next = total;
    if (run.train.checkpoint_every > 0)
      next = std::min(total, step + run.train.checkpoint_every);
    train_second_pass(model, corpus, run.train, adam, step, next, sink);
    step = next;
    save_checkpoint(model_ckpt, model.param_groups());
    TrainState st;
    st.step = step;
    st.adam = adam;
    save_train_state(state_path, st);
  }
  if (total == 0) save_checkpoint(model_ckpt, model.param_groups());
  write_run_manifest(out_dir, "train", config_path, run, started, now_iso8601());
  out << "stage 2 done (" << total << " steps), checkpoint " << model_ckpt << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& config_path, const std::string& checkpoint,
             const std::string& corpus_dir, const std::string& out_dir,
             const std::string& assert_improvement, std::ostream& out, std::ostream& err) {
  if (checkpoint.empty() || corpus_dir.empty()) {
    err << "eval: --checkpoint and --corpus are required\n";
    return 2;
  }
  const std::string started = now_iso8601();
  Corpus corpus = load_corpus(corpus_dir);
  RunConfig run = cfg;
  run.first_pass.feature_dim = corpus.config.feature_dim;
  run.first_pass.vocab_size = corpus.vocab.size();
  run.second_pass.eos_id = corpus.vocab.eos_id();
  SecondPassModel model = build_model(run);
  load_checkpoint_into(checkpoint, model.param_groups());

  const ModelVariant variant = variant_from_name(run.train.variant);
  DecodeConfig dc = run.decode;
  EvalReport report;
  MatrixRow row;
  row.name = run.train.variant;
  row.training_data = run.train.train_data;
  if (variant_is_jatd(variant)) {
    const int dev_n = std::max<int>(
        1, static_cast<int>(std::llround(dc.dev_fraction *
                                         static_cast<double>(corpus.vs_like.size()))));
    std::span<const Example> dev(corpus.vs_like.data(), static_cast<size_t>(dev_n));
    LambdaChoice choice = select_lambda(model, dev, dc.lambda_grid, dc);
    dc.lambda_inference = choice.lambda;
    row.lambdas.push_back(choice.lambda);
    out << "selected lambda " << choice.lambda << " on " << dev_n << " dev utterances\n";
  }
  const std::pair<const char*, const std::vector<Example>*> sets[3] = {
      {"vs_like", &corpus.vs_like}, {"rare_tts", &corpus.rare_tts},
      {"rare_spoken", &corpus.rare_spoken}};
  for (const auto& [name, set] : sets) {
    std::vector<std::vector<int>> refs, hyps;
    for (const auto& ex : *set) refs.push_back(ex.transcript);
    hyps.resize(set->size());
    for (size_t i = 0; i < set->size(); ++i)
      hyps[i] = two_pass_decode((*set)[i], model, dc).tokens;
    WerResult wr = corpus_wer(refs, hyps);
    row.seed_wers[name].push_back(wr.wer);
    row.pooled[name] = TestSetScore{wr.wer, wr.counts};
    out << name << ": WER " << 100.0 * wr.wer << "% (S=" << wr.counts.sub
        << " I=" << wr.counts.ins << " D=" << wr.counts.del << " N=" << wr.counts.ref_len
        << ")\n";
  }
  report.rows.push_back(row);

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream os(out_dir + "/report.json", std::ios::trunc);
    os << report_to_json(report) << '\n';
    write_run_manifest(out_dir, "eval", config_path, run, started, now_iso8601());
  }

  if (!assert_improvement.empty()) {
    std::ifstream is(assert_improvement);
    if (!is) {
      err << "eval: baseline report '" << assert_improvement << "' not found\n";
      return 2;
    }
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    EvalReport baseline = report_from_json(text);
    if (baseline.rows.empty()) {
      err << "eval: baseline report has no rows\n";
      return 2;
    }
    const auto rare_mean = [](const MatrixRow& r) {
      return 0.5 * (r.pooled.at("rare_tts").wer + r.pooled.at("rare_spoken").wer);
    };
    const double ours = rare_mean(row);
    const double theirs = rare_mean(baseline.rows.front());
    if (!(ours < theirs)) {
      err << "assert-improvement failed: mean rare-set WER " << 100.0 * ours
          << "% vs baseline " << 100.0 * theirs << "%\n";
      return 1;
    }
    out << "rare-set WER improved: " << 100.0 * ours << "% < " << 100.0 * theirs << "%\n";
  }
  return 0;
}

int cmd_verify(const std::string& suite, uint64_t seed, std::ostream& out, std::ostream& err) {
  const auto names = verify_suite_names();
  std::vector<std::string> to_run;
  if (suite == "all") to_run = names;
  else if (std::find(names.begin(), names.end(), suite) != names.end()) to_run = {suite};
  else {
    err << "verify: unknown suite '" << suite << "' (known:";
    for (const auto& n : names) err << ' ' << n;
    err << " all)\n";
    return 2;
  }
  bool ok = true;
  for (const auto& name : to_run) {
    out << "suite " << name << "\n";
    ok &= run_verify_suite(name, seed, [&out](const std::string& line) { out << "  " << line << "\n"; });
  }
  out << (ok ? "verify: PASS" : "verify: FAIL") << "\n";
  return ok ? 0 : 1;
}

int cmd_matrix(const RunConfig& cfg, const std::string& config_path, const std::string& corpus_dir,
               const std::vector<std::string>& rows, const std::vector<uint64_t>& seeds,
               const std::string& out_dir, std::ostream& out, std::ostream& err) {
  if (corpus_dir.empty()) {
    err << "matrix: --corpus is required\n";
    return 2;
  }
  const std::string started = now_iso8601();
  Corpus corpus = load_corpus(corpus_dir);
  std::vector<std::string> use_rows = rows.empty() ? known_matrix_rows() : rows;
  std::vector<uint64_t> use_seeds = seeds.empty() ? std::vector<uint64_t>{cfg.seed} : seeds;
  RunConfig run = cfg;
  run.first_pass.feature_dim = corpus.config.feature_dim;
  run.first_pass.vocab_size = corpus.vocab.size();
  run.second_pass.eos_id = corpus.vocab.eos_id();
  EvalReport report = run_experiment_matrix(corpus, use_rows, use_seeds, run.train, run.decode,
                                            null_sink());
  out << report_table(report);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream os(out_dir + "/report.json", std::ios::trunc);
    os << report_to_json(report) << '\n';
    std::ofstream ts(out_dir + "/report.txt", std::ios::trunc);
    ts << report_table(report);
    write_run_manifest(out_dir, "matrix", config_path, run, started, now_iso8601());
  }
  return 0;
}

}  // namespace djtd
