// djtd/config.cc

#include "djtd/config.h"

#include <chrono>
#include <ctime>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace djtd {

using nlohmann::json;

void align_run_config(RunConfig& cfg) {
  cfg.corpus.seed = cfg.seed;
  cfg.train.seed = cfg.seed;
  Vocab vocab{cfg.corpus.n_common, cfg.corpus.n_rare};
  cfg.first_pass.feature_dim = cfg.corpus.feature_dim;
  cfg.first_pass.vocab_size = vocab.size();
  cfg.first_pass.blank_id = vocab.blank_id();
  cfg.second_pass.eos_id = vocab.eos_id();
}

namespace {

template <typename T>
void get_to(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

void parse_corpus(const json& j, CorpusConfig& c) {
  get_to(j, "n_common", c.n_common);
  get_to(j, "n_rare", c.n_rare);
  get_to(j, "feature_dim", c.feature_dim);
  get_to(j, "min_len", c.min_len);
  get_to(j, "max_len", c.max_len);
  get_to(j, "train_total", c.train_total);
  get_to(j, "n_test", c.n_test);
  get_to(j, "noise_sigma", c.noise_sigma);
  get_to(j, "speaker_sigma", c.speaker_sigma);
  get_to(j, "tts_offset", c.tts_offset);
  get_to(j, "heldout_offset", c.heldout_offset);
  get_to(j, "rare_twin_offset", c.rare_twin_offset);
  get_to(j, "rare_density", c.rare_density);
  get_to(j, "rare_min_unpaired", c.rare_min_unpaired);
  get_to(j, "paired_rare_once_fraction", c.paired_rare_once_fraction);
}

json corpus_json(const CorpusConfig& c) {
  return json{{"n_common", c.n_common},
              {"n_rare", c.n_rare},
              {"feature_dim", c.feature_dim},
              {"min_len", c.min_len},
              {"max_len", c.max_len},
              {"train_total", c.train_total},
              {"n_test", c.n_test},
              {"noise_sigma", c.noise_sigma},
              {"speaker_sigma", c.speaker_sigma},
              {"tts_offset", c.tts_offset},
              {"heldout_offset", c.heldout_offset},
              {"rare_twin_offset", c.rare_twin_offset},
              {"rare_density", c.rare_density},
              {"rare_min_unpaired", c.rare_min_unpaired},
              {"paired_rare_once_fraction", c.paired_rare_once_fraction},
              {"seed", c.seed}};
}

void parse_first_pass(const json& j, FirstPassConfig& c) {
  get_to(j, "enc_hidden", c.enc_hidden);
  get_to(j, "enc_proj", c.enc_proj);
  get_to(j, "time_factor", c.time_factor);
  get_to(j, "pred_embed", c.pred_embed);
  get_to(j, "pred_hidden", c.pred_hidden);
  get_to(j, "pred_proj", c.pred_proj);
  get_to(j, "joint_dim", c.joint_dim);
  get_to(j, "max_sym_per_frame", c.max_sym_per_frame);
  get_to(j, "max_label_len", c.max_label_len);
}

json first_pass_json(const FirstPassConfig& c) {
  return json{{"feature_dim", c.feature_dim},
              {"vocab_size", c.vocab_size},
              {"blank_id", c.blank_id},
              {"enc_hidden", c.enc_hidden},
              {"enc_proj", c.enc_proj},
              {"time_factor", c.time_factor},
              {"pred_embed", c.pred_embed},
              {"pred_hidden", c.pred_hidden},
              {"pred_proj", c.pred_proj},
              {"joint_dim", c.joint_dim},
              {"max_sym_per_frame", c.max_sym_per_frame},
              {"max_label_len", c.max_label_len}};
}

void parse_second_pass(const json& j, SecondPassConfig& c) {
  get_to(j, "hyp_embed", c.hyp_embed);
  get_to(j, "hyp_hidden", c.hyp_hidden);
  get_to(j, "hyp_proj", c.hyp_proj);
  get_to(j, "attn_heads", c.attn_heads);
  get_to(j, "attn_head_dim", c.attn_head_dim);
  get_to(j, "dec_embed", c.dec_embed);
  get_to(j, "dec_hidden", c.dec_hidden);
  get_to(j, "dec_proj", c.dec_proj);
  get_to(j, "hyp_pad_len", c.hyp_pad_len);
  get_to(j, "top_k", c.top_k);
  get_to(j, "train_first_beam", c.train_first_beam);
}

json second_pass_json(const SecondPassConfig& c) {
  return json{{"eos_id", c.eos_id},
              {"hyp_embed", c.hyp_embed},
              {"hyp_hidden", c.hyp_hidden},
              {"hyp_proj", c.hyp_proj},
              {"attn_heads", c.attn_heads},
              {"attn_head_dim", c.attn_head_dim},
              {"dec_embed", c.dec_embed},
              {"dec_hidden", c.dec_hidden},
              {"dec_proj", c.dec_proj},
              {"hyp_pad_len", c.hyp_pad_len},
              {"top_k", c.top_k},
              {"train_first_beam", c.train_first_beam}};
}

void parse_train(const json& j, TrainSettings& c) {
  get_to(j, "variant", c.variant);
  get_to(j, "train_data", c.train_data);
  get_to(j, "lambda_train", c.lambda_train);
  get_to(j, "pretrain_steps", c.pretrain_steps);
  get_to(j, "second_pass_steps", c.second_pass_steps);
  get_to(j, "batch_size", c.batch_size);
  get_to(j, "lr", c.adam.lr);
  get_to(j, "adam_beta1", c.adam.beta1);
  get_to(j, "adam_beta2", c.adam.beta2);
  get_to(j, "adam_eps", c.adam.eps);
  get_to(j, "clip_norm", c.clip_norm);
  get_to(j, "freeze_first_pass", c.freeze_first_pass);
  get_to(j, "checkpoint_every", c.checkpoint_every);
}

json train_json(const TrainSettings& c) {
  return json{{"variant", c.variant},
              {"train_data", c.train_data},
              {"lambda_train", c.lambda_train},
              {"pretrain_steps", c.pretrain_steps},
              {"second_pass_steps", c.second_pass_steps},
              {"batch_size", c.batch_size},
              {"lr", c.adam.lr},
              {"adam_beta1", c.adam.beta1},
              {"adam_beta2", c.adam.beta2},
              {"adam_eps", c.adam.eps},
              {"clip_norm", c.clip_norm},
              {"freeze_first_pass", c.freeze_first_pass},
              {"checkpoint_every", c.checkpoint_every},
              {"seed", c.seed}};
}

void parse_decode(const json& j, DecodeConfig& c) {
  get_to(j, "first_beam", c.first_beam);
  get_to(j, "second_beam", c.second_beam);
  get_to(j, "lambda_inference", c.lambda_inference);
  get_to(j, "lambda_grid", c.lambda_grid);
  get_to(j, "max_decode_len", c.max_decode_len);
  get_to(j, "dev_fraction", c.dev_fraction);
  get_to(j, "threads", c.threads);
}

json decode_json(const DecodeConfig& c) {
  return json{{"first_beam", c.first_beam},
              {"second_beam", c.second_beam},
              {"lambda_inference", c.lambda_inference},
              {"lambda_grid", c.lambda_grid},
              {"max_decode_len", c.max_decode_len},
              {"dev_fraction", c.dev_fraction},
              {"threads", c.threads}};
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j = json::parse(json_text);
  RunConfig cfg;
  get_to(j, "seed", cfg.seed);
  if (j.contains("corpus")) parse_corpus(j.at("corpus"), cfg.corpus);
  if (j.contains("model")) {
    const json& m = j.at("model");
    if (m.contains("first_pass")) parse_first_pass(m.at("first_pass"), cfg.first_pass);
    if (m.contains("second_pass")) parse_second_pass(m.at("second_pass"), cfg.second_pass);
  }
  if (j.contains("train")) parse_train(j.at("train"), cfg.train);
  if (j.contains("decode")) parse_decode(j.at("decode"), cfg.decode);
  align_run_config(cfg);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config file '" + path + "' not found");
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

std::string run_config_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["corpus"] = corpus_json(cfg.corpus);
  j["model"] = json{{"first_pass", first_pass_json(cfg.first_pass)},
                    {"second_pass", second_pass_json(cfg.second_pass)}};
  j["train"] = train_json(cfg.train);
  j["decode"] = decode_json(cfg.decode);
  return j.dump(2);
}

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

void write_run_manifest(const std::string& dir, const std::string& command,
                        const std::string& config_path, const RunConfig& cfg,
                        const std::string& started_at, const std::string& finished_at) {
  json j;
  j["command"] = command;
  j["config_path"] = config_path;
  j["config"] = json::parse(run_config_json(cfg));
  j["seed"] = cfg.seed;
  j["build_id"] = kBuildId;
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  std::ofstream os(dir + "/run_manifest.json", std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write run manifest in '" + dir + "'");
  os << j.dump(2) << '\n';
}

}  // namespace djtd
