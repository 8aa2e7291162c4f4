// djtd/trainer.cc

#include "djtd/trainer.h"

#include <sstream>
#include <stdexcept>

#include "djtd/rng.h"

namespace djtd {

MetricsSink null_sink() {
  return [](const std::string&) {};
}

std::vector<int> batch_indices(uint64_t seed, std::string_view stage, int step, int batch_size,
                               int pool_size) {
  if (pool_size < 1) throw std::invalid_argument("batch: empty example pool");
  std::vector<int> out(static_cast<size_t>(batch_size));
  Rng rng(hash_seed(hash_seed(seed, stage), static_cast<uint64_t>(step)));
  for (int& i : out) i = static_cast<int>(rng.next_below(static_cast<uint64_t>(pool_size)));
  return out;
}

void pretrain_first_pass(FirstPassModel& model, std::span<const Example> pool,
                         const TrainSettings& cfg, Adam& adam, int start_step, int end_step,
                         const MetricsSink& sink) {
  // No gating applies at this stage; the paired mask only freezes fixed
  // contexts, which a first-pass model does not have.
  const GradMask mask = GradMask::for_kind(ExampleKind::kPaired);
  auto& groups = model.param_groups();
  for (int step = start_step; step < end_step; ++step) {
    const auto idx = batch_indices(cfg.seed, "pretrain", step, cfg.batch_size,
                                   static_cast<int>(pool.size()));
    zero_grads(groups);
    Tensor total = Tensor::scalar(0.0);
    for (int i : idx) {
      const Example& ex = pool[static_cast<size_t>(i)];
      Tensor enc = model.encode(ex.features);
      Tensor nll = model.loss(enc, ex.transcript);
      total = add(total, scale(nll, 1.0 / static_cast<double>(ex.transcript.size() + 1)));
    }
    Tensor loss = scale(total, 1.0 / static_cast<double>(idx.size()));
    backward(loss);
    const double gnorm = clip_grad_norm(groups, cfg.clip_norm);
    adam.apply_update(groups, mask);
    std::ostringstream os;
    os << "{\"stage\":\"pretrain\",\"step\":" << step << ",\"loss\":" << loss.item()
       << ",\"grad_norm\":" << gnorm << "}";
    sink(os.str());
  }
}

GradMask training_mask(ExampleKind kind, bool freeze_first_pass) {
  std::set<Gate> extra;
  if (freeze_first_pass) {
    extra.insert(Gate::kFirstPass);
    extra.insert(Gate::kEncoderStack);
  }
  return GradMask::for_kind(kind, extra);
}

void train_second_pass(SecondPassModel& model, const Corpus& corpus, const TrainSettings& cfg,
                       Adam& adam, int start_step, int end_step, const MetricsSink& sink) {
  const ModelVariant variant = variant_from_name(cfg.variant);
  std::vector<Example> pool = corpus.paired;
  if (cfg.train_data == "mixed") {
    pool.insert(pool.end(), corpus.unpaired.begin(), corpus.unpaired.end());
  } else if (cfg.train_data != "paired") {
    throw std::invalid_argument("train_data must be 'paired' or 'mixed', got '" + cfg.train_data +
                                "'");
  }
  const GradMask paired_mask = training_mask(ExampleKind::kPaired, cfg.freeze_first_pass);
  const GradMask unpaired_mask = training_mask(ExampleKind::kUnpaired, cfg.freeze_first_pass);

  // With a frozen first pass the per-example hypotheses never change, so
  // decode each pool entry once up front instead of every step.
  std::vector<FirstPassResult> hyp_cache;
  const bool cache_hyps = cfg.freeze_first_pass && variant_has_hyp_attention(variant);
  if (cache_hyps) {
    NoGradGuard ng;
    hyp_cache.resize(pool.size());
    for (size_t i = 0; i < pool.size(); ++i) {
      Tensor enc = model.first_pass().encode(pool[i].features);
      hyp_cache[i] = model.first_pass().decode(enc, cfg.train_first_beam());
    }
  }

  for (int step = start_step; step < end_step; ++step) {
    const auto idx = batch_indices(cfg.seed, "second-pass", step, cfg.batch_size,
                                   static_cast<int>(pool.size()));
    std::vector<Example> batch;
    std::vector<FirstPassResult> batch_hyps;
    batch.reserve(idx.size());
    for (int i : idx) {
      batch.push_back(pool[static_cast<size_t>(i)]);
      if (cache_hyps) batch_hyps.push_back(hyp_cache[static_cast<size_t>(i)]);
    }
    TrainStepMetrics m = train_step(model, batch, variant, cfg.lambda_train, paired_mask,
                                    unpaired_mask, adam, cfg.clip_norm,
                                    cache_hyps ? &batch_hyps : nullptr);
    std::ostringstream os;
    os << "{\"stage\":\"second-pass\",\"step\":" << step << ",\"loss_paired\":" << m.loss_paired
       << ",\"loss_unpaired\":" << m.loss_unpaired << ",\"acoustic\":" << m.acoustic_paired
       << ",\"lm\":" << m.lm_paired << ",\"n_paired\":" << m.n_paired
       << ",\"n_unpaired\":" << m.n_unpaired << "}";
    sink(os.str());
  }
}

void adopt_first_pass(SecondPassModel& model, const FirstPassModel& donor) {
  for (const auto& src : donor.param_groups()) {
    ParamGroup* dst = model.find_group(src.name);
    if (dst == nullptr) throw std::logic_error("adopt_first_pass: missing group " + src.name);
    if (dst->params.size() != src.params.size())
      throw std::logic_error("adopt_first_pass: group size mismatch for " + src.name);
    for (size_t i = 0; i < src.params.size(); ++i) {
      if (dst->params[i].shape() != src.params[i].shape())
        throw std::logic_error("adopt_first_pass: shape mismatch in " + src.name);
      std::copy(src.params[i].values().begin(), src.params[i].values().end(),
                dst->params[i].raw_values().begin());
    }
  }
}

}  // namespace djtd
