/*
 * Copyright (c) The noisy-asg authors.
 *
 * This source code is licensed under the MIT license found in the
 * LICENSE file in the root directory of this source tree.
 */

// Command-line driver: synth -> noise-model/estimate-noise -> corrupt ->
// train -> decode -> eval, plus inspection and verification commands.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nasg/eval.hpp"
#include "nasg/l2g.hpp"
#include "nasg/noise.hpp"
#include "nasg/parallel.hpp"
#include "nasg/train.hpp"
#include "nasg/verify.hpp"

namespace {

using namespace nasg;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitVerify = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Alphabet alphabet_from_string(const std::string& letters) {
  return Alphabet(std::vector<char>(letters.begin(), letters.end()));
}

// Sorted set of characters used by the given transcripts.
Alphabet infer_alphabet(std::initializer_list<const std::vector<Transcript>*> sets) {
  std::set<char> chars;
  for (const auto* s : sets) {
    for (const auto& t : *s) {
      chars.insert(t.text.begin(), t.text.end());
    }
  }
  if (chars.empty()) {
    throw Error(ErrorCode::kEmptyCorpus, "transcripts contain no letters");
  }
  return Alphabet(std::vector<char>(chars.begin(), chars.end()));
}

std::map<std::string, std::string> by_id(const std::vector<Transcript>& ts, const std::string& what) {
  std::map<std::string, std::string> m;
  for (const auto& t : ts) {
    if (!m.emplace(t.id, t.text).second) {
      throw Error(ErrorCode::kParse, what + ": duplicate id " + t.id);
    }
  }
  return m;
}

NoiseModel load_noise(const std::string& path, bool renormalize, double smooth, bool sub_only) {
  NoiseModel nm = load_noise_model(path, renormalize);
  if (smooth > 0.0) {
    nm = smoothed(nm, smooth);
  }
  return sub_only ? substitution_only(nm) : nm;
}

// Pairs features with transcripts by id. Transcripts that cannot be encoded
// (triple letters) are logged and skipped; other symbol errors are fatal.
std::vector<TrainExample> join_train(
    const std::vector<FeatureRecord>& feats,
    const std::vector<Transcript>& texts,
    const Alphabet& alphabet) {
  const auto ids = by_id(texts, "transcripts");
  std::vector<TrainExample> out;
  for (const auto& f : feats) {
    auto it = ids.find(f.id);
    if (it == ids.end()) {
      throw Error(ErrorCode::kIdMismatch, "no transcript for utterance " + f.id);
    }
    try {
      out.push_back({f.id, f.features, encode(to_letters(it->second, alphabet), alphabet)});
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kTripleRepeat) {
        throw;
      }
      std::cerr << "skip\t" << f.id << "\t" << e.what() << '\n';
    }
  }
  return out;
}

std::vector<EvalExample> join_eval(
    const std::vector<FeatureRecord>& feats,
    const std::vector<Transcript>& texts) {
  const auto ids = by_id(texts, "transcripts");
  std::vector<EvalExample> out;
  for (const auto& f : feats) {
    auto it = ids.find(f.id);
    if (it == ids.end()) {
      throw Error(ErrorCode::kIdMismatch, "no transcript for utterance " + f.id);
    }
    out.push_back({f.id, f.features, it->second});
  }
  return out;
}

void print_metrics_header(std::ostream& out) {
  out << "epoch\tmean_loss\theldout_ler\tevaluated\tskipped\tempty_beam\n";
}

void print_metrics(std::ostream& out, const EpochMetrics& m) {
  out << m.epoch << '\t' << m.mean_loss << '\t' << m.heldout_ler << '\t' << m.evaluated
      << '\t' << m.skipped << '\t' << m.empty_beam << '\n';
}

void print_report_header() {
  std::cout << "check\tinstances\tfailures\tskipped\tmax_error\ttolerance\tseconds\tstatus\n";
}

bool print_report(const verify::CheckReport& r) {
  std::cout << r.name << '\t' << r.instances << '\t' << r.failures << '\t' << r.skipped << '\t'
            << r.max_error << '\t' << r.tolerance << '\t' << r.seconds << '\t'
            << (r.passed() ? "PASS" : "FAIL") << '\n';
  if (!r.passed() && !r.first_failure.empty()) {
    std::cerr << r.name << ": " << r.first_failure << '\n';
  }
  return r.passed();
}

struct L2GFlags {
  double alpha = 0.5;
  int beam_size = 300;
  double sub_scale = 1.0;
  double ins_scale = 1.0;
  double del_scale = 1.0;
  bool relax = false;
  bool renormalize = false;
  double smooth = 0.0;
  bool sub_only = false;

  void add(CLI::App* app) {
    app->add_option("--alpha", alpha, "Weight of the noise log-probabilities")->capture_default_str();
    app->add_option("--beam-size", beam_size, "Beam size")->capture_default_str();
    app->add_option("--sub-scale", sub_scale, "Extra weight on substitution log-probabilities")->capture_default_str();
    app->add_option("--ins-scale", ins_scale, "Extra weight on insertion log-probabilities")->capture_default_str();
    app->add_option("--del-scale", del_scale, "Extra weight on deletion log-probabilities")->capture_default_str();
    app->add_flag("--relax-consecutive", relax, "Allow consecutive insertions and deletions");
    app->add_flag("--renormalize", renormalize, "Renormalize noise model columns on load");
    app->add_option("--smooth", smooth, "Additive smoothing of the noise model")->capture_default_str();
    app->add_flag("--sub-only", sub_only, "Drop insertions and deletions from the noise model");
  }

  L2GConfig config() const {
    L2GConfig c;
    c.beam_size = beam_size;
    c.alpha = alpha;
    c.sub_scale = sub_scale;
    c.ins_scale = ins_scale;
    c.del_scale = del_scale;
    c.relax_consecutive = relax;
    c.validate();
    return c;
  }
};

// ---------------------------------------------------------------------------

int cmd_synth(
    const SyntheticSpec& spec,
    std::uint64_t seed,
    const std::string& prefix,
    const std::string& features_out,
    const std::string& transcripts_out) {
  const auto utts = synth_generate(spec, seed, prefix);
  const auto alphabet = synthetic_alphabet(spec);
  std::vector<FeatureRecord> feats;
  std::vector<Transcript> texts;
  for (const auto& u : utts) {
    feats.push_back({u.id, u.features});
    texts.push_back({u.id, to_string(u.clean, alphabet)});
  }
  write_features(features_out, feats);
  write_transcripts(transcripts_out, texts);
  return 0;
}

int cmd_estimate(
    const std::string& hyp_path,
    const std::string& ref_path,
    const std::string& letters,
    double factor,
    double smooth,
    const std::string& out) {
  const auto hyp = read_transcripts(hyp_path);
  const auto ref = read_transcripts(ref_path);
  const Alphabet alphabet = letters.empty() ? infer_alphabet({&hyp, &ref}) : alphabet_from_string(letters);
  const auto hyp_ids = by_id(hyp, hyp_path);
  const auto ref_ids = by_id(ref, ref_path);
  std::vector<std::pair<LetterSeq, LetterSeq>> pairs;
  for (const auto& [id, text] : ref_ids) {
    auto it = hyp_ids.find(id);
    if (it == hyp_ids.end()) {
      throw Error(ErrorCode::kIdMismatch, "no hypothesis for utterance " + id);
    }
    pairs.emplace_back(to_letters(it->second, alphabet), to_letters(text, alphabet));
  }
  if (hyp_ids.size() != ref_ids.size()) {
    throw Error(ErrorCode::kIdMismatch, "hypothesis file has ids missing from the reference");
  }
  NoiseModel nm = scale(estimate(pairs, alphabet.letters()), factor);
  if (smooth > 0.0) {
    nm = smoothed(nm, smooth);
  }
  save_noise_model(nm, out);
  return 0;
}

int cmd_corrupt(const std::string& noise, const std::string& in, const std::string& out, std::uint64_t seed) {
  const NoiseModel nm = load_noise_model(noise);
  const Alphabet alphabet(nm.letters());
  std::mt19937_64 rng(seed);
  auto texts = read_transcripts(in);
  for (auto& t : texts) {
    t.text = to_string(corrupt(to_letters(t.text, alphabet), nm, rng), alphabet);
  }
  write_transcripts(out, texts);
  return 0;
}

struct TrainFlags {
  std::string features;
  std::string transcripts;
  std::string heldout_features;
  std::string heldout_transcripts;
  std::string loss = "asg";
  std::string noise;
  std::string init;
  std::string out;
  std::string metrics;
  std::string letters;
  int hidden = 32;
  int epochs = kDefaultPretrainEpochs;
  int batch_size = 16;
  double lr = kDefaultLearningRate;
  double transition_lr = kDefaultTransitionLearningRate;
  double clip = kDefaultGradClip;
  std::uint64_t seed = 1;
  int workers = default_workers();
  L2GFlags l2g;
};

int cmd_train(const TrainFlags& f) {
  TrainConfig cfg;
  cfg.loss_kind = parse_loss_kind(f.loss);
  if (cfg.loss_kind == LossKind::kL2g && f.noise.empty()) {
    throw UsageError("--loss l2g requires --noise");
  }
  if (f.heldout_features.empty() != f.heldout_transcripts.empty()) {
    throw UsageError("--heldout-features and --heldout-transcripts go together");
  }
  cfg.learning_rate = f.lr;
  cfg.transition_lr = f.transition_lr;
  cfg.grad_clip_norm = f.clip;
  cfg.batch_size = f.batch_size;
  cfg.epochs = f.epochs;
  cfg.seed = f.seed;
  cfg.workers = f.workers;
  cfg.l2g = f.l2g.config();
  cfg.validate();

  const auto feats = read_features(f.features);
  const auto texts = read_transcripts(f.transcripts);
  std::optional<NoiseModel> nm;
  if (!f.noise.empty()) {
    nm = load_noise(f.noise, f.l2g.renormalize, f.l2g.smooth, f.l2g.sub_only);
  }

  std::optional<Checkpoint> ck;
  if (!f.init.empty()) {
    ck = load_checkpoint(f.init);
  } else {
    const Alphabet alphabet = !f.letters.empty() ? alphabet_from_string(f.letters)
        : nm ? Alphabet(nm->letters())
             : infer_alphabet({&texts});
    if (feats.empty()) {
      throw Error(ErrorCode::kEmptyCorpus, "no feature records in " + f.features);
    }
    const int dim = static_cast<int>(feats.front().features.cols());
    ck = Checkpoint{
        alphabet,
        ToyAcousticModel(dim, f.hidden, alphabet.size(), f.seed),
        TransitionMatrix::zeros(alphabet.size()),
        {}};
  }
  if (nm && nm->letters() != ck->alphabet.letters()) {
    throw Error(ErrorCode::kDimensionMismatch, "noise model letters differ from the model alphabet");
  }
  const auto data = join_train(feats, texts, ck->alphabet);
  std::vector<EvalExample> heldout;
  if (!f.heldout_features.empty()) {
    heldout = join_eval(read_features(f.heldout_features), read_transcripts(f.heldout_transcripts));
  }

  std::ofstream metrics_file;
  if (!f.metrics.empty()) {
    metrics_file.open(f.metrics);
    if (!metrics_file) {
      throw Error(ErrorCode::kIo, "cannot write metrics " + f.metrics);
    }
    metrics_file << std::setprecision(10);
    print_metrics_header(metrics_file);
  }
  std::cout << std::setprecision(10);
  print_metrics_header(std::cout);
  train_loop(ck->model, ck->transitions, data, cfg, nm ? &*nm : nullptr, heldout, ck->alphabet,
             [&](const EpochMetrics& m) {
               print_metrics(std::cout, m);
               std::cout.flush();
               if (metrics_file.is_open()) {
                 print_metrics(metrics_file, m);
               }
             });
  ck->metadata["last_loss"] = f.loss;
  ck->metadata["epochs"] = ck->metadata.value("epochs", 0) + f.epochs;
  ck->metadata["seed"] = f.seed;
  save_checkpoint(*ck, f.out);
  return 0;
}

int cmd_decode(const std::string& checkpoint, const std::string& features, const std::string& out, int workers) {
  const auto ck = load_checkpoint(checkpoint);
  const auto feats = read_features(features);
  std::vector<Transcript> hyps(feats.size());
  parallel_for(feats.size(), workers, [&](std::size_t i) {
    const auto dec = viterbi(ck.model.emissions(feats[i].features), ck.transitions);
    hyps[i] = {feats[i].id, to_string(dec.transcription, ck.alphabet)};
  });
  write_transcripts(out, hyps);
  return 0;
}

int cmd_eval(const std::string& hyp, const std::string& ref) {
  const auto h = read_transcripts(hyp);
  const auto r = read_transcripts(ref);
  const auto l = ler_counts(h, r);
  const auto w = wer_counts(h, r);
  std::cout << std::setprecision(10);
  std::cout << "metric\tedits\treference_length\trate\n";
  std::cout << "LER\t" << l.edits << '\t' << l.reference_length << '\t' << l.rate() << '\n';
  std::cout << "WER\t" << w.edits << '\t' << w.reference_length << '\t' << w.rate() << '\n';
  return 0;
}

struct InspectFlags {
  std::string checkpoint;
  std::string features;
  std::string transcripts;
  std::string reference;
  std::string noise;
  std::string id;
  int top_k = 10;
  L2GFlags l2g;
};

std::string find_text(const std::string& path, const std::string& id) {
  const auto m = by_id(read_transcripts(path), path);
  auto it = m.find(id);
  if (it == m.end()) {
    throw Error(ErrorCode::kIdMismatch, path + ": no utterance " + id);
  }
  return it->second;
}

int cmd_inspect(const InspectFlags& f) {
  const auto ck = load_checkpoint(f.checkpoint);
  const NoiseModel nm = load_noise(f.noise, f.l2g.renormalize, f.l2g.smooth, f.l2g.sub_only);
  if (nm.letters() != ck.alphabet.letters()) {
    throw Error(ErrorCode::kDimensionMismatch, "noise model letters differ from the model alphabet");
  }
  const FeatureRecord* rec = nullptr;
  const auto feats = read_features(f.features);
  for (const auto& r : feats) {
    if (r.id == f.id) {
      rec = &r;
    }
  }
  if (rec == nullptr) {
    throw Error(ErrorCode::kIdMismatch, f.features + ": no utterance " + f.id);
  }
  const std::string noisy = find_text(f.transcripts, f.id);
  std::optional<std::string> reference;
  if (!f.reference.empty()) {
    reference = find_text(f.reference, f.id);
  }
  const auto hyps = inspect_beam(
      encode(to_letters(noisy, ck.alphabet), ck.alphabet),
      ck.model.emissions(rec->features),
      ck.transitions,
      nm,
      f.l2g.config(),
      f.top_k,
      ck.alphabet,
      reference);
  std::cout << "transcription\tweight\tLER\n";
  for (const auto& h : hyps) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "\t%.2f\t%.1f%%\n", h.weight, 100.0 * h.ler);
    std::cout << h.text << buf;
  }
  return 0;
}

int cmd_oraclecheck(int instances, std::uint64_t seed, bool monotone) {
  print_report_header();
  bool ok = print_report(verify::check_asg_oracle(instances, seed));
  ok &= print_report(verify::check_noise_oracle(instances, seed + 1));
  ok &= print_report(verify::check_l2g_oracle(instances, seed + 2));
  ok &= print_report(verify::check_reduction(instances, seed + 3));
  if (monotone) {
    ok &= print_report(verify::check_beam_monotone(instances, seed + 4));
  }
  return ok ? 0 : kExitVerify;
}

int cmd_gradcheck(int instances, std::uint64_t seed) {
  print_report_header();
  bool ok = print_report(verify::check_asg_gradients(instances, seed));
  ok &= print_report(verify::check_l2g_gradients(instances, seed + 1));
  return ok ? 0 : kExitVerify;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidFactor:
      return kExitUsage;
    default:
      return kExitData;
  }
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise-aware ASG training and verification tools"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  std::function<int()> run;

  SyntheticSpec spec;
  std::uint64_t synth_seed = 1;
  std::string synth_prefix = "utt";
  std::string synth_features;
  std::string synth_transcripts;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic feature/transcript corpus");
  synth->add_option("--features-out", synth_features, "Feature file to write")->required();
  synth->add_option("--transcripts-out", synth_transcripts, "Transcript file to write")->required();
  synth->add_option("--utterances", spec.num_utterances, "Number of utterances")->capture_default_str();
  synth->add_option("--letters", spec.num_letters, "Letters besides space")->capture_default_str();
  synth->add_option("--min-letters", spec.min_letters, "Shortest utterance in letters")->capture_default_str();
  synth->add_option("--max-letters", spec.max_letters, "Longest utterance in letters")->capture_default_str();
  synth->add_option("--min-frames", spec.min_frames, "Fewest frames per letter")->capture_default_str();
  synth->add_option("--max-frames", spec.max_frames, "Most frames per letter")->capture_default_str();
  synth->add_option("--sigma", spec.sigma, "Feature noise standard deviation")->capture_default_str();
  bool no_space = false;
  synth->add_flag("--no-space", no_space, "Do not use a space letter");
  synth->add_option("--prefix", synth_prefix, "Utterance id prefix")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Random seed")->capture_default_str();
  synth->callback([&] {
    spec.with_space = !no_space;
    run = [&] { return cmd_synth(spec, synth_seed, synth_prefix, synth_features, synth_transcripts); };
  });

  std::string nm_letters;
  double nm_sub = 0.0;
  double nm_ins = 0.0;
  double nm_del = 0.0;
  std::string nm_out;
  auto* noise_model = app.add_subcommand("noise-model", "Write a noise model with uniform error rates");
  noise_model->add_option("--letters", nm_letters, "Letters, in token order")->required();
  noise_model->add_option("--sub", nm_sub, "Substitution probability per letter")->capture_default_str();
  noise_model->add_option("--ins", nm_ins, "Insertion probability per slot")->capture_default_str();
  noise_model->add_option("--del", nm_del, "Deletion probability per letter")->capture_default_str();
  noise_model->add_option("--out", nm_out, "Noise model JSON to write")->required();
  noise_model->callback([&] {
    run = [&] {
      const auto a = alphabet_from_string(nm_letters);
      save_noise_model(uniform_noise_model(a.letters(), nm_sub, nm_ins, nm_del), nm_out);
      return 0;
    };
  });

  std::string est_hyp;
  std::string est_ref;
  std::string est_letters;
  std::string est_out;
  double est_factor = 1.0;
  double est_smooth = 0.0;
  auto* est = app.add_subcommand("estimate-noise", "Estimate a noise model from aligned transcripts");
  est->add_option("--hyp", est_hyp, "Noisy transcripts")->required();
  est->add_option("--ref", est_ref, "Clean transcripts")->required();
  est->add_option("--letters", est_letters, "Letters, in token order (default: sorted letters seen)");
  est->add_option("--factor", est_factor, "Noise scaling factor")->capture_default_str();
  est->add_option("--smooth", est_smooth, "Additive smoothing")->capture_default_str();
  est->add_option("--out", est_out, "Noise model JSON to write")->required();
  est->callback([&] {
    run = [&] { return cmd_estimate(est_hyp, est_ref, est_letters, est_factor, est_smooth, est_out); };
  });

  std::string cor_noise;
  std::string cor_in;
  std::string cor_out;
  std::uint64_t cor_seed = 1;
  auto* cor = app.add_subcommand("corrupt", "Corrupt transcripts by sampling a noise model");
  cor->add_option("--noise", cor_noise, "Noise model JSON")->required();
  cor->add_option("--in", cor_in, "Clean transcripts")->required();
  cor->add_option("--out", cor_out, "Corrupted transcripts to write")->required();
  cor->add_option("--seed", cor_seed, "Random seed")->capture_default_str();
  cor->callback([&] { run = [&] { return cmd_corrupt(cor_noise, cor_in, cor_out, cor_seed); }; });

  TrainFlags tf;
  auto* train = app.add_subcommand("train", "Train the toy acoustic model");
  train->add_option("--features", tf.features, "Feature file or directory")->required();
  train->add_option("--transcripts", tf.transcripts, "Provided (possibly noisy) transcripts")->required();
  train->add_option("--loss", tf.loss, "asg or l2g")->capture_default_str()->check(CLI::IsMember({"asg", "l2g"}));
  train->add_option("--noise", tf.noise, "Noise model JSON (required for l2g)");
  train->add_option("--epochs", tf.epochs, "Epochs")->capture_default_str();
  train->add_option("--out", tf.out, "Checkpoint to write")->required();
  train->add_option("--init", tf.init, "Checkpoint to start from");
  train->add_option("--seed", tf.seed, "Seed for initialization and shuffling")->capture_default_str();
  train->add_option("--workers", tf.workers, "Utterance-level worker threads")->capture_default_str();
  train->add_option("--heldout-features", tf.heldout_features, "Held-out features");
  train->add_option("--heldout-transcripts", tf.heldout_transcripts, "Held-out clean transcripts");
  train->add_option("--metrics", tf.metrics, "Per-epoch metrics TSV to write");
  train->add_option("--letters", tf.letters, "Letters, in token order (new models only)");
  train->add_option("--hidden", tf.hidden, "Hidden units (new models only)")->capture_default_str();
  train->add_option("--batch-size", tf.batch_size, "Utterances per batch")->capture_default_str();
  train->add_option("--lr", tf.lr, "Model learning rate")->capture_default_str();
  train->add_option("--transition-lr", tf.transition_lr, "Transition learning rate")->capture_default_str();
  train->add_option("--clip", tf.clip, "Global gradient norm bound")->capture_default_str();
  tf.l2g.add(train);
  train->callback([&] { run = [&] { return cmd_train(tf); }; });

  std::string dec_ckpt;
  std::string dec_feats;
  std::string dec_out;
  int dec_workers = default_workers();
  auto* dec = app.add_subcommand("decode", "Viterbi-decode features into transcripts");
  dec->add_option("--checkpoint", dec_ckpt, "Checkpoint")->required();
  dec->add_option("--features", dec_feats, "Feature file or directory")->required();
  dec->add_option("--out", dec_out, "Transcripts to write")->required();
  dec->add_option("--workers", dec_workers, "Worker threads")->capture_default_str();
  dec->callback([&] { run = [&] { return cmd_decode(dec_ckpt, dec_feats, dec_out, dec_workers); }; });

  std::string ev_hyp;
  std::string ev_ref;
  auto* ev = app.add_subcommand("eval", "Letter and word error rates");
  ev->add_option("--hyp", ev_hyp, "Hypothesis transcripts")->required();
  ev->add_option("--ref", ev_ref, "Reference transcripts")->required();
  ev->callback([&] { run = [&] { return cmd_eval(ev_hyp, ev_ref); }; });

  InspectFlags inf;
  auto* ins = app.add_subcommand("inspect-beam", "Show the best clean transcriptions kept by the beam");
  ins->add_option("--checkpoint", inf.checkpoint, "Checkpoint")->required();
  ins->add_option("--features", inf.features, "Feature file or directory")->required();
  ins->add_option("--transcripts", inf.transcripts, "Noisy transcripts")->required();
  ins->add_option("--noise", inf.noise, "Noise model JSON")->required();
  ins->add_option("--id", inf.id, "Utterance id")->required();
  ins->add_option("--reference", inf.reference, "Clean transcripts for the LER column");
  ins->add_option("--top-k", inf.top_k, "Rows to print")->capture_default_str();
  inf.l2g.add(ins);
  ins->callback([&] { run = [&] { return cmd_inspect(inf); }; });

  int oc_instances = 1000;
  std::uint64_t oc_seed = 1;
  bool oc_monotone = false;
  auto* oc = app.add_subcommand("oraclecheck", "Compare the dynamic programs against brute force");
  oc->add_option("--instances", oc_instances, "Random instances per check")->capture_default_str();
  oc->add_option("--seed", oc_seed, "Random seed")->capture_default_str();
  oc->add_flag("--beam-monotone", oc_monotone, "Also check that the beam score grows with the beam size");
  oc->callback([&] { run = [&] { return cmd_oraclecheck(oc_instances, oc_seed, oc_monotone); }; });

  int gc_instances = 50;
  std::uint64_t gc_seed = 1;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference checks of the loss gradients");
  gc->add_option("--instances", gc_instances, "Random instances per check")->capture_default_str();
  gc->add_option("--seed", gc_seed, "Random seed")->capture_default_str();
  gc->callback([&] { run = [&] { return cmd_gradcheck(gc_instances, gc_seed); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  try {
    return run();
  } catch (const UsageError& e) {
    std::cerr << "error\tUsage\t" << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error\t" << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error\tInternal\t" << e.what() << '\n';
    return kExitData;
  }
}
