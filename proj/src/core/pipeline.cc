// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "core/pipeline.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>

#include "core/checkpoint.h"
#include "core/error.h"
#include "core/metrics.h"
#include "core/rng.h"
#include "core/tokens.h"
#include "json.hpp"

namespace streamkd {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

const std::vector<Stage>& StageOrder() {
  static const std::vector<Stage> order = {
      Stage::kData, Stage::kPretrain, Stage::kS,      Stage::kT, Stage::kKD,
      Stage::kN,    Stage::kLm,       Stage::kPseudo, Stage::kST};
  return order;
}

const std::vector<Stage>& ReportedStages() {
  static const std::vector<Stage> order = {Stage::kS, Stage::kT,      Stage::kKD,
                                           Stage::kN, Stage::kPseudo, Stage::kST};
  return order;
}

std::string StageName(Stage s) {
  switch (s) {
    case Stage::kData: return "data";
    case Stage::kPretrain: return "P";
    case Stage::kS: return "S";
    case Stage::kT: return "T";
    case Stage::kKD: return "KD";
    case Stage::kN: return "N";
    case Stage::kLm: return "LM";
    case Stage::kPseudo: return "U'";
    case Stage::kST: return "ST";
  }
  return "?";
}

Stage ParseStage(const std::string& name) {
  for (Stage s : StageOrder()) {
    if (StageName(s) == name) return s;
  }
  if (name == "U_prime" || name == "Uprime") return Stage::kPseudo;
  Fail(ErrorCode::kInvalidArgument, "unknown stage '" + name + "'");
}

std::string StageFile(Stage s) {
  switch (s) {
    case Stage::kData: return "data.skd";
    case Stage::kLm: return "lm.txt";
    case Stage::kPseudo: return "U_prime.skd";
    default: return StageName(s) + ".ckpt";
  }
}

namespace {

std::string FileStem(Stage s) {
  return s == Stage::kPseudo ? "U_prime" : StageName(s);
}

uint64_t StageTag(Stage s) { return 100 + static_cast<uint64_t>(s); }

}  // namespace

std::vector<Stage> StageInputs(Stage s) {
  switch (s) {
    case Stage::kData: return {};
    case Stage::kPretrain: return {Stage::kData};
    case Stage::kS: return {Stage::kData, Stage::kPretrain};
    case Stage::kT: return {Stage::kData, Stage::kPretrain, Stage::kS};
    case Stage::kKD: return {Stage::kData, Stage::kPretrain, Stage::kS, Stage::kT};
    case Stage::kN: return {Stage::kData, Stage::kPretrain};
    case Stage::kLm: return {Stage::kData};
    case Stage::kPseudo: return {Stage::kData, Stage::kN, Stage::kLm};
    case Stage::kST: return {Stage::kData, Stage::kKD, Stage::kPseudo};
  }
  return {};
}

std::string TableModel(Stage s) {
  switch (s) {
    case Stage::kS: return "S4";
    case Stage::kT: return "T4";
    case Stage::kKD: return "S5";
    case Stage::kN: return "N1";
    case Stage::kST: return "S7";
    default: return "";
  }
}

EncoderConfig EncoderFromConfig(const Config& c) {
  EncoderConfig e;
  e.input_dim = c.GetSize("task.feature_dim");
  e.layers = c.GetSize("model.layers");
  e.model_dim = c.GetSize("model.dim");
  e.heads = c.GetSize("model.heads");
  e.ffn_dim = c.GetSize("model.ffn");
  e.vocab_size = static_cast<size_t>(DefaultVocabulary().size());
  e.norm = ParseFrontendNorm(c.Get("model.norm"));
  e.conv = ParseConvMode(c.Get("model.conv"));
  e.kernel = c.GetSize("model.kernel");
  e.dropout = c.GetDouble("model.dropout");
  e.Validate();
  return e;
}

MaskSpec MaskFromConfig(const Config& c) {
  MaskSpec m;
  m.variant = ParseVariant(c.Get("mask.variant"));
  m.chunk_frames = static_cast<int>(c.GetInt("mask.chunk_frames"));
  m.future_frames = static_cast<int>(c.GetInt("mask.future_frames"));
  m.right_frames = static_cast<int>(c.GetInt("mask.right_frames"));
  m.left_limit = static_cast<int>(c.GetInt("mask.left_limit"));
  m.frame_ms = c.GetDouble("mask.frame_ms");
  // Fields that do not belong to the variant are ignored, not rejected.
  if (m.variant != Variant::kChunk && m.variant != Variant::kBlock) m.chunk_frames = 0;
  if (m.variant != Variant::kBlock) m.future_frames = 0;
  if (m.variant != Variant::kTimeRestricted) m.right_frames = 0;
  if (m.variant == Variant::kBidirectional) m.left_limit = -1;
  m.Validate();
  return m;
}

SyntheticTask TaskFromConfig(const Config& c) {
  SyntheticTask t;
  t.feature_dim = c.GetSize("task.feature_dim");
  t.lexicon = c.GetList("task.lexicon");
  t.min_words = c.GetSize("task.min_words");
  t.max_words = c.GetSize("task.max_words");
  t.min_frames_per_token = c.GetSize("task.min_frames");
  t.max_frames_per_token = c.GetSize("task.max_frames");
  t.noise = c.GetDouble("task.noise");
  t.coarticulation = c.GetDouble("task.coarticulation");
  t.edge_silence = c.GetSize("task.edge_silence");
  t.seed = static_cast<uint64_t>(c.GetInt("seed"));
  t.Validate();
  return t;
}

TrainConfig TrainFromConfig(const Config& c) {
  TrainConfig t;
  t.peak_lr = c.GetDouble("train.peak_lr");
  t.batch_size = c.GetSize("train.batch");
  t.warmup_fraction = c.GetDouble("train.warmup");
  t.constant_fraction = c.GetDouble("train.constant");
  t.beta1 = c.GetDouble("train.beta1");
  t.beta2 = c.GetDouble("train.beta2");
  t.eps = c.GetDouble("train.eps");
  t.clip_norm = c.GetDouble("train.clip");
  t.seed = static_cast<uint64_t>(c.GetInt("seed"));
  t.Validate();
  return t;
}

DecodeConfig DecodeFromConfig(const Config& c) {
  DecodeConfig d;
  d.beam_size = c.GetSize("decode.beam");
  d.lm_weight = c.GetDouble("decode.lm_weight");
  d.word_insertion_penalty = c.GetDouble("decode.penalty");
  d.Validate();
  return d;
}

NgramOptions LmFromConfig(const Config& c) {
  NgramOptions o;
  o.order = static_cast<int>(c.GetInt("lm.order"));
  o.smoothing = c.GetDouble("lm.smoothing");
  o.boundaries = c.GetBool("lm.boundaries");
  return o;
}

PipelineSettings PipelineSettings::FromConfig(const Config& c) {
  PipelineSettings s;
  s.seed = static_cast<uint64_t>(c.GetInt("seed"));
  s.jobs = std::max<size_t>(1, c.GetSize("jobs"));
  s.task = TaskFromConfig(c);
  s.sizes.labeled = c.GetSize("data.labeled");
  s.sizes.unlabeled = c.GetSize("data.unlabeled");
  s.sizes.dev = c.GetSize("data.dev");
  s.encoder = EncoderFromConfig(c);
  s.streaming = MaskFromConfig(c);
  Require(s.streaming.variant != Variant::kBidirectional,
          "pipeline: mask.variant must be a streaming variant");
  s.base = TrainFromConfig(c);
  for (Stage st : {Stage::kS, Stage::kT, Stage::kKD, Stage::kN, Stage::kST}) {
    s.updates[st] = c.GetSize(StageName(st) + ".updates");
  }
  s.scratch_updates = c.GetSize("scratch.updates");
  s.alpha = c.GetDouble("guide.alpha");
  Require(s.alpha >= 0.0, "pipeline: guide.alpha must be >= 0");
  s.distill = c.Get("distill.layers") == "auto"
                  ? DistillSpec::Default(s.encoder.layers)
                  : DistillSpec::Parse(c.Get("distill.layers"));
  s.distill.Validate(s.encoder.layers);
  s.head_from = c.Get("distill.head_from");
  Require(s.head_from == "S" || s.head_from == "T",
          "pipeline: distill.head_from must be S or T");
  s.pretrain_mode = c.Get("pretrain.mode");
  Require(s.pretrain_mode == "random" || s.pretrain_mode == "contrastive",
          "pipeline: pretrain.mode must be random or contrastive");
  s.pretrain_updates = c.GetSize("pretrain.updates");
  s.contrastive.mask_probability = c.GetDouble("pretrain.mask_prob");
  s.contrastive.distractors = c.GetSize("pretrain.distractors");
  s.lm = LmFromConfig(c);
  s.lm_corpus = c.GetSize("lm.corpus");
  s.decode = DecodeFromConfig(c);
  return s;
}

TrainConfig PipelineSettings::StageTrain(Stage s) const {
  TrainConfig t = base;
  t.seed = MixSeed(seed, StageTag(s));
  auto it = updates.find(s);
  t.updates = it != updates.end() ? it->second : pretrain_updates;
  return t;
}

std::vector<std::string> LmSymbols(const std::string& text) {
  const Vocabulary& vocab = DefaultVocabulary();
  std::vector<std::string> out;
  for (int id : vocab.Encode(text)) out.push_back(vocab.Symbol(id));
  return out;
}

std::vector<std::string> LmVocabulary() {
  const auto& all = DefaultVocabulary().symbols();
  return std::vector<std::string>(all.begin() + 1, all.end());
}

NgramModel TrainCharLm(const std::vector<std::string>& texts,
                       const NgramOptions& options) {
  std::vector<std::vector<std::string>> corpus;
  corpus.reserve(texts.size());
  for (const std::string& t : texts) corpus.push_back(LmSymbols(t));
  return NgramModel::Train(corpus, LmVocabulary(), options);
}

std::string StageReport::ToJson() const {
  Json j;
  j["stage"] = stage;
  j["table_model"] = table_model;
  j["inputs"] = inputs;
  j["artifact"] = artifact;
  j["digest"] = digest;
  j["train"] = train;
  j["mask"] = mask;
  j["decode"] = decode;
  j["resumed"] = resumed;
  j["dev_token_error_rate"] = dev_ter;
  j["utterances_in"] = utterances_in;
  j["skipped_unsatisfiable"] = skipped;
  j["dropped_empty"] = dropped;
  j["updates"] = updates;
  j["wall_seconds"] = seconds;
  j["metrics"] = metrics;
  j["notes"] = notes;
  j["losses"] = losses;
  j["lrs"] = lrs;
  return j.dump(2) + "\n";
}

StageReport StageReport::FromJson(const std::string& text) {
  StageReport r;
  try {
    const Json j = Json::parse(text);
    r.stage = j.at("stage").get<std::string>();
    r.table_model = j.at("table_model").get<std::string>();
    r.inputs = j.at("inputs").get<std::vector<std::string>>();
    r.artifact = j.at("artifact").get<std::string>();
    r.digest = j.at("digest").get<std::string>();
    r.train = j.at("train").get<std::string>();
    r.mask = j.at("mask").get<std::string>();
    r.decode = j.at("decode").get<std::string>();
    r.resumed = j.at("resumed").get<bool>();
    r.dev_ter = j.at("dev_token_error_rate").get<double>();
    r.utterances_in = j.at("utterances_in").get<size_t>();
    r.skipped = j.at("skipped_unsatisfiable").get<size_t>();
    r.dropped = j.at("dropped_empty").get<size_t>();
    r.updates = j.at("updates").get<size_t>();
    r.seconds = j.at("wall_seconds").get<double>();
    r.metrics = j.at("metrics").get<std::map<std::string, double>>();
    r.notes = j.at("notes").get<std::vector<std::string>>();
    r.losses = j.at("losses").get<std::vector<double>>();
    r.lrs = j.at("lrs").get<std::vector<double>>();
  } catch (const Json::exception& e) {
    Fail(ErrorCode::kFormat, std::string("stage report: ") + e.what());
  }
  return r;
}

std::string StageReport::LossCsv() const {
  std::string out = "update,lr,loss\n";
  char buf[96];
  for (size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", i + 1,
                  i < lrs.size() ? lrs[i] : 0.0, losses[i]);
    out += buf;
  }
  return out;
}

namespace {

std::vector<Utterance> Concat(const std::vector<Utterance>& a,
                              const std::vector<Utterance>& b) {
  std::vector<Utterance> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

class Runner {
 public:
  Runner(const Config& config, std::string dir, const PipelineOptions& options)
      : config_(config),
        settings_(PipelineSettings::FromConfig(config)),
        dir_(std::move(dir)),
        options_(options) {}

  const PipelineSettings& settings() const { return settings_; }

  std::string Path(Stage s) const { return (fs::path(dir_) / StageFile(s)).string(); }
  std::string ReportPath(Stage s) const {
    return (fs::path(dir_) / (FileStem(s) + ".report.json")).string();
  }
  bool Exists(Stage s) const { return fs::exists(Path(s)); }

  void Log(const std::string& line) const {
    if (options_.log) options_.log(line);
  }

  // Loads an input artifact, or fails naming the stage that makes it.
  void Need(Stage s) {
    if (Loaded(s)) return;
    if (!Exists(s)) {
      Fail(ErrorCode::kMissingStage, "missing upstream artifact of stage " +
                                         StageName(s) + ": " + Path(s));
    }
    switch (s) {
      case Stage::kData:
        data_ = LoadDataset(Path(s));
        break;
      case Stage::kLm:
        lm_ = NgramModel::Load(Path(s));
        break;
      case Stage::kPseudo:
        pseudo_ = DeserializeDataset(ReadFileBytes(Path(s)));
        break;
      default:
        models_[s] = LoadCheckpoint(Path(s), &settings_.encoder);
        break;
    }
  }

  const ModelParams& Model(Stage s) {
    Need(s);
    return models_.at(s);
  }

  StageReport Plan(Stage s) const {
    StageReport r;
    r.stage = StageName(s);
    r.table_model = TableModel(s);
    for (Stage in : StageInputs(s)) r.inputs.push_back(StageName(in));
    r.artifact = StageFile(s);
    if (s == Stage::kPseudo) {
      r.decode = settings_.decode.Serialize();
    } else {
      const TrainConfig t = settings_.StageTrain(s);
      r.train = t.Serialize();
      r.updates = t.updates;
      r.mask = FormatMaskSpec(s == Stage::kT || s == Stage::kN
                                  ? MaskSpec::Bidirectional()
                                  : settings_.streaming);
    }
    return r;
  }

  // Computes and saves stage `s`; returns its report (empty stage name for
  // unreported artifacts).
  StageReport Run(Stage s) {
    for (Stage in : StageInputs(s)) Need(in);
    Log("running " + StageName(s));
    const auto start = std::chrono::steady_clock::now();
    StageReport r = Plan(s);
    const size_t jobs = settings_.jobs;
    switch (s) {
      case Stage::kData: {
        data_ = GenerateDataset(settings_.task, settings_.sizes);
        SaveDataset(Path(s), *data_);
        return {};
      }
      case Stage::kPretrain: {
        ModelParams p = InitParams(settings_.encoder,
                                   MixSeed(settings_.seed, StageTag(s)));
        if (settings_.pretrain_mode == "contrastive") {
          p = ContrastivePretrain(p, Concat(data_->labeled, data_->unlabeled),
                                  settings_.contrastive, settings_.StageTrain(s),
                                  jobs)
                  .model;
        }
        SaveCheckpoint(p, Path(s));
        models_[s] = std::move(p);
        return {};
      }
      case Stage::kS: {
        Absorb(r, FinetuneCtc(Model(Stage::kPretrain), settings_.streaming,
                              data_->labeled, settings_.StageTrain(s), jobs));
        r.notes.push_back("left context unlimited (mask.left_limit < 0)");
        break;
      }
      case Stage::kT: {
        Absorb(r, TrainGuidedTeacher(Model(Stage::kPretrain), Model(Stage::kS),
                                     data_->labeled, settings_.alpha,
                                     settings_.StageTrain(s), jobs));
        char buf[64];
        std::snprintf(buf, sizeof(buf), "guide.alpha=%.17g", settings_.alpha);
        r.notes.push_back(buf);
        break;
      }
      case Stage::kKD: {
        const ModelParams& head = Model(settings_.head_from == "T" ? Stage::kT : Stage::kS);
        Absorb(r, Distill(Model(Stage::kPretrain), Model(Stage::kT), head,
                          settings_.streaming,
                          Concat(data_->labeled, data_->unlabeled),
                          settings_.distill, settings_.StageTrain(s), jobs));
        r.notes.push_back("distill.layers=" + settings_.distill.Serialize() +
                          " (mean squared error per layer)");
        r.notes.push_back("student head from " + settings_.head_from);
        break;
      }
      case Stage::kN: {
        Absorb(r, FinetuneCtc(Model(Stage::kPretrain), MaskSpec::Bidirectional(),
                              data_->labeled, settings_.StageTrain(s), jobs));
        break;
      }
      case Stage::kLm: {
        std::vector<std::string> texts;
        for (const Utterance& u : data_->labeled) texts.push_back(u.label);
        for (std::string& t : SampleCorpus(settings_.task, settings_.lm_corpus,
                                           MixSeed(settings_.seed, StageTag(s)))) {
          texts.push_back(std::move(t));
        }
        lm_ = TrainCharLm(texts, settings_.lm);
        lm_->Save(Path(s));
        return {};
      }
      case Stage::kPseudo: {
        PseudoLabelOutcome p = PseudoLabel(Model(Stage::kN), &*lm_,
                                           data_->unlabeled, settings_.decode, jobs);
        pseudo_ = std::move(p.labeled);
        const std::string bytes = SerializeDataset(*pseudo_);
        WriteFileBytes(Path(s), bytes);
        r.digest = Sha256Hex(bytes);
        r.utterances_in = data_->unlabeled.size();
        r.dropped = p.dropped;
        ErrorRate rate;
        const Vocabulary& vocab = DefaultVocabulary();
        for (const Utterance& u : *pseudo_) {
          if (u.has_reference) rate.AddTokens(vocab.Encode(u.reference), vocab.Encode(u.label));
        }
        if (rate.reference_units() > 0) r.metrics["pseudo_label_ter"] = rate.Rate();
        r.metrics["labeled_out"] = static_cast<double>(pseudo_->size());
        r.notes.push_back(
            "pseudo-labels decoded with the non-self-trained LM weight setting");
        break;
      }
      case Stage::kST: {
        Absorb(r, FinetuneCtc(Model(Stage::kKD), settings_.streaming,
                              Concat(data_->labeled, *pseudo_),
                              settings_.StageTrain(s), jobs));
        r.metrics["scratch_budget_updates"] =
            static_cast<double>(settings_.scratch_updates);
        r.notes.push_back("single self-training iteration");
        break;
      }
    }
    if (s != Stage::kPseudo) {
      SaveCheckpoint(models_.at(s), Path(s));
      r.digest = CheckpointDigest(models_.at(s));
      r.dev_ter = TokenErrorRate(models_.at(s), data_->dev, jobs);
    }
    AddAgreement(s, r);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    WriteFileBytes(ReportPath(s), r.ToJson());
    WriteFileBytes((fs::path(dir_) / (FileStem(s) + ".loss.csv")).string(), r.LossCsv());
    Log(StageName(s) + " done in " + std::to_string(r.seconds) + " s");
    return r;
  }

  StageReport Resumed(Stage s) {
    if (fs::exists(ReportPath(s))) {
      StageReport r = StageReport::FromJson(ReadFileBytes(ReportPath(s)));
      r.resumed = true;
      return r;
    }
    // Artifact without a report: rebuild what can be measured.
    StageReport r = Plan(s);
    r.resumed = true;
    Need(Stage::kData);
    if (s == Stage::kPseudo) {
      Need(s);
      r.digest = Sha256Hex(ReadFileBytes(Path(s)));
      r.utterances_in = data_->unlabeled.size();
      r.dropped = data_->unlabeled.size() - std::min(data_->unlabeled.size(), pseudo_->size());
    } else {
      r.digest = CheckpointDigest(Model(s));
      r.dev_ter = TokenErrorRate(Model(s), data_->dev, settings_.jobs);
    }
    r.notes.push_back("report rebuilt from the saved artifact");
    return r;
  }

  const DataSplit& Data() {
    Need(Stage::kData);
    return *data_;
  }

 private:
  bool Loaded(Stage s) const {
    switch (s) {
      case Stage::kData: return data_.has_value();
      case Stage::kLm: return lm_.has_value();
      case Stage::kPseudo: return pseudo_.has_value();
      default: return models_.count(s) > 0;
    }
  }

  void Absorb(StageReport& r, StageOutcome o) {
    r.losses = std::move(o.losses);
    r.lrs = std::move(o.lrs);
    r.utterances_in = o.utterances + o.skipped;
    r.skipped = o.skipped;
    models_[ParseStage(r.stage)] = std::move(o.model);
  }

  void AddAgreement(Stage s, StageReport& r) {
    if (s == Stage::kT) {
      r.metrics["frame_agreement_with_S"] =
          MeanFrameAgreement(models_.at(s), Model(Stage::kS), data_->dev, settings_.jobs);
    } else if (s == Stage::kKD || s == Stage::kST || s == Stage::kN) {
      r.metrics["frame_agreement_with_T"] =
          MeanFrameAgreement(models_.at(s), Model(Stage::kT), data_->dev, settings_.jobs);
    }
  }

  Config config_;
  PipelineSettings settings_;
  std::string dir_;
  PipelineOptions options_;
  std::optional<DataSplit> data_;
  std::optional<NgramModel> lm_;
  std::optional<std::vector<Utterance>> pseudo_;
  std::map<Stage, ModelParams> models_;
};

std::string PlanLine(const StageReport& r) {
  std::string inputs;
  for (const std::string& s : r.inputs) inputs += (inputs.empty() ? "" : ",") + s;
  std::string line = r.stage + "\tinputs=" + inputs + "\tartifact=" + r.artifact;
  if (!r.mask.empty()) line += "\tmask=" + r.mask;
  if (!r.train.empty()) line += "\ttrain=" + r.train;
  if (!r.decode.empty()) line += "\tdecode=" + r.decode;
  return line;
}

}  // namespace

PipelineResult RunTwoStage(const Config& config, const std::string& out_dir,
                           const PipelineOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  Runner runner(config, out_dir, options);
  PipelineResult result;
  for (Stage s : ReportedStages()) result.plan.push_back(PlanLine(runner.Plan(s)));
  if (options.dry_run) return result;

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) Fail(ErrorCode::kIo, "cannot create " + out_dir + ": " + ec.message());
  WriteFileBytes((fs::path(out_dir) / "config.txt").string(), config.Resolved());

  std::map<Stage, StageReport> reports;
  bool recompute = !options.resume;
  for (Stage s : StageOrder()) {
    if (!recompute && runner.Exists(s)) {
      runner.Log("keeping " + StageName(s));
      continue;
    }
    recompute = true;
    result.rerun.push_back(StageName(s));
    StageReport r = runner.Run(s);
    if (!r.stage.empty()) reports[s] = std::move(r);
  }
  for (Stage s : ReportedStages()) {
    if (!reports.count(s)) reports[s] = runner.Resumed(s);
    result.reports.push_back(reports[s]);
  }

  const PipelineSettings& st = runner.settings();
  const DataSplit& data = runner.Data();
  result.ter_s = reports[Stage::kS].dev_ter;
  result.ter_t = reports[Stage::kT].dev_ter;
  result.ter_kd = reports[Stage::kKD].dev_ter;
  result.ter_n = reports[Stage::kN].dev_ter;
  result.ter_st = reports[Stage::kST].dev_ter;
  result.agree_s_t = MeanFrameAgreement(runner.Model(Stage::kS),
                                        runner.Model(Stage::kT), data.dev, st.jobs);
  result.agree_kd_t = MeanFrameAgreement(runner.Model(Stage::kKD),
                                         runner.Model(Stage::kT), data.dev, st.jobs);
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  Json j;
  j["config_digest"] = config.Digest();
  j["seed"] = st.seed;
  j["pretrained_model"] = st.pretrain_mode;
  j["streaming_mask"] = FormatMaskSpec(st.streaming);
  j["streaming_eil_ms"] = Eil(st.streaming, st.encoder.layers);
  j["rerun"] = result.rerun;
  Json ter;
  for (Stage s : ReportedStages()) {
    if (reports[s].dev_ter >= 0) ter[StageName(s)] = reports[s].dev_ter;
  }
  j["dev_token_error_rate"] = ter;
  j["frame_agreement"] = {{"S_vs_T", result.agree_s_t}, {"KD_vs_T", result.agree_kd_t}};
  Json corr;
  for (Stage s : ReportedStages()) {
    if (!TableModel(s).empty()) corr[TableModel(s)] = StageName(s);
  }
  j["table_models"] = corr;
  const StageReport& pl = reports[Stage::kPseudo];
  const size_t labeled_out = pl.utterances_in - pl.dropped;
  j["conservation"] = {
      {"labeled_in", data.labeled.size()},
      {"unlabeled_in", data.unlabeled.size()},
      {"S_consumed", reports[Stage::kS].utterances_in},
      {"KD_consumed", reports[Stage::kKD].utterances_in},
      {"pseudo_labeled", labeled_out},
      {"pseudo_dropped", pl.dropped},
      {"ST_consumed", reports[Stage::kST].utterances_in},
      {"balanced", reports[Stage::kS].utterances_in == data.labeled.size() &&
                       reports[Stage::kKD].utterances_in ==
                           data.labeled.size() + data.unlabeled.size() &&
                       labeled_out + pl.dropped == data.unlabeled.size() &&
                       reports[Stage::kST].utterances_in ==
                           data.labeled.size() + labeled_out}};
  size_t total = 0;
  Json budgets;
  for (Stage s : ReportedStages()) {
    budgets[StageName(s)] = reports[s].updates;
    total += reports[s].updates;
  }
  budgets["total"] = total;
  budgets["scratch_comparison"] = st.scratch_updates;
  j["update_budgets"] = budgets;
  j["decode"] = st.decode.Serialize();
  j["wall_seconds"] = result.seconds;
  result.summary_json = j.dump(2) + "\n";
  WriteFileBytes((fs::path(out_dir) / "summary.json").string(), result.summary_json);
  return result;
}

StageReport RunSingleStage(const Config& config, const std::string& out_dir,
                           Stage stage, const PipelineOptions& options) {
  Runner runner(config, out_dir, options);
  if (options.dry_run) return runner.Plan(stage);
  return runner.Run(stage);
}

}  // namespace streamkd
