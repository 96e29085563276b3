// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "streamkd/streamkd.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <map>
#include <memory>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include "core/beam_search.h"
#include "core/checkpoint.h"
#include "core/config.h"
#include "core/ctc.h"
#include "core/dataset.h"
#include "core/encoder.h"
#include "core/error.h"
#include "core/masking.h"
#include "core/metrics.h"
#include "core/ngram.h"
#include "core/pipeline.h"
#include "core/selfcheck.h"
#include "core/trainer.h"

using namespace streamkd;

struct skd_config {
  Config config;
};
struct skd_dataset {
  DataSplit data;
};
struct skd_lm {
  NgramModel model;
};
struct skd_model {
  ModelParams params;
};
struct skd_report {
  std::string json;
  std::string text;
  std::map<std::string, double> metrics;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
skd_status Guard(F&& fn) {
  g_last_error.clear();
  try {
    fn();
    return SKD_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return static_cast<skd_status>(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return SKD_INTERNAL;
}

void NotNull(const void* p, const char* what) {
  if (p == nullptr) Fail(ErrorCode::kInvalidArgument, std::string(what) + " is NULL");
}

char* Dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void Out(char** dst, const std::string& s) {
  NotNull(dst, "output string");
  *dst = Dup(s);
}

MaskSpec ToSpec(const skd_mask_spec* s) {
  NotNull(s, "mask spec");
  if (s->variant < SKD_BIDIRECTIONAL || s->variant > SKD_BLOCK) {
    Fail(ErrorCode::kInvalidArgument, "mask: unknown variant " + std::to_string(s->variant));
  }
  MaskSpec m;
  m.variant = static_cast<Variant>(s->variant);
  m.chunk_frames = s->chunk_frames;
  m.future_frames = s->future_frames;
  m.right_frames = s->right_frames;
  m.left_limit = s->left_limit;
  m.frame_ms = s->frame_ms;
  m.Validate();
  return m;
}

void FromSpec(const MaskSpec& m, skd_mask_spec* s) {
  s->variant = static_cast<int>(m.variant);
  s->chunk_frames = m.chunk_frames;
  s->future_frames = m.future_frames;
  s->right_frames = m.right_frames;
  s->left_limit = m.left_limit;
  s->frame_ms = m.frame_ms;
}

const std::vector<Utterance>& SplitOf(const DataSplit& d, int split) {
  switch (split) {
    case SKD_SPLIT_LABELED: return d.labeled;
    case SKD_SPLIT_UNLABELED: return d.unlabeled;
    case SKD_SPLIT_DEV: return d.dev;
  }
  Fail(ErrorCode::kInvalidArgument, "unknown split " + std::to_string(split));
}

size_t Jobs(const Config& c) { return std::max<size_t>(1, c.GetSize("jobs")); }

TrainConfig StageTrain(const Config& c, size_t updates) {
  TrainConfig t = TrainFromConfig(c);
  t.updates = updates;
  return t;
}

void Emit(skd_report** out, StageReport r, const DataSplit* data,
          const ModelParams* model, size_t jobs) {
  if (out == nullptr) return;
  if (model != nullptr) {
    r.digest = CheckpointDigest(*model);
    if (data != nullptr && !data->dev.empty()) {
      r.dev_ter = TokenErrorRate(*model, data->dev, jobs);
    }
  }
  auto rep = std::make_unique<skd_report>();
  rep->json = r.ToJson();
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "stage %s: %zu utterances in, %zu skipped, %zu dropped, %zu updates",
                r.stage.c_str(), r.utterances_in, r.skipped, r.dropped, r.updates);
  rep->text = buf;
  if (!r.losses.empty()) {
    std::snprintf(buf, sizeof(buf), "\nloss first %.6f last %.6f", r.losses.front(),
                  r.losses.back());
    rep->text += buf;
  }
  if (r.dev_ter >= 0) {
    std::snprintf(buf, sizeof(buf), "\ndev token error rate %.4f", r.dev_ter);
    rep->text += buf;
    rep->metrics["dev_ter"] = r.dev_ter;
  }
  if (!r.digest.empty()) rep->text += "\ndigest " + r.digest;
  rep->text += "\n";
  rep->metrics["utterances_in"] = static_cast<double>(r.utterances_in);
  rep->metrics["skipped"] = static_cast<double>(r.skipped);
  rep->metrics["dropped"] = static_cast<double>(r.dropped);
  if (!r.losses.empty()) {
    rep->metrics["first_loss"] = r.losses.front();
    rep->metrics["last_loss"] = r.losses.back();
  }
  for (const auto& [k, v] : r.metrics) rep->metrics[k] = v;
  *out = rep.release();
}

StageReport FromOutcome(const std::string& stage, const StageOutcome& o,
                        const TrainConfig& t, const MaskSpec& mask) {
  StageReport r;
  r.stage = stage;
  r.train = t.Serialize();
  r.mask = FormatMaskSpec(mask);
  r.losses = o.losses;
  r.lrs = o.lrs;
  r.utterances_in = o.utterances + o.skipped;
  r.skipped = o.skipped;
  r.updates = t.updates;
  r.seconds = o.seconds;
  return r;
}

std::vector<Utterance> Concat(const std::vector<Utterance>& a,
                              const std::vector<Utterance>& b) {
  std::vector<Utterance> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

struct Line {
  std::string id;
  std::string text;
};

std::vector<Line> ParseLines(const char* text) {
  std::vector<Line> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find('\t');
    if (first == std::string::npos) {
      out.push_back({"", line});
    } else {
      out.push_back({line.substr(0, first), line.substr(line.rfind('\t') + 1)});
    }
  }
  while (!out.empty() && out.back().id.empty() && out.back().text.empty()) out.pop_back();
  return out;
}

}  // namespace

extern "C" {

const char* skd_version(void) { return "1.0.0"; }

const char* skd_status_name(skd_status status) {
  switch (status) {
    case SKD_OK: return "ok";
    case SKD_INVALID_ARGUMENT: return "invalid argument";
    case SKD_IO: return "i/o error";
    case SKD_FORMAT: return "format error";
    case SKD_CONFIG_MISMATCH: return "config mismatch";
    case SKD_UNSATISFIABLE: return "unsatisfiable target";
    case SKD_EMPTY_RECEPTION_FIELD: return "empty reception field";
    case SKD_NUMERIC: return "numeric error";
    case SKD_MISSING_STAGE: return "missing stage";
    case SKD_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* skd_last_error(void) { return g_last_error.c_str(); }

void skd_free_string(char* s) { std::free(s); }

skd_status skd_config_new(skd_config** out) {
  return Guard([&] {
    NotNull(out, "out");
    *out = new skd_config{};
  });
}

void skd_config_free(skd_config* config) { delete config; }

skd_status skd_config_merge_file(skd_config* config, const char* path) {
  return Guard([&] {
    NotNull(config, "config");
    NotNull(path, "path");
    config->config.Merge(ReadFileBytes(path), path);
  });
}

skd_status skd_config_set(skd_config* config, const char* key, const char* value) {
  return Guard([&] {
    NotNull(config, "config");
    NotNull(key, "key");
    NotNull(value, "value");
    config->config.Set(key, value);
  });
}

skd_status skd_config_get(const skd_config* config, const char* key, char** value) {
  return Guard([&] {
    NotNull(config, "config");
    NotNull(key, "key");
    Out(value, config->config.Get(key));
  });
}

skd_status skd_config_resolved(const skd_config* config, char** text) {
  return Guard([&] {
    NotNull(config, "config");
    Out(text, config->config.Resolved());
  });
}

skd_status skd_config_digest(const skd_config* config, char** hex) {
  return Guard([&] {
    NotNull(config, "config");
    Out(hex, config->config.Digest());
  });
}

skd_status skd_config_keys(char** text) {
  return Guard([&] {
    std::string out;
    for (const ConfigKey& k : ConfigRegistry()) {
      out += k.name + "\t" + k.default_value + "\t" + k.help + "\n";
    }
    Out(text, out);
  });
}

void skd_mask_spec_init(skd_mask_spec* spec) {
  if (spec != nullptr) FromSpec(MaskSpec::Bidirectional(), spec);
}

skd_status skd_parse_variant(const char* name, int* variant) {
  return Guard([&] {
    NotNull(name, "name");
    NotNull(variant, "variant");
    *variant = static_cast<int>(ParseVariant(name));
  });
}

skd_status skd_mask_spec_from_config(const skd_config* config, skd_mask_spec* spec) {
  return Guard([&] {
    NotNull(config, "config");
    NotNull(spec, "spec");
    FromSpec(MaskFromConfig(config->config), spec);
  });
}

skd_status skd_mask_spec_format(const skd_mask_spec* spec, char** text) {
  return Guard([&] { Out(text, FormatMaskSpec(ToSpec(spec))); });
}

skd_status skd_eil_ms(const skd_mask_spec* spec, size_t layers, double* eil_ms) {
  return Guard([&] {
    NotNull(eil_ms, "eil_ms");
    *eil_ms = Eil(ToSpec(spec), layers);
  });
}

skd_status skd_latency_report(const skd_mask_spec* spec, size_t layers,
                              char** table, char** line) {
  return Guard([&] {
    const LatencyReport r = AnalyzeLatency(ToSpec(spec), layers);
    std::string t = FormatLatencyTable(r), l = FormatLatencyLine(r);
    if (table != nullptr) *table = Dup(t);
    if (line != nullptr) *line = Dup(l);
  });
}

skd_status skd_reception_field(const skd_mask_spec* spec, size_t layers,
                               size_t frames, size_t* earliest, size_t* latest) {
  return Guard([&] {
    NotNull(earliest, "earliest");
    NotNull(latest, "latest");
    const auto rf = ReceptionField(ToSpec(spec), layers, frames);
    for (size_t t = 0; t < rf.size(); ++t) {
      earliest[t] = rf[t].earliest;
      latest[t] = rf[t].latest;
    }
  });
}

skd_status skd_mask_render(const skd_mask_spec* spec, size_t frames, size_t layer,
                           char** grid) {
  return Guard([&] { Out(grid, RenderMask(BuildMask(ToSpec(spec), frames, layer))); });
}

skd_status skd_dataset_generate(const skd_config* config, skd_dataset** out) {
  return Guard([&] {
    NotNull(config, "config");
    NotNull(out, "out");
    const PipelineSettings s = PipelineSettings::FromConfig(config->config);
    *out = new skd_dataset{GenerateDataset(s.task, s.sizes)};
  });
}

skd_status skd_dataset_load(const char* path, skd_dataset** out) {
  return Guard([&] {
    NotNull(path, "path");
    NotNull(out, "out");
    *out = new skd_dataset{LoadDataset(path)};
  });
}

skd_status skd_dataset_save(const skd_dataset* data, const char* path) {
  return Guard([&] {
    NotNull(data, "data");
    NotNull(path, "path");
    SaveDataset(path, data->data);
  });
}

void skd_dataset_free(skd_dataset* data) { delete data; }

skd_status skd_dataset_count(const skd_dataset* data, int split, size_t* count) {
  return Guard([&] {
    NotNull(data, "data");
    NotNull(count, "count");
    *count = SplitOf(data->data, split).size();
  });
}

skd_status skd_dataset_transcripts(const skd_dataset* data, int split,
                                   int references, char** tsv) {
  return Guard([&] {
    NotNull(data, "data");
    std::string out;
    for (const Utterance& u : SplitOf(data->data, split)) {
      if (references ? u.has_reference : u.has_label) {
        out += u.id + "\t" + (references ? u.reference : u.label) + "\n";
      }
    }
    Out(tsv, out);
  });
}

skd_status skd_dataset_validate_file(const char* path, size_t* count) {
  return Guard([&] {
    NotNull(path, "path");
    const size_t n = ValidateDatasetIndex(ReadFileBytes(path));
    if (count != nullptr) *count = n;
  });
}

skd_status skd_lm_train(const skd_config* config, const skd_dataset* data,
                        const char* text_path, skd_lm** out) {
  return Guard([&] {
    NotNull(config, "config");
    NotNull(out, "out");
    const Config& c = config->config;
    std::vector<std::string> texts;
    if (data != nullptr) {
      for (const Utterance& u : data->data.labeled) texts.push_back(u.label);
    }
    if (text_path != nullptr) {
      std::istringstream is(ReadFileBytes(text_path));
      std::string line;
      while (std::getline(is, line)) {
        if (!line.empty()) texts.push_back(line);
      }
    }
    const SyntheticTask task = TaskFromConfig(c);
    for (std::string& s :
         SampleCorpus(task, c.GetSize("lm.corpus"), task.seed)) {
      texts.push_back(std::move(s));
    }
    *out = new skd_lm{TrainCharLm(texts, LmFromConfig(c))};
  });
}

skd_status skd_lm_load(const char* path, skd_lm** out) {
  return Guard([&] {
    NotNull(path, "path");
    NotNull(out, "out");
    *out = new skd_lm{NgramModel::Load(path)};
  });
}

skd_status skd_lm_save(const skd_lm* lm, const char* path) {
  return Guard([&] {
    NotNull(lm, "lm");
    NotNull(path, "path");
    lm->model.Save(path);
  });
}

skd_status skd_lm_score(const skd_lm* lm, const char* text, double* log_prob) {
  return Guard([&] {
    NotNull(lm, "lm");
    NotNull(text, "text");
    NotNull(log_prob, "log_prob");
    *log_prob = lm->model.Score(LmSymbols(text));
  });
}

void skd_lm_free(skd_lm* lm) { delete lm; }

skd_status skd_model_init(const skd_config* config, uint64_t seed, skd_model** out) {
  return Guard([&] {
    NotNull(config, "config");
    NotNull(out, "out");
    *out = new skd_model{InitParams(EncoderFromConfig(config->config), seed)};
  });
}

skd_status skd_model_load(const char* path, skd_model** out) {
  return Guard([&] {
    NotNull(path, "path");
    NotNull(out, "out");
    *out = new skd_model{LoadCheckpoint(path, nullptr)};
  });
}

skd_status skd_model_save(const skd_model* model, const char* path) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(path, "path");
    SaveCheckpoint(model->params, path);
  });
}

skd_status skd_model_digest(const skd_model* model, char** hex) {
  return Guard([&] {
    NotNull(model, "model");
    Out(hex, CheckpointDigest(model->params));
  });
}

skd_status skd_model_mask(const skd_model* model, skd_mask_spec* spec) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(spec, "spec");
    FromSpec(model->params.mask, spec);
  });
}

void skd_model_free(skd_model* model) { delete model; }

skd_status skd_report_json(const skd_report* report, char** json) {
  return Guard([&] {
    NotNull(report, "report");
    Out(json, report->json);
  });
}

skd_status skd_report_text(const skd_report* report, char** text) {
  return Guard([&] {
    NotNull(report, "report");
    Out(text, report->text);
  });
}

skd_status skd_report_metric(const skd_report* report, const char* name,
                             double* value) {
  return Guard([&] {
    NotNull(report, "report");
    NotNull(name, "name");
    NotNull(value, "value");
    auto it = report->metrics.find(name);
    if (it == report->metrics.end()) {
      Fail(ErrorCode::kInvalidArgument, std::string("report has no metric '") + name + "'");
    }
    *value = it->second;
  });
}

void skd_report_free(skd_report* report) { delete report; }

skd_status skd_finetune(const skd_config* config, const skd_model* init,
                        const skd_mask_spec* spec, const skd_dataset* data,
                        size_t updates, skd_model** out, skd_report** report) {
  return Guard([&] {
    NotNull(config, "config");
    NotNull(init, "init");
    NotNull(data, "data");
    NotNull(out, "out");
    const MaskSpec mask = ToSpec(spec);
    const TrainConfig t = StageTrain(config->config, updates);
    const size_t jobs = Jobs(config->config);
    StageOutcome o = FinetuneCtc(init->params, mask, data->data.labeled, t, jobs);
    StageReport r = FromOutcome("finetune", o, t, mask);
    Emit(report, r, &data->data, &o.model, jobs);
    *out = new skd_model{std::move(o.model)};
  });
}

skd_status skd_guided_teacher(const skd_config* config, const skd_model* pretrained,
                              const skd_model* streaming, const skd_dataset* data,
                              double alpha, size_t updates, skd_model** out,
                              skd_report** report) {
  return Guard([&] {
    NotNull(config, "config");
    NotNull(pretrained, "pretrained");
    NotNull(streaming, "streaming");
    NotNull(data, "data");
    NotNull(out, "out");
    const TrainConfig t = StageTrain(config->config, updates);
    const size_t jobs = Jobs(config->config);
    StageOutcome o = TrainGuidedTeacher(pretrained->params, streaming->params,
                                        data->data.labeled, alpha, t, jobs);
    StageReport r = FromOutcome("guided-teacher", o, t, MaskSpec::Bidirectional());
    if (!data->data.dev.empty()) {
      r.metrics["frame_agreement_with_streaming"] =
          MeanFrameAgreement(o.model, streaming->params, data->data.dev, jobs);
    }
    Emit(report, r, &data->data, &o.model, jobs);
    *out = new skd_model{std::move(o.model)};
  });
}

skd_status skd_distill(const skd_config* config, const skd_model* pretrained,
                       const skd_model* teacher, const skd_model* head_source,
                       const skd_mask_spec* spec, const skd_dataset* data,
                       size_t updates, skd_model** out, skd_report** report) {
  return Guard([&] {
    NotNull(config, "config");
    NotNull(pretrained, "pretrained");
    NotNull(teacher, "teacher");
    NotNull(head_source, "head_source");
    NotNull(data, "data");
    NotNull(out, "out");
    const Config& c = config->config;
    const MaskSpec mask = ToSpec(spec);
    const TrainConfig t = StageTrain(c, updates);
    const size_t jobs = Jobs(c);
    const size_t layers = pretrained->params.config.layers;
    const DistillSpec ds = c.Get("distill.layers") == "auto"
                               ? DistillSpec::Default(layers)
                               : DistillSpec::Parse(c.Get("distill.layers"));
    StageOutcome o = Distill(pretrained->params, teacher->params, head_source->params,
                             mask, Concat(data->data.labeled, data->data.unlabeled),
                             ds, t, jobs);
    StageReport r = FromOutcome("distill", o, t, mask);
    if (!data->data.dev.empty()) {
      r.metrics["frame_agreement_with_teacher"] =
          MeanFrameAgreement(o.model, teacher->params, data->data.dev, jobs);
    }
    Emit(report, r, &data->data, &o.model, jobs);
    *out = new skd_model{std::move(o.model)};
  });
}

skd_status skd_pseudo_label(const skd_config* config, const skd_model* model,
                            const skd_lm* lm, const skd_dataset* data,
                            skd_dataset** out, skd_report** report) {
  return Guard([&] {
    NotNull(config, "config");
    NotNull(model, "model");
    NotNull(data, "data");
    NotNull(out, "out");
    const DecodeConfig d = DecodeFromConfig(config->config);
    PseudoLabelOutcome p = PseudoLabel(model->params, lm ? &lm->model : nullptr,
                                       data->data.unlabeled, d, Jobs(config->config));
    StageReport r;
    r.stage = "pseudo-label";
    r.decode = d.Serialize();
    r.utterances_in = data->data.unlabeled.size();
    r.dropped = p.dropped;
    r.seconds = p.seconds;
    r.metrics["labeled_out"] = static_cast<double>(p.labeled.size());
    Emit(report, r, nullptr, nullptr, 1);
    auto result = std::make_unique<skd_dataset>();
    result->data.unlabeled = std::move(p.labeled);
    *out = result.release();
  });
}

skd_status skd_self_train(const skd_config* config, const skd_model* model,
                          const skd_dataset* data, const skd_dataset* pseudo,
                          size_t updates, skd_model** out, skd_report** report) {
  return Guard([&] {
    NotNull(config, "config");
    NotNull(model, "model");
    NotNull(data, "data");
    NotNull(out, "out");
    std::vector<Utterance> train = data->data.labeled;
    if (pseudo != nullptr) {
      for (const Utterance& u : Flatten(pseudo->data)) {
        if (u.has_label) train.push_back(u);
      }
    }
    const TrainConfig t = StageTrain(config->config, updates);
    const size_t jobs = Jobs(config->config);
    StageOutcome o = FinetuneCtc(model->params, model->params.mask, train, t, jobs);
    StageReport r = FromOutcome("self-train", o, t, model->params.mask);
    Emit(report, r, &data->data, &o.model, jobs);
    *out = new skd_model{std::move(o.model)};
  });
}

skd_status skd_pipeline_run(const skd_config* config, const char* out_dir, int flags,
                            void (*log)(const char* line, void* user), void* user,
                            skd_report** report) {
  return Guard([&] {
    NotNull(config, "config");
    NotNull(out_dir, "out_dir");
    PipelineOptions opt;
    opt.dry_run = flags & SKD_PIPELINE_DRY_RUN;
    opt.resume = flags & SKD_PIPELINE_RESUME;
    if (log != nullptr) opt.log = [&](const std::string& s) { log(s.c_str(), user); };
    PipelineResult res = RunTwoStage(config->config, out_dir, opt);
    if (report == nullptr) return;
    auto rep = std::make_unique<skd_report>();
    rep->json = res.summary_json;
    std::string text;
    if (opt.dry_run) {
      for (const std::string& l : res.plan) text += l + "\n";
    } else {
      char buf[160];
      text += "stage\tmodel\tdev_TER\tupdates\tresumed\tdigest\n";
      for (const StageReport& r : res.reports) {
        std::snprintf(buf, sizeof(buf), "%s\t%s\t%s\t%zu\t%s\t", r.stage.c_str(),
                      r.table_model.empty() ? "-" : r.table_model.c_str(),
                      r.dev_ter >= 0 ? std::to_string(r.dev_ter).c_str() : "-",
                      r.updates, r.resumed ? "yes" : "no");
        text += buf + r.digest.substr(0, 16) + "\n";
        if (r.dev_ter >= 0) rep->metrics["ter." + r.stage] = r.dev_ter;
      }
      std::snprintf(buf, sizeof(buf),
                    "frame agreement with T: S %.4f, KD %.4f\nwall %.1f s\n",
                    res.agree_s_t, res.agree_kd_t, res.seconds);
      text += buf;
      rep->metrics["agree.S_T"] = res.agree_s_t;
      rep->metrics["agree.KD_T"] = res.agree_kd_t;
      rep->metrics["seconds"] = res.seconds;
      rep->metrics["rerun"] = static_cast<double>(res.rerun.size());
    }
    rep->metrics["stages"] = static_cast<double>(opt.dry_run ? res.plan.size()
                                                             : res.reports.size());
    rep->text = text;
    *report = rep.release();
  });
}

skd_status skd_pipeline_stage(const skd_config* config, const char* out_dir,
                              const char* stage, skd_report** report) {
  return Guard([&] {
    NotNull(config, "config");
    NotNull(out_dir, "out_dir");
    NotNull(stage, "stage");
    StageReport r = RunSingleStage(config->config, out_dir, ParseStage(stage));
    if (report == nullptr) return;
    auto rep = std::make_unique<skd_report>();
    rep->json = r.ToJson();
    rep->text = "stage " + r.stage + " digest " + r.digest + "\n";
    if (r.dev_ter >= 0) rep->metrics["dev_ter"] = r.dev_ter;
    for (const auto& [k, v] : r.metrics) rep->metrics[k] = v;
    *report = rep.release();
  });
}

skd_status skd_decode(const skd_model* model, const skd_dataset* data, int split,
                      const skd_lm* lm, const skd_decode_options* options,
                      size_t jobs, char** tsv) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(data, "data");
    NotNull(options, "options");
    const std::vector<Utterance>& utts = SplitOf(data->data, split);
    const Vocabulary& vocab = DefaultVocabulary();
    DecodeConfig cfg;
    cfg.beam_size = options->beam;
    cfg.nbest = std::max<size_t>(1, options->nbest);
    if (lm != nullptr) {
      cfg.lm_weight = options->lm_weight;
      cfg.word_insertion_penalty = options->penalty;
    }
    if (!options->greedy) cfg.Validate();
    std::unique_ptr<NgramTokenLm> token_lm;
    if (lm != nullptr) token_lm = std::make_unique<NgramTokenLm>(lm->model, vocab);
    const std::vector<Array> post = Posteriors(model->params, utts, jobs);
    std::vector<std::string> blocks(utts.size());
    ParallelFor(utts.size(), jobs, [&](size_t i) {
      std::vector<Hypothesis> hyps;
      if (options->greedy) {
        Hypothesis h;
        h.tokens = GreedyDecode(post[i]);
        for (size_t t = 0; t < post[i].rows(); ++t) {
          const auto row = post[i].row(t);
          h.acoustic += row[ArgMax(row)];
        }
        h.combined = h.acoustic;
        hyps.push_back(h);
      } else {
        hyps = PrefixBeamSearch(post[i], cfg, token_lm.get());
      }
      std::istringstream lines(FormatHypotheses(hyps, vocab));
      std::string line;
      while (std::getline(lines, line)) blocks[i] += utts[i].id + "\t" + line + "\n";
    });
    std::string out;
    for (const std::string& b : blocks) out += b;
    Out(tsv, out);
  });
}

skd_status skd_token_error_rate(const skd_model* model, const skd_dataset* data,
                                int split, double* rate) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(data, "data");
    NotNull(rate, "rate");
    *rate = TokenErrorRate(model->params, SplitOf(data->data, split));
  });
}

skd_status skd_score(const char* ref_text, const char* hyp_text, double* wer,
                     double* cer, size_t* utterances) {
  return Guard([&] {
    NotNull(ref_text, "ref_text");
    NotNull(hyp_text, "hyp_text");
    const std::vector<Line> refs = ParseLines(ref_text);
    const std::vector<Line> hyps = ParseLines(hyp_text);
    Require(!refs.empty(), "score: no reference lines");
    bool by_id = true;
    for (const Line& l : refs) by_id &= !l.id.empty();
    for (const Line& l : hyps) by_id &= !l.id.empty();
    std::map<std::string, std::string> hyp_by_id;
    if (by_id) {
      // First hypothesis per id (n-best lists are ranked).
      for (const Line& l : hyps) hyp_by_id.emplace(l.id, l.text);
    } else {
      Require(refs.size() == hyps.size(),
              "score: " + std::to_string(refs.size()) + " reference lines but " +
                  std::to_string(hyps.size()) + " hypothesis lines");
    }
    size_t word_edits = 0, words = 0, char_edits = 0, chars = 0;
    for (size_t i = 0; i < refs.size(); ++i) {
      std::string hyp;
      if (by_id) {
        auto it = hyp_by_id.find(refs[i].id);
        Require(it != hyp_by_id.end(), "score: no hypothesis for " + refs[i].id);
        hyp = it->second;
      } else {
        hyp = hyps[i].text;
      }
      const auto rw = SplitText(refs[i].text, false), hw = SplitText(hyp, false);
      const auto rc = SplitText(refs[i].text, true), hc = SplitText(hyp, true);
      word_edits += EditDistance<std::string>(rw, hw);
      words += rw.size();
      char_edits += EditDistance<std::string>(rc, hc);
      chars += rc.size();
    }
    Require(words > 0 && chars > 0, "score: references are empty");
    if (wer != nullptr) *wer = static_cast<double>(word_edits) / static_cast<double>(words);
    if (cer != nullptr) *cer = static_cast<double>(char_edits) / static_cast<double>(chars);
    if (utterances != nullptr) *utterances = refs.size();
  });
}

skd_status skd_posteriors_csv(const skd_model* model, const skd_dataset* data,
                              const char* id, char** csv) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(data, "data");
    NotNull(id, "id");
    for (const Utterance& u : Flatten(data->data)) {
      if (u.id == id) {
        const Array lp = Forward(model->params, u.features, model->params.mask).log_probs;
        Out(csv, PosteriorgramCsv(lp, DefaultVocabulary()));
        return;
      }
    }
    Fail(ErrorCode::kInvalidArgument, std::string("no utterance with id '") + id + "'");
  });
}

skd_status skd_frame_agreement(const skd_model* a, const skd_model* b,
                               const skd_dataset* data, int split,
                               double* agreement) {
  return Guard([&] {
    NotNull(a, "a");
    NotNull(b, "b");
    NotNull(data, "data");
    NotNull(agreement, "agreement");
    *agreement = MeanFrameAgreement(a->params, b->params, SplitOf(data->data, split));
  });
}

skd_status skd_selfcheck(uint64_t seed, char** text, int* passed) {
  return Guard([&] {
    const std::vector<CheckResult> r = RunSelfCheck(seed);
    bool ok = true;
    for (const CheckResult& c : r) ok &= c.passed;
    if (text != nullptr) *text = Dup(FormatSelfCheck(r));
    if (passed != nullptr) *passed = ok ? 1 : 0;
  });
}

}  // extern "C"
