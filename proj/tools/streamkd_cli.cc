// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

// streamkd command-line tool. Talks to the library only through the C API.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "streamkd/streamkd.h"

namespace {

// Runtime failure carrying the library status.
struct Failure {
  skd_status status;
  std::string message;
};

void Check(skd_status s) {
  if (s != SKD_OK) throw Failure{s, skd_last_error()};
}

void Usage(const std::string& message) {
  throw Failure{SKD_INVALID_ARGUMENT, message};
}

std::string Take(char* s) {
  std::string out = s ? s : "";
  skd_free_string(s);
  return out;
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using ConfigPtr = std::unique_ptr<skd_config, Deleter<skd_config, skd_config_free>>;
using DataPtr = std::unique_ptr<skd_dataset, Deleter<skd_dataset, skd_dataset_free>>;
using LmPtr = std::unique_ptr<skd_lm, Deleter<skd_lm, skd_lm_free>>;
using ModelPtr = std::unique_ptr<skd_model, Deleter<skd_model, skd_model_free>>;
using ReportPtr = std::unique_ptr<skd_report, Deleter<skd_report, skd_report_free>>;

std::string ReadText(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{SKD_IO, "cannot open " + path};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteText(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw Failure{SKD_IO, "cannot write " + path};
}

DataPtr LoadData(const std::string& path) {
  skd_dataset* d = nullptr;
  Check(skd_dataset_load(path.c_str(), &d));
  return DataPtr(d);
}

ModelPtr LoadModel(const std::string& path) {
  skd_model* m = nullptr;
  Check(skd_model_load(path.c_str(), &m));
  return ModelPtr(m);
}

LmPtr LoadLm(const std::string& path) {
  skd_lm* lm = nullptr;
  Check(skd_lm_load(path.c_str(), &lm));
  return LmPtr(lm);
}

std::string ConfigValue(const skd_config* c, const char* key) {
  char* v = nullptr;
  Check(skd_config_get(c, key, &v));
  return Take(v);
}

size_t ConfigSize(const skd_config* c, const char* key) {
  return static_cast<size_t>(std::stoull(ConfigValue(c, key)));
}

int ParseSplit(const std::string& s) {
  if (s == "labeled" || s == "L") return SKD_SPLIT_LABELED;
  if (s == "unlabeled" || s == "U") return SKD_SPLIT_UNLABELED;
  if (s == "dev" || s == "D") return SKD_SPLIT_DEV;
  Usage("unknown split '" + s + "' (labeled, unlabeled, dev)");
  return -1;
}

// Flags shared by every subcommand.
struct Common {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<size_t> jobs;
  std::vector<std::string> sets;

  void Add(CLI::App* app) {
    app->add_option("--config", config_path, "Config file (key = value lines)");
    app->add_option("--seed", seed, "Random seed");
    app->add_option("--jobs", jobs, "Worker threads");
    app->add_option("--set", sets, "Override a config key (key=value)");
  }

  ConfigPtr Resolve() const {
    skd_config* raw = nullptr;
    Check(skd_config_new(&raw));
    ConfigPtr c(raw);
    if (const char* dir = std::getenv("STREAMKD_CONFIG_DIR")) {
      const std::filesystem::path p = std::filesystem::path(dir) / "default.conf";
      if (std::filesystem::exists(p)) Check(skd_config_merge_file(c.get(), p.c_str()));
    }
    if (!config_path.empty()) Check(skd_config_merge_file(c.get(), config_path.c_str()));
    if (seed) Check(skd_config_set(c.get(), "seed", std::to_string(*seed).c_str()));
    if (jobs) Check(skd_config_set(c.get(), "jobs", std::to_string(*jobs).c_str()));
    for (const std::string& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) Usage("--set expects key=value, got '" + kv + "'");
      Check(skd_config_set(c.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
    }
    char* digest = nullptr;
    Check(skd_config_digest(c.get(), &digest));
    std::cerr << "config digest " << Take(digest) << "\n";
    return c;
  }
};

// Mask flags layered over the config's mask.* keys.
struct MaskFlags {
  std::optional<std::string> variant;
  std::optional<double> chunk_ms, future_ms, frame_ms;
  std::optional<int> chunk_frames, future_frames, right_frames, left_limit;

  void Add(CLI::App* app) {
    app->add_option("--variant", variant,
                    "bidirectional, time_restricted, chunk or block");
    app->add_option("--chunk-ms", chunk_ms, "Chunk size in ms");
    app->add_option("--chunk-frames", chunk_frames, "Chunk size in frames");
    app->add_option("--future-ms", future_ms, "Future part in ms (block)");
    app->add_option("--future-frames", future_frames, "Future part in frames (block)");
    app->add_option("--right-frames", right_frames,
                    "Right context per layer in frames (time_restricted)");
    app->add_option("--left-limit", left_limit, "Left context limit; -1 is unlimited");
    app->add_option("--frame-ms", frame_ms, "Frame duration in ms");
  }

  static int Frames(double ms, double frame_ms, const char* flag) {
    const double f = ms / frame_ms;
    if (ms < 0 || std::fabs(f - std::round(f)) > 1e-9) {
      Usage(std::string(flag) + " must be a non-negative multiple of the frame duration");
    }
    return static_cast<int>(std::lround(f));
  }

  skd_mask_spec Resolve(const skd_config* c) const {
    skd_mask_spec s;
    Check(skd_mask_spec_from_config(c, &s));
    if (variant) {
      const double fm = s.frame_ms;
      skd_mask_spec_init(&s);
      s.frame_ms = fm;
      Check(skd_parse_variant(variant->c_str(), &s.variant));
    }
    if (frame_ms) s.frame_ms = *frame_ms;
    if (chunk_frames) s.chunk_frames = *chunk_frames;
    if (chunk_ms) s.chunk_frames = Frames(*chunk_ms, s.frame_ms, "--chunk-ms");
    if (future_frames) s.future_frames = *future_frames;
    if (future_ms) s.future_frames = Frames(*future_ms, s.frame_ms, "--future-ms");
    if (right_frames) s.right_frames = *right_frames;
    if (left_limit) s.left_limit = *left_limit;
    return s;
  }
};

void WriteReport(const skd_report* r, const std::string& path) {
  char* text = nullptr;
  Check(skd_report_text(r, &text));
  std::cout << Take(text);
  if (!path.empty()) {
    char* json = nullptr;
    Check(skd_report_json(r, &json));
    WriteText(path, Take(json));
  }
}

void SaveModel(const skd_model* m, const std::string& path) {
  Check(skd_model_save(m, path.c_str()));
  char* hex = nullptr;
  Check(skd_model_digest(m, &hex));
  std::cout << "wrote " << path << " digest " << Take(hex) << "\n";
}

void LogLine(const char* line, void*) { std::cerr << line << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streamkd: streaming CTC encoders with guided distillation and self-training"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(skd_version()));

  Common common;
  MaskFlags mask;
  std::string out, data_path, model_path, lm_path, report_path, split = "dev";
  std::optional<size_t> updates;
  std::function<void()> action;

  auto sub = [&](const char* name, const char* help) {
    CLI::App* s = app.add_subcommand(name, help);
    common.Add(s);
    return s;
  };

  // latency
  size_t layers = 0;
  CLI::App* latency = sub("latency", "Reception field and encoder-induced latency");
  mask.Add(latency);
  latency->add_option("--layers", layers, "Transformer layers (default model.layers)");
  latency->add_option("--out", out, "Write the machine-readable line here");
  latency->callback([&] {
    action = [&] {
      ConfigPtr c = common.Resolve();
      const skd_mask_spec s = mask.Resolve(c.get());
      const size_t n = layers ? layers : ConfigSize(c.get(), "model.layers");
      char *table = nullptr, *line = nullptr;
      Check(skd_latency_report(&s, n, &table, &line));
      std::cout << Take(table);
      const std::string l = Take(line);
      if (!out.empty()) WriteText(out, l);
    };
  });

  // mask-dump
  size_t frames = 12, layer = 0;
  CLI::App* dump = sub("mask-dump", "Print the attention mask as a text grid");
  mask.Add(dump);
  dump->add_option("--frames", frames, "Sequence length");
  dump->add_option("--layer", layer, "Layer index");
  dump->add_option("--out", out, "Also write the grid here");
  dump->callback([&] {
    action = [&] {
      ConfigPtr c = common.Resolve();
      const skd_mask_spec s = mask.Resolve(c.get());
      char* grid = nullptr;
      Check(skd_mask_render(&s, frames, layer, &grid));
      const std::string g = Take(grid);
      std::cout << g;
      if (!out.empty()) WriteText(out, g);
    };
  });

  // gen-data
  CLI::App* gen = sub("gen-data", "Generate the synthetic L/U/dev dataset");
  gen->add_option("--out", out, "Dataset container path")->required();
  gen->callback([&] {
    action = [&] {
      ConfigPtr c = common.Resolve();
      skd_dataset* raw = nullptr;
      Check(skd_dataset_generate(c.get(), &raw));
      DataPtr d(raw);
      Check(skd_dataset_save(d.get(), out.c_str()));
      size_t n[3];
      for (int i = 0; i < 3; ++i) Check(skd_dataset_count(d.get(), i, &n[i]));
      std::cout << "labeled " << n[0] << "  unlabeled " << n[1] << "  dev " << n[2]
                << "\nwrote " << out << "\n";
    };
  });

  // train-lm
  std::string text_path;
  CLI::App* tlm = sub("train-lm", "Train the character n-gram language model");
  tlm->add_option("--data", data_path, "Dataset whose labeled transcripts are used");
  tlm->add_option("--text", text_path, "Extra training text, one sentence per line");
  tlm->add_option("--out", out, "Model path")->required();
  tlm->callback([&] {
    action = [&] {
      ConfigPtr c = common.Resolve();
      DataPtr d;
      if (!data_path.empty()) d = LoadData(data_path);
      skd_lm* raw = nullptr;
      Check(skd_lm_train(c.get(), d.get(), text_path.empty() ? nullptr : text_path.c_str(),
                         &raw));
      LmPtr lm(raw);
      Check(skd_lm_save(lm.get(), out.c_str()));
      std::cout << "wrote " << out << "\n";
    };
  });

  // finetune
  std::string init_path;
  CLI::App* ft = sub("finetune", "CTC fine-tuning under a mask");
  mask.Add(ft);
  ft->add_option("--init", init_path, "Initial checkpoint (default: seeded init)");
  ft->add_option("--data", data_path, "Dataset")->required();
  ft->add_option("--updates", updates, "Update budget (default S.updates)");
  ft->add_option("--out", out, "Checkpoint path")->required();
  ft->add_option("--report", report_path, "JSON report path");
  ft->callback([&] {
    action = [&] {
      ConfigPtr c = common.Resolve();
      const skd_mask_spec s = mask.Resolve(c.get());
      DataPtr d = LoadData(data_path);
      ModelPtr init;
      if (init_path.empty()) {
        skd_model* raw = nullptr;
        Check(skd_model_init(c.get(), std::stoull(ConfigValue(c.get(), "seed")), &raw));
        init.reset(raw);
      } else {
        init = LoadModel(init_path);
      }
      skd_model* raw = nullptr;
      skd_report* rep = nullptr;
      Check(skd_finetune(c.get(), init.get(), &s, d.get(),
                         updates ? *updates : ConfigSize(c.get(), "S.updates"), &raw, &rep));
      ModelPtr m(raw);
      ReportPtr r(rep);
      WriteReport(r.get(), report_path);
      SaveModel(m.get(), out);
    };
  });

  // guided-teacher
  std::string pretrained_path, streaming_path;
  std::optional<double> alpha;
  CLI::App* gt = sub("guided-teacher", "Bidirectional teacher with the guided CTC loss");
  gt->add_option("--pretrained", pretrained_path, "Pretrained checkpoint")->required();
  gt->add_option("--streaming", streaming_path, "Frozen streaming model")->required();
  gt->add_option("--data", data_path, "Dataset")->required();
  gt->add_option("--alpha", alpha, "Guide weight (default guide.alpha)");
  gt->add_option("--updates", updates, "Update budget (default T.updates)");
  gt->add_option("--out", out, "Checkpoint path")->required();
  gt->add_option("--report", report_path, "JSON report path");
  gt->callback([&] {
    action = [&] {
      ConfigPtr c = common.Resolve();
      DataPtr d = LoadData(data_path);
      ModelPtr p = LoadModel(pretrained_path), s = LoadModel(streaming_path);
      const double a = alpha ? *alpha : std::stod(ConfigValue(c.get(), "guide.alpha"));
      skd_model* raw = nullptr;
      skd_report* rep = nullptr;
      Check(skd_guided_teacher(c.get(), p.get(), s.get(), d.get(), a,
                               updates ? *updates : ConfigSize(c.get(), "T.updates"), &raw,
                               &rep));
      ModelPtr m(raw);
      ReportPtr r(rep);
      WriteReport(r.get(), report_path);
      SaveModel(m.get(), out);
    };
  });

  // distill
  std::string teacher_path, head_path;
  CLI::App* kd = sub("distill", "Hidden-state distillation into a streaming student");
  mask.Add(kd);
  kd->add_option("--pretrained", pretrained_path, "Student initialization")->required();
  kd->add_option("--teacher", teacher_path, "Teacher checkpoint")->required();
  kd->add_option("--head", head_path, "Checkpoint whose output head is copied")->required();
  kd->add_option("--data", data_path, "Dataset")->required();
  kd->add_option("--updates", updates, "Update budget (default KD.updates)");
  kd->add_option("--out", out, "Checkpoint path")->required();
  kd->add_option("--report", report_path, "JSON report path");
  kd->callback([&] {
    action = [&] {
      ConfigPtr c = common.Resolve();
      const skd_mask_spec s = mask.Resolve(c.get());
      DataPtr d = LoadData(data_path);
      ModelPtr p = LoadModel(pretrained_path), t = LoadModel(teacher_path),
               h = LoadModel(head_path);
      skd_model* raw = nullptr;
      skd_report* rep = nullptr;
      Check(skd_distill(c.get(), p.get(), t.get(), h.get(), &s, d.get(),
                        updates ? *updates : ConfigSize(c.get(), "KD.updates"), &raw, &rep));
      ModelPtr m(raw);
      ReportPtr r(rep);
      WriteReport(r.get(), report_path);
      SaveModel(m.get(), out);
    };
  });

  // pseudo-label
  CLI::App* pl = sub("pseudo-label", "Label the unlabeled split by beam search");
  pl->add_option("--model", model_path, "Checkpoint")->required();
  pl->add_option("--lm", lm_path, "Language model");
  pl->add_option("--data", data_path, "Dataset")->required();
  pl->add_option("--out", out, "Pseudo-labeled dataset path")->required();
  pl->add_option("--report", report_path, "JSON report path");
  pl->callback([&] {
    action = [&] {
      ConfigPtr c = common.Resolve();
      DataPtr d = LoadData(data_path);
      ModelPtr m = LoadModel(model_path);
      LmPtr lm;
      if (!lm_path.empty()) lm = LoadLm(lm_path);
      skd_dataset* raw = nullptr;
      skd_report* rep = nullptr;
      Check(skd_pseudo_label(c.get(), m.get(), lm.get(), d.get(), &raw, &rep));
      DataPtr u(raw);
      ReportPtr r(rep);
      WriteReport(r.get(), report_path);
      Check(skd_dataset_save(u.get(), out.c_str()));
      std::cout << "wrote " << out << "\n";
    };
  });

  // self-train
  std::string pseudo_path;
  CLI::App* st = sub("self-train", "CTC on labeled plus pseudo-labeled data");
  st->add_option("--model", model_path, "Initial checkpoint")->required();
  st->add_option("--data", data_path, "Dataset")->required();
  st->add_option("--pseudo", pseudo_path, "Pseudo-labeled dataset")->required();
  st->add_option("--updates", updates, "Update budget (default ST.updates)");
  st->add_option("--out", out, "Checkpoint path")->required();
  st->add_option("--report", report_path, "JSON report path");
  st->callback([&] {
    action = [&] {
      ConfigPtr c = common.Resolve();
      DataPtr d = LoadData(data_path), u = LoadData(pseudo_path);
      ModelPtr m = LoadModel(model_path);
      skd_model* raw = nullptr;
      skd_report* rep = nullptr;
      Check(skd_self_train(c.get(), m.get(), d.get(), u.get(),
                           updates ? *updates : ConfigSize(c.get(), "ST.updates"), &raw,
                           &rep));
      ModelPtr result(raw);
      ReportPtr r(rep);
      WriteReport(r.get(), report_path);
      SaveModel(result.get(), out);
    };
  });

  // pipeline
  bool dry_run = false, resume = false;
  std::string stage;
  CLI::App* pipe = sub("pipeline", "Run the two-stage training pipeline");
  pipe->add_option("--out", out, "Output directory")->required();
  pipe->add_flag("--dry-run", dry_run, "Print the plan without training");
  pipe->add_flag("--resume", resume, "Reuse artifacts already in the output directory");
  pipe->add_option("--stage", stage, "Run a single stage from existing artifacts");
  pipe->callback([&] {
    action = [&] {
      ConfigPtr c = common.Resolve();
      skd_report* rep = nullptr;
      if (!stage.empty()) {
        Check(skd_pipeline_stage(c.get(), out.c_str(), stage.c_str(), &rep));
      } else {
        const int flags = (dry_run ? SKD_PIPELINE_DRY_RUN : 0) |
                          (resume ? SKD_PIPELINE_RESUME : 0);
        Check(skd_pipeline_run(c.get(), out.c_str(), flags, LogLine, nullptr, &rep));
      }
      ReportPtr r(rep);
      WriteReport(r.get(), "");
    };
  });

  // decode
  skd_decode_options dopt{8, 0.0, 0.0, 1, 0};
  std::optional<double> lm_weight, penalty;
  bool greedy = false;
  CLI::App* dec = sub("decode", "Decode a split");
  dec->add_option("--model", model_path, "Checkpoint")->required();
  dec->add_option("--data", data_path, "Dataset")->required();
  dec->add_option("--split", split, "labeled, unlabeled or dev");
  dec->add_option("--lm", lm_path, "Language model for shallow fusion");
  dec->add_option("--beam", dopt.beam, "Beam size")->check(CLI::PositiveNumber);
  dec->add_flag("--greedy", greedy, "Best-path decoding");
  dec->add_option("--nbest", dopt.nbest, "Hypotheses per utterance")->check(CLI::PositiveNumber);
  dec->add_option("--lm-weight", lm_weight, "LM weight (default decode.lm_weight)");
  dec->add_option("--penalty", penalty, "Word insertion penalty (default decode.penalty)");
  dec->add_option("--out", out, "TSV output path");
  dec->callback([&] {
    action = [&] {
      ConfigPtr c = common.Resolve();
      DataPtr d = LoadData(data_path);
      ModelPtr m = LoadModel(model_path);
      LmPtr lm;
      if (!lm_path.empty()) lm = LoadLm(lm_path);
      dopt.greedy = greedy ? 1 : 0;
      dopt.lm_weight = lm_weight ? *lm_weight : std::stod(ConfigValue(c.get(), "decode.lm_weight"));
      dopt.penalty = penalty ? *penalty : std::stod(ConfigValue(c.get(), "decode.penalty"));
      char* tsv = nullptr;
      Check(skd_decode(m.get(), d.get(), ParseSplit(split), lm.get(), &dopt,
                       ConfigSize(c.get(), "jobs"), &tsv));
      const std::string text = Take(tsv);
      std::istringstream lines(text);
      std::string line;
      while (std::getline(lines, line)) {
        const auto first = line.find('\t'), second = line.find('\t', first + 1);
        const std::string id = line.substr(0, first);
        const std::string rank = line.substr(first + 1, second - first - 1);
        std::cout << id << (rank == "1" ? "" : " #" + rank) << "  "
                  << line.substr(line.rfind('\t') + 1) << "\n";
      }
      if (!out.empty()) WriteText(out, text);
    };
  });

  // score
  std::string ref_path, hyp_path;
  CLI::App* sc = sub("score", "Word and character error rates");
  sc->add_option("--ref", ref_path, "Reference lines")->required();
  sc->add_option("--hyp", hyp_path, "Hypothesis lines")->required();
  sc->add_option("--out", out, "JSON output path");
  sc->callback([&] {
    action = [&] {
      common.Resolve();
      double wer = 0, cer = 0;
      size_t n = 0;
      Check(skd_score(ReadText(ref_path).c_str(), ReadText(hyp_path).c_str(), &wer, &cer, &n));
      char buf[160];
      std::snprintf(buf, sizeof(buf), "utterances %zu\nWER %.2f%%\nCER %.2f%%\n", n,
                    100 * wer, 100 * cer);
      std::cout << buf;
      if (!out.empty()) {
        std::snprintf(buf, sizeof(buf),
                      "{\"utterances\": %zu, \"wer\": %.17g, \"cer\": %.17g}\n", n, wer, cer);
        WriteText(out, buf);
      }
    };
  });

  // posteriors
  std::string utt_id;
  CLI::App* post = sub("posteriors", "Export a posteriorgram as CSV");
  post->add_option("--model", model_path, "Checkpoint")->required();
  post->add_option("--data", data_path, "Dataset")->required();
  post->add_option("--id", utt_id, "Utterance id")->required();
  post->add_option("--out", out, "CSV path")->required();
  post->callback([&] {
    action = [&] {
      common.Resolve();
      DataPtr d = LoadData(data_path);
      ModelPtr m = LoadModel(model_path);
      char* csv = nullptr;
      Check(skd_posteriors_csv(m.get(), d.get(), utt_id.c_str(), &csv));
      WriteText(out, Take(csv));
      std::cout << "wrote " << out << "\n";
    };
  });

  // selfcheck
  CLI::App* self = sub("selfcheck", "Run the built-in oracle and gradient checks");
  self->callback([&] {
    action = [&] {
      ConfigPtr c = common.Resolve();
      char* text = nullptr;
      int passed = 0;
      Check(skd_selfcheck(std::stoull(ConfigValue(c.get(), "seed")), &text, &passed));
      std::cout << Take(text);
      if (!passed) throw Failure{SKD_INTERNAL, "self-check failed"};
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    if (action) action();
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.status == SKD_INVALID_ARGUMENT ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
