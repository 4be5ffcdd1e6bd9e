#include <bit>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wmlm/wmlm.hpp"

namespace fs = std::filesystem;
using namespace wmlm;

namespace {

void require_input(const std::string& path, const std::string& what, const std::string& flag) {
  if (path.empty())
    throw UsageError(what + " path is required (set " + flag + " or the config key)");
  if (!fs::exists(path)) throw UsageError("cannot open " + what + " file: " + path);
}

void require_artifact(const std::string& path, const std::string& what,
                      const std::string& producer) {
  if (path.empty()) throw UsageError(what + " path is required");
  if (!fs::exists(path))
    throw ArtifactError(what + " not found: " + path + "; produce it with `wmlm " + producer +
                        "`");
}

std::uint64_t double_bits(double v) { return std::bit_cast<std::uint64_t>(v); }

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

int run_count(const PipelineConfig& cfg, bool force) {
  require_input(cfg.vocab_path, "vocabulary", "--vocab");
  require_input(cfg.corpus_path, "corpus", "--corpus");
  const Vocabulary vocab = Vocabulary::load(cfg.vocab_path);
  const std::uint64_t input_hash = hash_file(cfg.corpus_path);
  if (!force && fs::exists(cfg.table_path)) {
    try {
      const CooccurrenceTable existing = CooccurrenceTable::load(cfg.table_path);
      if (existing.vocab_hash() == vocab.content_hash() &&
          existing.input_hash() == input_hash && existing.window() == cfg.window) {
        std::cout << "count: " << cfg.table_path << " is up to date\n";
        return 0;
      }
    } catch (const Error&) {
      // stale or unreadable: rebuild below
    }
  }
  CorpusStream stream(cfg.corpus_path, vocab, cfg.max_len);
  CooccurrenceTable table = count_corpus_stream(
      [&stream](TokenizedDoc& doc) { return stream.next(doc); }, cfg.window);
  table.set_hashes(vocab.content_hash(), input_hash);
  table.save(cfg.table_path);
  std::cout << "count: " << stream.docs_yielded() << " documents (" << stream.lines_skipped()
            << " lines skipped), window " << cfg.window << ", " << table.distinct_pairs()
            << " distinct pairs, " << table.total_pairs() << " total -> " << cfg.table_path
            << "\n";
  return 0;
}

int run_relevance(const PipelineConfig& cfg, bool force) {
  require_input(cfg.vocab_path, "vocabulary", "--vocab");
  require_input(cfg.corpus_path, "corpus", "--corpus");
  const Vocabulary vocab = Vocabulary::load(cfg.vocab_path);
  require_artifact(cfg.table_path, "co-occurrence table", "count");
  const CooccurrenceTable table = CooccurrenceTable::load(cfg.table_path);
  if (table.vocab_hash() != vocab.content_hash())
    throw ArtifactError("co-occurrence table was built with a different vocabulary; re-run "
                        "`wmlm count`");
  Fnv1a h;
  h.update_u64(hash_file(cfg.table_path));
  h.update_u64(hash_file(cfg.corpus_path));
  h.update_u64(cfg.normalize_by_partners ? 1 : 0);
  h.update_u64(cfg.clamp_negative ? 1 : 0);
  const std::uint64_t input_hash = h.digest();
  if (!force && fs::exists(cfg.relevance_path)) {
    try {
      const RelevanceTable existing = RelevanceTable::load(cfg.relevance_path);
      if (existing.vocab_hash() == vocab.content_hash() &&
          existing.input_hash() == input_hash) {
        std::cout << "relevance: " << cfg.relevance_path << " is up to date\n";
        return 0;
      }
    } catch (const Error&) {
    }
  }
  const PmiView pmi(table);
  const RelevanceOptions opts = cfg.relevance_options();
  RelevanceTable rel;
  if (cfg.threads <= 1) {
    CorpusStream stream(cfg.corpus_path, vocab, cfg.max_len);
    TokenizedDoc doc;
    while (stream.next(doc))
      for (auto [t, r] : doc_relevance(doc, pmi, opts)) rel.accumulate(t, r);
  } else {
    const std::vector<TokenizedDoc> docs = read_corpus(cfg.corpus_path, vocab, cfg.max_len);
    rel = aggregate_relevance(docs, pmi, opts, static_cast<int>(cfg.threads));
  }
  rel.set_hashes(vocab.content_hash(), input_hash);
  rel.save(cfg.relevance_path, vocab);
  std::cout << "relevance: scored " << rel.size() << " token types -> " << cfg.relevance_path
            << "\n";
  return 0;
}

int run_schedule(const PipelineConfig& cfg, bool force) {
  require_input(cfg.vocab_path, "vocabulary", "--vocab");
  const Vocabulary vocab = Vocabulary::load(cfg.vocab_path);
  require_artifact(cfg.relevance_path, "relevance file", "relevance");
  const RelevanceTable rel = RelevanceTable::load(cfg.relevance_path);
  if (rel.vocab_hash() != vocab.content_hash())
    throw ArtifactError("relevance file was built with a different vocabulary; re-run "
                        "`wmlm relevance`");
  const ScheduleConfig sc = cfg.schedule_config();
  Fnv1a h;
  h.update_u64(hash_file(cfg.relevance_path));
  h.update_u64(double_bits(sc.rate_min));
  h.update_u64(double_bits(sc.rate_max));
  h.update_u64(double_bits(sc.weight_min));
  h.update_u64(double_bits(sc.weight_max));
  h.update_u64(sc.rank_normalize ? 1 : 0);
  const std::uint64_t input_hash = h.digest();
  if (!force && fs::exists(cfg.schedule_path)) {
    try {
      const MaskingSchedule existing = MaskingSchedule::load(cfg.schedule_path);
      if (existing.vocab_hash() == vocab.content_hash() &&
          existing.input_hash() == input_hash) {
        std::cout << "schedule: " << cfg.schedule_path << " is up to date\n";
        return 0;
      }
    } catch (const Error&) {
    }
  }
  MaskingSchedule schedule = MaskingSchedule::build(rel, vocab, sc);
  schedule.set_hashes(vocab.content_hash(), input_hash);
  schedule.save(cfg.schedule_path, vocab);
  if (schedule.floor_fallback())
    std::cout << "schedule: warning: fewer than two scored whole-word tokens; every token "
                 "was pinned to the floor values\n";
  std::cout << "schedule: " << schedule.size() << " tokens -> " << cfg.schedule_path << "\n";
  if (!cfg.corpus_path.empty() && fs::exists(cfg.corpus_path)) {
    const std::vector<TokenizedDoc> docs = read_corpus(cfg.corpus_path, vocab, cfg.max_len);
    const ScheduleStats stats = schedule_stats(schedule, docs);
    std::cout << "schedule: corpus-weighted mean masking rate "
              << format_mrr(stats.mean_rate) << " over " << stats.tokens_seen
              << " token occurrences\n";
    std::cout << "schedule: rate histogram";
    for (auto c : stats.rate_histogram) std::cout << ' ' << c;
    std::cout << "\nschedule: weight histogram";
    for (auto c : stats.weight_histogram) std::cout << ' ' << c;
    std::cout << "\n";
  }
  return 0;
}

int run_mask_dump(const PipelineConfig& cfg, std::size_t count, std::uint64_t epoch,
                  const std::string& out_path) {
  require_input(cfg.vocab_path, "vocabulary", "--vocab");
  require_input(cfg.corpus_path, "corpus", "--corpus");
  const Vocabulary vocab = Vocabulary::load(cfg.vocab_path);
  require_artifact(cfg.schedule_path, "masking schedule", "schedule");
  const MaskingSchedule schedule = MaskingSchedule::load(cfg.schedule_path);
  if (schedule.vocab_hash() != vocab.content_hash())
    throw ArtifactError("schedule was built with a different vocabulary; re-run "
                        "`wmlm schedule`");
  const MaskingSchedule effective = apply_variant(schedule, parse_variant(cfg.variant));

  std::vector<MaskedExample> examples;
  CorpusStream stream(cfg.corpus_path, vocab, cfg.max_len);
  TokenizedDoc doc;
  std::uint64_t index = 0;
  while (examples.size() < count && stream.next(doc)) {
    if (doc.empty()) continue;
    examples.push_back(mask_example(doc, effective, vocab, cfg.seed, index++, epoch));
  }
  if (out_path.empty()) {
    dump_examples(std::cout, examples);
  } else {
    std::ofstream out(out_path);
    if (!out) throw Error("cannot write: " + out_path);
    dump_examples(out, examples);
  }
  const CorruptionCensus census = corruption_census(examples, vocab);
  std::cerr << "mask-dump: " << examples.size() << " examples, " << census.total()
            << " corrupted positions (masked " << census.masked << ", randomized "
            << census.randomized << ", kept " << census.kept << ")\n";
  return 0;
}

int run_train(const PipelineConfig& cfg, bool force) {
  require_input(cfg.vocab_path, "vocabulary", "--vocab");
  require_input(cfg.corpus_path, "corpus", "--corpus");
  const Vocabulary vocab = Vocabulary::load(cfg.vocab_path);
  require_artifact(cfg.schedule_path, "masking schedule", "schedule");
  const MaskingSchedule schedule = MaskingSchedule::load(cfg.schedule_path);
  if (schedule.vocab_hash() != vocab.content_hash())
    throw ArtifactError("schedule was built with a different vocabulary; re-run "
                        "`wmlm schedule`");
  const TrainConfig tc = cfg.train_config();
  Fnv1a h;
  h.update_u64(hash_file(cfg.schedule_path));
  h.update_u64(hash_file(cfg.corpus_path));
  h.update(variant_name(tc.variant));
  h.update_u64(tc.seed);
  h.update_u64(tc.steps);
  h.update_u64(tc.batch_size);
  h.update_u64(tc.max_len);
  h.update_u64(double_bits(tc.lr));
  h.update_u64(double_bits(tc.weight_decay));
  h.update_u64(tc.mean_reduction ? 1 : 0);
  h.update_u64(cfg.d_model);
  h.update_u64(cfg.n_blocks);
  const std::uint64_t input_hash = h.digest();
  if (!force && fs::exists(cfg.checkpoint_path)) {
    try {
      const TinyMlmModel existing = TinyMlmModel::load(cfg.checkpoint_path);
      if (existing.vocab_hash() == vocab.content_hash() &&
          existing.input_hash() == input_hash) {
        std::cout << "train: " << cfg.checkpoint_path << " is up to date\n";
        return 0;
      }
    } catch (const Error&) {
    }
  }
  const std::vector<TokenizedDoc> docs = read_corpus(cfg.corpus_path, vocab, cfg.max_len);
  TinyMlmModel model(cfg.model_config(vocab.size()));
  model.init_params(tc.seed);
  std::cout << "train: variant " << variant_name(tc.variant) << ", " << docs.size()
            << " documents, " << tc.steps << " steps, batch " << tc.batch_size << ", seed "
            << tc.seed << "\n";
  const TrainResult result = train(model, docs, schedule, vocab, tc);
  model.set_hashes(vocab.content_hash(), input_hash);
  model.save(cfg.checkpoint_path);
  write_loss_curve(cfg.curve_path, result.curve);
  const std::size_t stride = std::max<std::size_t>(1, result.curve.size() / 10);
  for (std::size_t i = 0; i < result.curve.size();
       i = (i + stride < result.curve.size() || i + 1 == result.curve.size())
               ? i + stride
               : result.curve.size() - 1) {
    const LossPoint& p = result.curve[i];
    std::cout << "train: step " << p.step << " loss " << format_mrr(p.mean_loss) << " (sum "
              << format_mrr(p.loss_sum) << " / weight " << format_mrr(p.weight_sum) << ")\n";
    if (i + 1 == result.curve.size()) break;
  }
  std::cout << "train: checkpoint -> " << cfg.checkpoint_path << ", curve -> "
            << cfg.curve_path << "\n";
  return 0;
}

int run_probe(const PipelineConfig& cfg, bool force, const std::string& compare_path,
              std::size_t case_k, std::size_t case_n) {
  require_input(cfg.vocab_path, "vocabulary", "--vocab");
  require_input(cfg.probe_path, "probe", "--probes");
  const Vocabulary vocab = Vocabulary::load(cfg.vocab_path);
  require_artifact(cfg.checkpoint_path, "model checkpoint", "train");
  const TinyMlmModel model = TinyMlmModel::load(cfg.checkpoint_path);
  if (model.vocab_hash() != vocab.content_hash())
    throw ArtifactError("checkpoint was trained with a different vocabulary; re-run "
                        "`wmlm train`");
  Fnv1a h;
  h.update_u64(hash_file(cfg.checkpoint_path));
  h.update_u64(hash_file(cfg.probe_path));
  const std::uint64_t input_hash = h.digest();
  if (!force && compare_path.empty() && fs::exists(cfg.report_path)) {
    try {
      std::uint64_t vh = 0, ih = 0;
      load_report_jsonl(cfg.report_path, &vh, &ih);
      if (vh == vocab.content_hash() && ih == input_hash) {
        std::cout << "probe: " << cfg.report_path << " is up to date\n";
        return 0;
      }
    } catch (const Error&) {
    }
  }
  const ProbeSet probes = load_probes(cfg.probe_path, vocab);
  if (!probes.rejected_lines.empty()) {
    std::cout << "probe: rejected " << probes.rejected_lines.size() << " lines (";
    for (std::size_t i = 0; i < std::min<std::size_t>(5, probes.rejected_lines.size()); ++i)
      std::cout << (i ? ", " : "") << probes.rejected_lines[i];
    if (probes.rejected_lines.size() > 5) std::cout << ", ...";
    std::cout << ")\n";
  }
  if (probes.skipped_golds)
    std::cout << "probe: skipped " << probes.skipped_golds
              << " records whose gold is not a single whole-word vocabulary token\n";
  const ProbeReport report = evaluate(model, vocab, probes.records, cfg.threads);
  write_report_jsonl(cfg.report_path, report, vocab.content_hash(), input_hash);
  std::cout << "probe: " << probes.records.size() << " records -> " << cfg.report_path
            << "\n";
  std::cout << format_report_table(report);
  if (!compare_path.empty()) {
    require_artifact(compare_path, "comparison checkpoint", "train");
    const TinyMlmModel other = TinyMlmModel::load(compare_path);
    if (other.vocab_hash() != vocab.content_hash())
      throw ArtifactError("comparison checkpoint was trained with a different vocabulary");
    const ProbeReport other_report = evaluate(other, vocab, probes.records, cfg.threads);
    const std::string label_a = stem_of(cfg.checkpoint_path);
    const std::string label_b = stem_of(compare_path);
    std::cout << format_report_delta(report, other_report, label_a, label_b);
    const std::size_t n = std::min(case_n, probes.records.size());
    std::cout << format_case_study(model, other, vocab,
                                   std::span(probes.records.data(), n), case_k, label_a,
                                   label_b);
  }
  return 0;
}

int run_report(const std::string& path_a, const std::string& path_b, std::string label_a,
               std::string label_b) {
  require_artifact(path_a, "probe report", "probe");
  require_artifact(path_b, "probe report", "probe");
  if (label_a.empty()) label_a = stem_of(path_a);
  if (label_b.empty()) label_b = stem_of(path_b);
  const ProbeReport a = load_report_jsonl(path_a);
  const ProbeReport b = load_report_jsonl(path_b);
  std::cout << format_report_delta(a, b, label_a, label_b);
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"PMI-weighted masked language modeling pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  bool force = false;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "flat key = value config file");
  app.add_flag("--force", force, "rebuild even when the output artifact is up to date");
  app.add_option("--set", sets, "override a config key, KEY=VALUE");

  struct FlagBinding {
    CLI::Option* opt = nullptr;
    std::string key;
    std::string value;
  };
  std::deque<FlagBinding> bindings;
  auto bind = [&](const std::string& flag, const std::string& key, const std::string& help) {
    bindings.emplace_back();
    FlagBinding& b = bindings.back();
    b.key = key;
    b.opt = app.add_option(flag, b.value, help);
  };
  bind("--vocab", "vocab", "vocabulary file, one token per line");
  bind("--corpus", "corpus", "corpus file, one document per line");
  bind("--table", "table", "co-occurrence table artifact");
  bind("--relevance", "relevance", "relevance score artifact");
  bind("--schedule", "schedule", "masking schedule artifact");
  bind("--checkpoint", "checkpoint", "model checkpoint artifact");
  bind("--curve", "curve", "loss curve output");
  bind("--probes", "probes", "cloze probe file");
  bind("--report", "report", "probe report artifact");
  bind("--window", "window", "co-occurrence window size");
  bind("--rate-min", "rate_min", "masking rate floor");
  bind("--rate-max", "rate_max", "masking rate ceiling");
  bind("--weight-min", "weight_min", "loss weight floor");
  bind("--weight-max", "weight_max", "loss weight ceiling");
  bind("--rank-normalize", "rank_normalize", "rank normalization (true) or min-max (false)");
  bind("--normalize-by-partners", "normalize_by_partners",
       "divide document relevance by partner count");
  bind("--clamp-negative", "clamp_negative", "clamp negative association scores to zero");
  bind("--variant", "variant", "ablation variant: uu, uw, vu, or vw");
  bind("--seed", "seed", "random seed for masking and initialization");
  bind("--steps", "steps", "training steps");
  bind("--batch-size", "batch_size", "training batch size");
  bind("--max-len", "max_len", "maximum sequence length");
  bind("--lr", "lr", "learning rate");
  bind("--weight-decay", "weight_decay", "decoupled weight decay");
  bind("--mean-reduction", "mean_reduction", "divide batch gradients by the weight sum");
  bind("--d-model", "d_model", "model width");
  bind("--n-blocks", "n_blocks", "encoder block count");
  bind("--threads", "threads", "worker cap for parallel stages");

  CLI::App* cmd_count = app.add_subcommand("count", "accumulate windowed co-occurrence counts");
  CLI::App* cmd_relevance =
      app.add_subcommand("relevance", "score token informativeness from the counts");
  CLI::App* cmd_schedule =
      app.add_subcommand("schedule", "map relevance scores to masking rates and loss weights");
  CLI::App* cmd_mask_dump =
      app.add_subcommand("mask-dump", "corrupt a few documents and dump them as JSON lines");
  CLI::App* cmd_train = app.add_subcommand("train", "train the tiny MLM encoder");
  CLI::App* cmd_probe = app.add_subcommand("probe", "evaluate a checkpoint on cloze probes");
  CLI::App* cmd_report = app.add_subcommand("report", "compare two probe reports");

  std::size_t dump_count = 8;
  std::uint64_t dump_epoch = 0;
  std::string dump_out;
  cmd_mask_dump->add_option("--count", dump_count, "number of documents to dump");
  cmd_mask_dump->add_option("--epoch", dump_epoch, "epoch fed to the masking RNG");
  cmd_mask_dump->add_option("--out", dump_out, "output file (default: stdout)");

  std::string compare_path;
  std::size_t case_k = 3, case_n = 5;
  cmd_probe->add_option("--compare", compare_path,
                        "second checkpoint for a side-by-side case study");
  cmd_probe->add_option("--case-k", case_k, "predictions per model in the case study");
  cmd_probe->add_option("--case-n", case_n, "prompts in the case study");

  std::string report_a, report_b, label_a, label_b;
  cmd_report->add_option("--a", report_a, "first probe report")->required();
  cmd_report->add_option("--b", report_b, "second probe report")->required();
  cmd_report->add_option("--label-a", label_a, "column label for the first report");
  cmd_report->add_option("--label-b", label_b, "column label for the second report");

  for (CLI::App* sub : {cmd_count, cmd_relevance, cmd_schedule, cmd_mask_dump, cmd_train,
                        cmd_probe, cmd_report})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  PipelineConfig cfg;
  if (!config_path.empty()) cfg = load_config(config_path);
  for (const auto& b : bindings)
    if (b.opt->count() > 0) set_config_key(cfg, b.key, b.value);
  for (const auto& kv : sets) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects KEY=VALUE, got '" + kv + "'");
    set_config_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();

  if (cmd_count->parsed()) return run_count(cfg, force);
  if (cmd_relevance->parsed()) return run_relevance(cfg, force);
  if (cmd_schedule->parsed()) return run_schedule(cfg, force);
  if (cmd_mask_dump->parsed()) return run_mask_dump(cfg, dump_count, dump_epoch, dump_out);
  if (cmd_train->parsed()) return run_train(cfg, force);
  if (cmd_probe->parsed()) return run_probe(cfg, force, compare_path, case_k, case_n);
  if (cmd_report->parsed()) return run_report(report_a, report_b, label_a, label_b);
  throw UsageError("no subcommand given");
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ArtifactError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
