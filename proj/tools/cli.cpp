#include "cli.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "rrag/annotate.hpp"
#include "rrag/backend.hpp"
#include "rrag/config.hpp"
#include "rrag/corpus.hpp"
#include "rrag/embedding.hpp"
#include "rrag/error.hpp"
#include "rrag/eval.hpp"
#include "rrag/http_backend.hpp"
#include "rrag/inference.hpp"
#include "rrag/jsonl.hpp"
#include "rrag/retriever.hpp"

namespace rrag::cli {
namespace {

constexpr const char* k_token_env = "SELFRAG_BACKEND_TOKEN";

/// Flag values that, when given, override the config file.
struct Overrides {
  std::string config_path;
  std::optional<std::uint32_t> chunk_size, overlap;
  std::optional<std::size_t> k_per_source, k_final;
  std::optional<double> delta, lambda_lm, w_rel, w_sup, w_use;
  std::optional<int> timeout_ms, max_retries, max_inflight;
  std::optional<std::uint64_t> seed;

  EngineConfig resolve() const {
    EngineConfig cfg;
    if (!config_path.empty()) cfg = load_engine_config(config_path);
    if (chunk_size) cfg.chunk.chunk_size = *chunk_size;
    if (overlap) cfg.chunk.overlap = *overlap;
    if (k_per_source) cfg.retrieval.k_per_source = *k_per_source;
    if (k_final) cfg.retrieval.k_final = *k_final;
    if (delta) cfg.scoring.gate.delta = *delta;
    if (lambda_lm) cfg.scoring.lambda_lm = *lambda_lm;
    if (w_rel) cfg.scoring.weights.w_rel = *w_rel;
    if (w_sup) cfg.scoring.weights.w_sup = *w_sup;
    if (w_use) cfg.scoring.weights.w_use = *w_use;
    if (timeout_ms) cfg.backend.timeout_ms = *timeout_ms;
    if (max_retries) cfg.backend.max_retries = *max_retries;
    if (max_inflight) cfg.backend.max_inflight = *max_inflight;
    if (seed) cfg.seed = *seed;
    cfg.validate();
    return cfg;
  }
};

struct Options {
  Overrides over;
  std::string in, out, corpus, index_dir, query, backend, traces, gold, report;
  std::size_t workers = 1;
  std::optional<std::size_t> sample;
};

void add_config(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.over.config_path, "Engine config JSON")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.over.seed, "Seed for every randomized stage");
}

void add_chunking(CLI::App* cmd, Options& o) {
  cmd->add_option("--chunk-size", o.over.chunk_size, "Words per chunk");
  cmd->add_option("--overlap", o.over.overlap, "Words shared by consecutive chunks");
}

void add_retrieval(CLI::App* cmd, Options& o) {
  cmd->add_option("--index-dir", o.index_dir, "Directory of *.idx files");
  cmd->add_option("--k-per-source", o.over.k_per_source, "Hits taken from each index");
  cmd->add_option("--k-final", o.over.k_final, "Evidence kept after reranking");
}

void add_scoring(CLI::App* cmd, Options& o) {
  cmd->add_option("--delta", o.over.delta, "Retrieval gate threshold");
  cmd->add_option("--lambda-lm", o.over.lambda_lm, "Weight of mean token logprob");
  cmd->add_option("--w-rel", o.over.w_rel, "REL critique weight");
  cmd->add_option("--w-sup", o.over.w_sup, "SUP critique weight");
  cmd->add_option("--w-use", o.over.w_use, "USE critique weight");
}

void add_backend(CLI::App* cmd, Options& o) {
  cmd->add_option("--backend", o.backend, "mock:SCRIPT.json or http://host:port")->required();
  cmd->add_option("--timeout-ms", o.over.timeout_ms, "Per-request timeout");
  cmd->add_option("--max-retries", o.over.max_retries, "Retries on transport failure");
  cmd->add_option("--max-inflight", o.over.max_inflight, "Concurrent backend requests");
  cmd->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
}

void write_sidecar(const std::string& out_path, std::string_view command, const EngineConfig& cfg) {
  std::ofstream side = open_output(out_path + ".config.json");
  nlohmann::ordered_json j{{"command", command}, {"config", engine_config_to_json(cfg)}};
  side << j.dump(2) << '\n';
}

void emit_json(const nlohmann::ordered_json& j, const std::string& out_path, std::ostream& out) {
  if (out_path.empty() || out_path == "-") {
    out << j.dump(2) << '\n';
    return;
  }
  std::ofstream f = open_output(out_path);
  f << j.dump(2) << '\n';
}

std::shared_ptr<const ModelBackend> make_backend(const std::string& spec, const EngineConfig& cfg) {
  HttpBackendOptions http;
  http.timeout_ms = cfg.backend.timeout_ms;
  http.max_retries = cfg.backend.max_retries;
  http.jitter_seed = cfg.seed;
  if (const char* token = std::getenv(k_token_env)) http.bearer_token = token;
  std::shared_ptr<const ModelBackend> inner = open_backend(spec, std::move(http));
  return std::make_shared<BoundedBackend>(inner, cfg.backend.max_inflight);
}

std::unique_ptr<MultiSourceRetriever> make_retriever(const std::string& dir, const EngineConfig& cfg) {
  auto embedder = std::make_shared<HashingEmbedder>();
  std::vector<EmbeddingIndex> indices;
  if (!dir.empty()) indices = load_index_dir(dir);
  return std::make_unique<MultiSourceRetriever>(std::move(indices), embedder,
                                                std::make_shared<EmbeddingReranker>(embedder), cfg.retrieval);
}

int cmd_chunk(const Options& o, std::ostream&, std::ostream& err) {
  const EngineConfig cfg = o.over.resolve();
  IngestResult ingested = ingest_file(o.in, o.corpus);
  for (const auto& d : ingested.diagnostics) {
    err << o.in << ":" << d.line << ": " << d.code << ": " << d.message << '\n';
  }
  std::vector<Chunk> chunks;
  for (const auto& doc : ingested.documents) {
    auto doc_chunks = chunk_document(doc, cfg.chunk);
    chunks.insert(chunks.end(), doc_chunks.begin(), doc_chunks.end());
  }
  std::ofstream f = open_output(o.out);
  write_chunks(f, chunks);
  write_sidecar(o.out, "chunk", cfg);
  return k_exit_ok;
}

int cmd_index(const Options& o, std::ostream&, std::ostream&) {
  const EngineConfig cfg = o.over.resolve();
  std::vector<Chunk> chunks;
  for (auto& c : read_chunks_file(o.in)) {
    if (c.corpus_name == o.corpus) chunks.push_back(std::move(c));
  }
  if (chunks.empty()) {
    throw Error(ErrorCode::EmptyCorpus, "no chunks of corpus '" + o.corpus + "' in " + o.in);
  }
  const HashingEmbedder embedder;
  save_index_file(o.out, build_index(chunks, embedder, o.workers));
  write_sidecar(o.out, "index", cfg);
  return k_exit_ok;
}

int cmd_retrieve(const Options& o, std::ostream& out, std::ostream&) {
  const EngineConfig cfg = o.over.resolve();
  auto retriever = make_retriever(o.index_dir, cfg);
  if (retriever->indices().empty()) throw Error(ErrorCode::EmptyCorpus, "no indices in '" + o.index_dir + "'");
  nlohmann::ordered_json evidence = nlohmann::ordered_json::array();
  for (const auto& e : retriever->retrieve(o.query)) evidence.push_back(evidence_to_json(e));
  emit_json({{"query", o.query}, {"evidence", std::move(evidence)}, {"config", engine_config_to_json(cfg)}},
            o.out, out);
  return k_exit_ok;
}

int cmd_infer(const Options& o, std::ostream&, std::ostream& err) {
  const EngineConfig cfg = o.over.resolve();
  const auto queries = read_queries_file(o.in);
  auto retriever = make_retriever(o.index_dir, cfg);
  auto backend = make_backend(o.backend, cfg);
  InferenceConfig icfg;
  icfg.scoring = cfg.scoring;
  icfg.candidate_workers = static_cast<std::size_t>(cfg.backend.max_inflight);
  const auto traces = run_batch(queries, *backend, retriever.get(), icfg, o.workers);

  std::ofstream f = open_output(o.out);
  int status = k_exit_ok;
  for (const auto& t : traces) {
    write_json_line(f, trace_to_json(t));
    if (t.error) {
      err << "query " << t.query.id << ": " << t.error->message << '\n';
      const int code = is_backend_error(t.error->code) ? k_exit_backend : k_exit_data;
      status = std::max(status, code);
    }
  }
  write_sidecar(o.out, "infer", cfg);
  return status;
}

int cmd_annotate(const Options& o, std::ostream&, std::ostream&) {
  const EngineConfig cfg = o.over.resolve();
  auto instances = read_instances_file(o.in);
  if (o.sample) instances = sample_for_critic(instances, *o.sample, cfg.seed);
  auto retriever = make_retriever(o.index_dir, cfg);
  auto backend = make_backend(o.backend, cfg);
  const auto annotated = annotate_batch(instances, *backend, retriever.get(), {}, o.workers);
  std::ofstream f = open_output(o.out);
  for (const auto& a : annotated) write_json_line(f, annotated_to_json(a));
  write_sidecar(o.out, "annotate", cfg);
  return k_exit_ok;
}

int cmd_filter(const Options& o, std::ostream& out, std::ostream&) {
  const EngineConfig cfg = o.over.resolve();
  auto [kept, report] = filter_annotated(read_annotated_file(o.in));
  std::ofstream f = open_output(o.out);
  for (const auto& a : kept) write_json_line(f, annotated_to_json(a));
  write_sidecar(o.out, "filter", cfg);
  nlohmann::ordered_json j = filter_report_to_json(report);
  j["config"] = engine_config_to_json(cfg);
  emit_json(j, o.report, out);
  return k_exit_ok;
}

int cmd_export(const Options& o, std::ostream&, std::ostream&) {
  const EngineConfig cfg = o.over.resolve();
  export_training_file(o.out, read_annotated_file(o.in));
  write_sidecar(o.out, "export", cfg);
  return k_exit_ok;
}

int cmd_evaluate(const Options& o, std::ostream& out, std::ostream&) {
  const EngineConfig cfg = o.over.resolve();
  const EvalReport report = analyze_traces(read_traces_file(o.traces), read_gold_file(o.gold));
  nlohmann::ordered_json j = eval_report_to_json(report);
  j["config"] = engine_config_to_json(cfg);
  emit_json(j, o.out, out);
  return k_exit_ok;
}

int cmd_stats(const Options& o, std::ostream& out, std::ostream&) {
  const EngineConfig cfg = o.over.resolve();
  nlohmann::ordered_json j = corpus_stats_to_json(corpus_stats(read_chunks_file(o.in)));
  j["config"] = engine_config_to_json(cfg);
  emit_json(j, o.out, out);
  return k_exit_ok;
}

int exit_code_for(const Error& e) {
  if (is_backend_error(e.code())) return k_exit_backend;
  if (e.code() == ErrorCode::InvalidConfig) return k_exit_usage;
  return k_exit_data;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Retrieval-augmented generation engine with reflective-token critique", "rrag"};
  app.require_subcommand(1);
  Options o;
  using Handler = std::function<int(const Options&, std::ostream&, std::ostream&)>;
  std::vector<std::pair<CLI::App*, Handler>> commands;

  auto* chunk = app.add_subcommand("chunk", "Split a document JSONL file into chunk records");
  chunk->add_option("--in", o.in, "Documents JSONL")->required()->check(CLI::ExistingFile);
  chunk->add_option("--corpus", o.corpus, "Corpus name")->required();
  chunk->add_option("--out", o.out, "Chunks JSONL")->required();
  add_chunking(chunk, o);
  add_config(chunk, o);
  commands.emplace_back(chunk, cmd_chunk);

  auto* index = app.add_subcommand("index", "Embed one corpus's chunks into an index file");
  index->add_option("--in", o.in, "Chunks JSONL")->required()->check(CLI::ExistingFile);
  index->add_option("--corpus", o.corpus, "Corpus name")->required();
  index->add_option("--out", o.out, "Index file")->required();
  index->add_option("--workers", o.workers, "Embedding threads")->check(CLI::PositiveNumber);
  add_config(index, o);
  commands.emplace_back(index, cmd_index);

  auto* retrieve = app.add_subcommand("retrieve", "Retrieve and rerank evidence for one query");
  retrieve->add_option("--query", o.query, "Query text")->required();
  retrieve->add_option("--out", o.out, "Output JSON (default: stdout)");
  add_retrieval(retrieve, o);
  retrieve->get_option("--index-dir")->required();
  add_config(retrieve, o);
  commands.emplace_back(retrieve, cmd_retrieve);

  auto* infer = app.add_subcommand("infer", "Run gated inference over a query file");
  infer->add_option("--queries", o.in, "Queries JSONL")->required()->check(CLI::ExistingFile);
  infer->add_option("--out", o.out, "Traces JSONL")->required();
  add_retrieval(infer, o);
  add_scoring(infer, o);
  add_backend(infer, o);
  add_config(infer, o);
  commands.emplace_back(infer, cmd_infer);

  auto* annotate = app.add_subcommand("annotate", "Annotate instruction instances with a critic");
  annotate->add_option("--in", o.in, "Instruction JSONL")->required()->check(CLI::ExistingFile);
  annotate->add_option("--out", o.out, "Annotated JSONL")->required();
  annotate->add_option("--sample", o.sample, "Annotate a seeded sample of this size");
  add_retrieval(annotate, o);
  add_backend(annotate, o);
  add_config(annotate, o);
  commands.emplace_back(annotate, cmd_annotate);

  auto* filter = app.add_subcommand("filter", "Drop mispredicted annotations");
  filter->add_option("--in", o.in, "Annotated JSONL")->required()->check(CLI::ExistingFile);
  filter->add_option("--out", o.out, "Kept annotated JSONL")->required();
  filter->add_option("--report", o.report, "Filter report JSON (default: stdout)");
  add_config(filter, o);
  commands.emplace_back(filter, cmd_filter);

  auto* exp = app.add_subcommand("export", "Write generator training records");
  exp->add_option("--in", o.in, "Annotated JSONL")->required()->check(CLI::ExistingFile);
  exp->add_option("--out", o.out, "Training JSONL")->required();
  add_config(exp, o);
  commands.emplace_back(exp, cmd_export);

  auto* evaluate = app.add_subcommand("evaluate", "Score traces against gold answers");
  evaluate->add_option("--traces", o.traces, "Traces JSONL")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--gold", o.gold, "Gold JSONL")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--out", o.out, "Report JSON (default: stdout)");
  add_config(evaluate, o);
  commands.emplace_back(evaluate, cmd_evaluate);

  auto* stats = app.add_subcommand("stats", "Per-corpus document, chunk, and index-size counts");
  stats->add_option("--chunks", o.in, "Chunks JSONL")->required()->check(CLI::ExistingFile);
  stats->add_option("--out", o.out, "Output JSON (default: stdout)");
  add_config(stats, o);
  commands.emplace_back(stats, cmd_stats);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return k_exit_ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return k_exit_ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto selected = app.get_subcommands();
    err << (selected.empty() ? app.help() : selected.front()->help());
    return k_exit_usage;
  }

  try {
    for (const auto& [cmd, handler] : commands) {
      if (cmd->parsed()) return handler(o, out, err);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return k_exit_data;
  }
  return k_exit_usage;
}

}  // namespace rrag::cli
