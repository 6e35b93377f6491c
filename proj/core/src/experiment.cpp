#include "icl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "icl/error.hpp"
#include "icl/image.hpp"
#include "icl/manipulate.hpp"
#include "icl/tag_index.hpp"

namespace icl {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

/// Exact-text lookup into the precomputed question and (question, answer)
/// tables, falling back to the hashing embedder for unseen text.
class LookupTextEmbedder final : public TextEmbedder {
  public:
    LookupTextEmbedder(PrecomputedTextEmbedder table, std::size_t dim, std::uint64_t seed, bool fallback)
        : table_(std::move(table)), hashing_(dim, seed), fallback_(fallback) {}

    std::vector<float> embed(std::string_view text) const override {
        if (const auto* v = table_.find(text)) return *v;
        if (!fallback_) return table_.embed(text); // throws with the text
        return hashing_.embed(text);
    }
    std::size_t dim() const override { return hashing_.dim(); }

  private:
    PrecomputedTextEmbedder table_;
    HashingTextEmbedder hashing_;
    bool fallback_;
};

struct SplitLoad {
    std::shared_ptr<const SupportSet> set;
    Corpus corpus;
    std::map<Modality, EmbeddingTable> tables;
};

SplitLoad load_split(const SplitFiles& files, const ExperimentConfig& config, std::vector<std::string>& warnings) {
    SplitLoad out;
    LoadOptions opts;
    opts.normalize_answers = config.normalize_answers;
    out.set = std::make_shared<const SupportSet>(load_vqa_dataset(files.dataset, config.kind, opts, &warnings));
    out.corpus.set = out.set;
    for (const auto& [m, path] : files.embeddings) {
        auto table = load_embeddings(path, m);
        check_ids_in(table, *out.set);
        out.corpus.indices[static_cast<std::size_t>(m)] = std::make_shared<const SimilarityIndex>(table);
        out.tables.emplace(m, std::move(table));
    }
    std::map<SampleId, TagSet> image_tags, question_tags;
    if (!files.image_tags.empty()) image_tags = load_tag_file(files.image_tags);
    if (!files.question_tags.empty()) question_tags = load_tag_file(files.question_tags);
    out.corpus.image_tags = build_tag_index(*out.set, true, &image_tags);
    out.corpus.question_tags = build_tag_index(*out.set, false, &question_tags);
    return out;
}

void add_text_rows(PrecomputedTextEmbedder& table, const SupportSet& set,
                   const std::map<Modality, EmbeddingTable>& tables) {
    for (auto m : {Modality::question, Modality::question_answer}) {
        auto it = tables.find(m);
        if (it == tables.end() || it->second.dim != table.dim()) continue;
        const auto& t = it->second;
        for (std::size_t i = 0; i < t.size(); ++i) {
            const auto& s = set.at(t.ids[i]);
            const auto key = m == Modality::question ? s.question : qa_text(s.question, s.canonical_answer);
            if (table.find(key) != nullptr) continue;
            auto row = t.row(i);
            table.add(key, {row.begin(), row.end()});
        }
    }
}

std::size_t text_dim(const std::map<Modality, EmbeddingTable>& tables, std::size_t fallback) {
    for (auto m : {Modality::question_answer, Modality::question})
        if (auto it = tables.find(m); it != tables.end()) return it->second.dim;
    return fallback;
}

std::string format_sigma(double sigma) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", sigma);
    return buf;
}

} // namespace

ExperimentData load_experiment_data(const ExperimentConfig& config) {
    ExperimentData d;
    auto support = load_split(config.support, config, d.warnings);
    d.support = support.set;
    d.support_corpus = support.corpus;
    d.same_split = config.queries_from_support;

    std::map<Modality, EmbeddingTable> query_tables;
    if (d.same_split) {
        d.queries = d.support;
        d.query_corpus = d.support_corpus;
    } else {
        auto queries = load_split(config.queries, config, d.warnings);
        d.queries = queries.set;
        d.query_corpus = queries.corpus;
        query_tables = std::move(queries.tables);
    }

    const auto& te = config.text_embedder;
    switch (te.kind) {
    case TextEmbedderKind::hashing:
        d.text_embedder = std::make_shared<HashingTextEmbedder>(te.dim, te.seed);
        break;
    case TextEmbedderKind::remote:
        d.text_embedder = std::make_shared<RemoteTextEmbedder>(EmbeddingServiceOptions{te.endpoint}, te.dim);
        break;
    case TextEmbedderKind::automatic:
    case TextEmbedderKind::precomputed_qa: {
        const std::size_t dim = text_dim(support.tables, te.dim);
        PrecomputedTextEmbedder table(dim);
        add_text_rows(table, *d.support, support.tables);
        if (!d.same_split) add_text_rows(table, *d.queries, query_tables);
        d.text_embedder = std::make_shared<LookupTextEmbedder>(std::move(table), dim, te.seed,
                                                               te.kind == TextEmbedderKind::automatic);
        break;
    }
    }

    if (!config.key_tokens.empty()) d.key_tokens = load_key_token_file(config.key_tokens);

    if (!config.subset.ids.empty()) {
        for (auto id : config.subset.ids) {
            if (!d.queries->contains(id))
                throw ValidationError("query subset id " + std::to_string(id) + " is not in the query set");
            d.query_ids.push_back(id);
        }
    } else {
        const std::size_t n = config.subset.count ? std::min(*config.subset.count, d.queries->size())
                                                  : d.queries->size();
        for (std::size_t i = 0; i < n; ++i) d.query_ids.push_back(d.queries->samples()[i].sample_id);
    }
    return d;
}

// ---------------------------------------------------------------------------

Experiment::Experiment(ExperimentConfig config, std::shared_ptr<const Oracle> oracle)
    : config_(std::move(config)), data_(load_experiment_data(config_)) {
    init_arms(std::move(oracle));
}

Experiment::Experiment(ExperimentConfig config, ExperimentData data, std::shared_ptr<const Oracle> oracle)
    : config_(std::move(config)), data_(std::move(data)) {
    init_arms(std::move(oracle));
}

void Experiment::init_arms(std::shared_ptr<const Oracle> oracle) {
    stop_ = {config_.prompt_template.chunk_separator, "Question:"};

    OracleContext octx;
    octx.queries = data_.queries.get();
    octx.question_embedder = data_.text_embedder;
    octx.stop = stop_;
    std::shared_ptr<const Oracle> base = oracle ? oracle : std::shared_ptr<const Oracle>(make_oracle(config_.oracle, octx));

    for (const auto& spec : config_.arms) {
        auto arm = std::make_unique<ArmContext>();
        arm->arm = spec;
        arm->label = spec.label();
        arm->oracle = base;
        if (spec.probe) {
            auto support_yn = std::make_shared<const SupportSet>(yes_no_subset(*data_.support));
            auto probed = std::make_shared<const SupportSet>(build_trtl_probe(*support_yn, *spec.probe));
            arm->support = data_.support_corpus.restricted_to(probed);
            auto queries_yn = std::make_shared<const SupportSet>(yes_no_subset(*data_.queries));
            arm->queries = data_.query_corpus.restricted_to(queries_yn);
            if (spec.probe->mode == ProbeMode::new_mapping) {
                arm->scoring_queries =
                    std::make_shared<const SupportSet>(apply_answer_mapping(*queries_yn, spec.probe->mapping));
                if (!oracle && config_.oracle.kind == OracleKind::mock_lookup) {
                    OracleContext mapped = octx;
                    mapped.answer_mapping = spec.probe->mapping;
                    arm->oracle = make_oracle(config_.oracle, mapped);
                }
            } else {
                arm->scoring_queries = queries_yn;
            }
        } else {
            arm->support = data_.support_corpus;
            arm->queries = data_.query_corpus;
            arm->scoring_queries = data_.queries;
        }
        arm->pool = std::make_unique<ReplacementPool>(*arm->support.set);
        arms_.push_back(std::move(arm));
    }
}

std::string Experiment::pseudo_answer(const ArmContext& arm, const VqaSample& query,
                                      const DemonstrationList& round1) const {
    const auto seq = build_sequence(*arm.support.set, round1, query);
    const auto prompt = serialize(seq, config_.prompt_template);
    const auto answer = arm.oracle->generate({query.sample_id, &prompt, &seq});
    const auto cut = postprocess_answer(answer.text, stop_);
    return config_.normalize_answers ? normalize_answer(cut) : cut;
}

std::string Experiment::blur_query_image(const std::string& image_ref) const {
    // Loaded refs are already resolved against image_root when one is set.
    const fs::path src(image_ref);
    if (src.extension() != ".ppm" || !fs::is_regular_file(src))
        return image_ref + "#blur(sigma=" + format_sigma(config_.blur_sigma) + ")";

    static std::mutex mu;
    const fs::path dir = !config_.blur_dir.empty() ? config_.blur_dir
                         : !config_.output_dir.empty() ? config_.output_dir / "blurred"
                                                       : fs::temp_directory_path() / "icl-blurred";
    const fs::path dst = dir / (src.stem().string() + ".blur" + format_sigma(config_.blur_sigma) + ".ppm");
    std::lock_guard lock(mu);
    if (!fs::exists(dst)) {
        fs::create_directories(dir);
        write_ppm(dst, blur_image(read_ppm(src), config_.blur_sigma));
    }
    return dst.string();
}

InContextSequence Experiment::manipulate(const ArmContext& arm, InContextSequence seq, const VqaSample& query,
                                         Rng& rng) const {
    if (arm.arm.probe && arm.arm.probe->mode == ProbeMode::mismatch)
        seq = apply_mismatch_probe(std::move(seq), arm.arm.probe->correct_fraction, rng);

    for (const auto& m : arm.arm.manipulations) {
        switch (m.kind) {
        case ManipulationKind::MI: seq = mismatch(std::move(seq), MismatchMode::MI, *arm.pool, rng); break;
        case ManipulationKind::MA: seq = mismatch(std::move(seq), MismatchMode::MA, *arm.pool, rng); break;
        case ManipulationKind::MQA: seq = mismatch(std::move(seq), MismatchMode::MQA, *arm.pool, rng); break;
        case ManipulationKind::reorder_si_q: {
            std::vector<float> owned;
            std::span<const float> key;
            const auto& qidx = arm.queries;
            if (qidx.has_index(Modality::question) && qidx.index(Modality::question).contains(query.sample_id)) {
                key = *qidx.index(Modality::question).vector(query.sample_id);
            } else {
                owned = data_.text_embedder->embed(query.question);
                key = owned;
            }
            seq = reorder_cross_modal(std::move(seq), ReorderBy::question, arm.support.index(Modality::question), key);
            break;
        }
        case ManipulationKind::reorder_sq_i: {
            auto v = arm.queries.index(Modality::image).vector(query.sample_id);
            if (!v) throw ValidationError("query " + std::to_string(query.sample_id) + " has no image embedding");
            seq = reorder_cross_modal(std::move(seq), ReorderBy::image, arm.support.index(Modality::image), *v);
            break;
        }
        case ManipulationKind::reverse: seq = reverse(std::move(seq)); break;
        case ManipulationKind::instruction: seq = prepend_instruction(std::move(seq), m.instruction); break;
        case ManipulationKind::declarative: seq = declarative_sequence(std::move(seq)); break;
        case ManipulationKind::blur_query:
            seq.query.image_ref = blur_query_image(seq.query.image_ref);
            seq.log.emplace_back("noise:blur");
            break;
        case ManipulationKind::degrade_question: {
            auto it = data_.key_tokens.find(query.sample_id);
            seq = degrade_query(std::move(seq),
                                it != data_.key_tokens.end() ? it->second : default_key_tokens(query.question));
            break;
        }
        }
    }
    return seq;
}

InContextSequence Experiment::build_sequence_for(const ArmContext& arm, int shots, SampleId query_id) const {
    const auto& query = arm.queries.set->at(query_id);
    StrategySpec spec = arm.arm.strategy;
    spec.shots = shots;
    Rng rng(derive_seed(config_.seed, query_id, arm.label, shots));

    RetrievalContext ctx;
    ctx.support = &arm.support;
    ctx.queries = &arm.queries;
    ctx.text = data_.text_embedder.get();
    ctx.self_exclude = data_.same_split;
    ctx.scan_threads = config_.scan_threads;

    const PseudoAnswerFn pseudo = [&](const VqaSample& q, const DemonstrationList& round1) {
        return pseudo_answer(arm, q, round1);
    };
    const auto list = retrieve(ctx, query, spec, rng, &pseudo);
    return manipulate(arm, build_sequence(*arm.support.set, list, query), query, rng);
}

QueryOutcome Experiment::run_query(const ArmContext& arm, int shots, SampleId query_id) const {
    QueryOutcome out;
    const auto& scoring = arm.scoring_queries->at(query_id);
    try {
        auto seq = build_sequence_for(arm, shots, query_id);
        auto prompt = serialize(seq, config_.prompt_template);
        const auto answer = arm.oracle->generate({query_id, &prompt, &seq});
        std::vector<SampleId> ids;
        std::vector<std::string> answers;
        for (const auto& d : seq.demos) {
            ids.push_back(d.sample_id);
            answers.push_back(d.answer);
        }
        out.result = score_query(scoring, arm.label, shots, postprocess_answer(answer.text, stop_), std::move(ids),
                                 std::move(answers), config_.normalize_answers);
        out.result.prompt_chars = prompt.text.size();
        out.result.prompt_tokens = estimated_tokens(prompt);
        out.sequence = std::move(seq);
        out.prompt = std::move(prompt);
    } catch (const Error& e) {
        out.result = QueryResult{};
        out.result.query_id = query_id;
        out.result.arm = arm.label;
        out.result.shots = shots;
        out.result.error = e.what();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Runner

namespace {

struct RowLog {
    json header;
    std::vector<QueryResult> rows;
};

/// Reads a row log. A torn final line (interrupted write) is dropped and
/// the file truncated to the last complete row.
RowLog read_row_log(const fs::path& path, bool repair) {
    RowLog log;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();

    std::size_t pos = 0, good_end = 0;
    bool first = true;
    while (pos < content.size()) {
        const auto nl = content.find('\n', pos);
        if (nl == std::string::npos) break; // torn tail
        const auto line = content.substr(pos, nl - pos);
        pos = nl + 1;
        if (line.empty()) {
            good_end = pos;
            continue;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ": corrupt row: " + e.what());
        }
        if (first) {
            log.header = std::move(j);
            first = false;
        } else {
            log.rows.push_back(query_result_from_json(j));
        }
        good_end = pos;
    }
    if (first) throw ParseError(path.string() + ": missing header line");
    if (repair && good_end != content.size()) fs::resize_file(path, good_end);
    return log;
}

void sort_rows(std::vector<QueryResult>& rows, const std::vector<std::string>& arm_order,
               const std::vector<int>& shots) {
    std::unordered_map<std::string, std::size_t> arm_rank;
    for (std::size_t i = 0; i < arm_order.size(); ++i) arm_rank.emplace(arm_order[i], i);
    std::unordered_map<int, std::size_t> shot_rank;
    for (std::size_t i = 0; i < shots.size(); ++i) shot_rank.emplace(shots[i], i);
    auto rank = [](const auto& m, const auto& k) {
        auto it = m.find(k);
        return it == m.end() ? m.size() : it->second;
    };
    std::sort(rows.begin(), rows.end(), [&](const QueryResult& a, const QueryResult& b) {
        return std::make_tuple(rank(arm_rank, a.arm), a.arm, rank(shot_rank, a.shots), a.shots, a.query_id) <
               std::make_tuple(rank(arm_rank, b.arm), b.arm, rank(shot_rank, b.shots), b.shots, b.query_id);
    });
}

EvalReport make_report(std::vector<QueryResult> rows, const std::string& fingerprint,
                       const std::vector<std::string>& arm_order, const std::vector<int>& shots, bool partial) {
    sort_rows(rows, arm_order, shots);
    EvalReport r;
    r.fingerprint = fingerprint;
    r.aggregates = aggregate(rows, shots, arm_order);
    r.rows = std::move(rows);
    r.partial = partial;
    return r;
}

} // namespace

EvalReport report_from_row_log(const fs::path& row_log, const ExperimentConfig* config) {
    auto log = read_row_log(row_log, false);
    std::vector<std::string> arms;
    std::vector<int> shots;
    if (config) {
        for (const auto& a : config->arms) arms.push_back(a.label());
        shots = config->shots;
    } else {
        arms = log.header.value("arms", std::vector<std::string>{});
        shots = log.header.value("shots", std::vector<int>{});
    }
    const auto expected = log.header.value("total", std::size_t{0});
    const bool partial = expected != 0 && log.rows.size() < expected;
    return make_report(std::move(log.rows), log.header.value("fingerprint", ""), arms, shots, partial);
}

RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options) {
    validate_config(config);
    if (config.output_dir.empty()) throw ValidationError("config: output_dir is required for a run");
    const auto calls_before = network_call_count();
    const auto fp = fingerprint(config);

    Experiment exp(config, options.oracle);
    RunSummary summary;
    summary.warnings = exp.data().warnings;
    summary.output_dir = config.output_dir;

    struct Task {
        std::size_t arm;
        int shots;
        SampleId query;
    };
    std::vector<Task> tasks;
    for (std::size_t a = 0; a < exp.arms().size(); ++a) {
        const auto& arm = *exp.arms()[a];
        for (int s : config.shots)
            for (auto q : exp.data().query_ids)
                if (arm.queries.set->contains(q)) tasks.push_back({a, s, q});
    }
    summary.total_tasks = tasks.size();

    std::vector<std::string> arm_order;
    for (const auto& a : exp.arms()) arm_order.push_back(a->label);

    fs::create_directories(config.output_dir);
    const fs::path log_path = config.output_dir / kRowLogName;
    std::vector<QueryResult> rows;
    if (fs::exists(log_path)) {
        auto log = read_row_log(log_path, true);
        if (log.header.value("fingerprint", "") != fp) {
            if (!options.fresh)
                throw ValidationError(log_path.string() +
                                      " belongs to a different config or dataset; rerun with --fresh to discard it");
            fs::remove(log_path);
        } else {
            rows = std::move(log.rows);
        }
    }
    if (!fs::exists(log_path)) {
        std::ofstream out(log_path, std::ios::binary | std::ios::trunc);
        out << json{{"fingerprint", fp}, {"arms", arm_order}, {"shots", config.shots}, {"total", tasks.size()}}.dump()
            << '\n';
        if (!out) throw IoError("cannot write " + log_path.string());
    }

    std::set<std::tuple<std::string, int, SampleId>> done;
    for (const auto& r : rows) done.emplace(r.arm, r.shots, r.query_id);
    summary.resumed = rows.size();
    std::vector<Task> pending;
    for (const auto& t : tasks)
        if (!done.count({exp.arms()[t.arm]->label, t.shots, t.query})) pending.push_back(t);

    std::ofstream log_out(log_path, std::ios::binary | std::ios::app);
    std::ofstream prompt_out;
    if (config.dump_prompts) prompt_out.open(config.output_dir / kPromptDumpName, std::ios::binary | std::ios::app);

    std::mutex mu;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::size_t completed = 0;
    std::exception_ptr fatal;

    auto worker = [&] {
        while (!stop.load()) {
            const auto i = next.fetch_add(1);
            if (i >= pending.size()) return;
            const auto& t = pending[i];
            QueryOutcome outcome;
            try {
                outcome = exp.run_query(*exp.arms()[t.arm], t.shots, t.query);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!fatal) fatal = std::current_exception();
                stop = true;
                return;
            }
            std::lock_guard lock(mu);
            if (stop.load() && options.stop_after && completed >= *options.stop_after) return;
            log_out << to_json(outcome.result).dump() << '\n';
            log_out.flush();
            if (prompt_out.is_open() && outcome.prompt)
                prompt_out << json{{"query_id", t.query},
                                   {"arm", outcome.result.arm},
                                   {"shots", t.shots},
                                   {"text", outcome.prompt->text},
                                   {"image_refs", outcome.prompt->image_refs}}
                                  .dump()
                           << '\n';
            rows.push_back(std::move(outcome.result));
            ++completed;
            if (options.progress) options.progress(summary.resumed + completed, tasks.size());
            if (options.stop_after && completed >= *options.stop_after) stop = true;
        }
    };

    const auto nthreads = static_cast<std::size_t>(std::max(1, config.workers));
    if (nthreads == 1 || pending.size() <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < std::min(nthreads, pending.size()); ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    log_out.close();
    if (fatal) std::rethrow_exception(fatal);

    summary.executed = completed;
    const bool partial = rows.size() < tasks.size();
    summary.report = make_report(std::move(rows), fp, arm_order, config.shots, partial);
    summary.failed = summary.report.aggregates.failed;

    emit_report(summary.report, ReportFormat::json, config.output_dir / kReportJsonName);
    emit_report(summary.report, ReportFormat::csv, config.output_dir / kReportCsvName);
    emit_report(summary.report, ReportFormat::plotdata, config.output_dir / kReportPlotName);
    summary.network_calls = network_call_count() - calls_before;
    return summary;
}

} // namespace icl
