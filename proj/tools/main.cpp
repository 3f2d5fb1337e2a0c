// dialect-nat: command-line entry point for corpus synthesis, alignment,
// training, augmentation, translation, pipeline runs, BLEU and latency.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <deque>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dialect_nat/dialect_nat.hpp"
#include "dialect_nat/pipeline.hpp"
#include "dialect_nat/run_config.hpp"
#include "dialect_nat/workflow.hpp"

namespace {

using namespace dnat;
using json = nlohmann::json;

constexpr const char* kToolVersion = "0.1.0";

struct UsageError : Error {
    explicit UsageError(const std::string& w) : Error("usage", w) {}
};

std::string exact(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}
std::string exact(const std::string& v) { return v; }
template <typename T>
std::string exact(const T& v) {
    return std::to_string(v);
}

// Options bound to variables; after parsing they are rendered back into a
// canonical argument list for the run manifest.
struct Command {
    CLI::App* app = nullptr;
    std::vector<std::function<void(std::vector<std::string>&, json&)>> renderers;
    std::function<void()> run;

    template <typename T>
    CLI::Option* option(const std::string& name, T& var, const std::string& desc) {
        auto* o = app->add_option(name, var, desc)->capture_default_str();
        renderers.push_back([name, &var](std::vector<std::string>& argv, json& opts) {
            const std::string v = exact(var);
            if constexpr (std::is_same_v<T, std::string>)
                if (v.empty()) return;
            argv.push_back(name);
            argv.push_back(v);
            opts[name.substr(2)] = v;
        });
        return o;
    }

    CLI::Option* flag(const std::string& name, bool& var, const std::string& desc) {
        auto* o = app->add_flag(name, var, desc);
        renderers.push_back([name, &var](std::vector<std::string>& argv, json& opts) {
            if (var) argv.push_back(name);
            opts[name.substr(2)] = var;
        });
        return o;
    }
};

struct Manifest {
    json doc;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void write(const std::string& output) {
        doc["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const std::string path = output + ".manifest.json";
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write manifest " + path);
        out << doc.dump(2) << '\n';
    }
};

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

Manifest start_manifest(const Command& cmd, const std::vector<std::string>& argv) {
    Manifest m;
    std::vector<std::string> replay = {cmd.app->get_name()};
    json opts = json::object();
    for (const auto& r : cmd.renderers) r(replay, opts);
    m.doc["tool"] = "dialect-nat";
    m.doc["subcommand"] = cmd.app->get_name();
    m.doc["argv"] = argv;
    m.doc["replay_argv"] = replay;
    m.doc["options"] = opts;
    m.doc["versions"] = {{"tool", kToolVersion},
                         {"checkpoint_format", kCheckpointVersion},
                         {"compiler", __VERSION__},
                         {"cli11", CLI11_VERSION},
                         {"json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                      std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                      std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
    m.doc["started_utc"] = utc_now();
    return m;
}

std::vector<std::string> char_tokens(std::string_view text) {
    std::vector<std::string> out;
    for (auto& u : split_units(text))
        if (!is_space_unit(u)) out.push_back(std::move(u));
    return out;
}

// Source column of a TSV file, or whole lines of a plain file.
std::vector<std::string> read_sources(const std::string& path) {
    std::vector<std::string> out;
    for (const auto& [src, tgt] : read_tsv_pairs(path)) out.push_back(src);
    return out;
}

GuardPatterns patterns_from(const std::string& path) {
    return path.empty() ? GuardPatterns::defaults() : GuardPatterns::load(path);
}

std::vector<std::string> inputs_from(const std::string& text, const std::string& input) {
    if (!text.empty() && !input.empty()) throw UsageError("--text and --input are mutually exclusive");
    if (text.empty() && input.empty()) throw UsageError("give --text or --input");
    if (!input.empty()) return read_lines(input);
    return {text};
}

// ---------------------------------------------------------------------------

struct Globals {
    std::vector<std::string> argv;
};

void add_synth(CLI::App& app, std::deque<Command>& cmds, const Globals& g) {
    auto& c = cmds.emplace_back();
    c.app = app.add_subcommand("synth", "Generate a synthetic parallel corpus with gold alignments");
    auto st = std::make_shared<std::tuple<SynthOptions, std::size_t, std::string, std::string, std::string, std::string>>();
    auto& [so, inventory, out, align, rules_out, rules_in] = *st;
    so.n = 2000;
    inventory = 100;
    c.option("--n", so.n, "Number of pairs");
    c.option("--seed", so.seed, "Generator seed (rules and sentences)");
    c.option("--inventory", inventory, "Source word inventory size (>= 10)");
    c.option("--min-words", so.min_words, "Minimum words per sentence");
    c.option("--max-words", so.max_words, "Maximum words per sentence");
    c.option("--rep-rate", so.rep_rate, "Chance of one rep marker per sentence");
    c.option("--rules", rules_in, "Load the rule set from this file instead of generating it");
    c.option("--out", out, "Corpus TSV output")->required();
    c.option("--align", align, "Gold Pharaoh output (default: <out>.align)");
    c.option("--rules-out", rules_out, "Rule set output (default: <out>.rules)");
    c.run = [&c, st, &g] {
        auto& [so, inventory, out, align, rules_out, rules_in] = *st;
        Manifest man = start_manifest(c, g.argv);
        const DialectRuleSet rules = rules_in.empty() ? make_rules(inventory, so.seed) : load_rules(rules_in);
        const auto pairs = generate(rules, so);
        const std::string align_path = align.empty() ? out + ".align" : align;
        const std::string rules_path = rules_out.empty() ? out + ".rules" : rules_out;
        write_tsv_pairs(out, to_text_pairs(pairs));
        std::vector<WordAlignment> gold;
        for (const auto& p : pairs) gold.push_back(p.gold);
        write_pharaoh(align_path, gold);
        save_rules(rules_path, rules);
        man.doc["seed"] = so.seed;
        man.doc["outputs"] = {out, align_path, rules_path};
        man.write(out);
    };
}

void add_align(CLI::App& app, std::deque<Command>& cmds, const Globals& g) {
    auto& c = cmds.emplace_back();
    c.app = app.add_subcommand("align", "Train IBM Model 1 and write Viterbi word alignments");
    auto st = std::make_shared<std::tuple<std::string, std::string, int, std::string>>("", "", 5, "sym");
    auto& [corpus, out, iterations, direction] = *st;
    c.option("--corpus", corpus, "Parallel corpus TSV")->required();
    c.option("--out", out, "Pharaoh output")->required();
    c.option("--iterations", iterations, "EM iterations")->check(CLI::NonNegativeNumber);
    c.option("--direction", direction, "sym (intersection), m2c or c2m")->check(CLI::IsMember({"sym", "m2c", "c2m"}));
    c.run = [&c, st, &g] {
        auto& [corpus, out, iterations, direction] = *st;
        Manifest man = start_manifest(c, g.argv);
        const auto pairs = to_word_pairs(read_tsv_pairs(corpus));
        if (pairs.empty()) throw EmptyInputError("align: empty corpus " + corpus);
        const auto fwd = train_ibm1(pairs, iterations);
        const auto bwd = train_ibm1(reversed(pairs), iterations);
        for (std::size_t i = 0; i < fwd.log_likelihood.size(); ++i)
            std::cerr << "iteration " << i << " log_likelihood m2c " << fwd.log_likelihood[i] << " c2m "
                      << bwd.log_likelihood[i] << '\n';
        std::vector<WordAlignment> aligns;
        for (const auto& p : pairs) {
            const auto a = viterbi_align(fwd.table, p);
            const auto b = viterbi_align(bwd.table, WordPair{p.target, p.source});
            aligns.push_back(direction == "m2c" ? a : direction == "c2m" ? flip(b) : symmetrize(a, flip(b)));
        }
        write_pharaoh(out, aligns);
        man.doc["log_likelihood_m2c"] = fwd.log_likelihood;
        man.doc["log_likelihood_c2m"] = bwd.log_likelihood;
        man.doc["outputs"] = {out};
        man.write(out);
    };
}

struct TrainFlags {
    std::string config, corpus, valid, align, augmented, out, report;
    std::vector<std::string> set;
};

void run_train(const Command& c, const TrainFlags& f, ModelKind kind, const Globals& g) {
    RunConfig rc = f.config.empty() ? RunConfig{} : RunConfig::load(f.config);
    for (const auto& kv : f.set) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
        rc.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    for (const auto& [key, value] : {std::pair<std::string, std::string>{"corpus", f.corpus},
                                     {"valid", f.valid},
                                     {"align", f.align},
                                     {"augmented", f.augmented},
                                     {"out", f.out}})
        if (!value.empty()) rc.set(key, value);
    const std::string want = kind == ModelKind::nat ? "nat" : "at";
    if (rc.has("kind") && rc.get("kind") != want)
        throw ConfigError("run config kind '" + rc.get("kind") + "' does not match train-" + want);
    rc.set("kind", want);
    if (!rc.has("corpus")) throw UsageError("training needs a corpus (--corpus or corpus = ...)");
    if (!rc.has("out")) throw UsageError("training needs an output checkpoint (--out or out = ...)");
    if (kind == ModelKind::at && (rc.has("align") || rc.has("augmented")))
        throw UsageError("train-at takes no alignment or augmented data");

    ModelConfig mc;
    rc.apply(mc);
    TrainOptions opt;
    rc.apply(opt);

    Manifest man = start_manifest(c, g.argv);
    std::vector<std::string> replay = {c.app->get_name()};
    for (const auto& [k, v] : rc.values()) replay.insert(replay.end(), {"--set", k + "=" + v});
    if (!f.report.empty()) replay.insert(replay.end(), {"--report", f.report});
    man.doc["replay_argv"] = replay;
    man.doc["run_config"] = rc.values();
    man.doc["seed"] = opt.seed;

    const auto corpus = read_tsv_pairs(rc.get("corpus"));
    const auto augmented = rc.has("augmented") ? read_tsv_pairs(rc.get("augmented")) : std::vector<TextPair>{};
    std::vector<TextPair> all = corpus;
    all.insert(all.end(), augmented.begin(), augmented.end());
    if (corpus.empty()) throw EmptyInputError("training corpus is empty");
    TranslationModel model = make_model_shell(mc, all);
    man.doc["model_config"] = model.config.serialize();

    const auto wp = to_word_pairs(corpus);
    const auto awp = to_word_pairs(augmented);
    const bool need_links = kind == ModelKind::nat && opt.weights.alignment > 0.0;
    std::vector<LinkSet> links, aug_links;
    if (need_links) {
        if (rc.has("align")) {
            links = read_pharaoh(rc.get("align"));
        } else {
            std::cerr << "no alignment file: aligning the corpus with IBM Model 1\n";
            links = ibm1_links(wp, 5);
        }
        if (!awp.empty()) aug_links = ibm1_links(awp, 5);
    }
    const auto examples = make_examples(wp, model.vocab, mc.max_len, need_links ? &links : nullptr);
    const auto aug_examples = make_examples(awp, model.vocab, mc.max_len, need_links ? &aug_links : nullptr);
    const auto valid = rc.has("valid")
                           ? make_examples(to_word_pairs(read_tsv_pairs(rc.get("valid"))), model.vocab, mc.max_len)
                           : std::vector<TrainingExample>{};

    TrainReport sink;
    std::cerr << TrainReport::tsv_header() << '\n';
    opt.on_epoch = [&](const EpochRecord& e) {
        std::cerr << TrainReport::tsv_row(e) << '\n';
        if (!f.report.empty()) sink.append_tsv(f.report, e);
    };
    const TrainResult r = kind == ModelKind::nat ? train_nat(model.config, examples, aug_examples, valid, opt)
                                                 : train_at(model.config, examples, valid, opt);
    model.params = r.params;
    const std::string out = rc.get("out");
    save_checkpoint(model, out);
    man.doc["best_valid_bleu"] = r.best_bleu;
    man.doc["best_epoch"] = r.best_epoch;
    man.doc["diverged"] = r.diverged;
    man.doc["outputs"] = f.report.empty() ? json{out} : json{out, f.report};
    man.write(out);
    if (r.diverged) throw DivergenceError("training diverged; kept the last finite checkpoint in " + out);
}

void add_train(CLI::App& app, std::deque<Command>& cmds, const Globals& g, ModelKind kind) {
    auto& c = cmds.emplace_back();
    const bool nat = kind == ModelKind::nat;
    c.app = app.add_subcommand(nat ? "train-nat" : "train-at",
                               nat ? "Train the glancing NAT model" : "Train the autoregressive baseline");
    auto f = std::make_shared<TrainFlags>();
    c.app->add_option("--config", f->config, "Run config file (key = value)");
    c.app->add_option("--set", f->set, "Override one run config key (key=value), repeatable");
    c.app->add_option("--corpus", f->corpus, "Training corpus TSV");
    c.app->add_option("--valid", f->valid, "Validation TSV for best-checkpoint selection");
    if (nat) {
        c.app->add_option("--align", f->align, "Pharaoh word alignments for the corpus");
        c.app->add_option("--augmented", f->augmented, "Teacher-translated TSV appended to the corpus")
            ;
    }
    c.app->add_option("--out", f->out, "Checkpoint output");
    c.app->add_option("--report", f->report, "Per-epoch TSV report (appended)");
    c.run = [&c, f, kind, &g] { run_train(c, *f, kind, g); };
}

void add_augment(CLI::App& app, std::deque<Command>& cmds, const Globals& g) {
    auto& c = cmds.emplace_back();
    c.app = app.add_subcommand("augment", "Translate monolingual source text with a teacher model");
    auto st = std::make_shared<std::tuple<std::string, std::string, std::string, std::size_t>>("", "", "", 256);
    auto& [teacher, sources, out, max_len] = *st;
    c.option("--teacher", teacher, "Teacher checkpoint")->required();
    c.option("--sources", sources, "Source lines (TSV source column is used)")->required();
    c.option("--out", out, "Augmented TSV output")->required();
    c.option("--max-len", max_len, "Output cap for an autoregressive teacher");
    c.run = [&c, st, &g] {
        auto& [teacher, sources, out, max_len] = *st;
        Manifest man = start_manifest(c, g.argv);
        const auto model = load_checkpoint(teacher);
        TranslateOptions opt;
        opt.max_len = max_len;
        const auto src = read_sources(sources);
        const auto pairs = augment_corpus(model, src, opt);
        write_tsv_pairs(out, pairs);
        std::cerr << pairs.size() << " of " << src.size() << " lines translated\n";
        man.doc["pairs"] = pairs.size();
        man.doc["outputs"] = {out};
        man.write(out);
    };
}

void add_translate(CLI::App& app, std::deque<Command>& cmds, const Globals& g) {
    auto& c = cmds.emplace_back();
    c.app = app.add_subcommand("translate", "Translate text with a checkpoint");
    struct S {
        std::string model, text, input, out, patterns;
        bool no_collapse = false;
        std::size_t max_len = 256;
    };
    auto s = std::make_shared<S>();
    c.option("--model", s->model, "Checkpoint")->required();
    c.option("--text", s->text, "Text to translate");
    c.option("--input", s->input, "File with one sentence per line");
    c.option("--out", s->out, "Write translations here instead of stdout");
    c.option("--patterns", s->patterns, "Guard pattern file (one regex per line)");
    c.flag("--no-collapse", s->no_collapse, "Keep repeated adjacent tokens (NAT)");
    c.option("--max-len", s->max_len, "Output cap for autoregressive models");
    c.run = [&c, s, &g] {
        Manifest man = start_manifest(c, g.argv);
        const auto inputs = inputs_from(s->text, s->input);
        const auto model = load_checkpoint(s->model);
        const auto patterns = patterns_from(s->patterns);
        TranslateOptions opt;
        opt.collapse_repeats = !s->no_collapse;
        opt.max_len = s->max_len;
        std::vector<std::string> lines;
        for (const auto& in : inputs) {
            const auto r = translate(model, in, patterns, opt);
            if (r.truncated) std::cerr << "warning: input longer than max_len was truncated\n";
            lines.push_back(r.text);
        }
        if (s->out.empty()) {
            for (const auto& l : lines) std::cout << l << '\n';
            return;
        }
        write_lines(s->out, lines);
        man.doc["outputs"] = {s->out};
        man.write(s->out);
    };
}

void add_pipeline(CLI::App& app, std::deque<Command>& cmds, const Globals& g) {
    auto& c = cmds.emplace_back();
    c.app = app.add_subcommand("pipeline", "Run the TTS frontend pipeline; prints input, translation and phonemes as TSV");
    struct S {
        std::string model, stages, patterns, text, input, out;
        bool identity = false, trace = false;
    };
    auto s = std::make_shared<S>();
    c.option("--model", s->model, "Checkpoint for the translate stage");
    c.flag("--identity", s->identity, "Replace translation with a pass-through stage");
    c.option("--stages", s->stages, "Stage list file (one stage name per line)");
    c.option("--patterns", s->patterns, "Guard pattern file");
    c.option("--text", s->text, "Text to process");
    c.option("--input", s->input, "File with one sentence per line");
    c.option("--out", s->out, "Write TSV rows here instead of stdout");
    c.flag("--trace", s->trace, "Print per-stage snapshots to stderr");
    c.run = [&c, s, &g] {
        Manifest man = start_manifest(c, g.argv);
        const auto lines = inputs_from(s->text, s->input);
        auto ctx = std::make_shared<PipelineContext>();
        ctx->patterns = patterns_from(s->patterns);
        if (!s->model.empty()) ctx->model = std::make_shared<const TranslationModel>(load_checkpoint(s->model));
        auto names = s->stages.empty() ? default_stage_names() : load_pipeline_config(s->stages);
        if (s->identity)
            for (auto& n : names)
                if (n == "translate") n = "translate-identity";
        if (!ctx->model && std::find(names.begin(), names.end(), "translate") != names.end())
            throw UsageError("the translate stage needs --model (or use --identity)");
        const auto stages = build_pipeline(names, ctx);
        if (s->trace)
            for (const auto& l : lines)
                for (const auto& t : run_pipeline(l, stages).trace)
                    std::cerr << t.stage << "\t" << t.input << "\t=>\t" << t.output << '\n';
        const auto rows = run_batch(lines, stages);
        if (s->out.empty()) {
            for (const auto& r : rows) std::cout << r << '\n';
            return;
        }
        write_lines(s->out, rows);
        man.doc["outputs"] = {s->out};
        man.write(s->out);
    };
}

void add_bleu(CLI::App& app, std::deque<Command>& cmds, const Globals& g) {
    auto& c = cmds.emplace_back();
    c.app = app.add_subcommand("bleu", "Character-level corpus BLEU");
    struct S {
        std::string cand, ref, model, test, report;
        bool smooth = false;
    };
    auto s = std::make_shared<S>();
    c.option("--cand", s->cand, "Candidate file, one sentence per line");
    c.option("--ref", s->ref, "Reference file, one sentence per line");
    c.option("--model", s->model, "Score this checkpoint on --test instead");
    c.option("--test", s->test, "Test set TSV (source TAB reference)");
    c.flag("--smooth", s->smooth, "Add-one smoothing for orders >= 2");
    c.option("--report", s->report, "TSV report output");
    c.run = [&c, s, &g] {
        Manifest man = start_manifest(c, g.argv);
        std::vector<std::vector<std::string>> cands, refs;
        if (!s->model.empty() || !s->test.empty()) {
            if (s->model.empty() || s->test.empty()) throw UsageError("--model and --test go together");
            if (!s->cand.empty() || !s->ref.empty()) throw UsageError("use either --cand/--ref or --model/--test");
            const auto model = load_checkpoint(s->model);
            for (const auto& [src, ref] : read_tsv_pairs(s->test)) {
                cands.push_back(char_tokens(translate(model, src, GuardPatterns::defaults()).text));
                refs.push_back(char_tokens(ref));
            }
        } else {
            if (s->cand.empty() || s->ref.empty()) throw UsageError("bleu needs --cand and --ref, or --model and --test");
            for (const auto& l : read_lines(s->cand)) cands.push_back(char_tokens(l));
            for (const auto& l : read_lines(s->ref)) refs.push_back(char_tokens(l));
        }
        BleuOptions opt;
        opt.smooth = s->smooth;
        const auto r = bleu(cands, refs, opt);
        std::printf("%.4f\n", r.bleu);
        if (s->report.empty()) return;
        std::ofstream out(s->report, std::ios::binary);
        if (!out) throw IoError("cannot write report " + s->report);
        out << "bleu\tbrevity_penalty\tcandidate_length\treference_length";
        for (std::size_t n = 1; n <= r.precisions.size(); ++n) out << "\tp" << n;
        out << '\n' << exact(r.bleu) << '\t' << exact(r.brevity_penalty) << '\t' << r.candidate_length << '\t'
            << r.reference_length;
        for (double p : r.precisions) out << '\t' << exact(p);
        out << '\n';
        out.close();
        man.doc["bleu"] = r.bleu;
        man.doc["outputs"] = {s->report};
        man.write(s->report);
    };
}

void add_bench(CLI::App& app, std::deque<Command>& cmds, const Globals& g) {
    auto& c = cmds.emplace_back();
    c.app = app.add_subcommand("bench", "Decoding latency of NAT and/or AT checkpoints");
    struct S {
        std::string nat, at, test, report;
        std::size_t n = 100, repetitions = 3, max_len = 256;
        double seconds_per_char = 0.2;
    };
    auto s = std::make_shared<S>();
    c.option("--nat", s->nat, "NAT checkpoint");
    c.option("--at", s->at, "AT checkpoint");
    c.option("--test", s->test, "Sentences (TSV source column)")->required();
    c.option("--n", s->n, "Maximum number of sentences");
    c.option("--repetitions", s->repetitions, "Timed runs per sentence (median is kept)");
    c.option("--seconds-per-char", s->seconds_per_char, "Speech duration per output character for the RTF proxy");
    c.option("--max-len", s->max_len, "Output cap for the AT model");
    c.option("--report", s->report, "TSV report output");
    c.run = [&c, s, &g] {
        if (s->nat.empty() && s->at.empty()) throw UsageError("bench needs --nat and/or --at");
        Manifest man = start_manifest(c, g.argv);
        auto src = read_sources(s->test);
        if (src.size() > s->n) src.resize(s->n);
        std::vector<std::pair<std::string, LatencyReport>> rows;
        for (const auto& [name, path] : {std::pair<std::string, std::string>{"nat", s->nat}, {"at", s->at}}) {
            if (path.empty()) continue;
            const auto model = load_checkpoint(path);
            std::vector<ModelInput> inputs;
            for (const auto& l : src) inputs.push_back(prepare_input(preprocess(guard(l, GuardPatterns::defaults()).guarded), model));
            const auto run = [&](std::size_t i) -> std::size_t {
                const auto& in = inputs[i];
                if (in.ids.empty()) return 0;
                if (model.config.kind == ModelKind::nat)
                    return infer_nat(model.params, model.config, in.ids, in.flags).ids.size();
                return infer_at(model.params, model.config, in.ids, in.flags, GreedyOptions{s->max_len, false}).size();
            };
            rows.emplace_back(name, bench_latency(run, inputs.size(), s->repetitions, s->seconds_per_char));
        }
        std::ostringstream table;
        table << "model\tmean_seconds\tmean_seconds_per_char\trtf_proxy\n";
        for (const auto& [name, r] : rows)
            table << name << '\t' << exact(r.mean_seconds) << '\t' << exact(r.mean_seconds_per_char) << '\t'
                  << exact(r.rtf_proxy) << '\n';
        if (rows.size() == 2) table << "speedup\t" << exact(speedup(rows[0].second, rows[1].second)) << "\t-\t-\n";
        std::cout << table.str();
        if (s->report.empty()) return;
        std::ofstream out(s->report, std::ios::binary);
        if (!out) throw IoError("cannot write report " + s->report);
        out << table.str();
        out.close();
        man.doc["outputs"] = {s->report};
        man.write(s->report);
    };
}

int exit_code(const std::string& category) {
    if (category == "usage") return 2;
    if (category == "io") return 3;
    if (category == "divergence") return 4;
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mandarin-to-dialect NAT translation toolkit", "dialect-nat"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);
    Globals g;
    g.argv.assign(argv, argv + argc);
    std::deque<Command> cmds;
    add_synth(app, cmds, g);
    add_align(app, cmds, g);
    add_train(app, cmds, g, ModelKind::nat);
    add_train(app, cmds, g, ModelKind::at);
    add_augment(app, cmds, g);
    add_translate(app, cmds, g);
    add_pipeline(app, cmds, g);
    add_bleu(app, cmds, g);
    add_bench(app, cmds, g);
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error[usage]: " << e.what() << '\n';
        return 2;
    }
    try {
        for (auto& c : cmds)
            if (c.app->parsed()) c.run();
    } catch (const Error& e) {
        std::cerr << "error[" << e.category() << "]: " << e.what() << '\n';
        return exit_code(e.category());
    } catch (const std::exception& e) {
        std::cerr << "error[internal]: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
