// anymodal: desk-scale multimodal-LM workbench.
//
// Subcommands: synth-data, align-train, instruct-tune, generate, evaluate,
// ablate. Exit codes: 0 ok, 2 usage/config error, 3 training contract
// violation, 4 safety rejection.

#include "anymodal/infer.hpp"
#include "anymodal/metrics.hpp"
#include "anymodal/safety.hpp"
#include "anymodal/train.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

using namespace anymodal;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "anymodal 1.0.0";
constexpr int kExitUsage = 2;
constexpr int kExitTrainingContract = 3;
constexpr int kExitSafety = 4;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Written atomically (temp file + rename) next to every output artifact.
struct RunManifest {
    std::string command;
    json resolved_config = json::object();
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    double wall_clock_s = 0.0;

    void write(const fs::path& dir) const {
        json j;
        j["command"] = command;
        j["config"] = resolved_config;
        j["seed"] = seed;
        j["version"] = kVersion;
        j["inputs"] = inputs;
        j["outputs"] = outputs;
        j["wall_clock_s"] = wall_clock_s;
        fs::create_directories(dir);
        fs::path tmp = dir / "run_manifest.json.tmp";
        {
            std::ofstream f(tmp, std::ios::trunc);
            if (!f) throw std::runtime_error("cannot write " + tmp.string());
            f << j.dump(2) << "\n";
        }
        fs::rename(tmp, dir / "run_manifest.json");
    }
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    }

private:
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

std::uint64_t env_seed_default() {
    const char* s = std::getenv("ANYMODAL_SEED");
    if (!s || !*s) return 0;
    return std::strtoull(s, nullptr, 10);
}

json read_json_file(const fs::path& p) {
    std::ifstream f(p);
    if (!f) throw UsageError("cannot read file: " + p.string());
    try {
        return json::parse(f);
    } catch (const std::exception& e) {
        throw UsageError("malformed JSON in " + p.string() + ": " + e.what());
    }
}

// Precedence: flags > config file > preset defaults. `flag_set` reports
// whether the user passed a given flag on the command line.
TrainRunConfig resolve_train_config(const std::string& preset_name,
                                    const std::optional<fs::path>& config_file,
                                    const std::function<bool(const std::string&)>& flag_set,
                                    const std::map<std::string, double>& numeric_flags,
                                    std::optional<int> quantize,
                                    std::optional<std::uint64_t> seed_flag) {
    TrainRunConfig cfg;
    try {
        cfg = TrainRunConfig::from_preset(get_preset(preset_name));
    } catch (const std::exception& e) {
        throw UsageError(e.what()); // already names the available presets
    }
    cfg.seed = env_seed_default();

    if (config_file) {
        json j = read_json_file(*config_file);
        if (j.contains("lr")) cfg.lr = j.at("lr");
        if (j.contains("steps")) cfg.steps = j.at("steps");
        if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size");
        if (j.contains("depth")) cfg.depth = j.at("depth");
        if (j.contains("tokens")) cfg.tokens = j.at("tokens");
        if (j.contains("warmup_steps")) cfg.warmup_steps = j.at("warmup_steps");
        if (j.contains("weight_decay")) cfg.weight_decay = j.at("weight_decay");
        if (j.contains("seed")) cfg.seed = j.at("seed");
        if (j.contains("quantize_bits") && !j.at("quantize_bits").is_null())
            cfg.quantize_bits = j.at("quantize_bits").get<int>();
    }

    auto apply = [&](const char* name, auto& field) {
        if (flag_set(name)) field = static_cast<std::decay_t<decltype(field)>>(
                                numeric_flags.at(name));
    };
    apply("depth", cfg.depth);
    apply("tokens", cfg.tokens);
    apply("batch", cfg.batch_size);
    apply("steps", cfg.steps);
    apply("lr", cfg.lr);
    apply("warmup", cfg.warmup_steps);
    if (quantize) cfg.quantize_bits = quantize;
    if (seed_flag) cfg.seed = *seed_flag;

    try {
        cfg.validate();
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
    return cfg;
}

std::pair<Dataset, Dataset> load_corpus(const fs::path& data_dir) {
    fs::path train = data_dir / "train.jsonl";
    fs::path val = data_dir / "val.jsonl";
    if (!fs::exists(train)) throw UsageError("missing dataset file: " + train.string());
    Dataset tr = load_dataset(train);
    Dataset va = fs::exists(val) ? load_dataset(val) : Dataset({});
    return {std::move(tr), std::move(va)};
}

// --- subcommand bodies -------------------------------------------------------

int cmd_synth_data(const fs::path& spec_path, const fs::path& out_dir) {
    Stopwatch sw;
    json j = read_json_file(spec_path);
    SynthSpec spec;
    try {
        spec.kind = modality_from_name(j.value("kind", "image"));
        spec.task = j.value("task", "caption");
        spec.n_items = j.value("n_items", 1000);
        spec.seed = j.value("seed", env_seed_default());
        spec.validate();
    } catch (const std::exception& e) {
        throw UsageError(std::string("bad spec: ") + e.what());
    }
    SynthResult res = synth_corpus(spec, out_dir);
    std::cout << "wrote " << res.n_train << " train / " << res.n_val << " val records to "
              << out_dir.string() << "\n";

    RunManifest m;
    m.command = "synth-data";
    m.resolved_config = spec.to_json();
    m.seed = spec.seed;
    m.inputs = {spec_path.string()};
    m.outputs = {res.train_path.string(), res.val_path.string(), res.manifest_path.string()};
    m.wall_clock_s = sw.seconds();
    m.write(out_dir);
    return 0;
}

int run_training(const std::string& command, TrainRunConfig cfg, MultimodalModel& model,
                 const fs::path& data_dir, const fs::path& out_dir) {
    Stopwatch sw;
    auto [tr, va] = load_corpus(data_dir);
    TrainResult res = train(cfg, model, tr, va, out_dir);
    std::cout << command << ": " << cfg.steps << " steps, final train loss "
              << res.final_train_loss << "\n";
    std::cout << "checkpoint: " << res.checkpoint_dir.string() << "\n";

    RunManifest m;
    m.command = command;
    m.resolved_config = cfg.to_json();
    m.seed = cfg.seed;
    m.inputs = {(data_dir / "train.jsonl").string()};
    m.outputs = {res.checkpoint_dir.string(), res.losses_csv.string()};
    m.wall_clock_s = sw.seconds();
    m.write(out_dir);
    return 0;
}

int cmd_generate(const fs::path& checkpoint, const std::string& template_name,
                 const std::vector<std::string>& field_kv,
                 const std::vector<std::string>& modality_kv, bool top_p_set, double top_p,
                 double temperature, int max_new_tokens, std::uint64_t seed, bool unsafe,
                 const std::optional<fs::path>& out_dir) {
    Stopwatch sw;
    auto model = MultimodalModel::load(checkpoint);

    std::map<std::string, std::string> fields;
    for (const auto& kv : field_kv) {
        size_t eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError("--field expects key=value: " + kv);
        fields[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    std::vector<ModalitySignal> signals;
    for (const auto& kv : modality_kv) {
        size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw UsageError("--modality expects kind=payload.json: " + kv);
        Modality kind;
        try {
            kind = modality_from_name(kv.substr(0, eq));
        } catch (const std::exception& e) {
            throw UsageError(e.what());
        }
        ModalitySignal sig = payload_from_json(kind, read_json_file(kv.substr(eq + 1)));
        sig.validate();
        signals.push_back(std::move(sig));
    }

    DecodeParams dp;
    dp.max_new_tokens = max_new_tokens;
    dp.seed = seed;
    if (top_p_set) {
        dp.strategy = DecodeParams::Strategy::top_p;
        dp.top_p = top_p;
        dp.temperature = temperature;
    }
    try {
        dp.validate();
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }

    std::vector<Modality> kinds;
    for (const auto& s : signals) kinds.push_back(s.kind);
    RenderedPrompt rp;
    try {
        rp = model->templates().render(template_name, fields, kinds);
    } catch (const std::exception& e) {
        throw UsageError(std::string("render failed: ") + e.what());
    }

    SafetyPipeline safety;
    if (!unsafe) {
        const ModalitySignal* img = nullptr;
        for (const auto& s : signals)
            if (s.kind == Modality::image) img = &s;
        FilterVerdict v = safety.check_input(img, rp.text);
        if (!v.allow) {
            std::cerr << "rejected at stage " << filter_stage_name(v.stage) << ": " << v.reason
                      << "\n";
            return kExitSafety;
        }
    }

    GenerationResult gen = generate_interleaved(*model, template_name, fields, signals, dp);
    std::string text = gen.text;
    if (!unsafe) {
        const ModalitySignal* img = nullptr;
        for (const auto& s : signals)
            if (s.kind == Modality::image) img = &s;
        auto mo = safety.moderate_output(rp.text, gen.text, img);
        if (mo.rejected && mo.text.empty()) {
            std::cerr << "rejected at stage " << filter_stage_name(mo.verdict.stage) << ": "
                      << mo.verdict.reason << "\n";
            return kExitSafety;
        }
        text = mo.text;
    }
    std::cout << text << "\n";

    if (out_dir) {
        RunManifest m;
        m.command = "generate";
        m.resolved_config = {{"template", template_name},
                             {"strategy", top_p_set ? "top_p" : "greedy"},
                             {"max_new_tokens", max_new_tokens}};
        m.seed = seed;
        m.inputs = {checkpoint.string()};
        m.wall_clock_s = sw.seconds();
        m.write(*out_dir);
    }
    return 0;
}

int cmd_evaluate(const std::string& metric, const fs::path& in_path, const fs::path& out_path) {
    std::ifstream f(in_path);
    if (!f) throw UsageError("cannot read file: " + in_path.string());
    std::vector<json> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            rows.push_back(json::parse(line));
        } catch (const std::exception& e) {
            throw UsageError("line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
        }
    }
    if (rows.empty()) throw UsageError("no records in " + in_path.string());

    json out;
    try {
        if (metric == "cider" || metric == "rouge") {
            CaptionCorpus corpus;
            for (const auto& r : rows)
                corpus.push_back({r.at("id"), r.at("candidate"),
                                  r.at("references").get<std::vector<std::string>>()});
            if (metric == "cider") {
                CiderResult res = cider_d(corpus);
                out["metric"] = "cider-d";
                out["mean"] = res.mean;
                json items = json::array();
                for (size_t i = 0; i < corpus.size(); ++i)
                    items.push_back({{"id", corpus[i].id}, {"score", res.per_item[i]}});
                out["per_item"] = items;
            } else {
                out["metric"] = "rouge-l";
                json items = json::array();
                double mean = 0.0;
                for (const auto& item : corpus) {
                    double s = rouge_l(item.candidate, item.references);
                    items.push_back({{"id", item.id}, {"score", s}});
                    mean += s;
                }
                out["mean"] = mean / static_cast<double>(corpus.size());
                out["per_item"] = items;
            }
        } else if (metric == "accuracy") {
            std::vector<std::string> pred, gold;
            for (const auto& r : rows) {
                pred.push_back(r.at("prediction"));
                gold.push_back(r.at("gold"));
            }
            out["metric"] = "accuracy";
            out["accuracy"] = choice_accuracy(pred, gold, Normalizer::casefold_strip_punct);
        } else if (metric == "auc") {
            std::vector<double> scores;
            std::vector<int> labels;
            for (const auto& r : rows) {
                scores.push_back(r.at("score"));
                labels.push_back(r.at("label"));
            }
            out["metric"] = "auc";
            out["auc"] = roc_auc(scores, labels);
        } else if (metric == "likert") {
            std::vector<RubricRecord> recs;
            for (const auto& r : rows)
                recs.push_back({r.at("item_id"),
                                rubric_criterion_from_name(r.at("criterion")), r.at("score")});
            out["metric"] = "likert";
            out["percent"] = aggregate_likert(recs);
        } else if (metric == "pairwise") {
            std::vector<PairwiseRecord> recs;
            for (const auto& r : rows) {
                std::string v = r.at("verdict");
                PairwiseVerdict pv = v == "win"    ? PairwiseVerdict::win
                                     : v == "tie"  ? PairwiseVerdict::tie
                                     : v == "lose" ? PairwiseVerdict::lose
                                                   : throw UsageError("unknown verdict: " + v);
                recs.push_back({r.at("item_id"), pv});
            }
            WinRate wr = pairwise_winrate(recs);
            out["metric"] = "pairwise";
            out["win_pct"] = wr.win_pct;
            out["tie_pct"] = wr.tie_pct;
            out["lose_pct"] = wr.lose_pct;
        } else {
            throw UsageError("unknown metric '" + metric +
                             "'; expected cider|rouge|accuracy|auc|likert|pairwise");
        }
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception& e) {
        throw UsageError(std::string("evaluation failed: ") + e.what());
    }

    std::ofstream of(out_path, std::ios::trunc);
    if (!of) throw UsageError("cannot write " + out_path.string());
    of << out.dump(2) << "\n";
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_ablate(const std::string& axis, const std::vector<int>& values,
               const std::string& preset, const fs::path& data_dir, const fs::path& out_dir,
               bool assert_monotone, std::optional<std::uint64_t> seed_flag,
               std::optional<int> steps_override, std::optional<int> batch_override) {
    Stopwatch sw;
    if (axis != "depth" && axis != "tokens" && axis != "batch")
        throw UsageError("unknown axis '" + axis + "'; expected depth|tokens|batch");
    if (values.empty()) throw UsageError("--values must list at least one value");

    auto [tr, va] = load_corpus(data_dir);
    std::vector<std::pair<int, double>> finals;
    for (int v : values) {
        TrainRunConfig cfg = resolve_train_config(
            preset, std::nullopt, [](const std::string&) { return false; }, {}, std::nullopt,
            seed_flag);
        if (steps_override) cfg.steps = *steps_override;
        if (batch_override) cfg.batch_size = *batch_override;
        if (axis == "depth") cfg.depth = v;
        if (axis == "tokens") cfg.tokens = v;
        if (axis == "batch") cfg.batch_size = v;
        cfg.validate();
        fs::path run_dir = out_dir / (axis + "-" + std::to_string(v));
        MultimodalModel model(cfg.model_spec());
        TrainResult res = train(cfg, model, tr, va, run_dir);
        finals.emplace_back(v, res.final_train_loss);
        std::cout << axis << "=" << v << " final train loss " << res.final_train_loss << "\n";
    }

    fs::path cmp = out_dir / "comparison.csv";
    {
        std::ofstream f(cmp, std::ios::trunc);
        f << axis << ",final_train_loss\n";
        char buf[64];
        for (const auto& [v, l] : finals) {
            std::snprintf(buf, sizeof(buf), "%.12g", l);
            f << v << "," << buf << "\n";
        }
    }

    RunManifest m;
    m.command = "ablate";
    m.resolved_config = {{"axis", axis}, {"values", values}, {"preset", preset}};
    m.seed = seed_flag ? *seed_flag : env_seed_default();
    m.inputs = {(data_dir / "train.jsonl").string()};
    m.outputs = {cmp.string()};
    m.wall_clock_s = sw.seconds();
    m.write(out_dir);

    if (assert_monotone) {
        for (size_t i = 1; i < finals.size(); ++i) {
            if (finals[i].second > finals[i - 1].second) {
                std::cerr << "monotonicity violated: " << axis << "=" << finals[i].first
                          << " loss " << finals[i].second << " > " << axis << "="
                          << finals[i - 1].first << " loss " << finals[i - 1].second << "\n";
                return 1;
            }
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale multimodal LM workbench"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    // synth-data
    auto* synth = app.add_subcommand("synth-data", "generate a synthetic corpus");
    std::string synth_spec, synth_out;
    synth->add_option("--spec", synth_spec, "spec JSON file")->required();
    synth->add_option("--out", synth_out, "output directory")->required();

    // align-train
    auto* align = app.add_subcommand("align-train", "modality alignment pre-training");
    std::string align_preset, align_data, align_out, align_config;
    int fl_depth = 0, fl_tokens = 0, fl_batch = 0, fl_steps = 0, fl_warmup = 0, fl_quant = 0;
    double fl_lr = 0.0;
    std::uint64_t fl_seed = 0;
    align->add_option("--preset", align_preset, "preset name")->required();
    align->add_option("--data", align_data, "corpus directory")->required();
    align->add_option("--out", align_out, "output directory")->required();
    align->add_option("--config", align_config, "JSON config file (between preset and flags)");
    align->add_option("--depth", fl_depth, "resampler depth");
    align->add_option("--tokens", fl_tokens, "modality token budget k");
    align->add_option("--batch", fl_batch, "batch size");
    align->add_option("--steps", fl_steps, "optimizer steps");
    align->add_option("--lr", fl_lr, "peak learning rate");
    align->add_option("--warmup", fl_warmup, "warmup steps");
    align->add_option("--quantize", fl_quant, "frozen-weight bits (4 or 8)");
    align->add_option("--seed", fl_seed, "run seed");

    // instruct-tune
    auto* tune = app.add_subcommand("instruct-tune", "multimodal instruction tuning");
    std::string tune_ckpt, tune_mode = "projector", tune_data, tune_out;
    int tune_steps = 0, tune_batch = 0;
    double tune_lr = 0.0;
    std::uint64_t tune_seed = 0;
    tune->add_option("--checkpoint", tune_ckpt, "aligned checkpoint directory")->required();
    tune->add_option("--mode", tune_mode, "projector | lora")->required();
    tune->add_option("--data", tune_data, "corpus directory")->required();
    tune->add_option("--out", tune_out, "output directory")->required();
    tune->add_option("--steps", tune_steps, "optimizer steps");
    tune->add_option("--batch", tune_batch, "batch size");
    tune->add_option("--lr", tune_lr, "peak learning rate");
    tune->add_option("--seed", tune_seed, "run seed");

    // generate
    auto* gen = app.add_subcommand("generate", "decode from a checkpoint");
    std::string gen_ckpt, gen_template;
    std::vector<std::string> gen_fields, gen_modalities;
    std::string gen_out;
    double gen_top_p = 0.9, gen_temp = 1.0;
    int gen_max_new = 64;
    std::uint64_t gen_seed = 0;
    bool gen_greedy = false, gen_unsafe = false;
    gen->add_option("--checkpoint", gen_ckpt, "checkpoint directory")->required();
    gen->add_option("--template", gen_template, "prompt template name")->required();
    gen->add_option("--field", gen_fields, "template field key=value (repeatable)");
    gen->add_option("--modality", gen_modalities, "kind=payload.json (repeatable, in order)");
    auto* greedy_flag = gen->add_flag("--greedy", gen_greedy, "greedy decoding (default)");
    auto* topp_opt = gen->add_option("--top-p", gen_top_p, "nucleus sampling threshold");
    gen->add_option("--temperature", gen_temp, "sampling temperature");
    gen->add_option("--max-new", gen_max_new, "max new tokens");
    gen->add_option("--seed", gen_seed, "sampling seed");
    gen->add_flag("--unsafe", gen_unsafe, "bypass the safety pipeline");
    gen->add_option("--out", gen_out, "directory for the run manifest");
    greedy_flag->excludes(topp_opt);

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "compute a metric over a JSONL file");
    std::string ev_metric, ev_in, ev_out;
    ev->add_option("--metric", ev_metric, "cider|rouge|accuracy|auc|likert|pairwise")
        ->required();
    ev->add_option("--in", ev_in, "input JSONL")->required();
    ev->add_option("--out", ev_out, "output JSON")->required();

    // ablate
    auto* ab = app.add_subcommand("ablate", "sweep one axis and compare final losses");
    std::string ab_axis, ab_preset, ab_data, ab_out;
    std::vector<int> ab_values;
    bool ab_monotone = false;
    std::uint64_t ab_seed = 0;
    ab->add_option("--axis", ab_axis, "depth|tokens|batch")->required();
    ab->add_option("--values", ab_values, "comma-separated values")
        ->required()
        ->delimiter(',');
    ab->add_option("--preset", ab_preset, "preset name")->required();
    ab->add_option("--data", ab_data, "corpus directory")->required();
    ab->add_option("--out", ab_out, "output directory")->required();
    ab->add_flag("--assert-monotone", ab_monotone, "fail if loss increases along the sweep");
    ab->add_option("--seed", ab_seed, "run seed");
    int ab_steps = 0, ab_batch = 0;
    ab->add_option("--steps", ab_steps, "override optimizer steps");
    ab->add_option("--batch", ab_batch, "override batch size");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (synth->parsed()) return cmd_synth_data(synth_spec, synth_out);

        if (align->parsed()) {
            std::map<std::string, double> flags = {
                {"depth", static_cast<double>(fl_depth)},
                {"tokens", static_cast<double>(fl_tokens)},
                {"batch", static_cast<double>(fl_batch)},
                {"steps", static_cast<double>(fl_steps)},
                {"lr", fl_lr},
                {"warmup", static_cast<double>(fl_warmup)},
            };
            auto flag_set = [&](const std::string& n) { return align->count("--" + n) > 0; };
            std::optional<int> quant;
            if (align->count("--quantize")) quant = fl_quant;
            std::optional<std::uint64_t> seed;
            if (align->count("--seed")) seed = fl_seed;
            TrainRunConfig cfg = resolve_train_config(
                align_preset,
                align_config.empty() ? std::nullopt : std::optional<fs::path>(align_config),
                flag_set, flags, quant, seed);
            if (cfg.mode != "align")
                throw UsageError("preset '" + align_preset + "' is not an alignment preset");
            MultimodalModel model(cfg.model_spec());
            return run_training("align-train", cfg, model, align_data, align_out);
        }

        if (tune->parsed()) {
            if (tune_mode != "projector" && tune_mode != "lora")
                throw UsageError("--mode must be projector or lora");
            auto model = MultimodalModel::load(tune_ckpt);
            TrainRunConfig cfg = TrainRunConfig::from_preset(get_preset("instruct-toy"));
            cfg.mode = "instruct";
            cfg.partition = tune_mode == "lora" ? PartitionMode::projector_plus_lora
                                                : PartitionMode::projector_only;
            cfg.lm = model->spec().lm;
            cfg.seed = env_seed_default();
            if (tune->count("--steps")) cfg.steps = tune_steps;
            if (tune->count("--batch")) cfg.batch_size = tune_batch;
            if (tune->count("--lr")) cfg.lr = tune_lr;
            if (tune->count("--seed")) cfg.seed = tune_seed;
            cfg.validate();
            return run_training("instruct-tune", cfg, *model, tune_data, tune_out);
        }

        if (gen->parsed()) {
            bool top_p_set = gen->count("--top-p") > 0;
            return cmd_generate(gen_ckpt, gen_template, gen_fields, gen_modalities, top_p_set,
                                gen_top_p, gen_temp, gen_max_new, gen_seed, gen_unsafe,
                                gen_out.empty() ? std::nullopt
                                                : std::optional<fs::path>(gen_out));
        }

        if (ev->parsed()) return cmd_evaluate(ev_metric, ev_in, ev_out);

        if (ab->parsed()) {
            std::optional<std::uint64_t> seed;
            if (ab->count("--seed")) seed = ab_seed;
            std::optional<int> steps, batch;
            if (ab->count("--steps")) steps = ab_steps;
            if (ab->count("--batch")) batch = ab_batch;
            return cmd_ablate(ab_axis, ab_values, ab_preset, ab_data, ab_out, ab_monotone,
                              seed, steps, batch);
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const PartitionViolation& e) {
        std::cerr << "training contract violation: " << e.what() << "\n";
        return kExitTrainingContract;
    } catch (const NanLossError& e) {
        std::cerr << "training contract violation: " << e.what() << "\n";
        return kExitTrainingContract;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return 0;
}
