#include "hai/cli.hpp"

#include "hai/data_model.hpp"
#include "hai/description.hpp"
#include "hai/discovery.hpp"
#include "hai/error.hpp"
#include "hai/evaluation.hpp"
#include "hai/integrator.hpp"
#include "hai/onboarding.hpp"
#include "hai/onboarding_http.hpp"
#include "hai/rng.hpp"
#include "hai/selection.hpp"
#include "hai/synthetic.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace hai {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// JSON config file: flat keys apply to the active subcommand, a nested object
// named after a subcommand applies to that subcommand only.
class JsonConfig : public CLI::Config {
public:
    JsonConfig(std::string active, std::set<std::string> sections)
        : active_(std::move(active)), sections_(std::move(sections)) {}

    std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}\n"; }

    std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
        json j;
        try {
            j = json::parse(in);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("config file: ") + e.what());
        }
        if (!j.is_object()) throw ParseError("config file: expected a JSON object");
        std::vector<CLI::ConfigItem> items;
        for (const auto& [key, value] : j.items()) {
            if (value.is_object()) {
                if (!sections_.count(key)) throw ValidationError("config file: unknown section '" + key + "'");
                if (key != active_) continue;
                for (const auto& [k, v] : value.items()) items.push_back(item(k, v));
            } else {
                items.push_back(item(key, value));
            }
        }
        return items;
    }

private:
    static std::string scalar(const json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        return v.dump();
    }

    CLI::ConfigItem item(const std::string& key, const json& v) const {
        CLI::ConfigItem it;
        it.parents = {active_};
        it.name = key;
        if (v.is_array()) {
            for (const auto& e : v) it.inputs.push_back(scalar(e));
        } else if (!v.is_null()) {
            it.inputs.push_back(scalar(v));
        }
        return it;
    }

    std::string active_;
    std::set<std::string> sections_;
};

struct Common {
    std::string dataset;
    std::string out;
    std::uint64_t seed = 0;
    bool no_normalize = false;
};

void add_common(CLI::App* sub, Common& c, bool dataset_required = true) {
    auto* d = sub->add_option("--dataset", c.dataset, "Study dataset (JSONL)");
    if (dataset_required) d->required();
    sub->add_option("--out", c.out, "Output file")->required();
    sub->add_option("--seed", c.seed, "Random seed");
    sub->add_flag("--no-normalize", c.no_normalize, "Use vectors as stored instead of L-infinity normalizing");
}

void add_discovery_flags(CLI::App* sub, DiscoveryConfig& cfg) {
    sub->add_option("--T", cfg.T, "Maximum number of regions");
    sub->add_option("--alpha", cfg.alpha, "Minimum consistency");
    sub->add_option("--beta-l", cfg.beta_l, "Minimum region size (fraction)");
    sub->add_option("--beta-u", cfg.beta_u, "Maximum region size (fraction)");
    sub->add_option("--delta", cfg.delta, "Minimum gain to accept a region");
    sub->add_option("--lambda", cfg.lambda, "Constraint penalty weight");
    sub->add_option("--c1", cfg.c1, "Sigmoid sharpness");
    sub->add_option("--lr", cfg.learning_rate, "AdamW learning rate");
    sub->add_option("--weight-decay", cfg.weight_decay, "AdamW weight decay");
    sub->add_option("--epochs", cfg.epochs, "Epochs for the selected start");
    sub->add_option("--trial-epochs", cfg.trial_epochs, "Epochs per trial start");
    sub->add_option("--n-starts", cfg.n_starts, "Number of trial starts");
}

void check_out(const std::string& path) {
    const auto parent = fs::path(path).parent_path();
    if (!parent.empty() && !fs::is_directory(parent)) {
        throw ValidationError("output directory '" + parent.string() + "' does not exist");
    }
}

void write_file(const std::string& path, const std::string& content) {
    check_out(path);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ValidationError("cannot open '" + path + "' for writing");
    f << content;
    if (!f) throw ValidationError("cannot write '" + path + "'");
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot open '" + path + "'");
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string fmt(double x) {
    if (std::isnan(x)) return "";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    (void)ec;
    return std::string(buf, ptr);
}

struct Loaded {
    StudyDataset ds;
    std::string dataset_id;   // hash of the file as read
};

Loaded load_for_work(const std::string& path, bool normalize) {
    Loaded l;
    const auto text = read_file(path);
    l.dataset_id = fnv1a_hex(text);
    l.ds = parse_dataset(text);
    l.ds.validate();
    if (normalize && !l.ds.manifest.normalized) l.ds = normalize_dataset(std::move(l.ds));
    return l;
}

// Normalization used by the command that produced the regions file, unless
// the caller opts out.
bool regions_normalize(const RegionsFile& rf, bool no_normalize) {
    if (no_normalize) return false;
    if (rf.provenance.contains("normalize") && rf.provenance["normalize"].is_boolean()) {
        return rf.provenance["normalize"].get<bool>();
    }
    return true;
}

void check_dims(const RegionsFile& rf, const StudyDataset& ds) {
    if (rf.dim != ds.manifest.joint_dim()) {
        throw ValidationError("regions file dimension " + std::to_string(rf.dim) +
                              " does not match the dataset joint dimension " + std::to_string(ds.manifest.joint_dim()));
    }
}

StudyDataset training_part(const StudyDataset& ds) {
    auto train = ds.subset(Split::Train);
    return train.empty() ? ds : train;
}

// ---- discover ---------------------------------------------------------------

struct DiscoverArgs {
    Common common;
    DiscoveryConfig cfg;
    std::string prior = "recorded";
    std::string log;
};

void run_discover(const DiscoverArgs& a, std::ostream& out) {
    auto cfg = a.cfg;
    cfg.seed = a.common.seed;
    cfg.validate();
    const auto prior = PriorRule::parse(a.prior, a.common.seed);
    const bool normalize = !a.common.no_normalize;
    const auto loaded = load_for_work(a.common.dataset, normalize);
    const auto train = training_part(loaded.ds);
    const auto log_path = a.log.empty() ? a.common.out + ".log.tsv" : a.log;
    check_out(a.common.out);
    check_out(log_path);

    const auto result = discover(train, prior, cfg);

    json config = to_json(cfg);
    config["prior"] = a.prior;
    RegionsFile rf;
    rf.dim = loaded.ds.manifest.joint_dim();
    rf.dataset_id = loaded.dataset_id;
    rf.regions = result.regions;
    rf.provenance = {{"command", "discover"},
                     {"config", config},
                     {"normalize", normalize},
                     {"train_examples", train.size()}};
    write_file(a.common.out, serialize_regions(rf));
    write_file(log_path, "# " + rf.provenance.dump() + "\n" + format_run_log(result.log));
    out << "accepted " << result.regions.size() << " regions; train team loss "
        << team_loss(Integrator{prior, {}}, train) << " -> " << team_loss(result.integrator, train) << '\n';
}

// ---- discover-select --------------------------------------------------------

struct SelectArgs {
    Common common;
    SelectionConfig cfg;
    std::string prior = "recorded";
    std::string log;
};

void run_select(const SelectArgs& a, std::ostream& out) {
    auto cfg = a.cfg;
    cfg.seed = a.common.seed;
    cfg.validate();
    const auto prior = PriorRule::parse(a.prior, a.common.seed);
    const bool normalize = !a.common.no_normalize;
    const auto loaded = load_for_work(a.common.dataset, normalize);
    const auto train = training_part(loaded.ds);
    const auto log_path = a.log.empty() ? a.common.out + ".log.tsv" : a.log;
    check_out(a.common.out);
    check_out(log_path);

    const auto result = discover_select(train, prior, cfg);

    json config{{"T", cfg.T},       {"alpha", cfg.alpha}, {"beta_l", cfg.beta_l}, {"beta_u", cfg.beta_u},
                {"delta", cfg.delta}, {"seed", cfg.seed},  {"prior", a.prior}};
    RegionsFile rf;
    rf.dim = loaded.ds.manifest.joint_dim();
    rf.dataset_id = loaded.dataset_id;
    rf.regions = result.regions;
    rf.provenance = {{"command", "discover-select"},
                     {"config", config},
                     {"normalize", normalize},
                     {"train_examples", train.size()}};
    write_file(a.common.out, serialize_regions(rf));

    std::string log = "# " + rf.provenance.dump() + "\nround\tcentroid_id\tradius\tdecision\tgain\tmembers\n";
    for (std::size_t k = 0; k < result.regions.size(); ++k) {
        const auto& r = result.regions[k];
        log += std::to_string(k) + '\t' + train.examples[result.centroids[k]].id + '\t' + fmt(r.radius) + '\t' +
               std::to_string(static_cast<int>(r.decision)) + '\t' + fmt(r.stats.gain) + '\t' +
               std::to_string(r.stats.member_count) + '\n';
    }
    write_file(log_path, log);
    out << "accepted " << result.regions.size() << " regions; train team loss "
        << team_loss(Integrator{prior, {}}, train) << " -> " << team_loss(result.integrator, train) << '\n';
}

// ---- describe ---------------------------------------------------------------

struct DescribeArgs {
    Common common;
    std::string regions;
    DescriberConfig cfg;
    bool no_contrast = false;
    std::string style = "recommended";
    std::string llm = "mock";
    std::string llm_script;
    std::string llm_endpoint = "https://api.openai.com/v1/chat/completions";
    std::string llm_model = "gpt-3.5-turbo";
    std::string llm_token_env = "OPENAI_API_KEY";
    std::string embedder = "bow";
    std::string embedder_table;
    std::string embedder_endpoint;
    std::string trace;
};

void run_describe(const DescribeArgs& a, std::ostream& out) {
    auto cfg = a.cfg;
    cfg.seed = a.common.seed;
    cfg.contrastive = !a.no_contrast;
    if (a.style == "recommended") cfg.style = PromptStyle::Recommended;
    else if (a.style == "evaluation") cfg.style = PromptStyle::Evaluation;
    else cfg.style = PromptStyle::Short;

    auto rf = load_regions(a.regions);
    const bool normalize = regions_normalize(rf, a.common.no_normalize);
    const auto loaded = load_for_work(a.common.dataset, normalize);
    check_dims(rf, loaded.ds);
    const auto trace_path = a.trace.empty() ? a.common.out + ".trace.json" : a.trace;
    check_out(a.common.out);
    check_out(trace_path);

    std::unique_ptr<LLMClient> llm;
    if (a.llm == "http") {
        llm = std::make_unique<HttpLLM>(a.llm_endpoint, a.llm_model, a.llm_token_env);
    } else if (!a.llm_script.empty()) {
        llm = std::make_unique<ScriptedLLM>(ScriptedLLM::from_file(a.llm_script));
    } else {
        llm = std::make_unique<KeywordLLM>();
    }
    const std::size_t dim = loaded.ds.manifest.embedding_dim;
    std::unique_ptr<TextEmbedder> embedder;
    if (a.embedder == "http") {
        if (a.embedder_endpoint.empty()) throw ValidationError("--embedder http needs --embedder-endpoint");
        embedder = std::make_unique<HttpEmbedder>(a.embedder_endpoint, dim);
    } else if (a.embedder == "lookup") {
        if (a.embedder_table.empty()) throw ValidationError("--embedder lookup needs --embedder-table");
        embedder = std::make_unique<LookupEmbedder>(LookupEmbedder::from_file(a.embedder_table));
    } else {
        embedder = std::make_unique<BagOfWordsEmbedder>(BagOfWordsEmbedder::hashed(dim));
    }

    json config{{"m", cfg.m},
                {"n_inside", cfg.n_inside},
                {"n_outside", cfg.n_outside},
                {"word_limit", cfg.word_limit},
                {"contrastive", cfg.contrastive},
                {"style", a.style},
                {"seed", cfg.seed},
                {"llm", a.llm},
                {"embedder", a.embedder}};
    if (a.llm == "http") {
        config["llm_endpoint"] = a.llm_endpoint;
        config["llm_model"] = a.llm_model;
        config["llm_token_env"] = a.llm_token_env;
    }
    if (!a.llm_script.empty()) config["llm_script"] = fs::path(a.llm_script).filename().string();
    json provenance{{"command", "describe"}, {"config", config}, {"dataset_id", loaded.dataset_id}};

    json traces = json::array();
    auto write_traces = [&] {
        write_file(trace_path, json{{"provenance", provenance}, {"traces", traces}}.dump(2) + "\n");
    };
    for (auto& reg : rf.regions) {
        try {
            auto result = describe_region(reg, loaded.ds, cfg, *llm, *embedder);
            reg.description = result.description;
            traces.push_back(to_json(result.trace));
        } catch (const DescribeError& e) {
            traces.push_back(to_json(e.partial_trace()));
            write_traces();
            throw;
        }
    }
    rf.provenance["describe"] = provenance;
    write_file(a.common.out, serialize_regions(rf));
    write_traces();
    out << "described " << rf.regions.size() << " regions with " << llm->calls() << " LLM calls\n";
}

// ---- simulate ---------------------------------------------------------------

struct SimulateArgs {
    Common common;
    PlantSpec spec;
    std::size_t human_regions = 4;
    std::size_t ai_regions = 4;
    double good = 0.95;
    double bad = 0.60;
    double background = 0.75;
    double prior_probability = 0.5;
    bool keep_prior = false;
    std::size_t blobs = 0;
    std::size_t dim = 16;
    std::size_t n_blobs = 20;
    double separation = 6.0;
    double test_fraction = 0.0;
    std::string truth;
};

void run_simulate(const SimulateArgs& a, std::ostream& out) {
    PlantSpec spec = a.spec;
    spec.seed = a.common.seed;
    spec.human = {a.human_regions, a.good, a.bad, a.background};
    spec.ai = {a.ai_regions, a.good, a.bad, a.background};
    if (a.keep_prior) spec.prior_probability.reset();
    else spec.prior_probability = a.prior_probability;
    spec.validate();
    if (!(a.test_fraction >= 0.0 && a.test_fraction < 1.0)) throw ValidationError("--test-fraction must lie in [0,1)");

    const auto truth_path = a.truth.empty() ? a.common.out + ".truth.json" : a.truth;
    check_out(a.common.out);
    check_out(truth_path);

    StudyDataset base;
    json source;
    if (!a.common.dataset.empty()) {
        const auto text = read_file(a.common.dataset);
        base = parse_dataset(text);
        base.validate();
        source = {{"dataset_id", fnv1a_hex(text)}};
    } else if (a.blobs > 0) {
        base = generate_blobs(a.blobs, a.dim, a.n_blobs, a.separation, a.common.seed).dataset;
        source = {{"blobs", a.blobs}, {"dim", a.dim}, {"n_blobs", a.n_blobs}, {"separation", a.separation}};
    } else {
        throw ValidationError("simulate needs --dataset or --blobs");
    }

    const auto gt = plant_regions(base, spec);
    auto ds = simulate_responses(base, gt, spec);
    if (a.test_fraction > 0.0) {
        for (std::size_t i = 0; i < ds.size(); ++i) {
            ds.examples[i].split =
                to_unit(mix_seed(spec.seed, i, 0x74657374ull)) < a.test_fraction ? Split::Test : Split::Train;
        }
    }

    json config{{"human_regions", a.human_regions},
                {"ai_regions", a.ai_regions},
                {"good", a.good},
                {"bad", a.bad},
                {"background", a.background},
                {"min_fraction", spec.min_fraction},
                {"max_fraction", spec.max_fraction},
                {"prior_probability", spec.prior_probability ? json(*spec.prior_probability) : json(nullptr)},
                {"test_fraction", a.test_fraction},
                {"seed", spec.seed},
                {"source", source}};
    ds.manifest.provenance = {{"command", "simulate"}, {"config", config}};
    write_file(a.common.out, serialize_dataset(ds));
    auto truth = ground_truth_to_json(gt, ds);
    truth["provenance"] = ds.manifest.provenance;
    write_file(truth_path, truth.dump(2) + "\n");
    out << "simulated " << ds.size() << " examples\n";
}

// ---- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
    Common common;
    std::string regions;
    std::size_t splits = 5;
    double split_ratio = 0.7;
    std::size_t max_T = 1000;
    std::string method = "gradient";
    std::string prior = "recorded";
    DiscoveryConfig cfg;
};

void run_evaluate(const EvaluateArgs& a, std::ostream& out) {
    if (!(a.split_ratio > 0.0 && a.split_ratio < 1.0)) throw ValidationError("--split-ratio must lie in (0,1)");
    const auto prior = PriorRule::parse(a.prior, a.common.seed);
    std::optional<RegionsFile> rf;
    bool normalize = !a.common.no_normalize;
    if (!a.regions.empty()) {
        rf = load_regions(a.regions);
        normalize = regions_normalize(*rf, a.common.no_normalize);
    }
    auto cfg = a.cfg;
    cfg.validate();
    const auto loaded = load_for_work(a.common.dataset, normalize);
    const auto& ds = loaded.ds;
    if (rf) check_dims(*rf, ds);
    if (ds.size() < 2) throw ValidationError("evaluate needs at least two examples");
    check_out(a.common.out);

    json config{{"splits", a.splits},  {"split_ratio", a.split_ratio}, {"max_T", a.max_T},
                {"prior", a.prior},    {"seed", a.common.seed},       {"normalize", normalize},
                {"dataset_id", loaded.dataset_id}};
    if (rf) {
        config["regions_dataset_id"] = rf->dataset_id;
        config["regions"] = rf->regions.size();
    } else {
        config["method"] = a.method;
        config["discovery"] = to_json(cfg);
    }

    struct SplitData {
        StudyDataset train;
        StudyDataset test;
    };
    std::vector<SplitData> splits;
    if (a.splits == 0) {
        splits.push_back({ds.subset(Split::Train), ds.subset(Split::Test)});
    } else {
        const auto n_train = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::llround(a.split_ratio * static_cast<double>(ds.size()))), 1, ds.size() - 1);
        for (std::size_t k = 0; k < a.splits; ++k) {
            Rng rng(mix_seed(a.common.seed, 0x73706c6974ull, k));
            auto idx = rng.sample_indices(ds.size(), ds.size());
            std::vector<std::size_t> tr(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
            std::vector<std::size_t> te(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
            std::sort(tr.begin(), tr.end());
            std::sort(te.begin(), te.end());
            splits.push_back({ds.subset(tr), ds.subset(te)});
        }
    }

    std::string csv = "# command: evaluate\n# config: " + config.dump() + "\n";
    std::map<std::size_t, std::vector<double>> train_err;
    std::map<std::size_t, std::vector<double>> test_err;
    for (std::size_t k = 0; k < splits.size(); ++k) {
        const auto& sp = splits[k];
        std::vector<Region> regions;
        if (rf) {
            regions = rf->regions;
        } else if (a.method == "select") {
            SelectionConfig sc{cfg.T, cfg.alpha, cfg.beta_l, cfg.beta_u, cfg.delta, mix_seed(a.common.seed, k)};
            regions = discover_select(sp.train, prior, sc).regions;
        } else {
            auto c = cfg;
            c.seed = mix_seed(a.common.seed, k);
            regions = discover(sp.train, prior, c).regions;
        }
        const auto report = team_error_report(sp.train, sp.test, prior, regions, a.max_T);
        csv += "# split " + std::to_string(k + 1) + " train=" + std::to_string(sp.train.size()) +
               " test=" + std::to_string(sp.test.size()) + "\n" + report_csv(report);
        out << "split " << k + 1 << " (train " << sp.train.size() << ", test " << sp.test.size() << ")\n"
            << report_table(report);
        for (const auto& row : report.rows) {
            train_err[row.t].push_back(row.train_error);
            test_err[row.t].push_back(row.test_error);
        }
    }

    csv += "# mean ± stderr over " + std::to_string(splits.size()) + " splits\n";
    csv += "t,train_error_mean,train_error_stderr,test_error_mean,test_error_stderr,splits\n";
    out << "mean ± stderr over " << splits.size() << " splits\n";
    for (const auto& [t, tr] : train_err) {
        const auto a_tr = mean_stderr(tr);
        const auto a_te = mean_stderr(test_err[t]);
        csv += std::to_string(t) + ',' + fmt(a_tr.mean) + ',' + fmt(a_tr.stderr_) + ',' + fmt(a_te.mean) + ',' +
               fmt(a_te.stderr_) + ',' + std::to_string(tr.size()) + '\n';
        out << "  t=" << t << "  train " << a_tr.mean << " ± " << a_tr.stderr_ << "  test " << a_te.mean << " ± "
            << a_te.stderr_ << '\n';
    }
    write_file(a.common.out, csv);
}

// ---- serve ------------------------------------------------------------------

struct ServeArgs {
    std::string dataset;
    std::string regions;
    std::string card;
    std::string assets;
    std::string host = "127.0.0.1";
    int port = 8080;
    bool no_normalize = false;
};

void run_serve(const ServeArgs& a, std::ostream& out) {
    const auto rf = load_regions(a.regions);
    const auto loaded = load_for_work(a.dataset, regions_normalize(rf, a.no_normalize));
    check_dims(rf, loaded.ds);
    HumanAICard card = a.card.empty() ? default_card(loaded.ds, rf.regions)
                                      : card_from_json(json::parse(read_file(a.card)));
    auto ctx = std::make_shared<const OnboardingContext>(loaded.ds, rf.regions, std::move(card));
    auto service = std::make_shared<OnboardingService>(ctx);
    std::optional<fs::path> assets;
    if (!a.assets.empty()) {
        if (!fs::is_directory(a.assets)) throw ValidationError("assets directory '" + a.assets + "' does not exist");
        assets = a.assets;
    }
    OnboardingServer server(service, assets);
    const int port = server.bind(a.host, a.port);
    out << "listening on http://" << a.host << ':' << port << std::endl;
    server.listen();
}

std::string one_line(std::string s) {
    for (auto& c : s) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return s;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Learn, describe, evaluate and teach human-AI integration rules", "hai"};
    app.require_subcommand(1);
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.fallthrough();

    const std::set<std::string> names{"discover", "discover-select", "describe", "simulate", "evaluate", "serve"};
    std::string active;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (names.count(args[i])) {
            active = args[i];
            break;
        }
    }
    app.set_config("--config", "", "JSON config file; explicit flags take precedence");
    app.config_formatter(std::make_shared<JsonConfig>(active, names));

    DiscoverArgs disc;
    auto* c_disc = app.add_subcommand("discover", "Find regions with the relaxed objective");
    add_common(c_disc, disc.common);
    add_discovery_flags(c_disc, disc.cfg);
    c_disc->add_option("--prior", disc.prior, "Prior integrator")
        ->check(CLI::IsMember({"recorded", "random", "const0", "const1"}));
    c_disc->add_option("--log", disc.log, "Run log path (default: <out>.log.tsv)");

    SelectArgs sel;
    auto* c_sel = app.add_subcommand("discover-select", "Find regions by exhaustive centroid selection");
    add_common(c_sel, sel.common);
    c_sel->add_option("--T", sel.cfg.T, "Maximum number of regions");
    c_sel->add_option("--alpha", sel.cfg.alpha, "Minimum consistency");
    c_sel->add_option("--beta-l", sel.cfg.beta_l, "Minimum region size (fraction)");
    c_sel->add_option("--beta-u", sel.cfg.beta_u, "Maximum region size (fraction)");
    c_sel->add_option("--delta", sel.cfg.delta, "Minimum gain to accept a region");
    c_sel->add_option("--prior", sel.prior, "Prior integrator")
        ->check(CLI::IsMember({"recorded", "random", "const0", "const1"}));
    c_sel->add_option("--log", sel.log, "Run log path (default: <out>.log.tsv)");

    DescribeArgs desc;
    auto* c_desc = app.add_subcommand("describe", "Attach natural-language descriptions to regions");
    add_common(c_desc, desc.common);
    c_desc->add_option("--regions", desc.regions, "Regions file")->required();
    c_desc->add_option("--m", desc.cfg.m, "Counterexample rounds");
    c_desc->add_option("--n-inside", desc.cfg.n_inside, "Initial inside sample size");
    c_desc->add_option("--n-outside", desc.cfg.n_outside, "Initial outside sample size");
    c_desc->add_option("--word-limit", desc.cfg.word_limit, "Word limit in the instruction");
    c_desc->add_flag("--no-contrast", desc.no_contrast, "Never show examples outside the region");
    c_desc->add_option("--style", desc.style, "Instruction style")
        ->check(CLI::IsMember({"recommended", "evaluation", "short"}));
    c_desc->add_option("--llm", desc.llm, "Language model backend")->check(CLI::IsMember({"http", "mock"}));
    c_desc->add_option("--llm-script", desc.llm_script, "Scripted responses for the mock backend");
    c_desc->add_option("--llm-endpoint", desc.llm_endpoint, "Chat completions URL");
    c_desc->add_option("--llm-model", desc.llm_model, "Model name sent to the endpoint");
    c_desc->add_option("--llm-token-env", desc.llm_token_env, "Environment variable holding the API token");
    c_desc->add_option("--embedder", desc.embedder, "Text embedder")
        ->check(CLI::IsMember({"http", "lookup", "bow"}));
    c_desc->add_option("--embedder-table", desc.embedder_table, "JSON text->vector table for --embedder lookup");
    c_desc->add_option("--embedder-endpoint", desc.embedder_endpoint, "URL for --embedder http");
    c_desc->add_option("--trace", desc.trace, "Trace path (default: <out>.trace.json)");

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "Plant regions and simulate human and AI answers");
    add_common(c_sim, sim.common, false);
    c_sim->add_option("--blobs", sim.blobs, "Generate this many Gaussian-blob examples instead of reading --dataset");
    c_sim->add_option("--dim", sim.dim, "Blob embedding dimension");
    c_sim->add_option("--n-blobs", sim.n_blobs, "Number of blobs");
    c_sim->add_option("--separation", sim.separation, "Minimum distance between blob centers");
    c_sim->add_option("--human-regions", sim.human_regions, "Planted human regions");
    c_sim->add_option("--ai-regions", sim.ai_regions, "Planted AI regions");
    c_sim->add_option("--good", sim.good, "Accuracy inside good regions");
    c_sim->add_option("--bad", sim.bad, "Accuracy inside bad regions");
    c_sim->add_option("--background", sim.background, "Accuracy outside planted regions");
    c_sim->add_option("--min-fraction", sim.spec.min_fraction, "Smallest planted region (fraction)");
    c_sim->add_option("--max-fraction", sim.spec.max_fraction, "Largest planted region (fraction)");
    c_sim->add_option("--prior-probability", sim.prior_probability, "Probability of prior reliance on the AI");
    c_sim->add_flag("--keep-prior", sim.keep_prior, "Keep the recorded prior reliance");
    c_sim->add_option("--test-fraction", sim.test_fraction, "Fraction of examples marked as test split");
    c_sim->add_option("--truth", sim.truth, "Ground-truth sidecar path (default: <out>.truth.json)");

    EvaluateArgs ev;
    auto* c_ev = app.add_subcommand("evaluate", "Team error as regions are added, over random splits");
    add_common(c_ev, ev.common);
    c_ev->add_option("--regions", ev.regions, "Fixed regions file (default: rediscover per split)");
    c_ev->add_option("--splits", ev.splits, "Random splits (0: use the recorded split field)");
    c_ev->add_option("--split-ratio", ev.split_ratio, "Training fraction per split");
    c_ev->add_option("--max-T", ev.max_T, "Largest region count reported");
    c_ev->add_option("--method", ev.method, "Discovery method when no regions file is given")
        ->check(CLI::IsMember({"gradient", "select"}));
    c_ev->add_option("--prior", ev.prior, "Prior integrator")
        ->check(CLI::IsMember({"recorded", "random", "const0", "const1"}));
    add_discovery_flags(c_ev, ev.cfg);

    ServeArgs srv;
    auto* c_srv = app.add_subcommand("serve", "Run the onboarding HTTP service");
    c_srv->add_option("--dataset", srv.dataset, "Study dataset (JSONL)")->required();
    c_srv->add_option("--regions", srv.regions, "Regions file")->required();
    c_srv->add_option("--card", srv.card, "Human-AI card JSON (default: computed from the dataset)");
    c_srv->add_option("--assets", srv.assets, "Directory served under /assets/");
    c_srv->add_option("--host", srv.host, "Bind address");
    c_srv->add_option("--port", srv.port, "Port");
    c_srv->add_flag("--no-normalize", srv.no_normalize, "Use vectors as stored");

    std::vector<const char*> argv;
    for (const auto& s : args) argv.push_back(s.c_str());
    try {
        try {
            app.parse(static_cast<int>(argv.size()), argv.data());
        } catch (const CLI::CallForHelp&) {
            out << app.help();
            return kExitOk;
        } catch (const CLI::CallForAllHelp&) {
            out << app.help("", CLI::AppFormatMode::All);
            return kExitOk;
        } catch (const CLI::ParseError& e) {
            err << "error: usage: " << one_line(e.what()) << '\n';
            return kExitValidation;
        }

        if (c_disc->parsed()) run_discover(disc, out);
        else if (c_sel->parsed()) run_select(sel, out);
        else if (c_desc->parsed()) run_describe(desc, out);
        else if (c_sim->parsed()) run_simulate(sim, out);
        else if (c_ev->parsed()) run_evaluate(ev, out);
        else if (c_srv->parsed()) run_serve(srv, out);
        return kExitOk;
    } catch (const BackendError& e) {
        err << "error: backend: " << one_line(e.what()) << '\n';
        return kExitBackend;
    } catch (const Error& e) {
        err << "error: validation: " << one_line(e.what()) << '\n';
        return kExitValidation;
    } catch (const json::exception& e) {
        err << "error: validation: " << one_line(e.what()) << '\n';
        return kExitValidation;
    } catch (const fs::filesystem_error& e) {
        err << "error: validation: " << one_line(e.what()) << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: backend: " << one_line(e.what()) << '\n';
        return kExitBackend;
    }
}

} // namespace hai
