// Command-line front end: ingest raw logs into corpus snapshots, split them,
// train and evaluate models, and benchmark the two pairwise learners.

#include <algorithm>
#include <charconv>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cortrieve/cortrieve.hpp"

namespace fs = std::filesystem;
using namespace cortrieve;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

std::string g_out_dir;

std::string resolve_out(const std::string& path) {
    if (path.empty() || g_out_dir.empty()) return path;
    fs::path p(path);
    if (p.is_absolute()) return path;
    return (fs::path(g_out_dir) / p).string();
}

// Shortest representation that round-trips exactly.
std::string fmt_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, end);
}

/// Flat key=value config support: values from the file are appended as
/// --key=value tokens for any option the command line did not set, so the
/// precedence is command line > config file > defaults.
std::vector<std::string> inject_config_args(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string config_path;
    for (size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size())
            config_path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0)
            config_path = args[i].substr(9);
    }
    if (config_path.empty()) return args;

    auto given = [&](const std::string& key) {
        std::string flag = "--" + key;
        for (const auto& a : args)
            if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
        return false;
    };

    std::ifstream in(config_path);
    if (!in) throw DataError("cannot open config file: " + config_path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos || eq == 0)
            throw UsageError(config_path + ": line " + std::to_string(lineno) +
                             " is not a key=value pair");
        std::string key = line.substr(0, eq);
        if (key == "config") continue;
        if (!given(key)) args.push_back("--" + key + "=" + line.substr(eq + 1));
    }
    return args;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream out(path, mode);
    if (!out) throw DataError("cannot open output file: " + path);
    return out;
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

struct IngestOptions {
    std::string format = "tsv";
    std::string in_path, tags_path, listens_path, reviews_path, categories_path;
    std::string columns = "qui";
    int top_tags = 50;
    int min_reviews = 4;
    std::string out = "corpus.bin";
};

int run_ingest(const IngestOptions& opt) {
    Corpus corpus;
    if (opt.format == "tsv") {
        if (opt.in_path.empty()) throw UsageError("--format tsv requires --in");
        corpus = ingest_tsv(opt.in_path, ColumnOrder::parse(opt.columns));
    } else if (opt.format == "lastfm") {
        if (opt.tags_path.empty() || opt.listens_path.empty())
            throw UsageError("--format lastfm requires --tags and --listens");
        corpus = ingest_lastfm(opt.tags_path, opt.listens_path, opt.top_tags);
    } else {
        if (opt.reviews_path.empty() || opt.categories_path.empty())
            throw UsageError("--format yelp requires --reviews and --categories");
        corpus = ingest_yelp(opt.reviews_path, opt.categories_path, opt.min_reviews);
    }
    std::string out = resolve_out(opt.out);
    save_corpus(corpus, out);
    std::cout << stats_lines(corpus);
    std::cout << "snapshot=" << out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// split
// ---------------------------------------------------------------------------

struct SplitOptions {
    std::string in_path;
    std::vector<double> fractions = {0.8, 0.1, 0.1};
    uint64_t seed = 1;
    std::string out_prefix = "corpus";
};

int run_split(const SplitOptions& opt) {
    if (opt.fractions.size() != 3)
        throw UsageError("--fractions needs exactly three values: train,validation,test");
    Corpus corpus = load_corpus(opt.in_path);
    SplitSpec spec{opt.fractions[0], opt.fractions[1], opt.fractions[2], opt.seed};
    SplitResult parts = split(corpus, spec);
    std::string prefix = resolve_out(opt.out_prefix);
    save_corpus(parts.train, prefix + ".train.bin");
    save_corpus(parts.validation, prefix + ".valid.bin");
    save_corpus(parts.test, prefix + ".test.bin");
    std::cout << "train_samples=" << parts.train.size() << "\n"
              << "validation_samples=" << parts.validation.size() << "\n"
              << "test_samples=" << parts.test.size() << "\n"
              << "snapshot_prefix=" << prefix << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOptions {
    std::string model = "lcr";
    std::string learner = "bpr";
    std::string train_path, valid_path;
    std::string out = "bank.bin";
    std::string history_out, trace_out;
    int n = 10;
    double alpha = 0.05;
    double lambda = 0.01;
    double C = 1.0;
    int max_epochs = 100;
    int patience = 5;
    int eval_k = 10;
    uint64_t seed = 1;
    double init_low = -0.02;
    double init_high = 0.02;
    bool iid_positives = false;
    int64_t max_attempts = 0;
    int nmf_iters = 200;
    double nmf_tol = 1e-5;
    std::vector<double> train_fracs = {1.0};
    std::string from_manifest;
};

std::string manifest_body(const TrainOptions& opt, double train_frac, const std::string& bank_out,
                          const std::string& history_out) {
    std::ostringstream os;
    os << "command=train\n";
    os << "code_version=" << kVersion << "\n";
    os << "model=" << opt.model << "\n";
    os << "learner=" << opt.learner << "\n";
    os << "train_path=" << opt.train_path << "\n";
    os << "train_fingerprint=" << std::hex << fnv1a_file(opt.train_path) << std::dec << "\n";
    os << "valid_path=" << opt.valid_path << "\n";
    os << "valid_fingerprint=" << std::hex << fnv1a_file(opt.valid_path) << std::dec << "\n";
    os << "n=" << opt.n << "\n";
    os << "alpha=" << fmt_double(opt.alpha) << "\n";
    os << "lambda=" << fmt_double(opt.lambda) << "\n";
    os << "C=" << fmt_double(opt.C) << "\n";
    os << "max_epochs=" << opt.max_epochs << "\n";
    os << "patience=" << opt.patience << "\n";
    os << "eval_k=" << opt.eval_k << "\n";
    os << "seed=" << opt.seed << "\n";
    os << "init_low=" << fmt_double(opt.init_low) << "\n";
    os << "init_high=" << fmt_double(opt.init_high) << "\n";
    os << "iid_positives=" << (opt.iid_positives ? 1 : 0) << "\n";
    os << "max_attempts=" << opt.max_attempts << "\n";
    os << "nmf_iters=" << opt.nmf_iters << "\n";
    os << "nmf_tol=" << fmt_double(opt.nmf_tol) << "\n";
    os << "train_frac=" << fmt_double(train_frac) << "\n";
    os << "bank_out=" << bank_out << "\n";
    os << "history_out=" << history_out << "\n";
    os << "trace_out=" << opt.trace_out << "\n";
    return os.str();
}

void write_manifest(const std::string& path, const std::string& body) {
    auto out = open_out(path);
    out << body;
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016" PRIx64, fnv1a_bytes(body));
    out << "config_hash=" << hash << "\n";
}

TrainOptions load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    if (kv["command"] != "train") throw DataError(path + ": not a train manifest");
    TrainOptions opt;
    auto get = [&](const char* key) -> std::string {
        auto it = kv.find(key);
        if (it == kv.end()) throw DataError(path + ": manifest missing key " + key);
        return it->second;
    };
    opt.model = get("model");
    opt.learner = get("learner");
    opt.train_path = get("train_path");
    opt.valid_path = get("valid_path");
    opt.n = std::stoi(get("n"));
    opt.alpha = std::stod(get("alpha"));
    opt.lambda = std::stod(get("lambda"));
    opt.C = std::stod(get("C"));
    opt.max_epochs = std::stoi(get("max_epochs"));
    opt.patience = std::stoi(get("patience"));
    opt.eval_k = std::stoi(get("eval_k"));
    opt.seed = std::stoull(get("seed"));
    opt.init_low = std::stod(get("init_low"));
    opt.init_high = std::stod(get("init_high"));
    opt.iid_positives = get("iid_positives") == "1";
    opt.max_attempts = std::stoll(get("max_attempts"));
    opt.nmf_iters = std::stoi(get("nmf_iters"));
    opt.nmf_tol = std::stod(get("nmf_tol"));
    opt.train_fracs = {std::stod(get("train_frac"))};
    opt.out = get("bank_out");
    opt.history_out = get("history_out");
    opt.trace_out = get("trace_out");
    return opt;
}

Corpus subsample_train(const Corpus& train, double fraction, uint64_t seed) {
    if (fraction >= 1.0) return train;
    if (!(fraction > 0.0)) throw UsageError("train fraction must lie in (0,1]");
    auto keep = static_cast<int64_t>(std::floor(fraction * static_cast<double>(train.size()) + 1e-9));
    if (keep < 1) throw DataError("train fraction leaves no interactions");
    std::vector<int64_t> order(static_cast<size_t>(train.size()));
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);
    Rng rng(derive_seed(seed, "train-frac"));
    rng.shuffle(order);
    Corpus sub;
    sub.queries = train.queries;
    sub.users = train.users;
    sub.items = train.items;
    for (int64_t i = 0; i < keep; ++i) {
        const auto& x = train.interactions[static_cast<size_t>(order[static_cast<size_t>(i)])];
        sub.add(x.query, x.user, x.item);
    }
    sub.finalize();
    return sub;
}

int run_train_once(const TrainOptions& opt, double train_frac, const std::string& suffix) {
    std::string bank_out = resolve_out(opt.out) + suffix;
    std::string history_out = opt.history_out.empty() ? "" : resolve_out(opt.history_out) + suffix;
    std::string trace_out = opt.trace_out.empty() ? "" : resolve_out(opt.trace_out) + suffix;

    write_manifest(bank_out + ".manifest", manifest_body(opt, train_frac, bank_out, history_out));

    Corpus train_full = load_corpus(opt.train_path);
    Corpus valid = load_corpus(opt.valid_path);
    Corpus train = subsample_train(train_full, train_frac, opt.seed);

    Dims dims{train.n_queries(), train.n_users(), train.n_items(), opt.n};

    LearnerConfig bpr_cfg;
    bpr_cfg.alpha = opt.alpha;
    bpr_cfg.lambda = opt.lambda;
    bpr_cfg.max_epochs = opt.max_epochs;
    bpr_cfg.patience = opt.patience;
    bpr_cfg.eval_k = opt.eval_k;
    bpr_cfg.seed = opt.seed;
    bpr_cfg.n = opt.n;
    bpr_cfg.init_low = opt.init_low;
    bpr_cfg.init_high = opt.init_high;
    bpr_cfg.iid_positives = opt.iid_positives;

    WarpConfig warp_cfg;
    warp_cfg.alpha = opt.alpha;
    warp_cfg.C = opt.C;
    warp_cfg.max_epochs = opt.max_epochs;
    warp_cfg.patience = opt.patience;
    warp_cfg.eval_k = opt.eval_k;
    warp_cfg.seed = opt.seed;
    warp_cfg.max_sampling_attempts = opt.max_attempts;
    warp_cfg.n = opt.n;
    warp_cfg.init_low = opt.init_low;
    warp_cfg.init_high = opt.init_high;

    std::ofstream trace_file;
    WarpTraceSink sink;
    if (!trace_out.empty() && opt.learner == "warp" && opt.model != "nmf") {
        trace_file = open_out(trace_out);
        write_warp_trace_header(trace_file);
        sink = [&trace_file](int64_t step, const WarpStepTrace& t) {
            write_warp_trace_row(trace_file, step, t);
        };
    }

    double final_recall = 0.0;
    std::vector<EpochStats> history;

    if (opt.model == "nmf") {
        std::fprintf(stderr, "warning: nmf is batch-trained; the --learner flag is ignored\n");
        NmfResult result = nmf_train(query_item_counts(train), opt.n, opt.nmf_iters, opt.seed,
                                     opt.nmf_tol);
        save_bank(result.bank, bank_out);
        if (!history_out.empty()) {
            auto hist = open_out(history_out);
            hist << "iteration,squared_error\r\n";
            for (size_t i = 0; i < result.errors.size(); ++i)
                hist << (i + 1) << "," << result.errors[i] << "\r\n";
        }
        const int ks[1] = {opt.eval_k};
        final_recall = recall_at_k(result.bank, valid, ks).recall_at.begin()->second;
    } else {
        auto run = [&](auto bank) {
            if (opt.learner == "warp") {
                auto result = train_warp(std::move(bank), train, valid, warp_cfg, sink);
                history = std::move(result.history);
                final_recall = result.best_recall;
                save_bank(std::move(result.bank), bank_out);
            } else {
                auto result = train_bpr(std::move(bank), train, valid, bpr_cfg);
                history = std::move(result.history);
                final_recall = result.best_recall;
                save_bank(std::move(result.bank), bank_out);
            }
        };
        if (opt.model == "pitf") {
            run(init_pitf_bank(dims, opt.init_low, opt.init_high, opt.seed));
        } else {
            run(init_param_bank(model_kind_from_string(opt.model), dims, opt.init_low,
                                opt.init_high, opt.seed));
        }
        if (!history_out.empty()) {
            auto hist = open_out(history_out);
            write_history_csv(history, hist);
        }
    }

    std::cout << "bank=" << bank_out << "\n";
    std::cout << "epochs=" << history.size() << "\n";
    std::cout << "validation_recall@" << opt.eval_k << "=" << final_recall << "\n";
    return 0;
}

int run_train(TrainOptions opt) {
    if (!opt.from_manifest.empty()) opt = load_manifest(opt.from_manifest);
    if (opt.train_path.empty() || opt.valid_path.empty())
        throw UsageError("train requires --train and --valid corpus snapshots");
    if (opt.train_fracs.empty()) opt.train_fracs = {1.0};
    const bool sweep = opt.train_fracs.size() > 1;
    for (double f : opt.train_fracs) {
        std::string suffix;
        if (sweep) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), ".f%.2f", f);
            suffix = buf;
            std::cout << "train_frac=" << f << "\n";
        }
        run_train_once(opt, f, suffix);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalCmdOptions {
    std::string bank_path, corpus_path;
    std::vector<int> ks = {5, 10, 15, 20, 25, 30};
    std::string out = "recall.csv";
    bool exclude_train_positives = false;
    std::string train_path;
};

void check_bank_corpus_dims(const AnyBank& bank, const Corpus& corpus) {
    Dims d = dims_of(bank);
    bool user_free = std::holds_alternative<NmfBank>(bank);
    bool ok = d.n_queries == corpus.n_queries() && d.n_items == corpus.n_items() &&
              (user_free || d.n_users == corpus.n_users());
    if (!ok) {
        std::ostringstream os;
        os << "bank/corpus dimension mismatch: bank (queries=" << d.n_queries
           << ", users=" << d.n_users << ", items=" << d.n_items << ") vs corpus (queries="
           << corpus.n_queries() << ", users=" << corpus.n_users()
           << ", items=" << corpus.n_items() << ")";
        throw DataError(os.str());
    }
}

int run_eval(const EvalCmdOptions& opt) {
    AnyBank bank = load_bank(opt.bank_path);
    Corpus corpus = load_corpus(opt.corpus_path);
    check_bank_corpus_dims(bank, corpus);

    EvalOptions eopts;
    Corpus train;
    if (opt.exclude_train_positives) {
        if (opt.train_path.empty())
            throw UsageError("--exclude-train-positives requires --train");
        train = load_corpus(opt.train_path);
        eopts.exclude_train_positives = true;
        eopts.train = &train;
    }

    EvalReport report = std::visit(
        [&](const auto& b) { return recall_at_k(b, corpus, opt.ks, eopts); }, bank);

    std::string out = resolve_out(opt.out);
    auto csv = open_out(out);
    write_recall_csv(report, csv);
    for (const auto& [k, r] : report.recall_at) std::cout << "recall@" << k << "=" << r << "\n";
    std::cout << "n_test=" << report.n_test << "\n";
    std::cout << "csv=" << out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchOptions {
    std::string model = "lcr";
    std::string train_path, valid_path;
    int n = 10;
    double bpr_alpha = 0.05;
    double bpr_lambda = 0.01;
    double warp_alpha = 0.05;
    double warp_C = 1.0;
    int max_epochs = 10;
    int patience = 100;
    uint64_t seed = 1;
    int repeats = 10;
    std::string out = "bench";
};

int run_bench(const BenchOptions& opt) {
    if (opt.repeats < 1) throw UsageError("--repeats must be at least 1");
    Corpus train = load_corpus(opt.train_path);
    Corpus valid = load_corpus(opt.valid_path);
    ModelKind kind = model_kind_from_string(opt.model);
    if (kind == ModelKind::nmf) throw UsageError("bench compares pairwise learners; nmf has none");

    std::string prefix = resolve_out(opt.out);
    auto detail_csv = open_out(prefix + ".csv");
    detail_csv << "repeat,epoch,learner,accumulated_sampling_seconds,total_draws,recall_at_30\r\n";

    struct Acc {
        int n = 0;
        double sum_sec = 0, sum_sec2 = 0;
        double sum_draws = 0, sum_draws2 = 0;
        double sum_rec = 0, sum_rec2 = 0;
    };
    std::map<std::pair<int, std::string>, Acc> agg;

    for (int rep = 0; rep < opt.repeats; ++rep) {
        LearnerConfig bpr_cfg;
        bpr_cfg.alpha = opt.bpr_alpha;
        bpr_cfg.lambda = opt.bpr_lambda;
        bpr_cfg.max_epochs = opt.max_epochs;
        bpr_cfg.patience = opt.patience;
        bpr_cfg.n = opt.n;
        bpr_cfg.seed = derive_seed(opt.seed, "bench-repeat-" + std::to_string(rep));
        WarpConfig warp_cfg;
        warp_cfg.alpha = opt.warp_alpha;
        warp_cfg.C = opt.warp_C;
        warp_cfg.max_epochs = opt.max_epochs;
        warp_cfg.patience = opt.patience;
        warp_cfg.n = opt.n;
        warp_cfg.seed = bpr_cfg.seed;

        ComparisonReport report = compare_learners(kind, train, valid, bpr_cfg, warp_cfg);
        for (const auto& r : report.rows) {
            detail_csv << rep << "," << r.epoch << "," << r.learner << ","
                       << r.accumulated_sampling_seconds << "," << r.total_draws << ","
                       << r.recall_at_30 << "\r\n";
            Acc& a = agg[{r.epoch, r.learner}];
            ++a.n;
            a.sum_sec += r.accumulated_sampling_seconds;
            a.sum_sec2 += r.accumulated_sampling_seconds * r.accumulated_sampling_seconds;
            auto draws = static_cast<double>(r.total_draws);
            a.sum_draws += draws;
            a.sum_draws2 += draws * draws;
            a.sum_rec += r.recall_at_30;
            a.sum_rec2 += r.recall_at_30 * r.recall_at_30;
        }
    }

    auto agg_csv = open_out(prefix + ".agg.csv");
    agg_csv << "epoch,learner,n,mean_accumulated_sampling_seconds,stdev_accumulated_sampling_seconds,"
               "mean_total_draws,stdev_total_draws,mean_recall_at_30,stdev_recall_at_30\r\n";
    auto stdev = [](double sum, double sum2, int n) {
        if (n < 2) return 0.0;
        double mean = sum / n;
        double var = (sum2 - n * mean * mean) / (n - 1);
        return var > 0 ? std::sqrt(var) : 0.0;
    };
    for (const auto& [key, a] : agg) {
        agg_csv << key.first << "," << key.second << "," << a.n << "," << a.sum_sec / a.n << ","
                << stdev(a.sum_sec, a.sum_sec2, a.n) << "," << a.sum_draws / a.n << ","
                << stdev(a.sum_draws, a.sum_draws2, a.n) << "," << a.sum_rec / a.n << ","
                << stdev(a.sum_rec, a.sum_rec2, a.n) << "\r\n";
    }
    std::cout << "detail_csv=" << prefix << ".csv\n";
    std::cout << "aggregate_csv=" << prefix << ".agg.csv\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cortrieve: latent-factor collaborative retrieval toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    app.add_option("--out-dir", g_out_dir, "Directory prefixed to relative output paths")
        ->envname("CORTRIEVE_OUT_DIR");

    IngestOptions ingest_opt;
    auto* ingest = app.add_subcommand("ingest", "Build an indexed corpus snapshot from raw logs");
    std::string ingest_cfg;
    ingest->add_option("--config", ingest_cfg, "key=value config file");
    ingest->add_option("--format", ingest_opt.format, "Source format")
        ->check(CLI::IsMember({"tsv", "lastfm", "yelp"}));
    ingest->add_option("--in", ingest_opt.in_path, "Triples TSV (tsv format)");
    ingest->add_option("--columns", ingest_opt.columns, "Column order, e.g. qui or uqi");
    ingest->add_option("--tags", ingest_opt.tags_path, "(user, artist, tag) log");
    ingest->add_option("--listens", ingest_opt.listens_path, "(user, artist) log");
    ingest->add_option("--top-tags", ingest_opt.top_tags, "Retain the top K most used tags");
    ingest->add_option("--reviews", ingest_opt.reviews_path, "(user, business) log");
    ingest->add_option("--categories", ingest_opt.categories_path, "(business, category) log");
    ingest->add_option("--min-reviews", ingest_opt.min_reviews, "Minimum reviews per user");
    ingest->add_option("--out", ingest_opt.out, "Corpus snapshot path");

    SplitOptions split_opt;
    auto* split_cmd = app.add_subcommand("split", "Partition a corpus into train/validation/test");
    std::string split_cfg;
    split_cmd->add_option("--config", split_cfg, "key=value config file");
    split_cmd->add_option("--in", split_opt.in_path, "Corpus snapshot")->required();
    split_cmd->add_option("--fractions", split_opt.fractions, "train,validation,test")
        ->delimiter(',');
    split_cmd->add_option("--seed", split_opt.seed, "Shuffle seed");
    split_cmd->add_option("--out-prefix", split_opt.out_prefix, "Output snapshot prefix");

    TrainOptions train_opt;
    auto* train = app.add_subcommand("train", "Train a model on a split corpus");
    std::string train_cfg;
    train->add_option("--config", train_cfg, "key=value config file");
    train->add_option("--model", train_opt.model, "Model")
        ->check(CLI::IsMember({"lcr", "ilcr", "pitf", "nmf"}));
    train->add_option("--learner", train_opt.learner, "Learner")
        ->check(CLI::IsMember({"bpr", "warp"}));
    train->add_option("--train", train_opt.train_path, "Training corpus snapshot");
    train->add_option("--valid", train_opt.valid_path, "Validation corpus snapshot");
    train->add_option("--n", train_opt.n, "Embedding dimension");
    train->add_option("--alpha", train_opt.alpha, "Learning rate");
    train->add_option("--lambda", train_opt.lambda, "Regularization weight (bpr)");
    train->add_option("--C", train_opt.C, "Norm constraint radius (warp)");
    train->add_option("--max-epochs", train_opt.max_epochs, "Epoch cap");
    train->add_option("--patience", train_opt.patience, "Early-stopping patience");
    train->add_option("--eval-k", train_opt.eval_k, "Validation recall k");
    train->add_option("--seed", train_opt.seed, "Master seed");
    train->add_option("--init-low", train_opt.init_low, "Uniform init lower bound");
    train->add_option("--init-high", train_opt.init_high, "Uniform init upper bound");
    train->add_flag("--iid-positives", train_opt.iid_positives,
                    "Draw positives i.i.d. instead of sweeping shuffled epochs");
    train->add_option("--max-attempts", train_opt.max_attempts,
                      "Violator-draw cap per warp step (0 = items-1)");
    train->add_option("--nmf-iters", train_opt.nmf_iters, "NMF iteration cap");
    train->add_option("--nmf-tol", train_opt.nmf_tol, "NMF relative-error stop");
    train->add_option("--train-frac", train_opt.train_fracs,
                      "Training-set fraction(s), e.g. 0.4,0.6,0.8,1.0")
        ->delimiter(',');
    train->add_option("--out", train_opt.out, "Bank output path");
    train->add_option("--history", train_opt.history_out, "Per-epoch history CSV");
    train->add_option("--trace", train_opt.trace_out, "Per-step warp trace CSV");
    train->add_option("--from-manifest", train_opt.from_manifest,
                      "Re-execute a previous run from its manifest");

    EvalCmdOptions eval_opt;
    auto* eval = app.add_subcommand("eval", "Compute recall@k for a trained bank");
    std::string eval_cfg;
    eval->add_option("--config", eval_cfg, "key=value config file");
    eval->add_option("--bank", eval_opt.bank_path, "Bank file")->required();
    eval->add_option("--corpus", eval_opt.corpus_path, "Test corpus snapshot")->required();
    eval->add_option("--k", eval_opt.ks, "k values")->delimiter(',');
    eval->add_option("--out", eval_opt.out, "Recall CSV path");
    eval->add_flag("--exclude-train-positives", eval_opt.exclude_train_positives,
                   "Drop the user's training positives from the candidate list");
    eval->add_option("--train", eval_opt.train_path, "Training corpus (for exclusion)");

    BenchOptions bench_opt;
    auto* bench = app.add_subcommand("bench", "Compare the two learners on one model");
    std::string bench_cfg;
    bench->add_option("--config", bench_cfg, "key=value config file");
    bench->add_option("--model", bench_opt.model, "Model")
        ->check(CLI::IsMember({"lcr", "ilcr", "pitf"}));
    bench->add_option("--train", bench_opt.train_path, "Training corpus snapshot")->required();
    bench->add_option("--valid", bench_opt.valid_path, "Validation corpus snapshot")->required();
    bench->add_option("--n", bench_opt.n, "Embedding dimension");
    bench->add_option("--bpr-alpha", bench_opt.bpr_alpha, "BPR learning rate");
    bench->add_option("--bpr-lambda", bench_opt.bpr_lambda, "BPR regularization");
    bench->add_option("--warp-alpha", bench_opt.warp_alpha, "WARP learning rate");
    bench->add_option("--warp-C", bench_opt.warp_C, "WARP norm constraint");
    bench->add_option("--max-epochs", bench_opt.max_epochs, "Epochs per run");
    bench->add_option("--patience", bench_opt.patience, "Early-stopping patience");
    bench->add_option("--seed", bench_opt.seed, "Master seed (per-repeat seeds derive from it)");
    bench->add_option("--repeats", bench_opt.repeats, "Independent repetitions");
    bench->add_option("--out", bench_opt.out, "Output CSV prefix");

    try {
        std::vector<std::string> args = inject_config_args(argc, argv);
        std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
        app.parse(args);
        if (ingest->parsed()) return run_ingest(ingest_opt);
        if (split_cmd->parsed()) return run_split(split_opt);
        if (train->parsed()) return run_train(train_opt);
        if (eval->parsed()) return run_eval(eval_opt);
        if (bench->parsed()) return run_bench(bench_opt);
        return kExitUsage;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
