#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cstdio>
#include <string>

#include "cortrieve/cortrieve.hpp"
#include "test_helpers.hpp"

using namespace cortrieve;
using testutil::TempDir;
using testutil::write_file;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;
};

RunResult run_cli(const std::string& args, bool merge_stderr = false,
                  const std::string& env_prefix = "") {
    std::string cmd = env_prefix + std::string(CORTRIEVE_BIN) + " " + args +
                      (merge_stderr ? " 2>&1" : " 2>/dev/null");
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    RunResult result;
    std::array<char, 4096> buf;
    size_t got;
    while ((got = fread(buf.data(), 1, buf.size(), pipe)) > 0) result.output.append(buf.data(), got);
    int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

int count_lines(const std::string& s) {
    int n = 0;
    for (char c : s)
        if (c == '\n') ++n;
    return n;
}

std::string make_split_fixture(const TempDir& tmp, int n_items = 24, int top_k = 4) {
    ParamBank truth = init_param_bank(ModelKind::lcr, {3, 6, n_items, 3}, -0.5, 0.5, 2024);
    Corpus all = testutil::make_planted_corpus(truth, top_k);
    SplitResult parts = cortrieve::split(all, {0.7, 0.15, 0.15, 5});
    save_corpus(parts.train, tmp.file("train.bin"));
    save_corpus(parts.validation, tmp.file("valid.bin"));
    save_corpus(parts.test, tmp.file("test.bin"));
    return tmp.file("");
}

}  // namespace

TEST_CASE("cli ingest writes a snapshot and key=value stats") {
    TempDir tmp;
    write_file(tmp.file("triples.tsv"), "rock\tu1\ta1\nrock\tu1\ta1\npop\tu1\ta2\n");
    auto r = run_cli("ingest --format tsv --in " + tmp.file("triples.tsv") + " --out " +
                     tmp.file("corp.bin"));
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("queries=2\n") != std::string::npos);
    CHECK(r.output.find("samples=2\n") != std::string::npos);
    Corpus c = load_corpus(tmp.file("corp.bin"));
    CHECK(c.size() == 2);
}

TEST_CASE("cli rejects an unknown format with exit code 2") {
    auto r = run_cli("ingest --format parquet --in x --out y");
    CHECK(r.exit_code == 2);
}

TEST_CASE("cli usage errors exit with code 2") {
    auto r = run_cli("split --fractions 0.8,0.1,0.1");  // missing required --in
    CHECK(r.exit_code == 2);
    auto r2 = run_cli("nosuchcommand");
    CHECK(r2.exit_code == 2);
}

TEST_CASE("cli ingest lastfm reports the retained tag count") {
    TempDir tmp;
    write_file(tmp.file("tags.tsv"),
               "u1\ta1\trock\nu1\ta1\tindie\nu2\ta1\trock\nu2\ta2\tjazz\n");
    write_file(tmp.file("listens.tsv"), "u1\ta1\nu2\ta2\n");
    auto r = run_cli("ingest --format lastfm --tags " + tmp.file("tags.tsv") + " --listens " +
                     tmp.file("listens.tsv") + " --top-tags 2 --out " + tmp.file("c.bin"));
    CHECK(r.exit_code == 0);
    // retained tags: rock (2 uses) and indie (tie broken lexicographically)
    CHECK(r.output.find("queries=2\n") != std::string::npos);
}

TEST_CASE("cli ingest fails with exit 3 on unreadable input") {
    auto r = run_cli("ingest --format tsv --in /nonexistent/file.tsv --out /tmp/x.bin");
    CHECK(r.exit_code == 3);
}

TEST_CASE("cli split writes three snapshots with floor sizes") {
    TempDir tmp;
    Corpus c = testutil::make_synthetic_corpus(2, 5, 3, 10);
    save_corpus(c, tmp.file("c.bin"));
    auto r = run_cli("split --in " + tmp.file("c.bin") + " --fractions 0.8,0.1,0.1 --seed 3 " +
                     "--out-prefix " + tmp.file("part"));
    CHECK(r.exit_code == 0);
    CHECK(load_corpus(tmp.file("part.train.bin")).size() == 8);
    CHECK(load_corpus(tmp.file("part.valid.bin")).size() == 1);
    CHECK(load_corpus(tmp.file("part.test.bin")).size() == 1);
}

TEST_CASE("cli train runs and reports one history row per epoch") {
    TempDir tmp;
    make_split_fixture(tmp);
    auto r = run_cli("train --model ilcr --learner bpr --alpha 0.04 --lambda 0.01 --n 4 "
                     "--max-epochs 3 --patience 10 --eval-k 4 --seed 9 --train " +
                     tmp.file("train.bin") + " --valid " + tmp.file("valid.bin") + " --out " +
                     tmp.file("bank.bin") + " --history " + tmp.file("hist.csv"));
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("validation_recall@4=") != std::string::npos);
    std::string hist = testutil::read_file(tmp.file("hist.csv"));
    CHECK(count_lines(hist) == 4);  // header + 3 epochs
    AnyBank bank = load_bank(tmp.file("bank.bin"));
    CHECK(kind_of(bank) == ModelKind::ilcr);
}

TEST_CASE("cli train with zero epochs writes the initializer output") {
    TempDir tmp;
    make_split_fixture(tmp);
    auto r = run_cli("train --model lcr --learner bpr --n 4 --max-epochs 0 --seed 33 --train " +
                     tmp.file("train.bin") + " --valid " + tmp.file("valid.bin") + " --out " +
                     tmp.file("bank.bin"));
    CHECK(r.exit_code == 0);
    AnyBank bank = load_bank(tmp.file("bank.bin"));
    const auto& pb = std::get<ParamBank>(bank);
    ParamBank expected = init_param_bank(ModelKind::lcr, {3, 6, 24, 4}, -0.02, 0.02, 33);
    CHECK(pb.S.data() == expected.S.data());
    CHECK(pb.user_enc.data() == expected.user_enc.data());
}

TEST_CASE("cli train is idempotent: identical bank bytes under one seed") {
    TempDir tmp;
    make_split_fixture(tmp);
    std::string cmd = "train --model lcr --learner warp --alpha 0.05 --C 1.0 --n 3 "
                      "--max-epochs 2 --eval-k 4 --seed 21 --train " +
                      tmp.file("train.bin") + " --valid " + tmp.file("valid.bin") + " --out ";
    auto r1 = run_cli(cmd + tmp.file("bank1.bin"));
    auto r2 = run_cli(cmd + tmp.file("bank2.bin"));
    CHECK(r1.exit_code == 0);
    CHECK(r2.exit_code == 0);
    CHECK(fnv1a_file(tmp.file("bank1.bin")) == fnv1a_file(tmp.file("bank2.bin")));
}

TEST_CASE("cli train re-executes bit-identically from its manifest") {
    TempDir tmp;
    make_split_fixture(tmp);
    auto r = run_cli("train --model ilcr --learner bpr --n 3 --max-epochs 2 --eval-k 4 --seed 4 "
                     "--train " + tmp.file("train.bin") + " --valid " + tmp.file("valid.bin") +
                     " --out " + tmp.file("bank.bin"));
    REQUIRE(r.exit_code == 0);
    std::string first = testutil::read_file(tmp.file("bank.bin"));
    REQUIRE(!first.empty());
    auto r2 = run_cli("train --from-manifest " + tmp.file("bank.bin.manifest"));
    CHECK(r2.exit_code == 0);
    CHECK(testutil::read_file(tmp.file("bank.bin")) == first);
}

TEST_CASE("cli train handles the nmf baseline, ignoring the learner flag") {
    TempDir tmp;
    make_split_fixture(tmp);
    auto r = run_cli("train --model nmf --learner warp --n 3 --nmf-iters 30 --seed 2 --train " +
                         tmp.file("train.bin") + " --valid " + tmp.file("valid.bin") + " --out " +
                         tmp.file("nmf.bin") + " --history " + tmp.file("nmf_hist.csv"),
                     /*merge_stderr=*/true);
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("ignored") != std::string::npos);
    AnyBank bank = load_bank(tmp.file("nmf.bin"));
    CHECK(kind_of(bank) == ModelKind::nmf);
    CHECK(count_lines(testutil::read_file(tmp.file("nmf_hist.csv"))) >= 2);
}

TEST_CASE("cli trains every model/learner pairing except the batch baseline") {
    TempDir tmp;
    make_split_fixture(tmp);
    for (const char* model : {"lcr", "ilcr", "pitf"}) {
        for (const char* learner : {"bpr", "warp"}) {
            auto r = run_cli(std::string("train --model ") + model + " --learner " + learner +
                             " --n 3 --max-epochs 1 --eval-k 4 --seed 2 --train " +
                             tmp.file("train.bin") + " --valid " + tmp.file("valid.bin") +
                             " --out " + tmp.file("pair.bin"));
            INFO(model << "/" << learner);
            CHECK(r.exit_code == 0);
        }
    }
}

TEST_CASE("cli train sweeps training fractions") {
    TempDir tmp;
    make_split_fixture(tmp);
    auto r = run_cli("train --model lcr --learner bpr --n 3 --max-epochs 1 --eval-k 4 --seed 6 "
                     "--train-frac 0.5,1.0 --train " + tmp.file("train.bin") + " --valid " +
                     tmp.file("valid.bin") + " --out " + tmp.file("bank.bin"));
    CHECK(r.exit_code == 0);
    CHECK(testutil::read_file(tmp.file("bank.bin.f0.50")).size() > 0);
    CHECK(testutil::read_file(tmp.file("bank.bin.f1.00")).size() > 0);
}

TEST_CASE("cli eval writes one CSV row per requested k") {
    TempDir tmp;
    make_split_fixture(tmp);
    auto t = run_cli("train --model lcr --learner bpr --n 3 --max-epochs 2 --eval-k 4 --seed 8 "
                     "--train " + tmp.file("train.bin") + " --valid " + tmp.file("valid.bin") +
                     " --out " + tmp.file("bank.bin"));
    REQUIRE(t.exit_code == 0);
    auto r = run_cli("eval --bank " + tmp.file("bank.bin") + " --corpus " + tmp.file("test.bin") +
                     " --out " + tmp.file("recall.csv"));
    CHECK(r.exit_code == 0);
    // default k list 5,10,15,20,25,30: header + 6 rows
    CHECK(count_lines(testutil::read_file(tmp.file("recall.csv"))) == 7);
    auto r30 = run_cli("eval --bank " + tmp.file("bank.bin") + " --corpus " + tmp.file("test.bin") +
                       " --k 30 --out " + tmp.file("r30.csv"));
    CHECK(r30.exit_code == 0);
    CHECK(count_lines(testutil::read_file(tmp.file("r30.csv"))) == 2);
}

TEST_CASE("cli eval rejects dimension mismatches with exit 3") {
    TempDir tmp;
    make_split_fixture(tmp);
    ParamBank other = init_param_bank(ModelKind::lcr, {3, 6, 99, 3}, -0.02, 0.02, 1);
    save_bank(other, tmp.file("other.bin"));
    auto r = run_cli("eval --bank " + tmp.file("other.bin") + " --corpus " + tmp.file("test.bin") +
                         " --out " + tmp.file("r.csv"),
                     /*merge_stderr=*/true);
    CHECK(r.exit_code == 3);
    CHECK(r.output.find("mismatch") != std::string::npos);
    CHECK(r.output.find("99") != std::string::npos);
    CHECK(r.output.find("24") != std::string::npos);
}

TEST_CASE("cli bench runs paired repetitions and aggregates them") {
    TempDir tmp;
    make_split_fixture(tmp, /*n_items=*/16, /*top_k=*/3);
    auto r = run_cli("bench --model lcr --n 3 --max-epochs 2 --repeats 1 --seed 5 --train " +
                     tmp.file("train.bin") + " --valid " + tmp.file("valid.bin") + " --out " +
                     tmp.file("bench"));
    CHECK(r.exit_code == 0);
    std::string detail = testutil::read_file(tmp.file("bench.csv"));
    CHECK(count_lines(detail) == 1 + 2 * 2);  // header + 2 learners x 2 epochs
    auto r2 = run_cli("bench --model lcr --n 3 --max-epochs 2 --repeats 3 --seed 5 --train " +
                      tmp.file("train.bin") + " --valid " + tmp.file("valid.bin") + " --out " +
                      tmp.file("bench3"));
    CHECK(r2.exit_code == 0);
    std::string agg = testutil::read_file(tmp.file("bench3.agg.csv"));
    CHECK(agg.find("mean_accumulated_sampling_seconds") != std::string::npos);
    CHECK(agg.find("stdev_recall_at_30") != std::string::npos);
    CHECK(count_lines(testutil::read_file(tmp.file("bench3.csv"))) == 1 + 3 * 2 * 2);
}

TEST_CASE("cli warp training can stream a per-step trace") {
    TempDir tmp;
    make_split_fixture(tmp);
    auto r = run_cli("train --model lcr --learner warp --n 3 --max-epochs 1 --eval-k 4 --seed 3 "
                     "--train " + tmp.file("train.bin") + " --valid " + tmp.file("valid.bin") +
                     " --out " + tmp.file("bank.bin") + " --trace " + tmp.file("trace.csv"));
    CHECK(r.exit_code == 0);
    std::string trace = testutil::read_file(tmp.file("trace.csv"));
    CHECK(trace.find("step,attempts,violator_found,estimated_rank,loss_weight") !=
          std::string::npos);
    Corpus train = load_corpus(tmp.file("train.bin"));
    CHECK(count_lines(trace) == 1 + static_cast<int>(train.size()));
}

TEST_CASE("cli exits with code 4 when training diverges") {
    TempDir tmp;
    make_split_fixture(tmp);
    auto r = run_cli("train --model lcr --learner bpr --n 3 --alpha 1e12 --init-low -100 "
                         "--init-high 100 --max-epochs 3 --eval-k 4 --seed 1 --train " +
                         tmp.file("train.bin") + " --valid " + tmp.file("valid.bin") + " --out " +
                         tmp.file("bank.bin"),
                     /*merge_stderr=*/true);
    CHECK(r.exit_code == 4);
}

TEST_CASE("cli flag values override config-file values") {
    TempDir tmp;
    make_split_fixture(tmp);
    write_file(tmp.file("run.cfg"), "alpha=0.9\nlambda=0.5\nmax-epochs=1\neval-k=4\n");
    auto r = run_cli("train --model lcr --learner bpr --n 3 --seed 2 --config " +
                     tmp.file("run.cfg") + " --alpha 0.1 --train " + tmp.file("train.bin") +
                     " --valid " + tmp.file("valid.bin") + " --out " + tmp.file("bank.bin"));
    REQUIRE(r.exit_code == 0);
    std::string manifest = testutil::read_file(tmp.file("bank.bin.manifest"));
    // flag beats file; file beats default
    CHECK(manifest.find("alpha=0.1\n") != std::string::npos);
    CHECK(manifest.find("lambda=0.5\n") != std::string::npos);
    CHECK(manifest.find("max_epochs=1\n") != std::string::npos);
}

TEST_CASE("cli honors the output-directory environment variable") {
    TempDir tmp;
    write_file(tmp.file("t.tsv"), "q1\tu1\ta1\nq2\tu2\ta2\n");
    auto r = run_cli("ingest --format tsv --in " + tmp.file("t.tsv") + " --out rel.bin",
                     /*merge_stderr=*/false,
                     "CORTRIEVE_OUT_DIR=" + tmp.file("") + " ");
    CHECK(r.exit_code == 0);
    CHECK(testutil::read_file(tmp.file("rel.bin")).size() > 0);
}
