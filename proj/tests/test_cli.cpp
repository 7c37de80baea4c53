#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "doctest.h"
#include "mnemo/records.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Run {
  int status;
  std::string out;
  std::string err;
};

const std::string kFixtures = MNEMO_FIXTURES;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / ("mnemo-cli-" + std::to_string(::getpid()) + "-" +
                                       std::to_string(counter()++));
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

Run run(const std::string& args) {
  Scratch s;
  const std::string err = s / "stderr";
  const std::string cmd = std::string(MNEMO_CLI) + " " + args + " 2>" + err;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  std::string out;
  char buf[4096];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, pipe)) > 0;) out.append(buf, n);
  const int raw = ::pclose(pipe);
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, out, slurp(err)};
}

std::string fixture(const std::string& name) { return kFixtures + "/" + name; }

std::vector<json> lines(const std::string& text) {
  std::vector<json> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);)
    if (!l.empty()) out.push_back(json::parse(l));
  return out;
}

}  // namespace

TEST_CASE("usage errors and missing inputs exit with 2") {
  CHECK(run("").status == 2);
  CHECK(run("frobnicate").status == 2);
  CHECK(run("validate").status == 2);
  CHECK(run("validate /no/such/file.jsonl").status == 2);
  CHECK(run("export-dpo " + fixture("preferences.jsonl") + " --policy SOMETIMES").status == 2);
  CHECK(run("export-finetune " + fixture("tallies.jsonl") + " --style poetic").status == 2);
  CHECK(run("serve --data-dir /tmp").status == 2);
  CHECK(run("--help").status == 0);
}

TEST_CASE("validate reports violations and sets the exit status") {
  const auto clean = run("validate " + fixture("preferences.jsonl"));
  CHECK(clean.status == 0);
  CHECK(clean.out == "0 violations\n");

  const auto dirty = run("validate " + fixture("invalid.jsonl"));
  CHECK(dirty.status == 1);
  CHECK(dirty.out == "p1: feedback.likert_in_1_5\n1 violations\n");
}

TEST_CASE("runtime failures exit with 1 and a one-line diagnostic") {
  Scratch s;
  { std::ofstream(s / "broken.jsonl") << "{\"term\": \"x\"\n"; }
  const auto r = run("validate " + s / "broken.jsonl");
  CHECK(r.status == 1);
  CHECK(r.err.rfind("mnemo: error: ", 0) == 0);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);

  const auto bayes = run("export-dpo " + fixture("preferences.jsonl") + " --policy BAYES_ONLY");
  CHECK(bayes.status == 1);
  CHECK(bayes.err.find("Bayesian labels") != std::string::npos);

  CHECK(run("--chains 0 validate " + fixture("preferences.jsonl")).status == 1);
}

TEST_CASE("fit-quality writes one estimate per mnemonic and flags the top k") {
  Scratch s;
  const auto r = run("fit-quality " + fixture("tallies.jsonl") + " --top-k 3 -o " + s / "est.jsonl");
  REQUIRE(r.status == 0);
  const auto est = lines(slurp(s / "est.jsonl"));
  CHECK(est.size() == 18);
  int selected = 0;
  double min_selected = 1.0, max_rest = 0.0;
  for (const auto& e : est) {
    const double q = e.at("q_mean");
    CHECK(q > 0.0);
    CHECK(q < 1.0);
    if (e.at("selected")) {
      ++selected;
      min_selected = std::min(min_selected, q);
    } else {
      max_rest = std::max(max_rest, q);
    }
  }
  CHECK(selected == 3);
  CHECK(min_selected >= max_rest);

  const auto ft = run("export-finetune " + fixture("tallies.jsonl") + " --estimates " + s / "est.jsonl");
  REQUIRE(ft.status == 0);
  const auto examples = lines(ft.out);
  CHECK(examples.size() == 3);
  for (const auto& e : examples) {
    CHECK(e.at("prompt").get<std::string>().rfind("Term: ", 0) == 0);
    CHECK(e.contains("chosen"));
  }

  const auto gen = run("export-finetune " + fixture("tallies.jsonl") + " --style generation");
  REQUIRE(gen.status == 0);
  const auto all = lines(gen.out);
  CHECK(all.size() == 18);
  CHECK(all[0].at("prompt") == "### Term: abate\n### Mnemonic: abate sounds like");
  CHECK(all[0].at("chosen") == " a bait that fish ignore, so the bite lessens.");
}

TEST_CASE("select-pairs produces a deck with empty feedback") {
  Scratch s;
  REQUIRE(run("select-pairs " + fixture("candidates.jsonl") + " -o " + s / "deck.jsonl").status == 0);
  const auto deck = mnemo::read_preferences(s / "deck.jsonl");
  REQUIRE(deck.size() == 3);
  for (const auto& r : deck) {
    CHECK(r.feedback.empty());
    CHECK(r.pair.a.id != r.pair.b.id);
    CHECK(r.pair.term_id == r.term.id);
    CHECK_FALSE(r.term.definition.empty());
  }
  CHECK(run("validate " + s / "deck.jsonl").status == 0);
}

TEST_CASE("derive-labels filters the careless annotator unless told not to") {
  const auto filtered = run("derive-labels " + fixture("preferences.jsonl"));
  REQUIRE(filtered.status == 0);
  CHECK(filtered.err.find("excluded 1 annotator") != std::string::npos);
  const auto labels = lines(filtered.out);
  CHECK(labels.size() == 8);
  CHECK(labels[1].at("y_pair") == "tie");
  for (const auto& l : labels) CHECK(l.at("y_bayes").is_null());

  const auto raw = run("derive-labels --no-filter " + fixture("preferences.jsonl"));
  REQUIRE(raw.status == 0);
  CHECK(raw.err.empty());
  CHECK(lines(raw.out).size() == 8);

  const auto with_bayes = run("derive-labels " + fixture("preferences.jsonl") + " --posteriors " +
                              fixture("posteriors.jsonl"));
  for (const auto& l : lines(with_bayes.out)) CHECK(l.at("y_bayes") == "A");
}

TEST_CASE("fit-effectiveness is reproducible for a fixed seed") {
  Scratch s;
  const std::string args = "--seed 5 --warmup 300 --samples 300 fit-effectiveness " +
                           fixture("preferences.jsonl") + " --labels-out " + s / "labels.jsonl";
  const auto first = run(args + " -o " + s / "a.jsonl");
  const auto second = run(args + " -o " + s / "b.jsonl");
  REQUIRE(first.status == 0);
  REQUIRE(second.status == 0);
  CHECK(slurp(s / "a.jsonl") == slurp(s / "b.jsonl"));
  CHECK(first.err.find("pairs 8") != std::string::npos);

  const auto post = lines(slurp(s / "a.jsonl"));
  CHECK(post.size() == 8);
  for (const auto& p : post) {
    CHECK(p.at("r_hat").size() == 2);
    CHECK(p.at("prob_a_gt_b").get<double>() >= 0.0);
    CHECK(p.at("prob_a_gt_b").get<double>() <= 1.0);
  }
  for (const auto& l : lines(slurp(s / "labels.jsonl"))) CHECK_FALSE(l.at("y_bayes").is_null());
}

TEST_CASE("analyze prints a report and optionally writes JSON") {
  Scratch s;
  const auto r = run("analyze " + fixture("preferences.jsonl") + " --replicates 500 --json " + s / "a.json");
  REQUIRE(r.status == 0);
  CHECK(r.out.find("pairs: 8") != std::string::npos);
  const auto j = json::parse(slurp(s / "a.json"));
  CHECK(j.at("pairs") == 8);
  CHECK(j.at("raw_agreement").at("pair_vs_rate").at("sample_size") == 7);
  CHECK(j.at("rating_turn_correlation").at("n") == 40);
  for (const char* ch : {"pairwise", "rating", "learning"}) {
    const auto& c = j.at("noise").at(ch);
    CHECK(c.at("observed").get<double>() >= 0.0);
    CHECK(c.at("random_baseline").get<double>() > 0.0);
  }
}

TEST_CASE("export-dpo matches the reviewed golden file") {
  const auto r = run("export-dpo " + fixture("preferences.jsonl") + " --posteriors " +
                     fixture("posteriors.jsonl") + " --policy BAYES_AUGMENTED");
  REQUIRE(r.status == 0);
  CHECK(r.out == slurp(std::string(MNEMO_GOLDEN) + "/dpo_bayes_augmented.jsonl"));

  const auto pair_only = run("export-dpo " + fixture("preferences.jsonl") + " --policy PAIR_ONLY");
  REQUIRE(pair_only.status == 0);
  CHECK(lines(pair_only.out).size() == 7);
}

TEST_CASE("dpo-loss averages the per-row loss") {
  const auto r = run("--dpo-beta 0.1 dpo-loss " + fixture("logprobs.jsonl"));
  REQUIRE(r.status == 0);
  const double expected = 0.5 * (std::log(2.0) + std::log1p(std::exp(-0.2)));
  CHECK(std::stod(r.out) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("csv and jsonl inputs are interchangeable") {
  Scratch s;
  const auto rows = mnemo::read_preferences(fixture("preferences.jsonl"));
  mnemo::write_preferences(s / "prefs.csv", rows);
  const auto a = run("derive-labels " + fixture("preferences.jsonl"));
  const auto b = run("derive-labels " + s / "prefs.csv");
  REQUIRE(b.status == 0);
  CHECK(a.out == b.out);
}
