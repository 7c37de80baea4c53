// Command-line entry point for every pipeline stage.
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>

#include "mnemo/alignment.hpp"
#include "mnemo/analysis.hpp"
#include "mnemo/api.hpp"
#include "mnemo/dataset.hpp"
#include "mnemo/effectiveness.hpp"
#include "mnemo/error.hpp"
#include "mnemo/pairs.hpp"
#include "mnemo/quality.hpp"
#include "mnemo/records.hpp"
#include "mnemo/study.hpp"

using namespace mnemo;
using json = nlohmann::json;

namespace {

struct Options {
  ModelHyperparams hyper;
  std::uint64_t seed = 0;
  std::string input, output, labels, posteriors, estimates, json_report, deck, data_dir;
  std::string policy = "BAYES_AUGMENTED", style = "training", host = "127.0.0.1";
  int port = 8080;
  std::size_t top_k = 0;
  int replicates = 10000;
  double thinning = 0.0;
  bool no_filter = false;
};

std::string fmt(const std::optional<double>& v, int digits = 3) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, *v);
  return buf;
}

void emit(const Options& o, const std::string& content) {
  if (o.output.empty() || o.output == "-")
    std::cout << content;
  else
    write_text_atomic(o.output, content);
}

PromptStyle style_of(const Options& o) {
  if (o.style == "generation") return PromptStyle::Generation;
  return PromptStyle::Training;
}

/// Non-quality-check bundles with flagged annotators removed (unless disabled).
std::vector<FeedbackBundle> clean_feedback(const Options& o, const std::vector<PreferenceRecord>& rows) {
  const auto split = split_quality_checks(rows);
  if (o.no_filter) return split.bundles;
  const auto filtered = filter_annotators(split.bundles, split.quality_checks);
  if (!filtered.excluded_users.empty())
    std::cerr << "excluded " << filtered.excluded_users.size()
              << " annotator(s) who picked a planted low-quality mnemonic\n";
  return filtered.kept;
}

int cmd_validate(const Options& o) {
  const auto violations = validate_dataset(to_dataset(read_preferences(o.input)));
  for (const auto& v : violations) std::cout << v.record_id << ": " << v.invariant << "\n";
  std::cout << violations.size() << " violations\n";
  return violations.empty() ? 0 : 1;
}

int cmd_fit_quality(const Options& o) {
  const auto rows = parse_tallies(read_text(o.input));
  std::vector<TallyRecord> items;
  for (const auto& r : rows) items.push_back({r.mnemonic.id, r.tally});
  const auto estimates = fit_quality(items, o.hyper, o.seed);
  std::vector<std::string> selected;
  if (o.top_k > 0) selected = select_top_k(estimates, o.top_k);
  emit(o, format_quality_estimates(estimates, selected));
  return 0;
}

int cmd_select_pairs(const Options& o) {
  std::vector<PreferenceRecord> out;
  for (const auto& row : parse_candidates(read_text(o.input))) {
    PreferenceRecord r;
    r.term = row.term;
    r.pair = select_pair(row.set);
    r.feedback.pair_id = r.pair.id;
    out.push_back(std::move(r));
  }
  emit(o, format_preferences_jsonl(out));
  return 0;
}

std::vector<DerivedLabels> labels_for(const Options& o, const std::vector<FeedbackBundle>& bundles,
                                      const std::map<std::string, Choice>& bayes) {
  std::vector<DerivedLabels> out;
  for (const auto& b : bundles) {
    auto l = derive_labels(b, o.hyper.min_labels_per_pair);
    if (auto it = bayes.find(b.pair_id); it != bayes.end()) l.y_bayes = it->second;
    out.push_back(std::move(l));
  }
  return out;
}

int cmd_derive_labels(const Options& o) {
  const auto bundles = clean_feedback(o, read_preferences(o.input));
  std::map<std::string, Choice> bayes;
  if (!o.posteriors.empty()) bayes = parse_bayes_labels(read_text(o.posteriors));
  emit(o, format_labels(labels_for(o, bundles, bayes)));
  return 0;
}

int cmd_fit_effectiveness(const Options& o) {
  std::vector<FeedbackBundle> bundles;
  for (auto& b : clean_feedback(o, read_preferences(o.input)))
    if (!b.empty()) bundles.push_back(std::move(b));
  EffectivenessFitOptions fit_options;
  if (o.thinning > 0) fit_options.thinning_fraction = o.thinning;
  const auto fit = fit_effectiveness(bundles, o.hyper, o.seed, fit_options);
  emit(o, format_posteriors(fit.posteriors));

  const auto& r = fit.report;
  std::cerr << "pairs " << fit.posteriors.size() << ", max r_hat "
            << fmt(*std::max_element(r.r_hat.begin(), r.r_hat.end()), 4) << ", min ess "
            << fmt(*std::min_element(r.ess.begin(), r.ess.end()), 0) << ", krippendorff alpha "
            << fmt(r.krippendorff_alpha) << ", divergences " << r.divergences
            << (r.converged ? ", converged\n" : ", NOT converged\n");
  if (!o.labels.empty()) {
    std::map<std::string, Choice> bayes;
    for (const auto& p : fit.posteriors) bayes[p.pair_id] = bayes_label(p);
    write_text_atomic(o.labels, format_labels(labels_for(o, bundles, bayes)));
  }
  return 0;
}

int cmd_analyze(const Options& o) {
  const auto bundles = clean_feedback(o, read_preferences(o.input));
  const auto r = analyze(bundles, o.hyper.min_labels_per_pair, o.seed, o.replicates);
  auto agreement = [](const char* name, const std::optional<Agreement>& a) {
    std::cout << "  " << name << ": " << (a ? fmt(a->agreement) : "n/a") << " (n="
              << (a ? a->sample_size : 0) << ")\n";
  };
  std::cout << "pairs: " << r.pairs << "\nraw agreement (ties excluded)\n";
  agreement("pairwise vs rating ", r.pair_vs_rate);
  agreement("rating vs learning ", r.rate_vs_learn);
  agreement("pairwise vs learning", r.pair_vs_learn);
  std::cout << "rating vs turns pearson r: " << fmt(r.rating_turn_correlation) << " (n="
            << r.rating_turn_points << ")\nannotation noise (observed / random)\n";
  auto noise = [](const char* name, const ChannelNoise& c) {
    std::cout << "  " << name << ": " << fmt(c.observed) << " / " << fmt(c.random_baseline)
              << " (items=" << c.items << ")\n";
  };
  noise("pairwise entropy", r.noise.pairwise);
  noise("rating variance ", r.noise.rating);
  noise("turns variance  ", r.noise.learning);

  if (!o.json_report.empty()) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    auto agr = [](const std::optional<Agreement>& a) {
      return a ? json{{"agreement", a->agreement}, {"sample_size", a->sample_size}} : json(nullptr);
    };
    auto ch = [&](const ChannelNoise& c) {
      return json{{"observed", opt(c.observed)}, {"random_baseline", opt(c.random_baseline)}, {"items", c.items}};
    };
    const json j{{"pairs", r.pairs},
                 {"raw_agreement",
                  {{"pair_vs_rate", agr(r.pair_vs_rate)},
                   {"rate_vs_learn", agr(r.rate_vs_learn)},
                   {"pair_vs_learn", agr(r.pair_vs_learn)}}},
                 {"rating_turn_correlation", {{"r", opt(r.rating_turn_correlation)}, {"n", r.rating_turn_points}}},
                 {"noise", {{"pairwise", ch(r.noise.pairwise)}, {"rating", ch(r.noise.rating)}, {"learning", ch(r.noise.learning)}}}};
    write_text_atomic(o.json_report, j.dump(2) + "\n");
  }
  return 0;
}

int cmd_export_finetune(const Options& o) {
  const auto rows = parse_tallies(read_text(o.input));
  std::optional<std::vector<std::string>> keep;
  if (!o.estimates.empty()) keep = parse_selected_ids(read_text(o.estimates));
  std::vector<TermMnemonic> items;
  for (const auto& r : rows) {
    if (keep && std::find(keep->begin(), keep->end(), r.mnemonic.id) == keep->end()) continue;
    items.push_back({Term{r.mnemonic.term_id, r.term, "", std::nullopt}, r.mnemonic});
  }
  emit(o, format_examples(export_finetune(items, style_of(o))));
  return 0;
}

int cmd_export_dpo(const Options& o) {
  const auto rows = read_preferences(o.input);
  const auto policy = parse_dpo_policy(o.policy);
  if (!policy) throw ArgumentError("unknown policy " + o.policy);
  std::vector<Term> terms;
  std::vector<MnemonicPair> pairs;
  for (const auto& r : rows) {
    terms.push_back(r.term);
    pairs.push_back(r.pair);
  }
  std::vector<DerivedLabels> labels;
  if (!o.labels.empty()) {
    labels = parse_labels(read_text(o.labels));
  } else {
    std::map<std::string, Choice> bayes;
    if (!o.posteriors.empty()) bayes = parse_bayes_labels(read_text(o.posteriors));
    labels = labels_for(o, clean_feedback(o, rows), bayes);
  }
  emit(o, format_examples(build_dpo_dataset(terms, pairs, labels, *policy, style_of(o))));
  return 0;
}

int cmd_dpo_loss(const Options& o) {
  std::vector<DpoLogprobs> batch;
  std::size_t line = 0;
  std::istringstream in(read_text(o.input));
  for (std::string s; std::getline(in, s);) {
    ++line;
    if (s.empty()) continue;
    try {
      const json j = json::parse(s);
      batch.push_back({j.at("policy_w").get<double>(), j.at("ref_w").get<double>(),
                       j.at("policy_l").get<double>(), j.at("ref_l").get<double>()});
    } catch (const json::exception& e) {
      throw DataError("log-prob line " + std::to_string(line) + ": " + e.what());
    }
  }
  std::printf("%.12g\n", dpo_loss_mean(o.hyper.dpo_beta, batch));
  return 0;
}

int cmd_serve(const Options& o) {
  ApiConfig config;
  config.deck = read_preferences(o.deck);
  config.data_dir = o.data_dir;
  config.hyper = o.hyper;
  config.seed = o.seed;
  ApiService service(std::move(config));
  std::cerr << "listening on http://" << o.host << ":" << o.port << "\n";
  if (!service.listen(o.host, o.port)) throw Error("cannot listen on " + o.host + ":" + std::to_string(o.port));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mnemonic preference pipeline"};
  app.require_subcommand(1);
  Options o;

  app.add_option("--seed", o.seed, "Random seed");
  app.add_option("--quality-alpha", o.hyper.quality_prior_alpha, "Quality prior alpha")->capture_default_str();
  app.add_option("--quality-beta", o.hyper.quality_prior_beta, "Quality prior beta")->capture_default_str();
  app.add_option("--dpo-beta", o.hyper.dpo_beta, "DPO beta")->capture_default_str();
  app.add_option("--tfidf-cutoff", o.hyper.tfidf_cutoff, "Answer similarity cutoff")->capture_default_str();
  app.add_option("--min-labels", o.hyper.min_labels_per_pair, "Labels needed per channel")->capture_default_str();
  app.add_option("--chains", o.hyper.chains, "Sampler chains")->capture_default_str();
  app.add_option("--warmup", o.hyper.warmup_iters, "Warmup iterations per chain")->capture_default_str();
  app.add_option("--samples", o.hyper.sample_iters, "Kept iterations per chain")->capture_default_str();
  app.add_option("--target-accept", o.hyper.nuts_target_accept, "NUTS target acceptance")->capture_default_str();
  app.add_option("--max-depth", o.hyper.nuts_max_depth, "NUTS maximum tree depth")->capture_default_str();

  auto input = [&](CLI::App* sub, const char* what) {
    sub->add_option("input", o.input, what)->required()->check(CLI::ExistingFile);
  };
  auto output = [&](CLI::App* sub) { sub->add_option("-o,--output", o.output, "Output file (default stdout)"); };
  auto no_filter = [&](CLI::App* sub) {
    sub->add_flag("--no-filter", o.no_filter, "Keep annotators who failed quality checks");
  };

  auto* validate = app.add_subcommand("validate", "Check a preference file against the record invariants");
  input(validate, "Preference file (.jsonl or .csv)");

  auto* fit_q = app.add_subcommand("fit-quality", "Posterior quality of voted mnemonics");
  input(fit_q, "Tally file (.jsonl)");
  output(fit_q);
  fit_q->add_option("--top-k", o.top_k, "Flag the k best mnemonics as selected");

  auto* select = app.add_subcommand("select-pairs", "Pick the most diverse likely pair per term");
  input(select, "Candidate file (.jsonl)");
  output(select);

  auto* derive = app.add_subcommand("derive-labels", "Per-channel preference labels");
  input(derive, "Preference file");
  output(derive);
  no_filter(derive);
  derive->add_option("--posteriors", o.posteriors, "Posterior file supplying y_bayes")->check(CLI::ExistingFile);

  auto* fit_e = app.add_subcommand("fit-effectiveness", "Fit the joint effectiveness model");
  input(fit_e, "Preference file");
  output(fit_e);
  no_filter(fit_e);
  fit_e->add_option("--labels-out", o.labels, "Also write labels including y_bayes");
  fit_e->add_option("--thinning", o.thinning, "Fraction of draws kept per chain")->check(CLI::Range(0.0, 1.0));

  auto* an = app.add_subcommand("analyze", "Agreement, correlation and noise report");
  input(an, "Preference file");
  no_filter(an);
  an->add_option("--json", o.json_report, "Also write a JSON report");
  an->add_option("--replicates", o.replicates, "Monte-Carlo replicates")->capture_default_str();

  auto* ft = app.add_subcommand("export-finetune", "Fine-tuning examples from voted mnemonics");
  input(ft, "Tally file (.jsonl)");
  output(ft);
  ft->add_option("--estimates", o.estimates, "Keep only mnemonics selected in this estimate file")
      ->check(CLI::ExistingFile);
  ft->add_option("--style", o.style, "training or generation")->check(CLI::IsMember({"training", "generation"}));

  auto* dpo = app.add_subcommand("export-dpo", "Chosen/rejected pairs for preference optimization");
  input(dpo, "Preference file");
  output(dpo);
  no_filter(dpo);
  dpo->add_option("--policy", o.policy, "PAIR_ONLY, BAYES_ONLY or BAYES_AUGMENTED")
      ->check(CLI::IsMember({"PAIR_ONLY", "BAYES_ONLY", "BAYES_AUGMENTED"}))
      ->capture_default_str();
  dpo->add_option("--labels", o.labels, "Label file (otherwise derived from the feedback)")
      ->check(CLI::ExistingFile);
  dpo->add_option("--posteriors", o.posteriors, "Posterior file supplying y_bayes")->check(CLI::ExistingFile);
  dpo->add_option("--style", o.style, "training or generation")->check(CLI::IsMember({"training", "generation"}));

  auto* loss = app.add_subcommand("dpo-loss", "Mean DPO loss over log-probability rows");
  input(loss, "Rows of {policy_w, ref_w, policy_l, ref_l}");

  auto* serve = app.add_subcommand("serve", "Run the study HTTP service");
  serve->add_option("--deck", o.deck, "Preference file whose rows become flashcards")
      ->required()
      ->check(CLI::ExistingFile);
  serve->add_option("--data-dir", o.data_dir, "Directory for the event log")->required();
  serve->add_option("--host", o.host)->capture_default_str();
  serve->add_option("--port", o.port)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "mnemo: usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    o.hyper.validate();
    if (*validate) return cmd_validate(o);
    if (*fit_q) return cmd_fit_quality(o);
    if (*select) return cmd_select_pairs(o);
    if (*derive) return cmd_derive_labels(o);
    if (*fit_e) return cmd_fit_effectiveness(o);
    if (*an) return cmd_analyze(o);
    if (*ft) return cmd_export_finetune(o);
    if (*dpo) return cmd_export_dpo(o);
    if (*loss) return cmd_dpo_loss(o);
    if (*serve) return cmd_serve(o);
  } catch (const NotFoundError& e) {
    std::cerr << "mnemo: error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "mnemo: error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
