#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mnemo/alignment.hpp"
#include "mnemo/analysis.hpp"
#include "mnemo/dataset.hpp"
#include "mnemo/effectiveness.hpp"
#include "mnemo/error.hpp"
#include "mnemo/pairs.hpp"
#include "mnemo/quality.hpp"
#include "mnemo/records.hpp"
#include "mnemo/study.hpp"
#include "mnemo/text.hpp"

namespace py = pybind11;
using namespace mnemo;
using namespace py::literals;

PYBIND11_MODULE(_core, m) {
  m.doc() = "Mnemonic preference pipeline";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ArgumentError>(m, "ArgumentError", error.ptr());
  py::register_exception<DomainError>(m, "DomainError", error.ptr());
  py::register_exception<StateError>(m, "StateError", error.ptr());
  py::register_exception<DataError>(m, "DataError", error.ptr());
  py::register_exception<InitializationError>(m, "InitializationError", error.ptr());
  py::register_exception<SamplingError>(m, "SamplingError", error.ptr());
  py::register_exception<DiagnosticError>(m, "DiagnosticError", error.ptr());
  py::register_exception<NotFoundError>(m, "NotFoundError", error.ptr());

  py::enum_<Choice>(m, "Choice").value("A", Choice::A).value("B", Choice::B).value("TIE", Choice::Tie);
  py::enum_<Side>(m, "Side").value("A", Side::A).value("B", Side::B);
  py::enum_<DpoPolicy>(m, "DpoPolicy")
      .value("PAIR_ONLY", DpoPolicy::PairOnly)
      .value("BAYES_ONLY", DpoPolicy::BayesOnly)
      .value("BAYES_AUGMENTED", DpoPolicy::BayesAugmented);
  py::enum_<PromptStyle>(m, "PromptStyle")
      .value("TRAINING", PromptStyle::Training)
      .value("GENERATION", PromptStyle::Generation);

  py::class_<ModelHyperparams>(m, "ModelHyperparams")
      .def(py::init<>())
      .def_readwrite("quality_prior_alpha", &ModelHyperparams::quality_prior_alpha)
      .def_readwrite("quality_prior_beta", &ModelHyperparams::quality_prior_beta)
      .def_readwrite("dpo_beta", &ModelHyperparams::dpo_beta)
      .def_readwrite("tfidf_cutoff", &ModelHyperparams::tfidf_cutoff)
      .def_readwrite("min_labels_per_pair", &ModelHyperparams::min_labels_per_pair)
      .def_readwrite("chains", &ModelHyperparams::chains)
      .def_readwrite("warmup_iters", &ModelHyperparams::warmup_iters)
      .def_readwrite("sample_iters", &ModelHyperparams::sample_iters)
      .def_readwrite("nuts_target_accept", &ModelHyperparams::nuts_target_accept)
      .def_readwrite("nuts_max_depth", &ModelHyperparams::nuts_max_depth)
      .def("validate", &ModelHyperparams::validate);

  py::class_<Term>(m, "Term")
      .def(py::init([](std::string id, std::string surface, std::string definition,
                       std::optional<std::string> example) {
             return Term{std::move(id), std::move(surface), std::move(definition), std::move(example)};
           }),
           "id"_a, "surface"_a, "definition"_a = "", "example_sentence"_a = py::none())
      .def_readwrite("id", &Term::id)
      .def_readwrite("surface", &Term::surface)
      .def_readwrite("definition", &Term::definition)
      .def_readwrite("example_sentence", &Term::example_sentence);

  py::class_<Mnemonic>(m, "Mnemonic")
      .def(py::init([](std::string id, std::string term_id, std::string text, std::optional<double> lp) {
             return Mnemonic{std::move(id), std::move(term_id), std::move(text), lp};
           }),
           "id"_a, "term_id"_a, "text"_a, "sequence_logprob"_a = py::none())
      .def_readwrite("id", &Mnemonic::id)
      .def_readwrite("term_id", &Mnemonic::term_id)
      .def_readwrite("text", &Mnemonic::text)
      .def_readwrite("sequence_logprob", &Mnemonic::sequence_logprob);

  py::class_<MnemonicPair>(m, "MnemonicPair")
      .def(py::init([](std::string id, std::string term_id, Mnemonic a, Mnemonic b) {
             return MnemonicPair{std::move(id), std::move(term_id), std::move(a), std::move(b)};
           }),
           "id"_a, "term_id"_a, "a"_a, "b"_a)
      .def_readwrite("id", &MnemonicPair::id)
      .def_readwrite("term_id", &MnemonicPair::term_id)
      .def_readwrite("a", &MnemonicPair::a)
      .def_readwrite("b", &MnemonicPair::b);

  py::class_<Vote>(m, "Vote")
      .def(py::init([](std::string u, Choice c) { return Vote{std::move(u), c}; }), "user_id"_a, "choice"_a)
      .def_readwrite("user_id", &Vote::user_id)
      .def_readwrite("choice", &Vote::choice);
  py::class_<Rating>(m, "Rating")
      .def(py::init([](std::string u, int v) { return Rating{std::move(u), v}; }), "user_id"_a, "value"_a)
      .def_readwrite("user_id", &Rating::user_id)
      .def_readwrite("value", &Rating::value);
  py::class_<TurnCount>(m, "TurnCount")
      .def(py::init([](std::string u, int t) { return TurnCount{std::move(u), t}; }), "user_id"_a, "turns"_a)
      .def_readwrite("user_id", &TurnCount::user_id)
      .def_readwrite("turns", &TurnCount::turns);

  py::class_<FeedbackBundle>(m, "FeedbackBundle")
      .def(py::init([](std::string id, std::vector<Vote> votes, std::vector<Rating> la,
                       std::vector<Rating> lb, std::vector<TurnCount> ta, std::vector<TurnCount> tb) {
             return FeedbackBundle{std::move(id), std::move(votes), std::move(la), std::move(lb),
                                   std::move(ta), std::move(tb)};
           }),
           "pair_id"_a, "pairwise_votes"_a = std::vector<Vote>{}, "likert_a"_a = std::vector<Rating>{},
           "likert_b"_a = std::vector<Rating>{}, "turns_a"_a = std::vector<TurnCount>{},
           "turns_b"_a = std::vector<TurnCount>{})
      .def_readwrite("pair_id", &FeedbackBundle::pair_id)
      .def_readwrite("pairwise_votes", &FeedbackBundle::pairwise_votes)
      .def_readwrite("likert_a", &FeedbackBundle::likert_a)
      .def_readwrite("likert_b", &FeedbackBundle::likert_b)
      .def_readwrite("turns_a", &FeedbackBundle::turns_a)
      .def_readwrite("turns_b", &FeedbackBundle::turns_b)
      .def("empty", &FeedbackBundle::empty);

  py::class_<DerivedLabels>(m, "DerivedLabels")
      .def(py::init<>())
      .def_readwrite("pair_id", &DerivedLabels::pair_id)
      .def_readwrite("y_pair", &DerivedLabels::y_pair)
      .def_readwrite("y_rate", &DerivedLabels::y_rate)
      .def_readwrite("y_learn", &DerivedLabels::y_learn)
      .def_readwrite("y_bayes", &DerivedLabels::y_bayes);

  py::class_<ConvergenceReport>(m, "ConvergenceReport")
      .def_readonly("parameter_names", &ConvergenceReport::parameter_names)
      .def_readonly("r_hat", &ConvergenceReport::r_hat)
      .def_readonly("ess", &ConvergenceReport::ess)
      .def_readonly("krippendorff_alpha", &ConvergenceReport::krippendorff_alpha)
      .def_readonly("divergences", &ConvergenceReport::divergences)
      .def_readonly("converged", &ConvergenceReport::converged);

  py::class_<EffectivenessPosterior>(m, "EffectivenessPosterior")
      .def_readonly("pair_id", &EffectivenessPosterior::pair_id)
      .def_readonly("theta_a_mean", &EffectivenessPosterior::theta_a_mean)
      .def_readonly("theta_b_mean", &EffectivenessPosterior::theta_b_mean)
      .def_readonly("theta_a_samples", &EffectivenessPosterior::theta_a_samples)
      .def_readonly("theta_b_samples", &EffectivenessPosterior::theta_b_samples)
      .def_readonly("prob_a_gt_b", &EffectivenessPosterior::prob_a_gt_b)
      .def_readonly("diagnostics", &EffectivenessPosterior::diagnostics);

  py::class_<EffectivenessFit>(m, "EffectivenessFit")
      .def_readonly("posteriors", &EffectivenessFit::posteriors)
      .def_readonly("report", &EffectivenessFit::report);

  py::class_<QualityEstimate>(m, "QualityEstimate")
      .def_readonly("mnemonic_id", &QualityEstimate::mnemonic_id)
      .def_readonly("q_mean", &QualityEstimate::q_mean)
      .def_readonly("q_samples", &QualityEstimate::q_samples)
      .def_readonly("ess", &QualityEstimate::ess)
      .def_readonly("mcse", &QualityEstimate::mcse);

  py::class_<AlignmentExample>(m, "AlignmentExample")
      .def_readonly("prompt", &AlignmentExample::prompt)
      .def_readonly("chosen", &AlignmentExample::chosen)
      .def_readonly("rejected", &AlignmentExample::rejected);

  py::class_<Agreement>(m, "Agreement")
      .def_readonly("agreement", &Agreement::agreement)
      .def_readonly("sample_size", &Agreement::sample_size);

  py::class_<PreferenceRecord>(m, "PreferenceRecord")
      .def_readwrite("term", &PreferenceRecord::term)
      .def_readwrite("pair", &PreferenceRecord::pair)
      .def_readwrite("feedback", &PreferenceRecord::feedback)
      .def_readwrite("quality_check_bad_side", &PreferenceRecord::quality_check_bad_side);

  m.def("swap_sides", &swap_sides, "bundle"_a);
  m.def("choice_name", [](Choice c) { return std::string(to_string(c)); }, "choice"_a);

  m.def(
      "quality_posterior_mean",
      [](std::int64_t up, std::int64_t down, const ModelHyperparams& h) {
        return quality_posterior_analytic({up, down}, h).mean;
      },
      "upvotes"_a, "downvotes"_a, "hyper"_a = ModelHyperparams{});
  m.def(
      "fit_quality",
      [](const std::vector<std::tuple<std::string, std::int64_t, std::int64_t>>& items,
         const ModelHyperparams& h, std::uint64_t seed) {
        std::vector<TallyRecord> records;
        for (const auto& [id, up, down] : items) records.push_back({id, {up, down}});
        py::gil_scoped_release release;
        return fit_quality(records, h, seed);
      },
      "items"_a, "hyper"_a = ModelHyperparams{}, "seed"_a = 0,
      "Posterior quality per (mnemonic_id, upvotes, downvotes) tuple.");
  m.def("select_top_k", &select_top_k, "estimates"_a, "k"_a);

  m.def("tokenize", &tokenize, "text"_a);
  m.def("rouge1", &rouge1, "text_a"_a, "text_b"_a);
  m.def("tfidf_similarity", &tfidf_similarity, "answer"_a, "truth"_a, "corpus"_a);
  m.def(
      "select_pair",
      [](const std::string& term_id, std::vector<Mnemonic> candidates) {
        return select_pair(CandidateSet{term_id, std::move(candidates)});
      },
      "term_id"_a, "candidates"_a);

  m.def("derive_labels", &derive_labels, "bundle"_a, "min_labels"_a = 3);
  m.def(
      "fit_effectiveness",
      [](const std::vector<FeedbackBundle>& data, const ModelHyperparams& h, std::uint64_t seed,
         std::optional<double> thinning) {
        EffectivenessFitOptions options;
        options.thinning_fraction = thinning;
        py::gil_scoped_release release;
        return fit_effectiveness(data, h, seed, options);
      },
      "bundles"_a, "hyper"_a = ModelHyperparams{}, "seed"_a = 0, "thinning"_a = py::none());
  m.def("bayes_label", &bayes_label, "posterior"_a);

  m.def(
      "raw_agreement",
      [](const std::vector<std::optional<Choice>>& x, const std::vector<std::optional<Choice>>& y) {
        return raw_agreement(x, y);
      },
      "x"_a, "y"_a);
  m.def(
      "pearson_r",
      [](const std::vector<double>& x, const std::vector<double>& y) { return pearson_r(x, y); }, "x"_a,
      "y"_a);
  m.def("sign_test", &sign_test, "wins_a"_a, "wins_b"_a);
  m.def("debias_judge", &debias_judge, "ab"_a, "ba"_a);

  m.def("dpo_loss", &dpo_loss, "beta"_a, "logp_policy_w"_a, "logp_ref_w"_a, "logp_policy_l"_a,
        "logp_ref_l"_a);
  m.def("format_prompt", &format_prompt, "surface"_a, "style"_a = PromptStyle::Training);
  m.def(
      "build_dpo_dataset",
      [](const std::vector<Term>& terms, const std::vector<MnemonicPair>& pairs,
         const std::vector<DerivedLabels>& labels, DpoPolicy policy, PromptStyle style) {
        return build_dpo_dataset(terms, pairs, labels, policy, style);
      },
      "terms"_a, "pairs"_a, "labels"_a, "policy"_a, "style"_a = PromptStyle::Training);

  m.def("read_preferences", &read_preferences, "path"_a);
  m.def(
      "write_preferences",
      [](const std::filesystem::path& path, const std::vector<PreferenceRecord>& records) {
        write_preferences(path, records);
      },
      "path"_a, "records"_a);
  m.def(
      "clean_feedback",
      [](const std::vector<PreferenceRecord>& records) {
        const auto split = split_quality_checks(records);
        const auto filtered = filter_annotators(split.bundles, split.quality_checks);
        return py::make_tuple(filtered.kept, filtered.excluded_users);
      },
      "records"_a,
      "Bundles of non-quality-check rows with failing annotators removed, and the removed ids.");
}
