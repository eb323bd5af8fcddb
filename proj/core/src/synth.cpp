#include "p2c/synth.hpp"

#include <algorithm>
#include <array>
#include <random>
#include <set>

#include "p2c/error.hpp"

namespace p2c {
namespace {

constexpr std::array<const char*, 5> kGoodMarkers = {"safe", "checked", "secure", "strict", "bounded"};
constexpr std::array<const char*, 5> kBadMarkers = {"raw", "blind", "weak", "lax", "naive"};

constexpr std::array<const char*, 12> kTypes = {"int", "long", "String", "byte[]", "Object", "double",
                                                "List", "Map", "boolean", "char[]", "Buffer", "Node"};
constexpr std::array<const char*, 16> kVerbs = {"load", "parse", "build", "read", "write", "handle",
                                                "update", "compute", "fetch", "format", "merge", "scan",
                                                "store", "resolve", "apply", "render"};
constexpr std::array<const char*, 16> kNouns = {"entry", "value", "record", "item", "token", "request",
                                                "header", "payload", "buffer", "config", "session", "result",
                                                "index", "cache", "frame", "chunk"};
constexpr std::array<const char*, 12> kVars = {"a", "b", "tmp", "res", "out", "cur", "acc", "val", "ptr",
                                               "data", "len", "pos"};
constexpr std::array<const char*, 14> kDocWords = {"module", "function", "returns", "value", "input",
                                                   "caller", "argument", "result", "library", "thread",
                                                   "object", "state", "handle", "stream"};

using Rng = std::mt19937_64;

template <typename Seq>
const char* pick(Rng& rng, const Seq& seq) {
  std::uniform_int_distribution<std::size_t> d(0, std::size(seq) - 1);
  return seq[d(rng)];
}

std::size_t uniform(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::vector<std::string> make_stems(Rng& rng, std::size_t count) {
  static constexpr std::string_view kConsonants = "bdfgklmnprstvz";
  static constexpr std::string_view kVowels = "aeiou";
  static const std::set<std::string> kReservedWords = [] {
    std::set<std::string> words;
    for (auto* w : kGoodMarkers) words.insert(w);
    for (auto* w : kBadMarkers) words.insert(w);
    return words;
  }();
  std::set<std::string> seen;
  std::vector<std::string> stems;
  while (stems.size() < count) {
    std::string s;
    s += kConsonants[uniform(rng, 0, kConsonants.size() - 1)];
    s += kVowels[uniform(rng, 0, kVowels.size() - 1)];
    s += kConsonants[uniform(rng, 0, kConsonants.size() - 1)];
    s += kConsonants[uniform(rng, 0, kConsonants.size() - 1)];
    s += kVowels[uniform(rng, 0, kVowels.size() - 1)];
    s += kConsonants[uniform(rng, 0, kConsonants.size() - 1)];
    if (kReservedWords.contains(s) || !seen.insert(s).second) continue;
    stems.push_back(std::move(s));
  }
  return stems;
}

std::string filler_line(Rng& rng, const std::string& var) {
  switch (uniform(rng, 0, 5)) {
    case 0: return "  log(\"" + std::string(pick(rng, kNouns)) + "\");";
    case 1: return "  " + var + " = " + pick(rng, kVerbs) + "_" + pick(rng, kNouns) + "(" + var + ");";
    case 2: return "  if (" + var + " == null) return " + pick(rng, kVars) + ";";
    case 3: return "  count += " + std::to_string(uniform(rng, 1, 9)) + ";";
    case 4: return "  " + std::string(pick(rng, kNouns)) + ".append(" + var + ");";
    default: return "  for (int i = 0; i < " + std::to_string(uniform(rng, 2, 64)) + "; i++) " + var + "++;";
  }
}

// A small Java-like method; `calls` are planted verbatim as call sites.
std::string make_code(Rng& rng, const std::string& stem, const std::vector<std::string>& calls) {
  const std::string type = pick(rng, kTypes);
  const std::string var = pick(rng, kVars);
  std::string code = type + " " + pick(rng, kVerbs) + "_" + pick(rng, kNouns) + "(" + type + " " + var + ") {\n";
  code += "  " + stem + "_ctx ctx = open_" + stem + "();\n";
  const std::size_t fillers = uniform(rng, 1, 3);
  for (std::size_t i = 0; i < fillers; ++i) code += filler_line(rng, var) + "\n";
  for (const auto& call : calls) code += "  " + var + " = " + call + "(ctx, " + var + ");\n";
  code += filler_line(rng, var) + "\n";
  code += "  return " + var + ";\n}\n";
  return code;
}

std::string policy_text(const SyntheticFamily& f, std::size_t variant) {
  const auto& s = f.stem;
  const auto g = f.good_call();
  const auto b = f.bad_call();
  switch (variant % 4) {
    case 0: return "Use " + g + " instead of " + b + " when working with " + s + " data.";
    case 1: return "Avoid calling " + b + "; code should prefer " + g + " for every " + s + " operation.";
    case 2: return "All " + s + " access must go through " + g + " and never through " + b + ".";
    default: return "Do not pass untrusted input to " + b + ", call " + g + " instead.";
  }
}

std::string review_comment(Rng& rng, const SyntheticFamily& f) {
  const auto g = f.good_call();
  const auto b = f.bad_call();
  switch (uniform(rng, 0, 3)) {
    case 0: return "You should use " + g + " here instead of " + b + ".";
    case 1: return "Please avoid " + b + ", " + g + " is the safer choice.";
    case 2: return "Prefer " + g + " over " + b + " in this path.";
    default: return "We must never call " + b + " directly; switch to " + g + ".";
  }
}

std::string noise_comment(Rng& rng, const std::string& stem) {
  switch (uniform(rng, 0, 5)) {
    case 0: return "lgtm";
    case 1: return "nit: rename this variable";
    case 2: return "thanks, merged";
    case 3: return "typo in the " + stem + " log message";
    case 4: return "looks good to me";
    default: return "fixed formatting";
  }
}

std::string doc_paragraph(Rng& rng, const std::string& stem) {
  std::string p = "The " + stem + " " + pick(rng, kDocWords) + " " + pick(rng, kVerbs) + "s the " +
                  pick(rng, kNouns) + " for each " + pick(rng, kDocWords) + ".";
  const std::size_t sentences = uniform(rng, 3, 5);
  for (std::size_t i = 0; i < sentences; ++i) {
    const std::string marker = uniform(rng, 0, 1) == 0 ? pick(rng, kGoodMarkers) : pick(rng, kBadMarkers);
    switch (uniform(rng, 0, 7)) {
      case 0:
        p += " Calling " + marker + "_" + stem + " " + pick(rng, kVerbs) + "s the " + pick(rng, kNouns) + ".";
        break;
      case 4:
        p += " All " + stem + " access must go through open_" + stem + ".";
        break;
      case 5:
        p += " Do not pass untrusted input to " + marker + "_" + stem + "; use a " + pick(rng, kNouns) + " instead.";
        break;
      case 6:
        p += " Code should prefer " + stem + " " + pick(rng, kNouns) + "s for every " + pick(rng, kVerbs) +
             " operation when working with " + stem + " data.";
        break;
      case 7:
        p += " Avoid calling open_" + stem + " twice and never " + pick(rng, kVerbs) + " a closed " +
             pick(rng, kNouns) + ".";
        break;
      case 1:
        p += " Every " + stem + " " + pick(rng, kDocWords) + " keeps its own " + pick(rng, kNouns) + " " +
             pick(rng, kDocWords) + ".";
        break;
      case 2:
        p += " The " + std::string(pick(rng, kDocWords)) + " passed to open_" + stem + " is a " +
             pick(rng, kNouns) + ".";
        break;
      default:
        p += " See " + stem + " " + pick(rng, kNouns) + " notes for " + pick(rng, kDocWords) + " details.";
        break;
    }
  }
  return p;
}

std::string cc_comment(Rng& rng, const std::string& stem, const std::string& call) {
  switch (uniform(rng, 0, 3)) {
    case 0: return "why do we need " + call + " here";
    case 1: return "this " + stem + " call looks wrong";
    case 2: return "the " + stem + " " + pick(rng, kNouns) + " is never closed";
    default: return "can " + call + " fail on an empty " + pick(rng, kNouns);
  }
}

}  // namespace

SyntheticCorpus synth_corpus(const SynthOptions& options) {
  require(options.n_policy_families >= 1 && options.snippets_per_family >= 1,
          "synth_corpus: family and snippet counts must be >= 1");
  require(options.n_heldout_families < options.n_policy_families || options.n_policy_families == 1,
          "synth_corpus: at least one family must remain for training");

  Rng rng(options.seed);
  const std::size_t n_distractor_stems = std::max<std::size_t>(40, options.n_policy_families);
  auto stems = make_stems(rng, options.n_policy_families + n_distractor_stems);

  SyntheticCorpus out;
  out.distractor_stems.assign(stems.begin() + static_cast<std::ptrdiff_t>(options.n_policy_families), stems.end());

  std::vector<std::size_t> order(options.n_policy_families);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> heldout(options.n_policy_families, false);
  const std::size_t n_heldout = std::min(options.n_heldout_families, options.n_policy_families);
  for (std::size_t i = 0; i < n_heldout; ++i) heldout[order[i]] = true;

  for (std::size_t f = 0; f < options.n_policy_families; ++f) {
    const std::size_t m = uniform(rng, 0, kGoodMarkers.size() - 1);
    char id[32];
    std::snprintf(id, sizeof(id), "policy-%03zu", f);
    SyntheticFamily fam{id, stems[f], kGoodMarkers[m], kBadMarkers[m], heldout[f]};
    out.corpus.add_policy(Policy{fam.policy_id, policy_text(fam, uniform(rng, 0, 3)), PolicySource::kSynthetic});
    (fam.heldout ? out.heldout_policy_ids : out.train_policy_ids).push_back(fam.policy_id);

    for (std::size_t k = 0; k < options.snippets_per_family; ++k) {
      const Facet facet = k % 2 == 0 ? Facet::kCompliant : Facet::kNoncompliant;
      const std::string call = facet == Facet::kCompliant ? fam.good_call() : fam.bad_call();
      std::vector<std::string> calls(uniform(rng, 1, 2), call);
      char sid[48];
      std::snprintf(sid, sizeof(sid), "%s/%03zu", fam.policy_id.c_str(), k);
      out.corpus.add_snippet(CodeSnippet{sid, make_code(rng, fam.stem, calls), {GroundTruth{fam.policy_id, facet}}});
    }
    out.families.push_back(std::move(fam));
  }

  for (std::size_t k = 0; k < options.n_distractors; ++k) {
    const auto& stem = out.distractor_stems[uniform(rng, 0, out.distractor_stems.size() - 1)];
    std::vector<std::string> calls;
    const std::size_t n_calls = uniform(rng, 1, 2);
    for (std::size_t c = 0; c < n_calls; ++c) {
      const char* marker = uniform(rng, 0, 1) == 0 ? pick(rng, kGoodMarkers) : pick(rng, kBadMarkers);
      calls.push_back(std::string(marker) + "_" + stem);
    }
    char sid[32];
    std::snprintf(sid, sizeof(sid), "distractor-%05zu", k);
    out.corpus.add_snippet(CodeSnippet{sid, make_code(rng, stem, calls), {}});
    out.distractor_ids.emplace_back(sid);
  }
  return out;
}

PretrainingData synth_pretraining(const SyntheticCorpus& corpus, const PretrainingOptions& options) {
  require(options.bugfix_noise_fraction >= 0.0 && options.bugfix_noise_fraction < 1.0,
          "synth_pretraining: noise fraction must be in [0, 1)");
  Rng rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  PretrainingData out;

  std::vector<std::string> stems;
  for (const auto& f : corpus.families) stems.push_back(f.stem);
  stems.insert(stems.end(), corpus.distractor_stems.begin(), corpus.distractor_stems.end());

  for (const auto& stem : stems) {
    for (std::size_t i = 0; i < options.paragraphs_per_stem; ++i) out.doc_paragraphs.push_back(doc_paragraph(rng, stem));
  }
  std::shuffle(out.doc_paragraphs.begin(), out.doc_paragraphs.end(), rng);

  for (const auto& stem : stems) {
    for (std::size_t i = 0; i < options.cc_pairs_per_stem; ++i) {
      const char* marker = uniform(rng, 0, 1) == 0 ? pick(rng, kGoodMarkers) : pick(rng, kBadMarkers);
      const std::string call = std::string(marker) + "_" + stem;
      out.code_comment_pairs.push_back({make_code(rng, stem, {call}), cc_comment(rng, stem, call)});
    }
  }
  std::shuffle(out.code_comment_pairs.begin(), out.code_comment_pairs.end(), rng);

  std::vector<const SyntheticFamily*> train;
  for (const auto& f : corpus.families) {
    if (!f.heldout) train.push_back(&f);
  }
  std::size_t next_id = 0;
  const auto record_id = [&] {
    char id[32];
    std::snprintf(id, sizeof(id), "bf-%05zu", next_id++);
    return std::string(id);
  };
  for (const auto* f : train) {
    for (std::size_t i = 0; i < options.bugfixes_per_family; ++i) {
      BugFixRecord r{record_id(), review_comment(rng, *f), make_code(rng, f->stem, {f->bad_call()}),
                     make_code(rng, f->stem, {f->good_call()})};
      out.bugfixes.push_back(std::move(r));
    }
  }
  const std::size_t clean = out.bugfixes.size();
  const auto n_noise = static_cast<std::size_t>(
      std::llround(static_cast<double>(clean) * options.bugfix_noise_fraction / (1.0 - options.bugfix_noise_fraction)));
  for (std::size_t i = 0; i < n_noise && !train.empty(); ++i) {
    const auto* f = train[uniform(rng, 0, train.size() - 1)];
    BugFixRecord r{record_id(), noise_comment(rng, f->stem), "", ""};
    if (uniform(rng, 0, 1) == 0) {
      // Facet-swapped fix.
      r.code_before = make_code(rng, f->stem, {f->good_call()});
      r.code_after = make_code(rng, f->stem, {f->bad_call()});
    } else {
      const auto& s1 = corpus.distractor_stems[uniform(rng, 0, corpus.distractor_stems.size() - 1)];
      const auto& s2 = corpus.distractor_stems[uniform(rng, 0, corpus.distractor_stems.size() - 1)];
      r.code_before = make_code(rng, s1, {std::string(pick(rng, kGoodMarkers)) + "_" + s1});
      r.code_after = make_code(rng, s2, {std::string(pick(rng, kBadMarkers)) + "_" + s2});
    }
    if (r.code_before == r.code_after) r.code_after += "// touched\n";
    out.bugfixes.push_back(std::move(r));
  }
  std::shuffle(out.bugfixes.begin(), out.bugfixes.end(), rng);
  return out;
}

}  // namespace p2c
