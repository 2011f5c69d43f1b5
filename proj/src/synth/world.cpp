#include "skillrouter/synth/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

#include "skillrouter/corpus/jsonl.hpp"
#include "skillrouter/corpus/normalize.hpp"
#include "skillrouter/numeric/rng.hpp"

namespace skillrouter::synth {

using corpus::Instance;
using corpus::Skill;
using corpus::Utterance;
using numeric::Rng;

namespace {

struct Theme {
  std::string name;
  std::string anchor_alias;
  std::vector<std::string> verbs, objects, modifiers;
};

const std::vector<Theme>& themes() {
  static const std::vector<Theme> t = {
      {"rides", "uber",
       {"get", "call", "book", "order", "find", "send"},
       {"car", "cab", "ride", "taxi", "driver", "pickup"},
       {"now", "downtown", "to the airport", "for two", "tonight", "home"}},
      {"weather", "accuweather",
       {"check", "tell me", "give me", "show", "report", "forecast"},
       {"weather", "forecast", "temperature", "rain", "humidity", "wind"},
       {"today", "tomorrow", "this weekend", "in boston", "in seattle", "tonight"}},
      {"cooking", "allrecipes",
       {"find", "show", "suggest", "give me", "read", "start"},
       {"recipe", "dinner idea", "pasta recipe", "soup", "dessert", "cookie recipe"},
       {"for tonight", "with chicken", "quick", "vegetarian", "for two", "easy"}},
      {"music", "spotify",
       {"play", "shuffle", "queue", "start", "find", "put on"},
       {"songs", "playlist", "jazz", "rock music", "album", "radio"},
       {"by the beatles", "for running", "loud", "quietly", "from the eighties", "on repeat"}},
      {"home", "hue",
       {"turn on", "turn off", "dim", "brighten", "set", "lock"},
       {"lights", "thermostat", "front door", "fan", "heater", "lamp"},
       {"in the kitchen", "in the bedroom", "to seventy", "downstairs", "upstairs", "now"}},
      {"trivia", "jeopardy",
       {"start", "play", "ask me", "give me", "continue", "begin"},
       {"quiz", "trivia game", "question", "puzzle", "riddle", "challenge"},
       {"about history", "about science", "for kids", "hard", "about movies", "daily"}},
      {"shopping", "instacart",
       {"add", "order", "buy", "reorder", "find", "check"},
       {"paper towels", "milk", "batteries", "coffee", "groceries", "shoes"},
       {"to my cart", "today", "on sale", "again", "cheap", "for delivery"}},
      {"news", "npr",
       {"read", "play", "give me", "tell me", "summarize", "find"},
       {"headlines", "news", "sports scores", "stock report", "briefing", "updates"},
       {"from today", "about tech", "local", "world", "this morning", "latest"}},
      {"fitness", "fitbit",
       {"start", "log", "track", "begin", "record", "plan"},
       {"workout", "run", "yoga session", "steps", "calories", "meditation"},
       {"for ten minutes", "today", "at home", "easy", "intense", "tonight"}},
      {"travel", "expedia",
       {"book", "find", "check", "search", "reserve", "compare"},
       {"flight", "hotel", "train ticket", "rental car", "trip", "vacation"},
       {"to paris", "for tomorrow", "next week", "cheap", "nonstop", "for the weekend"}},
  };
  return t;
}

const std::vector<std::string>& shared_templates() {
  static const std::vector<std::string> t = {
      "{v} me a {o}",      "{v} the {o} {m}",      "{v} {o} {m}",
      "can you {v} the {o}", "please {v} a {o} {m}", "i want to {v} the {o}"};
  return t;
}

const std::vector<std::string>& unique_templates() {
  static const std::vector<std::string> t = {"{v} {b} {o}", "{v} the {b} {o} {m}",
                                             "{v} my {b} {o}", "{b} {o} {m} please"};
  return t;
}

const std::vector<std::string>& shared_intent_phrases() {
  static const std::vector<std::string> p = {"stop", "cancel", "help", "what can you do",
                                             "start over", "repeat that please"};
  return p;
}

std::string fill(const std::string& tpl, const std::map<std::string, std::string>& slots) {
  std::string out = tpl;
  for (const auto& [key, value] : slots) {
    const std::string needle = "{" + key + "}";
    for (std::size_t pos = out.find(needle); pos != std::string::npos;
         pos = out.find(needle, pos + value.size())) {
      out.replace(pos, needle.size(), value);
    }
  }
  return out;
}

class WordMaker {
 public:
  explicit WordMaker(Rng rng) : rng_(rng) {
    for (const auto& th : themes()) {
      for (const auto* list : {&th.verbs, &th.objects, &th.modifiers}) {
        for (const auto& phrase : *list) {
          for (const auto& w : corpus::normalize(phrase)) used_.insert(w);
        }
      }
      used_.insert(th.anchor_alias);
    }
    for (const auto* list : {&shared_templates(), &unique_templates()}) {
      for (const auto& tpl : *list) {
        for (const auto& w : corpus::normalize(tpl)) used_.insert(w);
      }
    }
  }

  std::string make() {
    static const char* onsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r",
                                   "s", "t", "v", "z", "br", "kr", "st", "pl"};
    static const char* vowels[] = {"a", "e", "i", "o", "u", "ai", "eo"};
    for (;;) {
      const int syllables = 2 + static_cast<int>(rng_.below(2));
      std::string w;
      for (int s = 0; s < syllables; ++s) {
        w += onsets[rng_.below(std::size(onsets))];
        w += vowels[rng_.below(std::size(vowels))];
      }
      if (used_.insert(w).second) return w;
    }
  }

 private:
  Rng rng_;
  std::set<std::string> used_;
};

Theme pseudo_theme(int index, WordMaker& words) {
  Theme t;
  t.name = "category" + std::to_string(index);
  for (int i = 0; i < 6; ++i) t.verbs.push_back(words.make());
  for (int i = 0; i < 6; ++i) t.objects.push_back(words.make());
  for (int i = 0; i < 6; ++i) t.modifiers.push_back(words.make());
  return t;
}

std::vector<std::string> build_pool(const Theme& th, const std::vector<std::string>& templates,
                                    const std::vector<std::string>& brands, std::size_t want,
                                    Rng& rng, std::set<std::string>& taken) {
  std::vector<std::string> all;
  const std::vector<std::string> no_brand = {""};
  const auto& bs = brands.empty() ? no_brand : brands;
  for (const auto& tpl : templates) {
    for (const auto& v : th.verbs) {
      for (const auto& o : th.objects) {
        for (const auto& m : th.modifiers) {
          for (const auto& b : bs) {
            all.push_back(corpus::join_tokens(
                corpus::normalize(fill(tpl, {{"v", v}, {"o", o}, {"m", m}, {"b", b}}))));
          }
        }
      }
    }
  }
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  rng.shuffle(std::span<std::string>(all));
  std::vector<std::string> out;
  for (const auto& c : all) {
    if (out.size() == want) break;
    if (taken.insert(c).second) out.push_back(c);
  }
  return out;
}

std::string corrupt(const std::string& command, Rng& rng) {
  auto tokens = corpus::normalize(command);
  std::vector<std::size_t> long_tokens;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].size() >= 3) long_tokens.push_back(i);
  }
  if (long_tokens.empty()) return command;
  auto& tok = tokens[long_tokens[rng.below(long_tokens.size())]];
  const std::size_t pos = rng.below(tok.size());
  char replacement;
  do {
    replacement = static_cast<char>('a' + rng.below(26));
  } while (replacement == tok[pos]);
  tok[pos] = replacement;
  return corpus::join_tokens(tokens);
}

std::string pad(std::size_t value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, value);
  return buf;
}

}  // namespace

void WorldConfig::validate() const {
  if (num_skills < 1 || num_categories < 1 || num_users < 1 || utterances_per_skill < 1 ||
      commands_per_category < 1) {
    throw std::invalid_argument("world counts must be positive");
  }
  if (num_categories > num_skills) {
    throw std::invalid_argument("num_categories exceeds num_skills");
  }
  for (double r : {overlap_factor, char_corruption_rate, short_command_rate, shared_intent_rate,
                   catch_all_rate, no_pattern_rate, preference_strength, new_novel_word_rate,
                   new_skill_adoption}) {
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("world rates must lie in [0, 1]");
  }
  if (char_corruption_rate + short_command_rate + shared_intent_rate + catch_all_rate +
          no_pattern_rate > 1.0) {
    throw std::invalid_argument("noise rates sum above 1");
  }
  if (!(enablement_mean > 0.0) || enablement_mean > num_skills) {
    throw std::invalid_argument("enablement_mean must lie in (0, num_skills]");
  }
  if (new_skills < 0 || new_train_per_skill < 0 || new_test_per_skill < 0) {
    throw std::invalid_argument("new-skill counts must be nonnegative");
  }
  if (new_skills > 0 && new_skill_adoption <= 0.0) {
    throw std::invalid_argument("new skills need a positive adoption rate");
  }
}

int preferred_skill(const std::vector<int>& enabled, int category_size) {
  if (enabled.empty()) throw std::invalid_argument("preferred_skill: empty enabled set");
  auto beats = [category_size](int i, int j) {
    const int d = ((j - i) % category_size + category_size) % category_size;
    if (d == 0) return false;
    if (2 * d < category_size) return true;
    return 2 * d == category_size && i < j;
  };
  int best = -1, best_wins = -1;
  for (int i : enabled) {
    int wins = 0;
    for (int j : enabled) wins += beats(i, j) ? 1 : 0;
    if (wins > best_wins || (wins == best_wins && i < best)) {
      best = i;
      best_wins = wins;
    }
  }
  return best;
}

World generate_world(const WorldConfig& cfg) {
  cfg.validate();
  Rng root(cfg.seed);
  WordMaker words(root.fork(1));
  Rng pool_rng = root.fork(2);
  Rng user_rng = root.fork(3);
  Rng line_rng = root.fork(4);
  Rng new_rng = root.fork(5);

  // Categories and skills.
  std::vector<Theme> cats;
  for (int c = 0; c < cfg.num_categories; ++c) {
    cats.push_back(c < static_cast<int>(themes().size()) ? themes()[c] : pseudo_theme(c, words));
  }
  std::vector<std::vector<int>> members(cfg.num_categories);  // category -> skill indices
  std::vector<Skill> skills;
  std::vector<std::vector<std::string>> brands;
  std::vector<int> category_of_skill, index_in_category;
  for (int s = 0; s < cfg.num_skills; ++s) {
    const int c = s % cfg.num_categories;
    const int within = static_cast<int>(members[c].size());
    Skill sk;
    const std::string alias =
        within == 0 && !cats[c].anchor_alias.empty() ? cats[c].anchor_alias : words.make();
    sk.skill_id = alias;
    sk.aliases = {alias};
    if (s % 2 == 1) sk.aliases.push_back(alias + " " + cats[c].name);
    sk.category = cats[c].name;
    sk.catch_all_pattern_ids = {"p_catchall"};
    members[c].push_back(s);
    category_of_skill.push_back(c);
    index_in_category.push_back(within);
    brands.push_back({words.make(), words.make()});
    skills.push_back(std::move(sk));
  }

  // Command pools.
  const double o = cfg.overlap_factor;
  std::set<std::string> taken;
  std::vector<std::vector<std::string>> shared(cfg.num_categories);
  std::vector<std::vector<std::string>> unique(cfg.num_skills);
  for (int c = 0; c < cfg.num_categories; ++c) {
    const auto want = static_cast<std::size_t>(std::llround(o * cfg.commands_per_category));
    shared[c] = build_pool(cats[c], shared_templates(), {}, want, pool_rng, taken);
  }
  for (int s = 0; s < cfg.num_skills; ++s) {
    const int c = category_of_skill[s];
    const double per_skill =
        (1.0 - o) * cfg.commands_per_category / static_cast<double>(members[c].size());
    const auto want = static_cast<std::size_t>(std::max<long long>(3, std::llround(per_skill)));
    unique[s] = build_pool(cats[c], unique_templates(), brands[s], want, pool_rng, taken);
  }

  World w;
  w.registry = corpus::SkillRegistry(skills, shared_intent_phrases());
  w.patterns = {{"p_ask_to", "ask {skill} to {command}"},
                {"p_tell_to", "tell {skill} to {command}"},
                {"p_use_to", "use {skill} to {command}"},
                {"p_ask_for", "ask {skill} for {command}"},
                {"p_with", "{command} with {skill}"},
                {"p_open_and", "open {skill} and {command}"},
                {"p_catchall", "launch {skill} {command}"}};
  const std::size_t regular_patterns = w.patterns.size() - 1;
  for (const auto& sk : skills) w.truth.category_of[sk.skill_id] = sk.category;

  // Users: category affinity, then a few skills enabled per affine category.
  const int n_aff = std::clamp<int>(static_cast<int>(std::llround(cfg.enablement_mean / 2.5)), 1,
                                    cfg.num_categories);
  const double per_cat = cfg.enablement_mean / n_aff;
  struct UserState {
    std::vector<int> categories;
    std::map<int, std::vector<int>> enabled;  // category -> within-category indices
  };
  std::vector<UserState> users(cfg.num_users);
  for (int u = 0; u < cfg.num_users; ++u) {
    std::vector<int> order(cfg.num_categories);
    for (int c = 0; c < cfg.num_categories; ++c) order[c] = c;
    user_rng.shuffle(std::span<int>(order));
    corpus::UserProfile prof;
    prof.user_id = "user_" + pad(static_cast<std::size_t>(u), 4);
    for (int a = 0; a < n_aff; ++a) {
      const int c = order[a];
      const int size = static_cast<int>(members[c].size());
      int k = static_cast<int>(std::floor(per_cat)) +
              (user_rng.bernoulli(per_cat - std::floor(per_cat)) ? 1 : 0);
      k = std::clamp(k, 1, size);
      std::vector<int> idx(size);
      for (int i = 0; i < size; ++i) idx[i] = i;
      user_rng.shuffle(std::span<int>(idx));
      idx.resize(k);
      std::sort(idx.begin(), idx.end());
      users[u].categories.push_back(c);
      users[u].enabled[c] = idx;
      for (int i : idx) prof.enabled.push_back(skills[members[c][i]].skill_id);
    }
    w.profiles.push_back(std::move(prof));
  }

  // Log lines. Each user is active in a window that starts an hour after the
  // previous user's and lasts ninety minutes.
  const std::size_t total = static_cast<std::size_t>(cfg.utterances_per_skill) * cfg.num_skills;
  const std::int64_t t0 = 1'600'000'000;
  std::vector<std::string> all_words;
  for (const auto& th : cats) {
    for (const auto* list : {&th.verbs, &th.objects, &th.modifiers}) {
      for (const auto& phrase : *list) {
        for (const auto& x : corpus::normalize(phrase)) all_words.push_back(x);
      }
    }
  }
  std::sort(all_words.begin(), all_words.end());
  all_words.erase(std::unique(all_words.begin(), all_words.end()), all_words.end());

  std::size_t line_id = 0;
  for (int u = 0; u < cfg.num_users; ++u) {
    const std::size_t n_lines =
        total / cfg.num_users + (static_cast<std::size_t>(u) < total % cfg.num_users ? 1 : 0);
    std::vector<std::int64_t> stamps(n_lines);
    for (auto& t : stamps) t = t0 + std::int64_t{u} * 3600 + static_cast<std::int64_t>(line_rng.below(5400));
    std::sort(stamps.begin(), stamps.end());
    const UserState& us = users[u];
    for (std::size_t l = 0; l < n_lines; ++l) {
      const int c = us.categories[line_rng.below(us.categories.size())];
      const auto& en = us.enabled.at(c);
      int within;
      std::string command;
      if (!shared[c].empty() && line_rng.bernoulli(o)) {
        command = shared[c][line_rng.below(shared[c].size())];
        within = line_rng.bernoulli(cfg.preference_strength)
                     ? preferred_skill(en, static_cast<int>(members[c].size()))
                     : en[line_rng.below(en.size())];
      } else {
        within = en[line_rng.below(en.size())];
        const auto& pool = unique[members[c][within]];
        command = pool[line_rng.below(pool.size())];
      }
      const Skill& sk = skills[members[c][within]];
      std::size_t pattern = line_rng.below(regular_patterns);
      bool bare = false;
      double r = line_rng.uniform();
      if ((r -= cfg.shared_intent_rate) < 0) {
        command = shared_intent_phrases()[line_rng.below(shared_intent_phrases().size())];
      } else if ((r -= cfg.short_command_rate) < 0) {
        const auto& obj = cats[c].objects[line_rng.below(cats[c].objects.size())];
        command = corpus::normalize(obj).back();
      } else if ((r -= cfg.char_corruption_rate) < 0) {
        command = corrupt(command, line_rng);
      } else if ((r -= cfg.catch_all_rate) < 0) {
        pattern = regular_patterns;
        const std::size_t len = 3 + line_rng.below(3);
        std::vector<std::string> junk;
        for (std::size_t i = 0; i < len; ++i) junk.push_back(all_words[line_rng.below(all_words.size())]);
        command = corpus::join_tokens(junk);
      } else if ((r -= cfg.no_pattern_rate) < 0) {
        bare = true;
      }
      const std::string& alias = sk.aliases[line_rng.below(sk.aliases.size())];
      Utterance utt;
      utt.id = "utt_" + pad(++line_id, 6);
      utt.user_id = w.profiles[u].user_id;
      utt.timestamp = stamps[l];
      utt.text = bare ? command
                      : fill(w.patterns[pattern].template_text,
                             {{"skill", alias}, {"command", command}});
      utt.tokens = corpus::normalize(utt.text);
      w.truth.skill_of[utt.id] = sk.skill_id;
      w.log.push_back(std::move(utt));
    }
  }

  // Held-out skills: their own mixed-vocabulary command sets, mostly built
  // from words the existing corpus already uses.
  w.expanded_profiles = w.profiles;
  const std::int64_t t_new = t0 + std::int64_t{cfg.num_users + 2} * 3600;
  for (int n = 0; n < cfg.new_skills; ++n) {
    Skill sk;
    sk.skill_id = words.make();
    sk.aliases = {sk.skill_id};
    sk.category = "new";
    sk.catch_all_pattern_ids = {"p_catchall"};
    w.truth.category_of[sk.skill_id] = sk.category;

    std::vector<std::string> known = all_words;
    new_rng.shuffle(std::span<std::string>(known));
    known.resize(std::min<std::size_t>(known.size(), 57));
    const auto n_novel = static_cast<std::size_t>(std::llround(
        cfg.new_novel_word_rate / (1.0 - cfg.new_novel_word_rate) * known.size()));
    std::vector<std::string> vocab = known;
    for (std::size_t i = 0; i < n_novel; ++i) vocab.push_back(words.make());

    const std::size_t want = static_cast<std::size_t>(cfg.new_train_per_skill + cfg.new_test_per_skill);
    std::set<std::string> seen;
    std::vector<std::vector<std::string>> commands;
    // Cycle through the vocabulary first so every word type occurs.
    std::size_t cursor = 0;
    while (commands.size() < want) {
      const std::size_t len = 3 + new_rng.below(4);
      std::vector<std::string> cmd;
      for (std::size_t i = 0; i < len; ++i) {
        cmd.push_back(cursor < vocab.size() ? vocab[cursor++] : vocab[new_rng.below(vocab.size())]);
      }
      if (seen.insert(corpus::join_tokens(cmd)).second) commands.push_back(std::move(cmd));
    }
    new_rng.shuffle(std::span<std::vector<std::string>>(commands));

    std::vector<std::size_t> adopters;
    for (std::size_t u = 0; u < w.expanded_profiles.size(); ++u) {
      if (new_rng.bernoulli(cfg.new_skill_adoption)) {
        adopters.push_back(u);
        w.expanded_profiles[u].enabled.push_back(sk.skill_id);
      }
    }
    if (adopters.empty()) {
      adopters.push_back(0);
      w.expanded_profiles[0].enabled.push_back(sk.skill_id);
    }
    for (std::size_t i = 0; i < commands.size(); ++i) {
      Instance inst;
      inst.id = "new_" + sk.skill_id + "_" + pad(i, 5);
      inst.user_id = w.expanded_profiles[adopters[new_rng.below(adopters.size())]].user_id;
      inst.tokens = commands[i];
      inst.skill_id = sk.skill_id;
      inst.timestamp = t_new + static_cast<std::int64_t>(i);
      (i < static_cast<std::size_t>(cfg.new_train_per_skill) ? w.new_train : w.new_test)
          .push_back(std::move(inst));
    }
    w.new_skills.push_back(std::move(sk));
  }
  return w;
}

void write_world(const World& world, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  corpus::write_jsonl(dir / "skills.jsonl", "skills/v1", world.registry.skills());
  corpus::write_jsonl(dir / "patterns.jsonl", "patterns/v1", world.patterns);
  corpus::write_lines(dir / "shared_intents.txt", world.registry.shared_intents());
  corpus::write_jsonl(dir / "profiles.jsonl", "profiles/v1", world.profiles);
  corpus::write_jsonl(dir / "log.jsonl", "log/v1", world.log);
  std::vector<nlohmann::json> truth;
  for (const auto& u : world.log) {
    const auto& skill = world.truth.skill_of.at(u.id);
    truth.push_back({{"id", u.id}, {"skill_id", skill}, {"category", world.truth.category_of.at(skill)}});
  }
  corpus::write_jsonl_records(dir / "ground_truth.jsonl", "ground_truth/v1", truth);
  if (!world.new_skills.empty()) {
    corpus::write_jsonl(dir / "new_skills.jsonl", "skills/v1", world.new_skills);
    corpus::write_jsonl(dir / "new_train.jsonl", "dataset/v1", world.new_train);
    corpus::write_jsonl(dir / "new_test.jsonl", "dataset/v1", world.new_test);
    corpus::write_jsonl(dir / "profiles_expanded.jsonl", "profiles/v1", world.expanded_profiles);
  }
}

std::map<std::string, std::string> default_synonyms() {
  return {{"get", "fetch"},       {"car", "vehicle"},   {"cab", "taxi"},
          {"find", "look for"},   {"show", "display"},  {"play", "put on"},
          {"check", "look at"},   {"songs", "tunes"},   {"recipe", "dish"},
          {"weather", "conditions"}, {"buy", "purchase"}, {"order", "request"},
          {"lights", "lamps"},    {"book", "reserve"},  {"start", "begin"},
          {"tell", "inform"}};
}

ParaphraseResult paraphrase_split(const std::vector<Instance>& items, double rate,
                                  std::uint64_t seed,
                                  const std::map<std::string, std::string>& synonyms) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("paraphrase rate must be in [0, 1]");
  static const std::set<std::string> articles = {"a", "an", "the"};
  Rng rng(seed);
  ParaphraseResult out;
  for (const auto& it : items) {
    if (!rng.bernoulli(rate)) {
      out.remaining.push_back(it);
      continue;
    }
    Instance p = it;
    p.id = "para_" + it.id;
    p.pattern_id.clear();
    p.tokens.clear();
    for (const auto& tok : it.tokens) {
      if (articles.count(tok)) continue;
      auto s = synonyms.find(tok);
      if (s == synonyms.end()) {
        p.tokens.push_back(tok);
      } else {
        for (auto& x : corpus::normalize(s->second)) p.tokens.push_back(std::move(x));
      }
    }
    if (p.tokens.empty()) p.tokens = it.tokens;
    out.held_out.push_back(std::move(p));
  }
  return out;
}

}  // namespace skillrouter::synth
