// Copyright (c) 2026 The TRIDENT Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Auxiliary-attribute generation: renders the fixed prompt, parses numbered
// list transcripts, re-prompts with t+1 when the model echoes the ground-truth
// attribute, and persists results in a sorted JSON cache.

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "trident/errors.hpp"
#include "trident/rng.hpp"
#include "trident/vocab.hpp"

namespace trident {

/// Spells 1..10 as English words; larger counts stay digits.
inline std::string spell_count(int t) {
    static const char* words[] = {"zero", "one", "two",   "three", "four", "five",
                                  "six",  "seven", "eight", "nine",  "ten"};
    if (t >= 0 && t <= 10) return words[t];
    return std::to_string(t);
}

/// The fixed prompt template. Applied verbatim: no article or plural fixing.
inline std::string render_prompt(const Composition& comp, int t) {
    if (t < 1) throw config_error("render_prompt: t must be >= 1");
    return "Please give me " + spell_count(t) +
           " adjectives that can describe the visual feature of a photo of a/an " +
           comp.attribute + " " + comp.object + " well.";
}

namespace detail {

inline std::string strip_item(std::string s, const std::string& object_word) {
    // trailing whitespace and punctuation
    auto is_trim = [](char c) {
        return c == ' ' || c == '\t' || c == '\r' || c == '.' || c == ',' || c == ';' ||
               c == ':' || c == '!' || c == '?';
    };
    while (!s.empty() && is_trim(s.back())) s.pop_back();
    std::size_t start = 0;
    while (start < s.size() && (s[start] == ' ' || s[start] == '\t')) ++start;
    s = s.substr(start);
    std::string lower = fold_case(s);
    // drop an echo of the object noun ("juicy beef" -> "juicy")
    const std::string obj = fold_case(object_word);
    if (!obj.empty() && lower.size() > obj.size() + 1 &&
        lower.compare(lower.size() - obj.size(), obj.size(), obj) == 0 &&
        lower[lower.size() - obj.size() - 1] == ' ') {
        lower.resize(lower.size() - obj.size() - 1);
        while (!lower.empty() && lower.back() == ' ') lower.pop_back();
    }
    return lower;
}

} // namespace detail

/// Extracts up to `t` distinct lowercased items from a numbered-list
/// transcript. Fewer parseable items than requested is a parse_error that
/// carries the raw transcript.
inline std::vector<std::string> parse_transcript(const std::string& raw, int t,
                                                 const std::string& object_word = "") {
    if (raw.empty()) throw parse_error("empty transcript", raw);
    static const std::regex item_re(R"(^\s*\d+[.)]\s*(.+)$)");
    std::vector<std::string> items;
    std::size_t pos = 0;
    while (pos <= raw.size() && static_cast<int>(items.size()) < t) {
        std::size_t eol = raw.find('\n', pos);
        std::string line = raw.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
        pos = eol == std::string::npos ? raw.size() + 1 : eol + 1;
        std::smatch m;
        if (!std::regex_match(line, m, item_re)) continue;
        std::string item = detail::strip_item(m[1].str(), object_word);
        if (item.empty()) continue;
        if (std::find(items.begin(), items.end(), item) != items.end()) continue;
        items.push_back(item);
    }
    if (static_cast<int>(items.size()) < t)
        throw parse_error("transcript yielded " + std::to_string(items.size()) +
                              " item(s), need " + std::to_string(t),
                          raw);
    return items;
}

// ---------------------------------------------------------------------------
// providers

class TextProvider {
public:
    virtual ~TextProvider() = default;
    virtual std::string complete(const std::string& prompt) = 0;
    int calls() const { return calls_; }

protected:
    void count_call() { ++calls_; }

private:
    int calls_ = 0;
};

/// Replays fixture transcripts for known prompts and otherwise synthesizes a
/// deterministic numbered list keyed by the prompt hash, so repeated runs are
/// byte-identical without any model access.
class StubTextProvider final : public TextProvider {
public:
    explicit StubTextProvider(std::uint64_t seed = 0) : seed_(seed) {
        // transcripts for the documented compositions
        add_fixture(Composition{"browned", "beef"}, 5,
                    "1. Juicy\n2. Glistening\n3. Crispy\n4. Sizzling\n5. Mouthwatering");
        add_fixture(Composition{"large", "garden"}, 3, "1. Lush\n2. Vibrant\n3. Flourishing");
        add_fixture(Composition{"large", "garden"}, 5,
                    "1. Lush\n2. Expansive\n3. Vibrant\n4. Serene\n5. Verdant");
        add_fixture(Composition{"inflated", "pool"}, 5,
                    "1. Colorful\n2. Refreshing\n3. Sparkling\n4. Bright\n5. Relaxing");
        add_fixture(Composition{"young", "girl"}, 3, "1. Innocent\n2. Radiant\n3. Youthful");
    }

    void add_fixture(const Composition& comp, int t, std::string transcript) {
        fixtures_[render_prompt(comp, t)] = std::move(transcript);
    }

    std::string complete(const std::string& prompt) override {
        count_call();
        auto it = fixtures_.find(prompt);
        if (it != fixtures_.end()) return it->second;
        const int t = infer_count(prompt);
        Rng rng = Rng::stream(seed_, "stub-transcript:" + prompt);
        std::vector<std::string> pool = adjective_pool();
        std::string out;
        std::vector<std::string> used;
        for (int i = 0; i < t; ++i) {
            std::string w;
            do {
                w = pool[rng.below(pool.size())];
            } while (std::find(used.begin(), used.end(), w) != used.end());
            used.push_back(w);
            out += std::to_string(i + 1) + ". " + w + "\n";
        }
        return out;
    }

private:
    static int infer_count(const std::string& prompt) {
        // prompt starts "Please give me {count} adjectives..."
        static const std::regex re(R"(Please give me (\S+) adjectives)");
        std::smatch m;
        if (!std::regex_search(prompt, m, re)) return 3;
        const std::string w = m[1].str();
        for (int i = 1; i <= 10; ++i)
            if (w == spell_count(i)) return i;
        try {
            return std::stoi(w);
        } catch (...) {
            return 3;
        }
    }

    static const std::vector<std::string>& adjective_pool() {
        static const std::vector<std::string> pool = {
            "glossy",   "matte",    "speckled", "smooth",   "textured", "luminous",
            "faded",    "vivid",    "angular",  "rounded",  "slender",  "compact",
            "elongated", "layered", "patterned", "translucent", "opaque", "weathered",
            "polished", "coarse",   "delicate", "sturdy",   "gleaming", "dusty",
            "striped",  "mottled",  "pale",     "deep",     "rich",     "subtle",
            "crisp",    "soft",     "dense",    "airy",     "uniform",  "irregular"};
        return pool;
    }

    std::uint64_t seed_;
    std::map<std::string, std::string> fixtures_;
};

/// Provider that never answers; used when a run must be served from cache.
class NullTextProvider final : public TextProvider {
public:
    std::string complete(const std::string&) override {
        count_call();
        throw provider_error("text provider disabled (provider=none)");
    }
};

// ---------------------------------------------------------------------------
// cache

/// Composition -> adjective cache with the raw transcripts kept for
/// provenance. File format: JSON object, "attribute object" -> [t strings],
/// keys sorted (nlohmann objects are ordered maps, so dumps are canonical).
class AuxCache {
public:
    bool has(const Composition& c) const { return entries_.count(c.key()) > 0; }

    const std::vector<std::string>& get(const Composition& c) const {
        auto it = entries_.find(c.key());
        if (it == entries_.end())
            throw cache_miss_error("no cached auxiliary attributes for \"" + c.key() + "\"");
        return it->second;
    }

    void put(const Composition& c, std::vector<std::string> adjectives, std::string transcript) {
        validate_entry(c, adjectives);
        entries_[c.key()] = std::move(adjectives);
        provenance_[c.key()] = std::move(transcript);
    }

    std::size_t size() const { return entries_.size(); }
    const std::map<std::string, std::vector<std::string>>& entries() const { return entries_; }

    void save(const std::string& path) const {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& [k, v] : entries_) j[k] = v;
        std::ofstream out(path);
        if (!out) throw io_error("cannot write aux cache: " + path);
        out << j.dump(2) << "\n";
    }

    static AuxCache load(const std::string& path, int t) {
        std::ifstream in(path);
        if (!in) throw io_error("cannot open aux cache: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw io_error("aux cache " + path + ": " + e.what());
        }
        if (!j.is_object()) throw io_error("aux cache must be a JSON object");
        AuxCache cache;
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string& key = it.key();
            const auto space = key.find(' ');
            if (space == std::string::npos)
                throw io_error("aux cache key is not \"attribute object\": " + key);
            Composition c{key.substr(0, space), key.substr(space + 1)};
            std::vector<std::string> words = it.value().get<std::vector<std::string>>();
            if (t > 0 && static_cast<int>(words.size()) != t)
                throw io_error("aux cache entry \"" + key + "\" has " +
                               std::to_string(words.size()) + " adjectives, expected " +
                               std::to_string(t));
            cache.put(c, std::move(words), "");
        }
        return cache;
    }

private:
    static void validate_entry(const Composition& c, const std::vector<std::string>& adjs) {
        const std::string attr = fold_case(c.attribute);
        std::vector<std::string> seen;
        for (const auto& a : adjs) {
            const std::string f = fold_case(a);
            if (f != a)
                throw invariant_error("aux entry not lowercased: " + a);
            if (f == attr)
                throw invariant_error("aux entry equals the ground-truth attribute: " + a);
            if (std::find(seen.begin(), seen.end(), f) != seen.end())
                throw invariant_error("duplicate aux entry: " + a);
            seen.push_back(f);
        }
    }

    std::map<std::string, std::vector<std::string>> entries_;
    std::map<std::string, std::string> provenance_;
};

/// Generates `t` auxiliary adjectives for one composition. If the first reply
/// contains the composition's own attribute, re-prompts with t+1 and keeps the
/// first t items that are not that attribute, repeating up to max_retries.
inline std::vector<std::string> generate_aux(TextProvider& provider, const Composition& comp,
                                             int t, int max_retries = 3,
                                             std::string* transcript_out = nullptr) {
    if (t < 1) throw config_error("generate_aux: t must be >= 1");
    const std::string attr = fold_case(comp.attribute);
    int ask = t;
    std::string last_error;
    for (int attempt = 0; attempt <= max_retries; ++attempt) {
        std::string raw;
        try {
            raw = provider.complete(render_prompt(comp, ask));
            std::vector<std::string> items = parse_transcript(raw, ask, comp.object);
            const bool echoed =
                std::find(items.begin(), items.end(), attr) != items.end();
            if (echoed) {
                // drop the echo and re-ask for one more next round
                items.erase(std::remove(items.begin(), items.end(), attr), items.end());
            }
            if (static_cast<int>(items.size()) >= t) {
                items.resize(static_cast<std::size_t>(t));
                if (transcript_out) *transcript_out = raw;
                return items;
            }
            ask = ask + 1;
            last_error = "reply echoed the ground-truth attribute";
        } catch (const parse_error& e) {
            last_error = e.what();
            ask = std::max(ask, t);
        } catch (const provider_error& e) {
            last_error = e.what();
        }
    }
    throw provider_error("auxiliary generation failed for \"" + comp.key() + "\" after " +
                         std::to_string(max_retries + 1) + " attempt(s): " + last_error);
}

/// Fills the cache for every composition in `comps` that is not already
/// present. Provider calls run on up to `workers` threads; cache writes go
/// through one mutex. Returns the number of newly generated entries.
inline int generate_all_aux(TextProvider& provider, const std::vector<Composition>& comps,
                            int t, AuxCache& cache, int workers = 4, int max_retries = 3) {
    std::vector<Composition> todo;
    for (const auto& c : comps)
        if (!cache.has(c)) todo.push_back(c);
    if (todo.empty()) return 0;

    std::mutex mu;
    std::exception_ptr first_error;
    std::size_t next = 0;
    auto worker = [&]() {
        for (;;) {
            Composition comp;
            {
                std::lock_guard<std::mutex> lock(mu);
                if (first_error || next >= todo.size()) return;
                comp = todo[next++];
            }
            try {
                std::string transcript;
                std::vector<std::string> adjs =
                    generate_aux(provider, comp, t, max_retries, &transcript);
                std::lock_guard<std::mutex> lock(mu);
                cache.put(comp, std::move(adjs), std::move(transcript));
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    const int n_threads = std::max(1, std::min<int>(workers, static_cast<int>(todo.size())));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
    return static_cast<int>(todo.size());
}

} // namespace trident
