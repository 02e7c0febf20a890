// Copyright (c) 2026 The TRIDENT Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "trident/errors.hpp"

namespace trident {

inline std::string fold_case(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

/// An attribute-object composition by surface form.
struct Composition {
    std::string attribute;
    std::string object;

    bool operator==(const Composition& o) const {
        return attribute == o.attribute && object == o.object;
    }
    bool operator<(const Composition& o) const {
        return attribute != o.attribute ? attribute < o.attribute : object < o.object;
    }
    std::string key() const { return attribute + " " + object; }
};

/// The expanded word set Y = attributes + objects + auxiliary attributes,
/// deduplicated case-insensitively into contiguous ids. One surface form maps
/// to exactly one id even when it occurs as both attribute and object.
class Vocabulary {
public:
    Vocabulary() = default;

    int size() const { return static_cast<int>(words_.size()); }
    const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }
    const std::vector<std::string>& words() const { return words_; }

    int id(const std::string& w) const {
        auto it = index_.find(fold_case(w));
        if (it == index_.end()) throw invariant_error("unknown word: " + w);
        return it->second;
    }
    bool contains(const std::string& w) const { return index_.count(fold_case(w)) > 0; }

    /// Ids of the original attribute list, in listed order.
    const std::vector<int>& attribute_ids() const { return attr_ids_; }
    const std::vector<int>& object_ids() const { return obj_ids_; }
    /// Ids of auxiliary words that introduced a new surface form.
    const std::vector<int>& auxiliary_ids() const { return aux_ids_; }

    int t() const { return t_; }

    const std::vector<int>& aux_of(const Composition& c) const {
        auto it = aux_of_.find(c);
        if (it == aux_of_.end())
            throw cache_miss_error("no auxiliary attributes for composition \"" + c.key() + "\"");
        return it->second;
    }
    bool has_aux(const Composition& c) const { return aux_of_.count(c) > 0; }
    const std::map<Composition, std::vector<int>>& aux_map() const { return aux_of_; }

    const std::vector<std::string>& attributes() const { return attrs_; }
    const std::vector<std::string>& objects() const { return objs_; }
    const std::vector<std::string>& auxiliaries() const { return aux_words_; }

    friend Vocabulary build_vocabulary(const std::vector<std::string>&,
                                       const std::vector<std::string>&,
                                       const std::map<Composition, std::vector<std::string>>&,
                                       int);

private:
    int intern(const std::string& w) {
        const std::string key = fold_case(w);
        auto it = index_.find(key);
        if (it != index_.end()) return it->second;
        const int id = static_cast<int>(words_.size());
        words_.push_back(w);
        index_.emplace(key, id);
        return id;
    }

    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
    std::vector<std::string> attrs_, objs_, aux_words_;
    std::vector<int> attr_ids_, obj_ids_, aux_ids_;
    std::map<Composition, std::vector<int>> aux_of_;
    int t_ = 0;
};

/// Builds Y in order: attributes, objects, then auxiliary words per
/// composition (compositions in sorted key order so the id assignment is
/// reproducible regardless of map iteration quirks).
inline Vocabulary build_vocabulary(const std::vector<std::string>& attrs,
                                   const std::vector<std::string>& objs,
                                   const std::map<Composition, std::vector<std::string>>& aux_map,
                                   int t) {
    if (attrs.empty() || objs.empty())
        throw config_error("vocabulary needs at least one attribute and one object");
    if (t < 0) throw config_error("auxiliary count t must be >= 0");

    Vocabulary v;
    v.t_ = t;
    for (const auto& a : attrs) {
        const int before = v.size();
        const int id = v.intern(a);
        if (id < before) continue; // duplicate attribute surface form
        v.attrs_.push_back(a);
        v.attr_ids_.push_back(id);
    }
    // keep one id slot per *distinct* attribute; same for objects below
    if (v.attr_ids_.empty()) throw config_error("no distinct attributes");
    for (const auto& o : objs) {
        if (v.index_.count(fold_case(o))) {
            // surface form already interned (as an attribute or earlier object)
            const int id = v.index_.at(fold_case(o));
            if (std::find(v.obj_ids_.begin(), v.obj_ids_.end(), id) == v.obj_ids_.end()) {
                v.objs_.push_back(o);
                v.obj_ids_.push_back(id);
            }
            continue;
        }
        const int id = v.intern(o);
        v.objs_.push_back(o);
        v.obj_ids_.push_back(id);
    }

    for (const auto& [comp, words] : aux_map) {
        if (static_cast<int>(words.size()) != t)
            throw config_error("auxiliary list for \"" + comp.key() + "\" has " +
                               std::to_string(words.size()) + " entries, expected " +
                               std::to_string(t));
        std::vector<int> ids;
        ids.reserve(words.size());
        const std::string attr_key = fold_case(comp.attribute);
        std::vector<std::string> seen_keys;
        for (const auto& w : words) {
            const std::string key = fold_case(w);
            if (key == attr_key)
                throw invariant_error("auxiliary word \"" + w +
                                      "\" equals the ground-truth attribute of \"" +
                                      comp.key() + "\"; regenerate the entry");
            if (std::find(seen_keys.begin(), seen_keys.end(), key) != seen_keys.end())
                throw invariant_error("duplicate auxiliary word \"" + w + "\" for \"" +
                                      comp.key() + "\"");
            seen_keys.push_back(key);
            const bool fresh = v.index_.count(key) == 0;
            const int id = v.intern(w);
            if (fresh) {
                v.aux_words_.push_back(w);
                v.aux_ids_.push_back(id);
            }
            ids.push_back(id);
        }
        v.aux_of_.emplace(comp, std::move(ids));
    }
    return v;
}

} // namespace trident
