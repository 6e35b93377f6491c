#include "icl/tag_index.hpp"

#include <algorithm>
#include <bit>
#include <fstream>

#include "icl/error.hpp"

namespace icl {

using nlohmann::json;

TagIndex::TagIndex(const std::map<SampleId, TagSet>& tags) {
    for (const auto& [id, set] : tags) {
        bool any = false;
        for (const auto& [cat, values] : set) {
            if (values.empty()) continue;
            any = true;
            auto& c = cats_[cat];
            for (const auto& v : values) c.vocab.emplace(v, 0);
        }
        if (!any) continue;
        ids_.push_back(id);
        tags_.push_back(set);
    }
    for (auto& [name, c] : cats_) {
        std::uint32_t next = 0;
        for (auto& [tag, slot] : c.vocab) slot = next++;
        c.words = (c.vocab.size() + 63) / 64;
        c.rows.reserve(ids_.size());
        for (const auto& set : tags_) {
            auto it = set.find(name);
            c.rows.push_back(it == set.end() ? Bits(c.words, 0) : encode(c, it->second));
        }
    }
}

bool TagIndex::contains(SampleId id) const { return std::binary_search(ids_.begin(), ids_.end(), id); }

std::vector<std::string> TagIndex::categories() const {
    std::vector<std::string> out;
    for (const auto& [name, c] : cats_) out.push_back(name);
    return out;
}

std::size_t TagIndex::vocabulary_size(const std::string& category) const {
    auto it = cats_.find(category);
    return it == cats_.end() ? 0 : it->second.vocab.size();
}

const TagSet& TagIndex::tags_of(SampleId id) const {
    static const TagSet empty;
    auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
    if (it == ids_.end() || *it != id) return empty;
    return tags_[static_cast<std::size_t>(it - ids_.begin())];
}

std::size_t TagIndex::row_of(SampleId id) const {
    auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
    if (it == ids_.end() || *it != id) throw ValidationError("sample " + std::to_string(id) + " has no tags");
    return static_cast<std::size_t>(it - ids_.begin());
}

TagIndex::Bits TagIndex::encode(const Category& cat, const std::set<std::string>& tags) const {
    Bits bits(cat.words, 0);
    for (const auto& t : tags) {
        auto it = cat.vocab.find(t);
        if (it == cat.vocab.end()) continue;
        bits[it->second / 64] |= std::uint64_t{1} << (it->second % 64);
    }
    return bits;
}

std::vector<std::pair<const TagIndex::Category*, TagIndex::Bits>>
TagIndex::encode_query(const TagSet& query, std::span<const std::string> categories) const {
    std::vector<std::pair<const Category*, Bits>> out;
    auto add = [&](const std::string& name) {
        auto c = cats_.find(name);
        auto q = query.find(name);
        if (c == cats_.end() || q == query.end()) return;
        out.emplace_back(&c->second, encode(c->second, q->second));
    };
    if (categories.empty()) {
        for (const auto& [name, c] : cats_) add(name);
    } else {
        for (const auto& name : categories) add(name);
    }
    return out;
}

std::vector<std::size_t> TagIndex::overlaps(const TagSet& query, std::span<const std::string> categories) const {
    const auto encoded = encode_query(query, categories);
    std::vector<std::size_t> out(ids_.size(), 0);
    for (const auto& [cat, qbits] : encoded) {
        for (std::size_t r = 0; r < ids_.size(); ++r) {
            const auto& row = cat->rows[r];
            std::size_t n = 0;
            for (std::size_t w = 0; w < qbits.size(); ++w) n += std::popcount(row[w] & qbits[w]);
            out[r] += n;
        }
    }
    return out;
}

std::size_t TagIndex::overlap(SampleId id, const TagSet& query, std::span<const std::string> categories) const {
    const std::size_t r = row_of(id);
    std::size_t n = 0;
    for (const auto& [cat, qbits] : encode_query(query, categories)) {
        const auto& row = cat->rows[r];
        for (std::size_t w = 0; w < qbits.size(); ++w) n += std::popcount(row[w] & qbits[w]);
    }
    return n;
}

std::vector<ScoredId> TagIndex::top_k(const TagSet& query, std::size_t k, const IdSet& exclude,
                                      std::span<const std::string> categories) const {
    const auto scores = overlaps(query, categories);
    std::vector<ScoredId> all;
    all.reserve(ids_.size());
    for (std::size_t r = 0; r < ids_.size(); ++r)
        if (!exclude.count(ids_[r])) all.push_back({ids_[r], static_cast<double>(scores[r])});
    const std::size_t n = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), ranks_before);
    all.resize(n);
    return all;
}

std::size_t tag_overlap(const TagSet& a, const TagSet& b, std::span<const std::string> categories) {
    std::size_t n = 0;
    auto count = [&](const std::string& cat) {
        auto ia = a.find(cat);
        auto ib = b.find(cat);
        if (ia == a.end() || ib == b.end()) return;
        for (const auto& t : ia->second) n += ib->second.count(t);
    };
    if (categories.empty()) {
        for (const auto& [cat, tags] : a) count(cat);
    } else {
        for (const auto& cat : categories) count(cat);
    }
    return n;
}

std::map<SampleId, TagSet> load_tag_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::map<SampleId, TagSet> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path.string() + " line " + std::to_string(lineno);
        try {
            const auto j = json::parse(line);
            auto& set = out[j.at("sample_id").get<SampleId>()][j.at("category").get<std::string>()];
            for (const auto& t : j.at("tags")) set.insert(t.get<std::string>());
        } catch (const json::exception& e) {
            throw ParseError(where + ": " + e.what());
        }
    }
    return out;
}

void write_tag_file(const std::filesystem::path& path, const std::map<SampleId, TagSet>& tags) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& [id, set] : tags)
        for (const auto& [cat, values] : set)
            out << json{{"sample_id", id}, {"category", cat}, {"tags", values}}.dump() << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

} // namespace icl
