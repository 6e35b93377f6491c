#include "icl/embedding.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "icl/error.hpp"

namespace icl {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "embedding files are read without byte swapping");

std::string_view to_string(Modality m) {
    switch (m) {
    case Modality::image: return "image";
    case Modality::question: return "question";
    case Modality::question_answer: return "question_answer";
    }
    return "image";
}

Modality modality_from_string(std::string_view s) {
    if (s == "image") return Modality::image;
    if (s == "question") return Modality::question;
    if (s == "question_answer") return Modality::question_answer;
    throw ValidationError("unknown modality '" + std::string(s) + "'");
}

void EmbeddingTable::append(SampleId id, std::span<const float> v) {
    if (v.size() != dim)
        throw ValidationError("vector of dim " + std::to_string(v.size()) + " appended to table of dim " +
                              std::to_string(dim));
    ids.push_back(id);
    data.insert(data.end(), v.begin(), v.end());
}

namespace {

template <typename T>
T read_pod(const char*& cursor, const char* end) {
    if (static_cast<std::size_t>(end - cursor) < sizeof(T)) throw ParseError("unexpected end of embedding file");
    T value;
    std::memcpy(&value, cursor, sizeof(T));
    cursor += sizeof(T);
    return value;
}

template <typename T>
void write_pod(std::ofstream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

} // namespace

EmbeddingTable load_embeddings(const fs::path& path, std::optional<Modality> expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    const char* cursor = bytes.data();
    const char* end = bytes.data() + bytes.size();
    if (bytes.size() < 4 || std::memcmp(cursor, kEmbeddingMagic, 4) != 0)
        throw ParseError(path.string() + ": bad magic, not an embedding file");
    cursor += 4;
    const auto version = read_pod<std::uint32_t>(cursor, end);
    if (version != kEmbeddingVersion)
        throw ParseError(path.string() + ": unsupported embedding file version " + std::to_string(version));
    const auto count = read_pod<std::uint32_t>(cursor, end);
    const auto dim = read_pod<std::uint32_t>(cursor, end);
    const auto code = read_pod<std::uint8_t>(cursor, end);
    if (count == 0 || dim == 0) throw ParseError(path.string() + ": count and dim must be positive");
    if (code >= kNumModalities) throw ParseError(path.string() + ": bad modality code " + std::to_string(code));

    EmbeddingTable table;
    table.modality = static_cast<Modality>(code);
    if (expected && *expected != table.modality)
        throw ValidationError(path.string() + ": holds " + std::string(to_string(table.modality)) +
                              " embeddings, expected " + std::string(to_string(*expected)));
    table.dim = dim;

    const std::size_t record = sizeof(std::uint64_t) + std::size_t{dim} * sizeof(float);
    if (static_cast<std::size_t>(end - cursor) < std::size_t{count} * record)
        throw ParseError("unexpected end of embedding file");
    table.ids.resize(count);
    table.data.resize(std::size_t{count} * dim);
    for (std::size_t i = 0; i < count; ++i) {
        table.ids[i] = read_pod<std::uint64_t>(cursor, end);
        std::memcpy(table.data.data() + i * dim, cursor, std::size_t{dim} * sizeof(float));
        cursor += std::size_t{dim} * sizeof(float);
    }
    if (cursor != end) throw ParseError(path.string() + ": trailing bytes after last record");
    return table;
}

void write_embeddings(const fs::path& path, const EmbeddingTable& table) {
    if (table.size() == 0 || table.dim == 0) throw ValidationError("refusing to write an empty embedding table");
    if (table.data.size() != table.size() * table.dim) throw ValidationError("embedding table data size mismatch");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(kEmbeddingMagic, 4);
    write_pod(out, kEmbeddingVersion);
    write_pod(out, static_cast<std::uint32_t>(table.size()));
    write_pod(out, static_cast<std::uint32_t>(table.dim));
    write_pod(out, static_cast<std::uint8_t>(table.modality));
    for (std::size_t i = 0; i < table.size(); ++i) {
        write_pod(out, static_cast<std::uint64_t>(table.ids[i]));
        out.write(reinterpret_cast<const char*>(table.data.data() + i * table.dim),
                  static_cast<std::streamsize>(table.dim * sizeof(float)));
    }
    if (!out) throw IoError("write failed: " + path.string());
}

void check_ids_in(const EmbeddingTable& table, const SupportSet& set) {
    std::string orphans;
    std::size_t n = 0;
    for (auto id : table.ids) {
        if (set.contains(id)) continue;
        if (n < 20) orphans += (n ? ", " : "") + std::to_string(id);
        ++n;
    }
    if (n == 0) return;
    if (n > 20) orphans += ", ...";
    throw ValidationError(std::to_string(n) + " embedding ids not present in dataset: " + orphans);
}

void check_same_dim(std::span<const EmbeddingTable* const> tables) {
    const EmbeddingTable* first = nullptr;
    for (const auto* t : tables) {
        if (!t) continue;
        if (!first) {
            first = t;
        } else if (t->dim != first->dim) {
            throw ValidationError("embedding dim disagreement: " + std::to_string(first->dim) + " vs " +
                                  std::to_string(t->dim));
        }
    }
}

} // namespace icl
