#include "icl/sequence.hpp"

namespace icl {

InContextSequence build_sequence(const SupportSet& support, const DemonstrationList& list, const VqaSample& query) {
    InContextSequence seq;
    seq.demos.reserve(list.items.size());
    for (const auto& item : list.items) {
        const auto& s = support.at(item.id);
        seq.demos.push_back({s.sample_id, s.image_ref, s.question, s.canonical_answer, s.answer_type, item.score});
    }
    seq.query = {query.sample_id, query.image_ref, query.question};
    seq.provenance = list.provenance;
    return seq;
}

} // namespace icl
