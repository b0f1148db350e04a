#include "reqrag/lexical_index.hpp"

#include "detail/binary_io.hpp"
#include "reqrag/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

namespace reqrag {

namespace {

constexpr char kMagic[4] = {'R', 'Q', 'L', 'X'};
constexpr std::uint8_t kVersion = 1;

double term_weight(double idf, double tf, double dl, double avgdl, const Bm25Params& p) {
    const double ratio = avgdl > 0.0 ? dl / avgdl : 0.0;
    const double norm = p.k1 * (1.0 - p.b + p.b * ratio);
    return idf * tf * (p.k1 + 1.0) / (tf + norm);
}

std::vector<std::string> distinct(const std::vector<std::string>& tokens) {
    std::vector<std::string> out;
    std::set<std::string_view> seen;
    for (const auto& t : tokens) {
        if (seen.insert(t).second) out.push_back(t);
    }
    return out;
}

}  // namespace

void Bm25Params::validate() const {
    if (!(k1 >= 0.0)) throw ValidationError("bm25.k1", "must be >= 0");
    if (!(b >= 0.0 && b <= 1.0)) throw ValidationError("bm25.b", "must lie in [0, 1]");
}

InvertedIndex InvertedIndex::build(const std::vector<IndexDocument>& docs, const DomainDictionary& dict,
                                   const TokenizerOptions& opts) {
    std::vector<std::size_t> order(docs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return docs[a].id < docs[b].id; });
    for (std::size_t i = 1; i < order.size(); ++i) {
        if (docs[order[i]].id == docs[order[i - 1]].id) {
            throw ValidationError("chunk_id", "duplicate chunk_id '" + docs[order[i]].id + "'");
        }
    }

    InvertedIndex index;
    index.opts_ = opts;
    index.ids_.reserve(docs.size());
    index.lengths_.reserve(docs.size());
    double total = 0.0;
    for (std::size_t n = 0; n < order.size(); ++n) {
        const auto& d = docs[order[n]];
        auto tokens = tokenize(d.text, dict, opts);
        std::unordered_map<std::string, std::uint32_t> tf;
        for (auto& t : tokens) ++tf[std::move(t)];
        for (auto& [term, count] : tf) {
            index.postings_[term].push_back({static_cast<std::uint32_t>(n), count});
        }
        index.ids_.push_back(d.id);
        index.lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
        total += static_cast<double>(tokens.size());
    }
    index.avgdl_ = docs.empty() ? 0.0 : total / static_cast<double>(docs.size());
    return index;
}

InvertedIndex InvertedIndex::build(const std::vector<Chunk>& chunks, const DomainDictionary& dict,
                                   const TokenizerOptions& opts) {
    std::vector<IndexDocument> docs;
    docs.reserve(chunks.size());
    for (const auto& c : chunks) docs.push_back({c.chunk_id, c.text});
    return build(docs, dict, opts);
}

std::optional<std::uint32_t> InvertedIndex::doc_number(std::string_view id) const {
    auto it = std::lower_bound(ids_.begin(), ids_.end(), id,
                               [](const std::string& a, std::string_view b) { return a < b; });
    if (it == ids_.end() || *it != id) return std::nullopt;
    return static_cast<std::uint32_t>(it - ids_.begin());
}

const std::vector<InvertedIndex::Posting>& InvertedIndex::postings(const std::string& term) const {
    static const std::vector<Posting> empty;
    auto it = postings_.find(term);
    return it == postings_.end() ? empty : it->second;
}

double InvertedIndex::idf(std::size_t df) const {
    const double n = static_cast<double>(ids_.size());
    const double d = static_cast<double>(df);
    return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

void InvertedIndex::save(std::ostream& out) const {
    detail::BinaryWriter w(out);
    w.raw(std::string_view(kMagic, 4));
    w.put<std::uint8_t>(kVersion);
    w.put<std::uint8_t>(static_cast<std::uint8_t>((opts_.remove_stopwords ? 1 : 0) | (opts_.stem ? 2 : 0)));
    w.put<std::uint64_t>(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        w.str(ids_[i]);
        w.put<std::uint32_t>(lengths_[i]);
    }
    w.put<std::uint64_t>(postings_.size());
    for (const auto& [term, list] : postings_) {
        w.str(term);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(list.size()));
        for (const auto& p : list) {
            w.put<std::uint32_t>(p.doc);
            w.put<std::uint32_t>(p.tf);
        }
    }
    if (!out) throw IoError("failed writing lexical index snapshot");
}

InvertedIndex InvertedIndex::load(std::istream& in) {
    detail::BinaryReader r(in);
    if (r.raw(4) != std::string_view(kMagic, 4)) throw IoError("not a lexical index snapshot");
    const auto version = r.get<std::uint8_t>();
    if (version != kVersion) {
        throw IoError("unsupported lexical index snapshot version " + std::to_string(version));
    }
    InvertedIndex index;
    const auto flags = r.get<std::uint8_t>();
    index.opts_.remove_stopwords = (flags & 1) != 0;
    index.opts_.stem = (flags & 2) != 0;
    const auto n = r.get<std::uint64_t>();
    double total = 0.0;
    for (std::uint64_t i = 0; i < n; ++i) {
        index.ids_.push_back(r.str());
        index.lengths_.push_back(r.get<std::uint32_t>());
        total += index.lengths_.back();
        if (i > 0 && !(index.ids_[i - 1] < index.ids_[i])) throw IoError("snapshot ids out of order");
    }
    const auto vocab = r.get<std::uint64_t>();
    for (std::uint64_t t = 0; t < vocab; ++t) {
        auto term = r.str();
        const auto count = r.get<std::uint32_t>();
        std::vector<Posting> list(count);
        for (auto& p : list) {
            p.doc = r.get<std::uint32_t>();
            p.tf = r.get<std::uint32_t>();
            if (p.doc >= n) throw IoError("snapshot posting references unknown document");
        }
        index.postings_.emplace(std::move(term), std::move(list));
    }
    index.avgdl_ = n == 0 ? 0.0 : total / static_cast<double>(n);
    return index;
}

bool InvertedIndex::operator==(const InvertedIndex& other) const {
    if (ids_ != other.ids_ || lengths_ != other.lengths_ || postings_.size() != other.postings_.size()) {
        return false;
    }
    if (opts_.stem != other.opts_.stem || opts_.remove_stopwords != other.opts_.remove_stopwords) return false;
    for (const auto& [term, list] : postings_) {
        const auto& o = other.postings(term);
        if (o.size() != list.size()) return false;
        for (std::size_t i = 0; i < list.size(); ++i) {
            if (o[i].doc != list[i].doc || o[i].tf != list[i].tf) return false;
        }
    }
    return true;
}

double bm25_score(const std::vector<std::string>& query_tokens, std::string_view chunk_id,
                  const InvertedIndex& index, const Bm25Params& params) {
    const auto doc = index.doc_number(chunk_id);
    if (!doc) throw LookupError("chunk_id '" + std::string(chunk_id) + "' not in lexical index");
    const double dl = index.doc_lengths()[*doc];
    double score = 0.0;
    for (const auto& term : distinct(query_tokens)) {
        const auto& list = index.postings(term);
        auto it = std::lower_bound(list.begin(), list.end(), *doc,
                                   [](const InvertedIndex::Posting& p, std::uint32_t d) { return p.doc < d; });
        if (it == list.end() || it->doc != *doc) continue;
        score += term_weight(index.idf(list.size()), it->tf, dl, index.avg_doc_length(), params);
    }
    return score;
}

std::vector<ScoredId> search_sparse(std::string_view query, const InvertedIndex& index,
                                    const DomainDictionary& dict, const Bm25Params& params,
                                    std::size_t top_k) {
    if (top_k == 0) throw InputError("top_k must be >= 1");
    const auto terms = distinct(tokenize(query, dict, index.tokenizer_options()));
    std::unordered_map<std::uint32_t, double> acc;
    for (const auto& term : terms) {
        const auto& list = index.postings(term);
        if (list.empty()) continue;
        const double idf = index.idf(list.size());
        for (const auto& p : list) {
            acc[p.doc] += term_weight(idf, p.tf, index.doc_lengths()[p.doc], index.avg_doc_length(), params);
        }
    }
    std::vector<std::pair<std::uint32_t, double>> hits(acc.begin(), acc.end());
    // Document numbers follow chunk_id order, so ascending number is the id tie-break.
    auto cmp = [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    };
    const std::size_t k = std::min(top_k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), cmp);
    std::vector<ScoredId> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back({index.ids()[hits[i].first], hits[i].second});
    return out;
}

}  // namespace reqrag
