#include "reqrag/hnsw.hpp"

#include "detail/binary_io.hpp"
#include "reqrag/error.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <queue>

namespace reqrag {

namespace {

constexpr char kMagic[4] = {'R', 'Q', 'H', 'N'};
constexpr std::uint8_t kVersion = 1;

// Uniform in (0, 1], built from raw engine output so the sequence is
// identical across standard library implementations.
double uniform_open_closed(std::mt19937_64& rng) {
    return static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;
}

std::vector<ScoredId> to_scored(const std::vector<std::pair<double, std::uint32_t>>& hits,
                                const std::vector<std::string>& ids, std::size_t k) {
    std::vector<ScoredId> out;
    out.reserve(hits.size());
    for (const auto& [d, n] : hits) out.push_back({ids[n], 1.0 - d});
    std::sort(out.begin(), out.end(), [](const ScoredId& a, const ScoredId& b) {
        return a.score != b.score ? a.score > b.score : a.id < b.id;
    });
    if (out.size() > k) out.resize(k);
    return out;
}

}  // namespace

void HnswParams::validate() const {
    if (M < 2) throw ValidationError("hnsw.M", "must be >= 2");
    if (ef_construction < M) throw ValidationError("hnsw.ef_construction", "must be >= M");
    if (ef_search < 1) throw ValidationError("hnsw.ef_search", "must be >= 1");
    if (max_level_scale < 0.0) throw ValidationError("hnsw.max_level_scale", "must be >= 0");
}

double HnswParams::level_scale() const {
    return max_level_scale > 0.0 ? max_level_scale : 1.0 / std::log(static_cast<double>(M));
}

HnswIndex::HnswIndex(HnswParams params) : params_(params), rng_(params.seed) { params_.validate(); }

std::optional<std::uint32_t> HnswIndex::node(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::uint32_t> HnswIndex::entry_point() const {
    if (ids_.empty()) return std::nullopt;
    return entry_;
}

std::span<const float> HnswIndex::vector_of(std::uint32_t node) const {
    return {data_.data() + static_cast<std::size_t>(node) * kEmbeddingDim, kEmbeddingDim};
}

double HnswIndex::distance(std::span<const float> q, std::uint32_t node) const {
    return 1.0 - dot(q, vector_of(node));
}

double HnswIndex::distance(std::uint32_t a, std::uint32_t b) const {
    return 1.0 - dot(vector_of(a), vector_of(b));
}

int HnswIndex::sample_level() {
    const double u = uniform_open_closed(rng_);
    return static_cast<int>(std::floor(-std::log(u) * params_.level_scale()));
}

std::uint32_t HnswIndex::greedy_descend(std::span<const float> q, int from_layer, int to_layer) const {
    std::uint32_t cur = entry_;
    double cur_d = distance(q, cur);
    for (int layer = from_layer; layer > to_layer; --layer) {
        bool changed = true;
        while (changed) {
            changed = false;
            for (std::uint32_t nb : neighbors(cur, layer)) {
                const double d = distance(q, nb);
                if (d < cur_d || (d == cur_d && nb < cur)) {
                    cur_d = d;
                    cur = nb;
                    changed = true;
                }
            }
        }
    }
    return cur;
}

std::vector<HnswIndex::Candidate> HnswIndex::search_layer(std::span<const float> q, std::uint32_t entry,
                                                          std::size_t ef, int layer) const {
    std::vector<char> visited(ids_.size(), 0);
    std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> frontier;
    std::priority_queue<Candidate> best;
    const double d0 = distance(q, entry);
    frontier.emplace(d0, entry);
    best.emplace(d0, entry);
    visited[entry] = 1;
    while (!frontier.empty()) {
        const auto [d, n] = frontier.top();
        if (d > best.top().first && best.size() >= ef) break;
        frontier.pop();
        for (std::uint32_t nb : neighbors(n, layer)) {
            if (visited[nb]) continue;
            visited[nb] = 1;
            const double dn = distance(q, nb);
            if (best.size() < ef || dn < best.top().first) {
                frontier.emplace(dn, nb);
                best.emplace(dn, nb);
                if (best.size() > ef) best.pop();
            }
        }
    }
    std::vector<Candidate> out;
    out.reserve(best.size());
    while (!best.empty()) {
        out.push_back(best.top());
        best.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
}

std::vector<std::uint32_t> HnswIndex::select_neighbors(const std::vector<Candidate>& sorted,
                                                       std::size_t m) const {
    // Keep a candidate only if it is closer to the base than to every neighbor
    // already kept; this spreads links across directions.
    std::vector<std::uint32_t> kept;
    kept.reserve(m);
    for (const auto& [d, c] : sorted) {
        if (kept.size() >= m) break;
        bool diverse = true;
        for (std::uint32_t s : kept) {
            if (distance(c, s) < d) {
                diverse = false;
                break;
            }
        }
        if (diverse) kept.push_back(c);
    }
    return kept;
}

void HnswIndex::insert(const std::string& id, const EmbeddingVector& vector) {
    if (frozen_) throw Error("HNSW index is frozen; rebuild to add vectors");
    if (by_id_.count(id)) throw ValidationError("id", "duplicate vector id '" + id + "'");

    const auto node = static_cast<std::uint32_t>(ids_.size());
    const int level = sample_level();
    ids_.push_back(id);
    by_id_.emplace(id, node);
    const auto values = vector.values();
    data_.insert(data_.end(), values.begin(), values.end());
    links_.emplace_back(static_cast<std::size_t>(level) + 1);

    if (top_layer_ < 0) {
        entry_ = node;
        top_layer_ = level;
        return;
    }

    const auto q = vector_of(node);
    std::uint32_t cur = greedy_descend(q, top_layer_, level);
    for (int layer = std::min(level, top_layer_); layer >= 0; --layer) {
        auto found = search_layer(q, cur, params_.ef_construction, layer);
        auto chosen = select_neighbors(found, params_.M);
        links_[node][static_cast<std::size_t>(layer)] = chosen;
        for (std::uint32_t nb : chosen) {
            auto& list = links_[nb][static_cast<std::size_t>(layer)];
            list.push_back(node);
            if (list.size() > cap(layer)) {
                std::vector<Candidate> cands;
                cands.reserve(list.size());
                for (std::uint32_t c : list) cands.emplace_back(distance(nb, c), c);
                std::sort(cands.begin(), cands.end());
                list = select_neighbors(cands, cap(layer));
            }
        }
        cur = found.front().second;
    }
    if (level > top_layer_) {
        top_layer_ = level;
        entry_ = node;
    }
}

std::vector<ScoredId> HnswIndex::search_knn(const EmbeddingVector& query, std::size_t k) const {
    return search_knn(query, k, params_.ef_search);
}

std::vector<ScoredId> HnswIndex::search_knn(const EmbeddingVector& query, std::size_t k,
                                            std::size_t ef) const {
    if (k == 0) throw InputError("k must be >= 1");
    if (ids_.empty()) return {};
    const auto q = query.values();
    const std::uint32_t start = greedy_descend(q, top_layer_, 0);
    auto found = search_layer(q, start, std::max(ef, k), 0);
    return to_scored(found, ids_, k);
}

HnswIndex::InvariantReport HnswIndex::check_invariants() const {
    InvariantReport report;
    const std::size_t n = ids_.size();
    for (std::uint32_t v = 0; v < n; ++v) {
        for (int layer = 0; layer <= level_of(v); ++layer) {
            const auto& nbs = neighbors(v, layer);
            if (nbs.size() > cap(layer)) ++report.degree_violations;
            for (std::uint32_t nb : nbs) {
                if (nb >= n || nb == v) {
                    ++report.dangling_links;
                } else if (level_of(nb) < layer) {
                    ++report.layer_violations;
                }
            }
        }
    }
    if (n > 0 && report.dangling_links == 0) {
        std::vector<char> seen(n, 0);
        std::deque<std::uint32_t> queue{entry_};
        seen[entry_] = 1;
        std::size_t reached = 1;
        while (!queue.empty()) {
            const auto v = queue.front();
            queue.pop_front();
            for (std::uint32_t nb : neighbors(v, 0)) {
                if (!seen[nb]) {
                    seen[nb] = 1;
                    ++reached;
                    queue.push_back(nb);
                }
            }
        }
        report.unreachable = n - reached;
    }
    return report;
}

void HnswIndex::save(std::ostream& out) const {
    detail::BinaryWriter w(out);
    w.raw(std::string_view(kMagic, 4));
    w.put<std::uint8_t>(kVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(kEmbeddingDim));
    w.put<std::uint64_t>(params_.M);
    w.put<std::uint64_t>(params_.ef_construction);
    w.put<std::uint64_t>(params_.ef_search);
    w.put<double>(params_.max_level_scale);
    w.put<std::uint64_t>(params_.seed);
    w.put<std::uint64_t>(ids_.size());
    w.put<std::int32_t>(top_layer_);
    w.put<std::uint32_t>(entry_);
    for (std::uint32_t v = 0; v < ids_.size(); ++v) {
        w.str(ids_[v]);
        for (float x : vector_of(v)) w.put<float>(x);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(links_[v].size()));
        for (const auto& layer : links_[v]) {
            w.put<std::uint32_t>(static_cast<std::uint32_t>(layer.size()));
            for (std::uint32_t nb : layer) w.put<std::uint32_t>(nb);
        }
    }
    if (!out) throw IoError("failed writing vector index snapshot");
}

HnswIndex HnswIndex::load(std::istream& in) {
    detail::BinaryReader r(in);
    if (r.raw(4) != std::string_view(kMagic, 4)) throw IoError("not a vector index snapshot");
    const auto version = r.get<std::uint8_t>();
    if (version != kVersion) {
        throw IoError("unsupported vector index snapshot version " + std::to_string(version));
    }
    if (r.get<std::uint32_t>() != kEmbeddingDim) throw IoError("snapshot dimension mismatch");
    HnswParams p;
    p.M = r.get<std::uint64_t>();
    p.ef_construction = r.get<std::uint64_t>();
    p.ef_search = r.get<std::uint64_t>();
    p.max_level_scale = r.get<double>();
    p.seed = r.get<std::uint64_t>();
    HnswIndex index(p);
    const auto n = r.get<std::uint64_t>();
    index.top_layer_ = r.get<std::int32_t>();
    index.entry_ = r.get<std::uint32_t>();
    index.data_.reserve(n * kEmbeddingDim);
    for (std::uint64_t v = 0; v < n; ++v) {
        auto id = r.str();
        for (std::size_t i = 0; i < kEmbeddingDim; ++i) index.data_.push_back(r.get<float>());
        const auto layers = r.get<std::uint32_t>();
        if (layers == 0) throw IoError("snapshot node without layers");
        std::vector<std::vector<std::uint32_t>> links(layers);
        for (auto& layer : links) {
            layer.resize(r.get<std::uint32_t>());
            for (auto& nb : layer) {
                nb = r.get<std::uint32_t>();
                if (nb >= n) throw IoError("snapshot link references unknown node");
            }
        }
        if (!index.by_id_.emplace(id, static_cast<std::uint32_t>(v)).second) {
            throw IoError("snapshot contains duplicate id '" + id + "'");
        }
        index.ids_.push_back(std::move(id));
        index.links_.push_back(std::move(links));
    }
    if (n > 0 && (index.entry_ >= n || index.top_layer_ != index.level_of(index.entry_))) {
        throw IoError("snapshot entry point is inconsistent");
    }
    index.frozen_ = true;
    return index;
}

std::vector<ScoredId> exact_knn(const std::map<std::string, EmbeddingVector>& vectors,
                                const EmbeddingVector& query, std::size_t k) {
    if (k == 0) throw InputError("k must be >= 1");
    std::vector<ScoredId> all;
    all.reserve(vectors.size());
    for (const auto& [id, v] : vectors) all.push_back({id, cosine_similarity(query, v)});
    auto cmp = [](const ScoredId& a, const ScoredId& b) {
        return a.score != b.score ? a.score > b.score : a.id < b.id;
    };
    const std::size_t m = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(m), all.end(), cmp);
    all.resize(m);
    return all;
}

}  // namespace reqrag
