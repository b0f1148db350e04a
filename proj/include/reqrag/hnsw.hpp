#pragma once

#include "reqrag/embedding.hpp"
#include "reqrag/lexical_index.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace reqrag {

struct HnswParams {
    std::size_t M = 16;
    std::size_t ef_construction = 200;
    std::size_t ef_search = 100;
    double max_level_scale = 0.0;  // 0 selects 1/ln(M)
    std::uint64_t seed = 42;

    void validate() const;
    double level_scale() const;
};

// Hierarchical navigable small-world graph over unit vectors, distance 1 - cosine.
//
// Construction is single-writer. After freeze() (or load()) the index is
// immutable and search_knn may be called from any number of threads.
class HnswIndex {
public:
    explicit HnswIndex(HnswParams params = {});

    // Throws ValidationError on a duplicate id, Error if the index is frozen.
    void insert(const std::string& id, const EmbeddingVector& vector);
    void freeze() noexcept { frozen_ = true; }
    bool frozen() const noexcept { return frozen_; }

    // Descending similarity, ties by ascending id; length min(k, size()).
    // The beam width is max(ef_search, k).
    std::vector<ScoredId> search_knn(const EmbeddingVector& query, std::size_t k) const;
    std::vector<ScoredId> search_knn(const EmbeddingVector& query, std::size_t k, std::size_t ef) const;

    std::size_t size() const noexcept { return ids_.size(); }
    const HnswParams& params() const noexcept { return params_; }
    const std::vector<std::string>& ids() const noexcept { return ids_; }
    std::optional<std::uint32_t> node(std::string_view id) const;
    std::optional<std::uint32_t> entry_point() const;
    int top_layer() const noexcept { return top_layer_; }
    int level_of(std::uint32_t node) const { return static_cast<int>(links_[node].size()) - 1; }
    const std::vector<std::uint32_t>& neighbors(std::uint32_t node, int layer) const {
        return links_[node][static_cast<std::size_t>(layer)];
    }
    std::span<const float> vector_of(std::uint32_t node) const;

    struct InvariantReport {
        std::size_t degree_violations = 0;
        std::size_t dangling_links = 0;
        std::size_t layer_violations = 0;  // link to a node that does not exist on that layer
        std::size_t unreachable = 0;       // layer-0 nodes not reachable from the entry point
        bool ok() const noexcept {
            return degree_violations == 0 && dangling_links == 0 && layer_violations == 0 && unreachable == 0;
        }
    };
    InvariantReport check_invariants() const;

    void save(std::ostream& out) const;
    static HnswIndex load(std::istream& in);

private:
    using Candidate = std::pair<double, std::uint32_t>;  // (distance, node)

    double distance(std::span<const float> q, std::uint32_t node) const;
    double distance(std::uint32_t a, std::uint32_t b) const;
    int sample_level();
    std::uint32_t greedy_descend(std::span<const float> q, int from_layer, int to_layer) const;
    std::vector<Candidate> search_layer(std::span<const float> q, std::uint32_t entry, std::size_t ef,
                                        int layer) const;
    std::vector<std::uint32_t> select_neighbors(const std::vector<Candidate>& sorted,
                                                std::size_t m) const;
    std::size_t cap(int layer) const noexcept { return layer == 0 ? 2 * params_.M : params_.M; }

    HnswParams params_;
    std::mt19937_64 rng_;
    std::vector<float> data_;
    std::vector<std::string> ids_;
    std::unordered_map<std::string, std::uint32_t> by_id_;
    std::vector<std::vector<std::vector<std::uint32_t>>> links_;
    std::uint32_t entry_ = 0;
    int top_layer_ = -1;
    bool frozen_ = false;
};

// Exact top-k by cosine similarity, ties by ascending id.
std::vector<ScoredId> exact_knn(const std::map<std::string, EmbeddingVector>& vectors,
                                const EmbeddingVector& query, std::size_t k);

}  // namespace reqrag
