#pragma once

#include "reqrag/tokenizer.hpp"

#include <array>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace reqrag {

inline constexpr std::size_t kEmbeddingDim = 512;

// Unit-norm 512-d vector. Construction normalizes and rejects zero input.
class EmbeddingVector {
public:
    using Storage = std::array<float, kEmbeddingDim>;

    // Throws InputError if `values` has the wrong dimension, a non-finite entry, or zero norm.
    static EmbeddingVector normalized(std::span<const double> values);
    static EmbeddingVector normalized(std::span<const float> values);

    // Accepts values that are already unit-norm within 1e-6, e.g. from a snapshot.
    static EmbeddingVector from_unit(std::span<const float> values);

    std::span<const float, kEmbeddingDim> values() const noexcept { return values_; }
    double norm() const noexcept;

    bool operator==(const EmbeddingVector&) const = default;

private:
    EmbeddingVector() = default;
    Storage values_{};
};

// Dot product with double accumulation; equals cosine similarity for unit vectors.
double dot(std::span<const float> a, std::span<const float> b) noexcept;
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) noexcept;

struct ProviderDescriptor {
    std::string provider_id;
    std::string model_id;
    std::size_t dimension = kEmbeddingDim;
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    virtual const ProviderDescriptor& descriptor() const = 0;

    // Throws InputError on empty text, ProviderError on transport failure.
    virtual EmbeddingVector embed(std::string_view text) const = 0;

    // Element i equals embed(texts[i]). Throws BatchError listing every failing index.
    virtual std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const;
};

// Offline deterministic provider: hashed signed bag of tokens.
//
// Each token (after optional synonym canonicalization) hashes with FNV-1a to
// one of 512 buckets and a sign; the bucket vector is L2-normalized. Text with
// no tokens, or whose contributions cancel, maps to the basis vector chosen by
// hashing the whole text.
class HashingEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit HashingEmbeddingProvider(DomainDictionary dict = {},
                                      std::map<std::string, std::string> synonyms = {},
                                      std::string model_id = "hashing-bow-512");

    const ProviderDescriptor& descriptor() const override { return descriptor_; }
    EmbeddingVector embed(std::string_view text) const override;

    // Bucket and sign for a token, after synonym mapping.
    struct Slot {
        std::size_t bucket;
        float sign;
    };
    Slot slot_for(std::string_view token) const;
    const std::string& canonical(const std::string& token) const;

private:
    ProviderDescriptor descriptor_;
    DomainDictionary dict_;
    std::map<std::string, std::string> synonyms_;
};

// Remote provider reached over HTTP.
// POST {endpoint_path} {"model_id": ..., "texts": [...]} -> {"vectors": [[...], ...]}
class HttpEmbeddingProvider final : public EmbeddingProvider {
public:
    HttpEmbeddingProvider(std::string provider_id, std::string model_id, std::string base_url,
                          std::string path = "/embed", std::string api_key = {},
                          int timeout_seconds = 30);

    const ProviderDescriptor& descriptor() const override { return descriptor_; }
    EmbeddingVector embed(std::string_view text) const override;
    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const override;

private:
    std::vector<EmbeddingVector> request(const std::vector<std::string>& texts) const;

    ProviderDescriptor descriptor_;
    std::string base_url_;
    std::string path_;
    std::string api_key_;
    int timeout_seconds_;
    mutable std::mutex mutex_;
};

std::uint64_t fnv1a64(std::string_view bytes) noexcept;

}  // namespace reqrag
