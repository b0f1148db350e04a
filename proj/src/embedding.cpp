#include "reqrag/embedding.hpp"

#include "reqrag/error.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cmath>

namespace reqrag {

namespace {

template <typename T>
EmbeddingVector::Storage normalize_into(std::span<const T> values) {
    if (values.size() != kEmbeddingDim) {
        throw InputError("embedding dimension " + std::to_string(values.size()) + ", expected " +
                         std::to_string(kEmbeddingDim));
    }
    double sq = 0.0;
    for (T v : values) {
        if (!std::isfinite(static_cast<double>(v))) throw InputError("embedding has a non-finite entry");
        sq += static_cast<double>(v) * static_cast<double>(v);
    }
    if (!(sq > 0.0)) throw InputError("zero vector cannot be normalized");
    const double inv = 1.0 / std::sqrt(sq);
    EmbeddingVector::Storage out{};
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
        out[i] = static_cast<float>(static_cast<double>(values[i]) * inv);
    }
    return out;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

EmbeddingVector EmbeddingVector::normalized(std::span<const double> values) {
    EmbeddingVector v;
    v.values_ = normalize_into(values);
    return v;
}

EmbeddingVector EmbeddingVector::normalized(std::span<const float> values) {
    EmbeddingVector v;
    v.values_ = normalize_into(values);
    return v;
}

EmbeddingVector EmbeddingVector::from_unit(std::span<const float> values) {
    if (values.size() != kEmbeddingDim) throw InputError("embedding dimension mismatch");
    EmbeddingVector v;
    std::copy(values.begin(), values.end(), v.values_.begin());
    if (std::abs(v.norm() - 1.0) > 1e-6) throw InputError("vector is not unit-norm");
    return v;
}

double EmbeddingVector::norm() const noexcept { return std::sqrt(dot(values_, values_)); }

double dot(std::span<const float> a, std::span<const float> b) noexcept {
    // Eight independent partial sums keep the loop vectorizable without
    // reassociation flags while staying deterministic.
    double acc[8] = {};
    const std::size_t n = a.size();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        for (std::size_t j = 0; j < 8; ++j) {
            acc[j] += static_cast<double>(a[i + j]) * static_cast<double>(b[i + j]);
        }
    }
    for (; i < n; ++i) acc[0] += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) noexcept {
    return dot(a.values(), b.values());
}

std::vector<EmbeddingVector> EmbeddingProvider::embed_batch(const std::vector<std::string>& texts) const {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    std::vector<std::size_t> failed;
    std::string first_error;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        try {
            out.push_back(embed(texts[i]));
        } catch (const Error& e) {
            if (failed.empty()) first_error = e.what();
            failed.push_back(i);
        }
    }
    if (!failed.empty()) {
        std::string msg = "embedding failed for " + std::to_string(failed.size()) + " of " +
                          std::to_string(texts.size()) + " texts (indices";
        for (std::size_t i : failed) msg += " " + std::to_string(i);
        throw BatchError(std::move(failed), msg + "): " + first_error);
    }
    return out;
}

HashingEmbeddingProvider::HashingEmbeddingProvider(DomainDictionary dict,
                                                   std::map<std::string, std::string> synonyms,
                                                   std::string model_id)
    : descriptor_{"builtin", std::move(model_id), kEmbeddingDim},
      dict_(std::move(dict)),
      synonyms_(std::move(synonyms)) {}

const std::string& HashingEmbeddingProvider::canonical(const std::string& token) const {
    auto it = synonyms_.find(token);
    return it == synonyms_.end() ? token : it->second;
}

HashingEmbeddingProvider::Slot HashingEmbeddingProvider::slot_for(std::string_view token) const {
    const std::string& c = canonical(std::string(token));
    const std::uint64_t h = fnv1a64(c);
    return {static_cast<std::size_t>(h % kEmbeddingDim), (h >> 63) != 0 ? -1.0f : 1.0f};
}

EmbeddingVector HashingEmbeddingProvider::embed(std::string_view text) const {
    if (text.empty()) throw InputError("cannot embed empty text");
    std::array<double, kEmbeddingDim> acc{};
    for (const auto& token : tokenize(text, dict_)) {
        const Slot s = slot_for(token);
        acc[s.bucket] += s.sign;
    }
    bool any = false;
    for (double v : acc) any = any || v != 0.0;
    if (!any) {
        acc.fill(0.0);
        acc[fnv1a64(text) % kEmbeddingDim] = 1.0;
    }
    return EmbeddingVector::normalized(std::span<const double>(acc));
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string provider_id, std::string model_id,
                                             std::string base_url, std::string path, std::string api_key,
                                             int timeout_seconds)
    : descriptor_{std::move(provider_id), std::move(model_id), kEmbeddingDim},
      base_url_(std::move(base_url)),
      path_(std::move(path)),
      api_key_(std::move(api_key)),
      timeout_seconds_(timeout_seconds) {}

EmbeddingVector HttpEmbeddingProvider::embed(std::string_view text) const {
    if (text.empty()) throw InputError("cannot embed empty text");
    return request({std::string(text)}).front();
}

std::vector<EmbeddingVector> HttpEmbeddingProvider::embed_batch(const std::vector<std::string>& texts) const {
    if (texts.empty()) return {};
    std::vector<std::size_t> empty;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (texts[i].empty()) empty.push_back(i);
    }
    if (!empty.empty()) throw BatchError(std::move(empty), "batch contains empty texts");
    try {
        return request(texts);
    } catch (const ProviderError& e) {
        std::vector<std::size_t> all(texts.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        throw BatchError(std::move(all), e.what());
    }
}

std::vector<EmbeddingVector> HttpEmbeddingProvider::request(const std::vector<std::string>& texts) const {
    const auto& id = descriptor_.provider_id;
    nlohmann::json body{{"model_id", descriptor_.model_id}, {"texts", texts}};
    httplib::Result res;
    {
        std::lock_guard lock(mutex_);
        httplib::Client client(base_url_);
        client.set_connection_timeout(timeout_seconds_);
        client.set_read_timeout(timeout_seconds_);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        res = client.Post(path_, headers, body.dump(), "application/json");
    }
    if (!res) throw ProviderError(id, "transport failure: " + httplib::to_string(res.error()));
    if (res->status != 200) throw ProviderError(id, "HTTP status " + std::to_string(res->status));
    std::vector<EmbeddingVector> out;
    try {
        const auto j = nlohmann::json::parse(res->body);
        const auto& vectors = j.at("vectors");
        if (vectors.size() != texts.size()) {
            throw ProviderError(id, "expected " + std::to_string(texts.size()) + " vectors, got " +
                                        std::to_string(vectors.size()));
        }
        for (const auto& v : vectors) {
            const auto values = v.get<std::vector<double>>();
            out.push_back(EmbeddingVector::normalized(std::span<const double>(values)));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(id, std::string("malformed response: ") + e.what());
    } catch (const InputError& e) {
        throw ProviderError(id, std::string("invalid vector: ") + e.what());
    }
    return out;
}

}  // namespace reqrag
