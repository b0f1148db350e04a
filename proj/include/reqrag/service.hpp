#pragma once

#include "reqrag/pipeline.hpp"

#include <memory>
#include <string>

namespace reqrag {

inline constexpr const char* kVersion = "0.1.0";

// JSON over HTTP front door for a loaded pipeline.
//
//   POST /query            {"query": "...", "flags": {...}}
//   POST /ingest           one corpus record; chunks are staged, not indexed
//   GET  /provenance/{id}
//   GET  /health
//   GET  /metrics
class Service {
public:
    explicit Service(RagPipeline& pipeline);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Binds and serves until stop(). Returns false if the bind failed.
    bool listen(const std::string& host, int port);
    // Binds to an ephemeral port; call listen_after_bind() on another thread.
    int bind_any_port(const std::string& host);
    bool listen_after_bind();
    void stop();
    void wait_until_ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Response body shared by the service and `query --json`.
std::string answer_to_json(const PipelineAnswer& answer, const ChunkCatalog& catalog);

}  // namespace reqrag
