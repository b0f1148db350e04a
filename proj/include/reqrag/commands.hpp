#pragma once

#include "reqrag/config.hpp"
#include "reqrag/eval.hpp"
#include "reqrag/pipeline.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace reqrag {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Each command writes its report to `out` and diagnostics to `err`, and
// returns the exit code.
int cmd_ingest(const SystemConfig& cfg, const std::filesystem::path& corpus, bool json, std::ostream& out,
               std::ostream& err);
int cmd_index(const SystemConfig& cfg, bool dense_only, std::ostream& out, std::ostream& err);
int cmd_query(const SystemConfig& cfg, const std::string& query, const QueryFlags& flags, bool json,
              std::ostream& out, std::ostream& err);

// Batch retrieval: `query_id<TAB>query` lines in, run file (and optionally
// per-query stage timings) out.
int cmd_run(const SystemConfig& cfg, const std::filesystem::path& queries, const QueryFlags& flags,
            const std::filesystem::path& run_out, const std::optional<std::filesystem::path>& timings_out,
            std::ostream& out, std::ostream& err);

struct EvalOptions {
    std::vector<std::filesystem::path> runs;  // one or two
    std::filesystem::path qrels;
    std::optional<std::filesystem::path> timings;
    int threshold = eval::kDefaultRelevanceThreshold;
    bool json = false;
};
int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err);

// Records come from a `year<TAB>cat;cat` file, or from the chunk store when
// `records` is empty (one record per document).
int cmd_evolution(const SystemConfig& cfg, const std::optional<std::filesystem::path>& records, int start_year,
                  int end_year, bool json, std::ostream& out, std::ostream& err);

int cmd_provenance(const SystemConfig& cfg, const std::string& record_id, bool verify, std::ostream& out,
                   std::ostream& err);
int cmd_ledger(const SystemConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_apply_pending(const SystemConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_serve(const SystemConfig& cfg, std::ostream& out, std::ostream& err);

// Stage timings file: `query_id<TAB>dense<TAB>sparse<TAB>fuse<TAB>rerank<TAB>total` (ms).
void write_timings_line(std::ostream& out, const std::string& query_id, const StageTimings& t);
std::vector<StageTimings> parse_timings(std::istream& in);

// Aligned-column and JSON renderings of reports.
std::string render_metrics_text(const std::vector<std::pair<std::string, eval::MetricsReport>>& reports);
std::string render_evolution_text(const eval::EvolutionTable& table);

}  // namespace reqrag
