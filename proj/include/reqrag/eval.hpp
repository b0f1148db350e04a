#pragma once

#include "reqrag/corpus.hpp"
#include "reqrag/fusion.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace reqrag::eval {

// query_id -> (chunk_id -> grade 0..4)
struct Qrels {
    std::map<std::string, std::map<std::string, int>> judgments;
};

struct RankedEntry {
    std::string chunk_id;
    double score = 0.0;
};

// query_id -> ranking in claimed order
struct RunFile {
    std::map<std::string, std::vector<RankedEntry>> rankings;
};

// `query_id<TAB>chunk_id<TAB>grade`; throws ParseError with the line number.
Qrels parse_qrels(std::istream& in);
// `query_id<TAB>chunk_id<TAB>rank<TAB>score[<TAB>extra...]`; entries are
// ordered by rank. Throws ParseError on malformed lines, duplicate chunk ids
// within a query, or repeated ranks.
RunFile parse_run(std::istream& in);

inline constexpr int kDefaultRelevanceThreshold = 3;

// Per-query values; throws LookupError naming a run query absent from qrels.
std::map<std::string, double> reciprocal_ranks(const RunFile& run, const Qrels& qrels,
                                               int threshold = kDefaultRelevanceThreshold);

double mrr(const RunFile& run, const Qrels& qrels, int threshold = kDefaultRelevanceThreshold);
double precision_at_k(const RunFile& run, const Qrels& qrels, std::size_t k = 5,
                      int threshold = kDefaultRelevanceThreshold);
double ndcg_at_k(const RunFile& run, const Qrels& qrels, std::size_t k = 10);

struct MannWhitneyResult {
    double u = 0.0;        // min(U_a, U_b)
    double u_a = 0.0;      // pairs with a > b, ties counted 1/2
    double p_value = 1.0;  // two-sided
    bool exact = false;
};

// Rank-sum U with midranks. Two-sided p is exact (permutation distribution,
// ties included) when min(n_a, n_b) <= 8, otherwise the tie-corrected normal
// approximation with continuity correction. Throws InputError on an empty sample.
MannWhitneyResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b);

struct StageSummary {
    double mean = 0.0;
    double p50 = 0.0;
    double p95 = 0.0;
};

struct LatencySummary {
    std::size_t count = 0;
    StageSummary dense, sparse, fuse, rerank, total;
};

// Nearest-rank percentile of an unsorted sample; throws InputError when empty.
double percentile_nearest_rank(std::vector<double> values, double pct);
LatencySummary latency_stats(const std::vector<StageTimings>& timings);

struct RequirementRecord {
    int year = 0;
    std::vector<std::string> categories;
};

struct EvolutionRow {
    std::string category;
    std::size_t count_start = 0;
    std::size_t count_end = 0;
    std::string change;  // "-55%", "+1,800%", "New"
};

struct EvolutionTable {
    int start_year = 0;
    int end_year = 0;
    std::vector<EvolutionRow> rows;  // total row first
};

inline constexpr const char* kTotalRowLabel = "Total Requirements";

// Decimal with thousands separators: 1487 -> "1,487".
std::string format_count(std::size_t n);

// round((end - start) / start * 100) with a sign and thousands separators;
// "New" when start == 0 < end, "0%" when both are 0.
std::string format_change(std::size_t start, std::size_t end);

// Counts records per category in the two years. The total row counts records,
// so a record tagged with several categories contributes once to it. Rows
// after the total: categories present at the start year in descending start
// count, then new categories in descending end count (ties by name).
// Throws InputError naming a year with no records.
EvolutionTable evolution_report(const std::vector<RequirementRecord>& records, int start_year, int end_year);
std::vector<RequirementRecord> requirement_records(const std::vector<ChunkMetadata>& metadata);

// `year<TAB>category[;category...]`
std::vector<RequirementRecord> parse_requirement_records(std::istream& in);

struct MetricsReport {
    std::size_t queries = 0;
    double mrr = 0.0;
    double p_at_5 = 0.0;
    double ndcg_at_10 = 0.0;
};

MetricsReport evaluate(const RunFile& run, const Qrels& qrels, int threshold = kDefaultRelevanceThreshold);

}  // namespace reqrag::eval
