#include "reqrag/eval.hpp"

#include "reqrag/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <set>
#include <sstream>

namespace reqrag::eval {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t tab = line.find('\t', start);
        out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
    return out;
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    std::istringstream in(s);
    in.imbue(std::locale::classic());
    in >> out;
    return !in.fail() && in.peek() == std::char_traits<char>::eof() && std::isfinite(out);
}

const std::map<std::string, int>& judgments_for(const Qrels& qrels, const std::string& query_id) {
    auto it = qrels.judgments.find(query_id);
    if (it == qrels.judgments.end()) throw LookupError("query '" + query_id + "' has no relevance judgments");
    return it->second;
}

int grade_of(const std::map<std::string, int>& j, const std::string& chunk_id) {
    auto it = j.find(chunk_id);
    return it == j.end() ? 0 : it->second;
}

template <typename PerQuery>
double mean_over_run(const RunFile& run, const Qrels& qrels, PerQuery per_query) {
    if (run.rankings.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& [qid, ranking] : run.rankings) sum += per_query(ranking, judgments_for(qrels, qid));
    return sum / static_cast<double>(run.rankings.size());
}

double normal_two_sided(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

StageSummary summarize(std::vector<double> v) {
    StageSummary s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    s.p50 = percentile_nearest_rank(v, 50.0);
    s.p95 = percentile_nearest_rank(std::move(v), 95.0);
    return s;
}

std::string with_thousands_impl(std::size_t n) {
    std::string digits = std::to_string(n);
    std::string out;
    for (std::size_t i = 0; i < digits.size(); ++i) {
        if (i > 0 && (digits.size() - i) % 3 == 0) out += ',';
        out += digits[i];
    }
    return out;
}

}  // namespace

Qrels parse_qrels(std::istream& in) {
    Qrels q;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto f = split_tabs(line);
        if (f.size() != 3) throw ParseError(lineno, "expected 3 tab-separated fields, got " + std::to_string(f.size()));
        if (f[0].empty() || f[1].empty()) throw ParseError(lineno, "empty query_id or chunk_id");
        int grade = 0;
        if (!parse_number(f[2], grade) || grade < 0 || grade > 4) {
            throw ParseError(lineno, "grade '" + f[2] + "' is not an integer in 0..4");
        }
        if (!q.judgments[f[0]].emplace(f[1], grade).second) {
            throw ParseError(lineno, "duplicate judgment for " + f[0] + "/" + f[1]);
        }
    }
    return q;
}

RunFile parse_run(std::istream& in) {
    std::map<std::string, std::map<std::size_t, RankedEntry>> by_rank;
    std::map<std::string, std::set<std::string>> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto f = split_tabs(line);
        if (f.size() < 4) throw ParseError(lineno, "expected at least 4 tab-separated fields");
        if (f[0].empty() || f[1].empty()) throw ParseError(lineno, "empty query_id or chunk_id");
        std::size_t rank = 0;
        if (!parse_number(f[2], rank) || rank == 0) throw ParseError(lineno, "rank '" + f[2] + "' is not a positive integer");
        double score = 0.0;
        if (!parse_double(f[3], score)) throw ParseError(lineno, "score '" + f[3] + "' is not a number");
        if (!seen[f[0]].insert(f[1]).second) {
            throw ParseError(lineno, "chunk '" + f[1] + "' listed twice for query '" + f[0] + "'");
        }
        if (!by_rank[f[0]].emplace(rank, RankedEntry{f[1], score}).second) {
            throw ParseError(lineno, "rank " + f[2] + " repeated for query '" + f[0] + "'");
        }
    }
    RunFile run;
    for (auto& [qid, ranks] : by_rank) {
        auto& list = run.rankings[qid];
        for (auto& [rank, entry] : ranks) list.push_back(std::move(entry));
    }
    return run;
}

std::map<std::string, double> reciprocal_ranks(const RunFile& run, const Qrels& qrels, int threshold) {
    std::map<std::string, double> out;
    for (const auto& [qid, ranking] : run.rankings) {
        const auto& j = judgments_for(qrels, qid);
        double rr = 0.0;
        for (std::size_t i = 0; i < ranking.size(); ++i) {
            if (grade_of(j, ranking[i].chunk_id) >= threshold) {
                rr = 1.0 / static_cast<double>(i + 1);
                break;
            }
        }
        out.emplace(qid, rr);
    }
    return out;
}

double mrr(const RunFile& run, const Qrels& qrels, int threshold) {
    const auto rr = reciprocal_ranks(run, qrels, threshold);
    if (rr.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& [q, v] : rr) sum += v;
    return sum / static_cast<double>(rr.size());
}

double precision_at_k(const RunFile& run, const Qrels& qrels, std::size_t k, int threshold) {
    if (k == 0) throw InputError("k must be >= 1");
    return mean_over_run(run, qrels, [&](const std::vector<RankedEntry>& ranking, const auto& j) {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) {
            if (grade_of(j, ranking[i].chunk_id) >= threshold) ++hits;
        }
        return static_cast<double>(hits) / static_cast<double>(k);
    });
}

double ndcg_at_k(const RunFile& run, const Qrels& qrels, std::size_t k) {
    if (k == 0) throw InputError("k must be >= 1");
    return mean_over_run(run, qrels, [&](const std::vector<RankedEntry>& ranking, const auto& j) {
        auto gain = [](int g) { return std::exp2(static_cast<double>(g)) - 1.0; };
        double dcg = 0.0;
        for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) {
            dcg += gain(grade_of(j, ranking[i].chunk_id)) / std::log2(static_cast<double>(i) + 2.0);
        }
        std::vector<int> ideal;
        for (const auto& [c, g] : j) ideal.push_back(g);
        std::sort(ideal.begin(), ideal.end(), std::greater<>());
        double idcg = 0.0;
        for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) {
            idcg += gain(ideal[i]) / std::log2(static_cast<double>(i) + 2.0);
        }
        return idcg > 0.0 ? dcg / idcg : 0.0;
    });
}

MannWhitneyResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) throw InputError("Mann-Whitney U needs two non-empty samples");
    const std::size_t na = a.size(), nb = b.size(), n = na + nb;

    // Pool, sort, and assign doubled midranks (always integers).
    std::vector<std::pair<double, int>> pooled;
    pooled.reserve(n);
    for (double v : a) pooled.emplace_back(v, 0);
    for (double v : b) pooled.emplace_back(v, 1);
    std::sort(pooled.begin(), pooled.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    std::vector<std::int64_t> rank2(n);
    double tie_term = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && pooled[j].first == pooled[i].first) ++j;
        const auto doubled = static_cast<std::int64_t>(i + 1 + j);  // 2 * midrank of 1-based [i+1, j]
        for (std::size_t k = i; k < j; ++k) rank2[k] = doubled;
        const double t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        i = j;
    }
    std::int64_t r2a = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (pooled[i].second == 0) r2a += rank2[i];
    }

    MannWhitneyResult res;
    res.u_a = static_cast<double>(r2a) / 2.0 - static_cast<double>(na * (na + 1)) / 2.0;
    const double u_b = static_cast<double>(na * nb) - res.u_a;
    res.u = std::min(res.u_a, u_b);

    const std::size_t m = std::min(na, nb);
    if (m <= 8) {
        // Permutation distribution of the doubled rank sum of an m-subset.
        const int small_group = na <= nb ? 0 : 1;
        std::int64_t observed = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (pooled[i].second == small_group) observed += rank2[i];
        }
        const std::int64_t max_sum = 2 * static_cast<std::int64_t>(n) * static_cast<std::int64_t>(m);
        std::vector<std::vector<long double>> ways(m + 1, std::vector<long double>(static_cast<std::size_t>(max_sum) + 1, 0.0L));
        ways[0][0] = 1.0L;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t top = std::min(m, i + 1);
            for (std::size_t c = top; c >= 1; --c) {
                auto& dst = ways[c];
                const auto& src = ways[c - 1];
                const auto shift = static_cast<std::size_t>(rank2[i]);
                for (std::size_t s = static_cast<std::size_t>(max_sum); s >= shift; --s) {
                    if (src[s - shift] != 0.0L) dst[s] += src[s - shift];
                    if (s == shift) break;
                }
            }
        }
        // Doubled rank sum has mean m * (n + 1).
        const std::int64_t centre = static_cast<std::int64_t>(m) * static_cast<std::int64_t>(n + 1);
        const std::int64_t dev = std::llabs(observed - centre);
        long double extreme = 0.0L, total = 0.0L;
        for (std::int64_t s = 0; s <= max_sum; ++s) {
            const long double w = ways[m][static_cast<std::size_t>(s)];
            if (w == 0.0L) continue;
            total += w;
            if (std::llabs(s - centre) >= dev) extreme += w;
        }
        res.p_value = static_cast<double>(extreme / total);
        res.exact = true;
    } else {
        const double dn = static_cast<double>(n);
        const double mu = static_cast<double>(na * nb) / 2.0;
        const double var = static_cast<double>(na * nb) / 12.0 * ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
        if (var <= 0.0) {
            res.p_value = 1.0;
        } else {
            const double z = std::max(0.0, std::abs(res.u_a - mu) - 0.5) / std::sqrt(var);
            res.p_value = std::min(1.0, normal_two_sided(z));
        }
    }
    return res;
}

double percentile_nearest_rank(std::vector<double> values, double pct) {
    if (values.empty()) throw InputError("percentile of an empty sample");
    if (!(pct > 0.0 && pct <= 100.0)) throw InputError("percentile must lie in (0, 100]");
    std::sort(values.begin(), values.end());
    const auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * static_cast<double>(values.size()) - 1e-9));
    return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

LatencySummary latency_stats(const std::vector<StageTimings>& timings) {
    if (timings.empty()) throw InputError("latency_stats needs at least one timing");
    std::vector<double> d, s, f, r, t;
    for (const auto& x : timings) {
        d.push_back(x.dense_ms);
        s.push_back(x.sparse_ms);
        f.push_back(x.fuse_ms);
        r.push_back(x.rerank_ms);
        t.push_back(x.total_ms);
    }
    LatencySummary out;
    out.count = timings.size();
    out.dense = summarize(std::move(d));
    out.sparse = summarize(std::move(s));
    out.fuse = summarize(std::move(f));
    out.rerank = summarize(std::move(r));
    out.total = summarize(std::move(t));
    return out;
}

std::string format_count(std::size_t n) { return with_thousands_impl(n); }

std::string format_change(std::size_t start, std::size_t end) {
    if (start == 0) return end == 0 ? "0%" : "New";
    const double pct = (static_cast<double>(end) - static_cast<double>(start)) / static_cast<double>(start) * 100.0;
    const long long rounded = std::llround(pct);
    if (rounded == 0) return "0%";
    const std::string mag = format_count(static_cast<std::size_t>(std::llabs(rounded)));
    return (rounded > 0 ? "+" : "-") + mag + "%";
}

EvolutionTable evolution_report(const std::vector<RequirementRecord>& records, int start_year, int end_year) {
    EvolutionTable table;
    table.start_year = start_year;
    table.end_year = end_year;
    std::size_t total_start = 0, total_end = 0;
    std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
    for (const auto& r : records) {
        const bool at_start = r.year == start_year, at_end = r.year == end_year;
        if (!at_start && !at_end) continue;
        (at_start ? total_start : total_end)++;
        std::set<std::string> cats(r.categories.begin(), r.categories.end());
        for (const auto& c : cats) {
            auto& slot = counts[c];
            (at_start ? slot.first : slot.second)++;
        }
    }
    if (total_start == 0) throw InputError("no requirement records for year " + std::to_string(start_year));
    if (total_end == 0) throw InputError("no requirement records for year " + std::to_string(end_year));

    table.rows.push_back({kTotalRowLabel, total_start, total_end, format_change(total_start, total_end)});
    std::vector<EvolutionRow> existing, fresh;
    for (const auto& [cat, c] : counts) {
        EvolutionRow row{cat, c.first, c.second, format_change(c.first, c.second)};
        (c.first > 0 ? existing : fresh).push_back(std::move(row));
    }
    std::stable_sort(existing.begin(), existing.end(),
                     [](const EvolutionRow& x, const EvolutionRow& y) { return x.count_start > y.count_start; });
    std::stable_sort(fresh.begin(), fresh.end(),
                     [](const EvolutionRow& x, const EvolutionRow& y) { return x.count_end > y.count_end; });
    table.rows.insert(table.rows.end(), existing.begin(), existing.end());
    table.rows.insert(table.rows.end(), fresh.begin(), fresh.end());
    return table;
}

std::vector<RequirementRecord> requirement_records(const std::vector<ChunkMetadata>& metadata) {
    std::vector<RequirementRecord> out;
    for (const auto& m : metadata) {
        if (!m.year || !m.category) continue;
        out.push_back({*m.year, {*m.category}});
    }
    return out;
}

std::vector<RequirementRecord> parse_requirement_records(std::istream& in) {
    std::vector<RequirementRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto f = split_tabs(line);
        if (f.size() != 2) throw ParseError(lineno, "expected year<TAB>categories");
        RequirementRecord r;
        if (!parse_number(f[0], r.year)) throw ParseError(lineno, "year '" + f[0] + "' is not an integer");
        std::size_t start = 0;
        while (start <= f[1].size()) {
            const std::size_t semi = f[1].find(';', start);
            std::string cat = f[1].substr(start, semi == std::string::npos ? std::string::npos : semi - start);
            if (!cat.empty()) r.categories.push_back(std::move(cat));
            if (semi == std::string::npos) break;
            start = semi + 1;
        }
        if (r.categories.empty()) throw ParseError(lineno, "record has no category");
        out.push_back(std::move(r));
    }
    return out;
}

MetricsReport evaluate(const RunFile& run, const Qrels& qrels, int threshold) {
    MetricsReport r;
    r.queries = run.rankings.size();
    r.mrr = mrr(run, qrels, threshold);
    r.p_at_5 = precision_at_k(run, qrels, 5, threshold);
    r.ndcg_at_10 = ndcg_at_k(run, qrels, 10);
    return r;
}

}  // namespace reqrag::eval
