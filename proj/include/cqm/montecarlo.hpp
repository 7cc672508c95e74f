#pragma once

// Monte Carlo sampling of measurement chains. Each trial draws its RNG
// stream from (seed, trial index) via splitmix64, so results are
// bit-exact for a fixed seed under any scheduling.

#include "cqm/instrument.hpp"
#include "cqm/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace cqm {

// splitmix64 (Steele/Lea/Flood), the per-trial stream generator.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1) with 53 bits
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t state_;
};

inline std::uint64_t trial_stream_seed(std::uint64_t seed, std::int64_t trial) {
    SplitMix64 mixer(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(trial + 1)));
    return mixer.next();
}

struct ChainSpec {
    Matrix initial;
    std::vector<Instrument> stages;
    std::int64_t trials = 1;
    std::uint64_t seed = 0;
    int threads = 1;                  // > 1 runs trials in parallel
    bool accumulate_states = false;   // mean final state per outcome sequence
};

struct ChainRecord {
    std::int64_t trials = 0;
    std::map<std::vector<std::string>, std::int64_t> sequence_counts;
    std::vector<std::map<std::string, std::int64_t>> stage_counts;
    std::map<std::vector<std::string>, Matrix> state_sums;

    double sequence_frequency(const std::vector<std::string>& seq) const {
        auto it = sequence_counts.find(seq);
        return it == sequence_counts.end() ? 0.0
                                           : static_cast<double>(it->second) / trials;
    }

    // Mean post-measurement state over trials ending in `seq`.
    Matrix mean_state(const std::vector<std::string>& seq) const {
        auto it = state_sums.find(seq);
        auto cnt = sequence_counts.find(seq);
        if (it == state_sums.end() || cnt == sequence_counts.end() || cnt->second == 0)
            throw Error("UnknownLabel", "no trials recorded for that sequence");
        return it->second / static_cast<double>(cnt->second);
    }
};

namespace detail {

inline void merge_records(ChainRecord& into, const ChainRecord& from) {
    into.trials += from.trials;
    for (const auto& [seq, n] : from.sequence_counts)
        into.sequence_counts[seq] += n;
    if (into.stage_counts.size() < from.stage_counts.size())
        into.stage_counts.resize(from.stage_counts.size());
    for (std::size_t s = 0; s < from.stage_counts.size(); ++s)
        for (const auto& [label, n] : from.stage_counts[s])
            into.stage_counts[s][label] += n;
    for (const auto& [seq, sum] : from.state_sums) {
        auto it = into.state_sums.find(seq);
        if (it == into.state_sums.end())
            into.state_sums.emplace(seq, sum);
        else
            it->second += sum;
    }
}

inline void run_trials(const ChainSpec& spec, std::int64_t begin, std::int64_t end,
                       ChainRecord& record) {
    record.stage_counts.resize(spec.stages.size());
    for (std::int64_t t = begin; t < end; ++t) {
        SplitMix64 rng(trial_stream_seed(spec.seed, t));
        Matrix rho = spec.initial;
        std::vector<std::string> sequence;
        for (std::size_t stage = 0; stage < spec.stages.size(); ++stage) {
            const Instrument& inst = spec.stages[stage];
            std::vector<double> probs;
            double sum = 0;
            for (const auto& o : inst.outcomes) {
                double p = schrodinger_apply(o, rho).trace().real();
                if (p < 0) p = 0;
                probs.push_back(p);
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw Error("AllZeroProbabilities",
                            "branch probabilities sum to " + std::to_string(sum));
            const double u = rng.uniform() * sum;
            double cumulative = 0;
            std::size_t chosen = probs.size() - 1;
            for (std::size_t i = 0; i < probs.size(); ++i) {
                cumulative += probs[i];
                if (u < cumulative) {
                    chosen = i;
                    break;
                }
            }
            const auto& outcome = inst.outcomes[chosen];
            sequence.push_back(outcome.label);
            record.stage_counts[stage][outcome.label] += 1;
            if (probs[chosen] > kProbabilityFloor)
                rho = schrodinger_apply(outcome, rho) / probs[chosen];
        }
        record.sequence_counts[sequence] += 1;
        if (spec.accumulate_states) {
            auto it = record.state_sums.find(sequence);
            if (it == record.state_sums.end())
                record.state_sums.emplace(sequence, rho);
            else
                it->second += rho;
        }
        record.trials += 1;
    }
}

}  // namespace detail

inline ChainRecord run_chain(const ChainSpec& spec) {
    if (spec.trials < 1)
        throw Error("BadSpec", "trials must be >= 1");
    if (spec.stages.empty())
        throw Error("BadSpec", "at least one stage required");
    for (const auto& stage : spec.stages)
        if (stage.dim != spec.initial.rows())
            throw Error("DimMismatch", "stage dimension does not match initial state");
    validate_density(spec.initial);

    const int threads = std::max(1, spec.threads);
    if (threads == 1 || spec.trials < 2 * threads) {
        ChainRecord record;
        detail::run_trials(spec, 0, spec.trials, record);
        return record;
    }
    std::vector<ChainRecord> partials(threads);
    std::vector<std::thread> workers;
    const std::int64_t chunk = (spec.trials + threads - 1) / threads;
    for (int w = 0; w < threads; ++w) {
        const std::int64_t begin = w * chunk;
        const std::int64_t end = std::min(spec.trials, begin + chunk);
        if (begin >= end) break;
        workers.emplace_back(
            [&spec, begin, end, &rec = partials[w]] { detail::run_trials(spec, begin, end, rec); });
    }
    for (auto& w : workers) w.join();
    ChainRecord record;
    for (const auto& partial : partials)
        detail::merge_records(record, partial);
    return record;
}

struct ComparisonEntry {
    std::string label;
    double frequency = 0;
    double expected = 0;
    double z = 0;
};

struct ComparisonReport {
    double max_z = 0;
    bool pass = true;
    std::vector<ComparisonEntry> entries;
};

// z-scores |f - p| / sqrt(p(1-p)/N) per outcome against an analytic
// table; default acceptance threshold 5 sigma.
inline ComparisonReport empirical_vs_analytic(const std::map<std::string, std::int64_t>& counts,
                                              std::int64_t trials,
                                              const std::map<std::string, double>& analytic,
                                              double threshold = 5.0) {
    ComparisonReport report;
    for (const auto& [label, p] : analytic) {
        auto it = counts.find(label);
        const double f = it == counts.end() ? 0.0 : static_cast<double>(it->second) / trials;
        ComparisonEntry entry{label, f, p, 0};
        if (p <= 0.0 || p >= 1.0) {
            entry.z = (std::abs(f - p) < 1e-12) ? 0.0 : std::numeric_limits<double>::infinity();
        } else {
            entry.z = std::abs(f - p) / std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
        }
        report.max_z = std::max(report.max_z, entry.z);
        report.entries.push_back(std::move(entry));
    }
    report.pass = report.max_z <= threshold;
    return report;
}

// Frequency tables as CSV: stage,label,count,frequency.
inline std::string frequency_csv(const ChainRecord& record) {
    std::ostringstream out;
    out << "stage,label,count,frequency\n";
    for (std::size_t s = 0; s < record.stage_counts.size(); ++s)
        for (const auto& [label, n] : record.stage_counts[s])
            out << s << ',' << label << ',' << n << ','
                << static_cast<double>(n) / record.trials << '\n';
    return out.str();
}

}  // namespace cqm
