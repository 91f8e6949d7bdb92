#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

namespace cortrieve {

/// Per-epoch training record. For the single-negative learner draws equals
/// steps; for the rank-sampling learner draws is the total candidate count
/// and sampling_seconds the accumulated violator-search wall time.
struct EpochStats {
    int epoch = 0;
    double recall = 0.0;  // validation recall@eval_k after the epoch
    double seconds = 0.0; // wall time of the epoch (steps + validation excluded)
    int64_t steps = 0;
    int64_t draws = 0;
    double sampling_seconds = 0.0;
    int64_t skipped_steps = 0;  // rank-sampling steps that found no violator
};

template <class Bank>
struct TrainResult {
    Bank bank;  // snapshot from the best validation epoch
    std::vector<EpochStats> history;
    int best_epoch = 0;
    double best_recall = 0.0;
};

inline void write_history_csv(const std::vector<EpochStats>& history, std::ostream& os) {
    os << "epoch,recall_at_k,seconds,draws,sampling_seconds,steps,skipped_steps\r\n";
    for (const auto& h : history)
        os << h.epoch << "," << h.recall << "," << h.seconds << "," << h.draws << ","
           << h.sampling_seconds << "," << h.steps << "," << h.skipped_steps << "\r\n";
}

}  // namespace cortrieve
