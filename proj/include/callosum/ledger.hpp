#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

namespace callosum {

// Append-only provenance log. Every feature-tensor read performed by any
// pipeline stage lands here as a (stage, node) event with a global sequence
// number, so "deleted bytes were never read after the purge" is an auditable
// query instead of an assertion.
class ReadLedger {
public:
    struct Entry {
        std::uint64_t seq;
        std::string stage;
        int node;
    };

    std::uint64_t record_read(const std::string& stage, int node) {
        std::lock_guard<std::mutex> lk(mu_);
        std::uint64_t s = next_seq_++;
        entries_.push_back(Entry{s, stage, node});
        return s;
    }

    // Marks a named event (e.g. the purge that starts an unlearn cycle).
    std::uint64_t mark(const std::string& label) {
        std::lock_guard<std::mutex> lk(mu_);
        std::uint64_t s = next_seq_++;
        marks_.emplace_back(s, label);
        return s;
    }

    // True when no read after `after_seq` touches any node in `nodes`.
    bool clean_after(std::uint64_t after_seq, const std::set<int>& nodes) const {
        std::lock_guard<std::mutex> lk(mu_);
        for (const Entry& e : entries_) {
            if (e.seq > after_seq && nodes.count(e.node)) return false;
        }
        return true;
    }

    std::size_t size() const {
        std::lock_guard<std::mutex> lk(mu_);
        return entries_.size();
    }

    std::vector<Entry> snapshot() const {
        std::lock_guard<std::mutex> lk(mu_);
        return entries_;
    }

private:
    mutable std::mutex mu_;
    std::uint64_t next_seq_ = 1;
    std::vector<Entry> entries_;
    std::vector<std::pair<std::uint64_t, std::string>> marks_;
};

using LedgerPtr = std::shared_ptr<ReadLedger>;

// One stage's read recorder. Deduplicates per node so tight training loops
// cost one set lookup per access instead of one ledger append.
class StageReader {
public:
    StageReader(LedgerPtr ledger, std::string stage)
        : ledger_(std::move(ledger)), stage_(std::move(stage)) {}

    void touch(int node) {
        if (!ledger_) return;
        if (seen_.insert(node).second) ledger_->record_read(stage_, node);
    }

private:
    LedgerPtr ledger_;
    std::string stage_;
    std::set<int> seen_;
};

} // namespace callosum
