#pragma once

#include <map>
#include <string>
#include <vector>

#include "callosum/pipeline.hpp"

namespace callosum {

// Machine-checkable evidence that a deletion request's influence is exactly
// zero: parameter equivalence with the purge-and-retrain reference, a clean
// post-purge read ledger, and prediction invariance under arbitrary
// perturbation of the deleted bytes.
struct UnlearnCertificate {
    std::string request_digest;
    std::vector<int> affected_subgraphs;
    bool equivalence = false;
    bool ledger_clean = false;
    bool influence_nullity = false;
    std::vector<std::string> failed_checks;
    std::map<std::string, double> timings;

    bool valid() const { return equivalence && ledger_clean && influence_nullity; }

    std::string to_json(bool include_timings = true) const;
    static UnlearnCertificate from_json(const std::string& text);
};

// Subgraphs holding a deleted node or an endpoint of a deleted edge; cut
// edges touching deleted nodes mark both endpoint subgraphs.
std::vector<int> locate(const DeletionRequest& request, const Partition& partition);

// Drops the deleted nodes from one subgraph and re-applies repair against the
// post-purge partition context.
Subgraph purge_and_rebuild(const Subgraph& sub, const DeletionRequest& request,
                           const Partition& post_purge, int k_ring);

// Rebuilds every subgraph's structure against the purged graph, keeping ids
// and dropping emptied subgraphs. No repair yet.
Partition purge_partition(const Partition& partition, const DeletionRequest& request,
                          const PrunedGraph& purged, const CorrelationMap& corr);

// Repeatedly merges subgraphs with fewer than 3 members into the backbone-
// adjacent neighbor sharing the largest summed cut-edge correlation (ties to
// the smaller id). Collapses to a single subgraph when fewer than 3 nodes
// remain in total. merged_into, when given, records absorbed -> absorber.
Partition merge_small(const Partition& partition, const PrunedGraph& purged,
                      const CorrelationMap& corr, std::map<int, int>* merged_into = nullptr);

struct UnlearnOptions {
    bool run_certificate = true;
    double probe_factor = 1e6;  // deleted features are scaled by this in the probe
};

struct UnlearnOutcome {
    TrainedEnsemble ensemble;
    UnlearnCertificate certificate;
};

// Algorithm: locate, purge and rebuild affected subgraphs, merge degenerate
// ones, retrain affected/merged sub-models under request-derived seeds,
// rebuild the meta-graph, reset and retrain the global layer, certify.
UnlearnOutcome execute_unlearn(const TrainedEnsemble& ensemble, const DeletionRequest& request,
                               const UnlearnOptions& opts = {});

// The three certificate checks, runnable standalone against a (pre, post)
// ensemble pair.
UnlearnCertificate certify(const TrainedEnsemble& pre, const TrainedEnsemble& post,
                           const DeletionRequest& request, double probe_factor = 1e6);

} // namespace callosum
