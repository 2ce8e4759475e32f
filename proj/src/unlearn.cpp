#include "callosum/unlearn.hpp"

#include <algorithm>
#include <chrono>
#include <iostream>
#include <set>

#include <nlohmann/json.hpp>

#include "callosum/sha256.hpp"

namespace callosum {

namespace {

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string toolchain_fingerprint() {
#if defined(__VERSION__)
    return std::string("gcc ") + __VERSION__;
#else
    return "unknown";
#endif
}

// Summed cut-edge correlation between two subgraphs, both directions.
double cut_rho_between(const Partition& p, const CorrelationMap& corr, int id_a, int id_b) {
    double s = 0.0;
    for (const auto& [u, v] : p.cut_edges) {
        int au = p.assignment[u], av = p.assignment[v];
        if ((au == id_a && av == id_b) || (au == id_b && av == id_a)) s += corr.rho(u, v);
    }
    return s;
}

} // namespace

std::vector<int> locate(const DeletionRequest& request, const Partition& partition) {
    std::set<int> hit;
    for (int n : request.nodes) {
        if (n < 0 || n >= int(partition.assignment.size()) || partition.assignment[n] < 0)
            throw std::invalid_argument("locate: node " + std::to_string(n) +
                                        " is not assigned to any subgraph");
        hit.insert(partition.assignment[n]);
        // cut edges touching the deleted node drag in the far subgraph too
        for (const auto& [u, v] : partition.cut_edges) {
            if (u == n) hit.insert(partition.assignment[v]);
            if (v == n) hit.insert(partition.assignment[u]);
        }
    }
    for (const auto& [u, v] : request.edges) {
        if (partition.assignment[u] < 0 || partition.assignment[v] < 0)
            throw std::invalid_argument("locate: deleted edge references an unassigned node");
        hit.insert(partition.assignment[u]);
        hit.insert(partition.assignment[v]);
    }
    return std::vector<int>(hit.begin(), hit.end());
}

Partition purge_partition(const Partition& partition, const DeletionRequest& request,
                          const PrunedGraph& purged, const CorrelationMap& corr) {
    std::vector<std::pair<int, std::vector<int>>> groups;
    for (const auto& s : partition.subgraphs) {
        std::vector<int> members;
        for (int v : s.nodes)
            if (!request.nodes.count(v)) members.push_back(v);
        if (!members.empty()) groups.emplace_back(s.id, std::move(members));
    }
    std::vector<int> backbone;
    for (int v : partition.backbone)
        if (!request.nodes.count(v)) backbone.push_back(v);
    return assemble_partition(groups, backbone, partition.position, purged, corr,
                              partition.gamma, partition.n_at_build, partition.m_at_build);
}

Subgraph purge_and_rebuild(const Subgraph& sub, const DeletionRequest& request,
                           const Partition& post_purge, int k_ring) {
    if (!post_purge.has_id(sub.id))
        throw std::invalid_argument("purge_and_rebuild: subgraph was emptied by the purge");
    return repair_subgraph(post_purge.by_id(sub.id), post_purge, k_ring);
}

Partition merge_small(const Partition& partition, const PrunedGraph& purged,
                      const CorrelationMap& corr, std::map<int, int>* merged_into) {
    Partition p = partition;
    for (;;) {
        // total fallback: fewer than 3 nodes in the whole partition
        std::size_t total = 0;
        for (const auto& s : p.subgraphs) total += s.nodes.size();
        if (total < 3 && p.subgraphs.size() > 1) {
            std::vector<int> all;
            for (const auto& s : p.subgraphs) {
                all.insert(all.end(), s.nodes.begin(), s.nodes.end());
                if (merged_into && s.id != p.subgraphs.front().id)
                    (*merged_into)[s.id] = p.subgraphs.front().id;
            }
            std::vector<std::pair<int, std::vector<int>>> one{{p.subgraphs.front().id, all}};
            p = assemble_partition(one, p.backbone, p.position, purged, corr, p.gamma,
                                   p.n_at_build, p.m_at_build);
            continue;
        }

        // smallest-id subgraph below the size floor
        int small_id = -1;
        for (const auto& s : p.subgraphs)
            if (int(s.nodes.size()) < 3 && (small_id < 0 || s.id < small_id)) small_id = s.id;
        if (small_id < 0 || p.subgraphs.size() <= 1) break;

        // neighbors along the backbone: order subgraphs by first member
        // position, take the predecessor and successor
        std::vector<std::pair<int, int>> order;  // (min position, id)
        for (const auto& s : p.subgraphs) {
            int best = INT32_MAX;
            for (int v : s.nodes) best = std::min(best, p.position[v]);
            order.push_back({best, s.id});
        }
        std::sort(order.begin(), order.end());
        int idx = -1;
        for (int i = 0; i < int(order.size()); ++i)
            if (order[i].second == small_id) idx = i;
        std::vector<int> candidates;
        if (idx > 0) candidates.push_back(order[idx - 1].second);
        if (idx + 1 < int(order.size())) candidates.push_back(order[idx + 1].second);

        int target = -1;
        double best_rho = 0.0;
        for (int c : candidates) {
            double r = cut_rho_between(p, corr, small_id, c);
            if (target < 0 || r > best_rho || (r == best_rho && c < target)) {
                target = c;
                best_rho = r;
            }
        }
        if (target < 0) break;  // single subgraph left

        if (merged_into) (*merged_into)[small_id] = target;
        std::vector<std::pair<int, std::vector<int>>> groups;
        for (const auto& s : p.subgraphs) {
            if (s.id == small_id) continue;
            std::vector<int> members = s.nodes;
            if (s.id == target) {
                const auto& extra = p.by_id(small_id).nodes;
                members.insert(members.end(), extra.begin(), extra.end());
            }
            groups.emplace_back(s.id, std::move(members));
        }
        p = assemble_partition(groups, p.backbone, p.position, purged, corr, p.gamma,
                               p.n_at_build, p.m_at_build);
    }
    return p;
}

namespace {

// Shared by the unlearn path and the certificate's reference run: the purged
// partition after merge and repair, always derived through the same calls.
Partition derive_post_partition(const Partition& pre, const DeletionRequest& request,
                                const PrunedGraph& purged, const CorrelationMap& corr,
                                int k_ring) {
    Partition p = purge_partition(pre, request, purged, corr);
    p = merge_small(p, purged, corr, nullptr);
    repair_all(p, k_ring);
    return p;
}

// ids whose repaired structure changed (or appeared), i.e. everything that
// must retrain under a request-derived seed
std::set<int> changed_subgraphs(const Partition& pre, const Partition& post) {
    std::set<int> changed;
    for (const auto& s : post.subgraphs) {
        if (!pre.has_id(s.id) || !(pre.by_id(s.id) == s)) changed.insert(s.id);
    }
    return changed;
}

TrainedEnsemble rebuild_ensemble(const TrainedEnsemble& pre, const DeletionRequest& request,
                                 const PrunedGraph& purged, StageTimings& timings) {
    const PipelineConfig& cfg = pre.cfg;
    const std::string digest = request.digest();

    double t0 = now_seconds();
    CorrelationMap corr = correlation_map(purged, cfg.task.window, pre.ledger,
                                          "correlation:post-purge");
    timings.add("unlearn_correlation", now_seconds() - t0);

    t0 = now_seconds();
    Partition post = derive_post_partition(pre.partition, request, purged, corr, cfg.k_ring);
    std::set<int> retrain = changed_subgraphs(pre.partition, post);
    timings.add("unlearn_repartition", now_seconds() - t0);

    TrainedEnsemble out;
    out.data = purged;
    out.corr = corr;
    out.partition = post;
    out.cfg = cfg;
    out.pipeline_seed = pre.pipeline_seed;
    out.ledger = pre.ledger;

    t0 = now_seconds();
    const int count = int(post.subgraphs.size());
    out.sub_models.resize(count);
    parallel_for_each_index(count, cfg.threads, [&](int i) {
        const Subgraph& sub = post.subgraphs[i];
        if (!retrain.count(sub.id)) {
            out.sub_models[i] = pre.model_of(sub.id);  // frozen, byte-identical
            return;
        }
        std::uint64_t seed =
            derive_seed(pre.pipeline_seed, "submodel:" + std::to_string(sub.id), digest);
        int width = submodel_width(int(sub.nodes.size()), post.n_at_build, post.m_at_build,
                                   cfg.base_width);
        SubTrainResult res = train_submodel(sub, purged, cfg.task, cfg.train, {},
                                            cfg.lambda_reg, width, seed, out.ledger);
        out.sub_models[i] = std::move(res.model);
    });
    timings.add("unlearn_retrain_submodels", now_seconds() - t0);

    t0 = now_seconds();
    int gang = cfg.ganglion_count > 0 ? cfg.ganglion_count : post.m;
    out.meta = build_meta_from_partition(post, corr, gang, cfg.budget_c, cfg.pagerank_damping,
                                         cfg.pagerank_tol);
    timings.add("unlearn_metagraph", now_seconds() - t0);

    // full reset of ganglion MLPs and the global layer, then a short retrain
    t0 = now_seconds();
    GlobalDims gdims;
    gdims.token_dim = cfg.token_dim;
    gdims.heads = cfg.heads;
    gdims.layers = cfg.layers;
    gdims.horizon = cfg.task.horizon;
    for (const auto& s : post.subgraphs)
        gdims.sub_widths[s.id] = out.model_of(s.id).dims().width;
    GlobalHyper hyper{cfg.lambda1, cfg.lambda2, cfg.alpha_init};
    std::uint64_t gseed = derive_seed(pre.pipeline_seed, "global", digest);
    GlobalLayer layer = GlobalLayer::init(out.meta, gdims, hyper, gseed);
    GlobalWiring wiring = GlobalWiring::build(out.meta);

    if (cfg.unlearn_global_epochs > 3)
        std::cerr << "warning: unlearn_global_epochs=" << cfg.unlearn_global_epochs
                  << " exceeds the 1-3 epoch budget\n";

    TemporalSplit split = temporal_split(purged.graph.timesteps);
    std::vector<int> all_ends = window_ends(cfg.task, 0, split.train_end);
    std::vector<int> ends;
    for (std::size_t i = 0; i < all_ends.size(); i += cfg.global_stride)
        ends.push_back(all_ends[i]);

    std::vector<GlobalInputs> windows;
    std::vector<Matrix> targets;
    std::vector<int> alive = purged.alive_nodes();
    DataView target_view(purged, out.ledger, "global:unlearn");
    for (int t_end : ends) {
        windows.push_back(assemble_global_inputs(post, out.sub_models, purged, cfg.task, t_end,
                                                 out.ledger, "global:unlearn"));
        Matrix y(alive.size(), cfg.task.horizon);
        for (std::size_t vi = 0; vi < alive.size(); ++vi)
            for (int k = 0; k < cfg.task.horizon; ++k)
                y(vi, k) = target_view.at(t_end + 1 + k, alive[vi], 0);
        targets.push_back(std::move(y));
    }
    TrainConfig gcfg = cfg.train;
    if (cfg.global_learning_rate > 0.0) gcfg.learning_rate = cfg.global_learning_rate;
    gcfg.epochs = cfg.unlearn_global_epochs;
    gcfg.stop_loss = cfg.global_stop_loss;
    train_global(layer, wiring, post, windows, targets, gcfg, derive_seed(gseed, "order"));
    out.global_layer = std::move(layer);
    timings.add("unlearn_global_retrain", now_seconds() - t0);
    return out;
}

} // namespace

UnlearnOutcome execute_unlearn(const TrainedEnsemble& ensemble, const DeletionRequest& request,
                               const UnlearnOptions& opts) {
    UnlearnOutcome out;
    out.certificate.request_digest = request.digest();

    if (request.empty()) {
        out.ensemble = ensemble;
        out.certificate.equivalence = true;
        out.certificate.ledger_clean = true;
        out.certificate.influence_nullity = true;
        return out;
    }

    for (int n : request.nodes)
        if (n < 0 || n >= ensemble.data.graph.node_count || !ensemble.data.alive[n])
            throw std::invalid_argument("unlearn request references a missing node");
    for (const auto& [u, v] : request.edges)
        if (!ensemble.data.edge(u, v))
            throw std::invalid_argument("unlearn request references a missing edge");

    out.certificate.affected_subgraphs = locate(request, ensemble.partition);

    double t0 = now_seconds();
    PrunedGraph purged = purge(ensemble.data, request);
    if (purged.alive_count() < 3)
        throw std::invalid_argument("unlearn request would leave fewer than 3 nodes");
    StageTimings timings;
    timings.add("unlearn_purge", now_seconds() - t0);

    std::uint64_t mark = ensemble.ledger->mark("purge:" + request.digest());
    out.ensemble = rebuild_ensemble(ensemble, request, purged, timings);
    out.ensemble.purge_mark_seq = mark;
    out.ensemble.timings = timings;

    if (opts.run_certificate) {
        out.certificate = certify(ensemble, out.ensemble, request, opts.probe_factor);
    } else {
        std::set<int> deleted(request.nodes.begin(), request.nodes.end());
        out.certificate.ledger_clean = ensemble.ledger->clean_after(mark, deleted);
        out.certificate.affected_subgraphs = locate(request, ensemble.partition);
    }
    for (const auto& [stage, s] : timings.seconds) out.certificate.timings[stage] = s;
    return out;
}

UnlearnCertificate certify(const TrainedEnsemble& pre, const TrainedEnsemble& post,
                           const DeletionRequest& request, double probe_factor) {
    UnlearnCertificate cert;
    cert.request_digest = request.digest();
    cert.affected_subgraphs = locate(request, pre.partition);
    const PipelineConfig& cfg = pre.cfg;

    // (a) equivalence: retrain the whole pipeline from scratch on the purged
    // graph under the same derived seeds and compare every parameter block
    double t0 = now_seconds();
    bool equal = true;
    {
        PrunedGraph purged_ref = purge(pre.data, request);
        LedgerPtr ref_ledger = std::make_shared<ReadLedger>();
        CorrelationMap corr_ref = correlation_map(purged_ref, cfg.task.window, ref_ledger,
                                                  "certify:correlation");
        Partition part_ref =
            derive_post_partition(pre.partition, request, purged_ref, corr_ref, cfg.k_ring);
        std::set<int> retrained = changed_subgraphs(pre.partition, part_ref);

        if (!(partition_to_json(part_ref) == partition_to_json(post.partition))) equal = false;

        std::map<int, std::uint64_t> seeds;
        for (const auto& s : part_ref.subgraphs) {
            if (retrained.count(s.id)) {
                seeds[s.id] = derive_seed(pre.pipeline_seed, "submodel:" + std::to_string(s.id),
                                          request.digest());
            } else {
                seeds[s.id] = pre.model_of(s.id).seed();
            }
        }
        PipelineConfig ref_cfg = cfg;
        ref_cfg.global_epochs = cfg.unlearn_global_epochs;
        TrainedEnsemble ref = train_pipeline(purged_ref, ref_cfg, pre.pipeline_seed, ref_ledger,
                                             part_ref, &seeds, request.digest());

        for (const auto& s : part_ref.subgraphs) {
            const SubModel& a = ref.model_of(s.id);
            const SubModel& b = post.model_of(s.id);
            if (!(a.dims() == b.dims()) || a.params() != b.params() ||
                a.data_digest() != b.data_digest())
                equal = false;
        }
        if (metagraph_to_json(ref.meta) != metagraph_to_json(post.meta)) equal = false;
        if (!post.global_layer.has_value() ||
            ref.global_layer->params() != post.global_layer->params())
            equal = false;
    }
    cert.equivalence = equal;
    if (!equal) cert.failed_checks.push_back("equivalence");
    cert.timings["certify_reference"] = now_seconds() - t0;

    // (b) no post-purge read of deleted bytes
    std::set<int> deleted(request.nodes.begin(), request.nodes.end());
    cert.ledger_clean = post.ledger->clean_after(post.purge_mark_seq, deleted);
    if (!cert.ledger_clean) cert.failed_checks.push_back("ledger");

    // (c) influence probe: rebuild the pre-unlearn ensemble from data whose
    // deleted rows are arbitrarily perturbed, rerun the unlearn, and require
    // bit-identical predictions
    t0 = now_seconds();
    bool nullity = true;
    {
        PrunedGraph perturbed = pre.data;
        for (int n : request.nodes)
            for (int t = 0; t < perturbed.graph.timesteps; ++t)
                for (int f = 0; f < perturbed.graph.feature_dim; ++f)
                    perturbed.graph.feature(t, n, f) *= probe_factor;

        std::map<int, std::uint64_t> seeds;
        for (const auto& s : pre.partition.subgraphs) seeds[s.id] = pre.model_of(s.id).seed();
        LedgerPtr probe_ledger = std::make_shared<ReadLedger>();
        TrainedEnsemble pre_probe = train_pipeline(perturbed, cfg, pre.pipeline_seed,
                                                   probe_ledger, pre.partition, &seeds, "");
        UnlearnOptions probe_opts;
        probe_opts.run_certificate = false;
        UnlearnOutcome probe = execute_unlearn(pre_probe, request, probe_opts);

        TemporalSplit split = temporal_split(post.data.graph.timesteps);
        std::vector<int> ends =
            window_ends(cfg.task, split.val_end, post.data.graph.timesteps);
        Matrix want = predict_ensemble(post, ends, "certify:probe");
        Matrix got = predict_ensemble(probe.ensemble, ends, "certify:probe");
        if (!(want == got)) nullity = false;
    }
    cert.influence_nullity = nullity;
    if (!nullity) cert.failed_checks.push_back("influence");
    cert.timings["certify_probe"] = now_seconds() - t0;
    return cert;
}

std::string UnlearnCertificate::to_json(bool include_timings) const {
    nlohmann::json j;
    j["request_digest"] = request_digest;
    j["affected_subgraphs"] = affected_subgraphs;
    j["equivalence"] = equivalence;
    j["ledger_clean"] = ledger_clean;
    j["influence_nullity"] = influence_nullity;
    j["valid"] = valid();
    j["failed_checks"] = failed_checks;
    j["toolchain"] = toolchain_fingerprint();
    if (include_timings) {
        nlohmann::json jt;
        for (const auto& [k, v] : timings) jt[k] = v;
        j["timings"] = jt;
    }
    return j.dump(2) + "\n";
}

UnlearnCertificate UnlearnCertificate::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    UnlearnCertificate c;
    c.request_digest = j.at("request_digest").get<std::string>();
    c.affected_subgraphs = j.at("affected_subgraphs").get<std::vector<int>>();
    c.equivalence = j.at("equivalence").get<bool>();
    c.ledger_clean = j.at("ledger_clean").get<bool>();
    c.influence_nullity = j.at("influence_nullity").get<bool>();
    c.failed_checks = j.at("failed_checks").get<std::vector<std::string>>();
    if (j.contains("timings"))
        for (const auto& [k, v] : j.at("timings").items()) c.timings[k] = v.get<double>();
    return c;
}

} // namespace callosum
