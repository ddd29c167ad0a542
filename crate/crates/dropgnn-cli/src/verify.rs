//! Theory-verification commands: each runs an exact or randomized oracle,
//! prints a human-readable report, writes a machine CSV, and returns whether
//! the expected property held.

use std::path::Path;

use anyhow::{anyhow, Result};
use dropgnn_core::dropout::{chernoff_validate, runs_one_complete, RunBudget};
use dropgnn_core::engine::{augment, Augmentation};
use dropgnn_core::iso::isomorphic_small;
use dropgnn_core::lab::{
    dropout_equivalent, mean_counterexample, mean_separator, observe_port_dropouts,
    port_reconstruct, theorem3_pair, SeparatorOutcome,
};
use dropgnn_core::rng::Rng;
use dropgnn_core::Graph;

use crate::formats::TaggedCsv;

pub struct VerifyOutcome {
    pub passed: bool,
    pub report: String,
}

/// Dropout-equivalence of the two-cycles-versus-one construction.
pub fn verify_theorem3(l: usize, d: usize, max_k: usize, out_dir: &Path) -> Result<VerifyOutcome> {
    let (g1, g2, hub) = theorem3_pair(l).map_err(|e| anyhow!("{e}"))?;
    let non_iso = if g1.node_count() <= dropgnn_core::iso::ISO_NODE_LIMIT {
        !isomorphic_small(&g1, &g2).map_err(|e| anyhow!("{e}"))?
    } else {
        true
    };
    let eq = dropout_equivalent(&g1, &g2, hub, hub, d, max_k).map_err(|e| anyhow!("{e}"))?;
    let mut csv = TaggedCsv::new(
        &out_dir.join(format!("theorem3-l{l}-k{max_k}.csv")),
        "dropgnn.theorem3.v1",
        "side,k,signature_class,subset_count,subset_probability",
    );
    for (side, set) in [("left", &eq.left), ("right", &eq.right)] {
        for (k, sigs) in set.per_k.iter().enumerate() {
            for (ci, (_, count)) in sigs.iter().enumerate() {
                csv.row(&[
                    side.to_string(),
                    k.to_string(),
                    ci.to_string(),
                    count.to_string(),
                    format!("{:.6e}", set.subset_mass(k)),
                ]);
            }
        }
    }
    csv.flush()?;
    let mut report = String::new();
    report.push_str(&format!(
        "two {l}-cycles + hub vs one {}-cycle + hub: non-isomorphic = {non_iso}\n",
        2 * l
    ));
    if eq.equivalent {
        report.push_str(&format!("EQUIVALENT through k = {max_k} at d = {d}\n"));
    } else {
        let (k, _) = eq.witness.as_ref().unwrap();
        report.push_str(&format!("SEPARATED at k = {k} (witness signature recorded)\n"));
    }
    for (side, set) in [("left", &eq.left), ("right", &eq.right)] {
        for (k, sigs) in set.per_k.iter().enumerate() {
            let counts: Vec<u64> = sigs.values().copied().collect();
            report.push_str(&format!("  {side}: k = {k}: class counts {counts:?}\n"));
        }
    }
    Ok(VerifyOutcome {
        passed: non_iso && eq.equivalent,
        report,
    })
}

fn random_connected_graph(rng: &mut Rng, max_nodes: usize, max_degree: usize) -> Graph {
    loop {
        let n = 4 + rng.below(max_nodes - 3);
        let mut edges: Vec<(u32, u32)> = Vec::new();
        let mut degree = vec![0usize; n];
        // Random spanning tree, then extra edges under the degree cap.
        for v in 1..n as u32 {
            let u = rng.below(v as usize) as u32;
            edges.push((u, v));
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let extra = rng.below(n);
        for _ in 0..extra {
            let a = rng.below(n) as u32;
            let b = rng.below(n) as u32;
            if a == b || edges.contains(&(a.min(b), a.max(b))) || edges.contains(&(b.min(a), b.max(a))) {
                continue;
            }
            if degree[a as usize] >= max_degree || degree[b as usize] >= max_degree {
                continue;
            }
            edges.push((a.min(b), a.max(b)));
            degree[a as usize] += 1;
            degree[b as usize] += 1;
        }
        if degree.iter().all(|&d| d <= max_degree && d >= 1) {
            if let Ok(g) = Graph::uniform(n, &edges) {
                return g;
            }
        }
    }
}

/// Port reconstruction on random small graphs plus the counterexample pair.
pub fn verify_ports(trials: usize, d: usize, seed: u64, out_dir: &Path) -> Result<VerifyOutcome> {
    let mut rng = Rng::stream(seed, 0x706f);
    let mut csv = TaggedCsv::new(
        &out_dir.join("ports.csv"),
        "dropgnn.ports.v1",
        "trial,nodes,root,reconstructed_nodes,isomorphic",
    );
    let mut successes = 0;
    for trial in 0..trials {
        let base = random_connected_graph(&mut rng, 12, 4);
        let g = augment(&base, Augmentation::Ports, rng.next_u64()).map_err(|e| anyhow!("{e}"))?;
        let u = rng.below(g.node_count()) as u32;
        let obs = observe_port_dropouts(&g, u, d).map_err(|e| anyhow!("{e}"))?;
        let rec = port_reconstruct(&obs, d).map_err(|e| anyhow!("{e}"))?;
        let (nodes, edges) = g.d_hop_neighborhood(u, d).map_err(|e| anyhow!("{e}"))?;
        let (truth, _) = g.subgraph(&nodes, &edges).map_err(|e| anyhow!("{e}"))?;
        let ok = isomorphic_small(&rec, &truth).map_err(|e| anyhow!("{e}"))?;
        successes += ok as usize;
        csv.row(&[
            trial.to_string(),
            g.node_count().to_string(),
            u.to_string(),
            rec.node_count().to_string(),
            ok.to_string(),
        ]);
    }
    csv.flush()?;

    // The pair 1- and 2-dropouts cannot tell apart, ports can.
    let (g1, g2, hub) = theorem3_pair(5).map_err(|e| anyhow!("{e}"))?;
    let g1 = augment(&g1, Augmentation::Ports, seed ^ 1).map_err(|e| anyhow!("{e}"))?;
    let g2 = augment(&g2, Augmentation::Ports, seed ^ 2).map_err(|e| anyhow!("{e}"))?;
    let r1 = port_reconstruct(&observe_port_dropouts(&g1, hub, 2).map_err(|e| anyhow!("{e}"))?, 2)
        .map_err(|e| anyhow!("{e}"))?;
    let r2 = port_reconstruct(&observe_port_dropouts(&g2, hub, 2).map_err(|e| anyhow!("{e}"))?, 2)
        .map_err(|e| anyhow!("{e}"))?;
    let separated = !isomorphic_small(&r1, &r2).map_err(|e| anyhow!("{e}"))?;

    let passed = successes == trials && separated;
    let report = format!(
        "{successes}/{trials} random d = {d} reconstructions isomorphic to ground truth\n\
         counterexample pair separated under ports: {separated}\n"
    );
    Ok(VerifyOutcome { passed, report })
}

/// Mean-aggregation separator checks on the canonical cases.
pub fn verify_mean_separator(out_dir: &Path) -> Result<VerifyOutcome> {
    let mut csv = TaggedCsv::new(
        &out_dir.join("mean-separator.csv"),
        "dropgnn.mean_separator.v1",
        "case,p,tau,exact_gap,guaranteed_gap",
    );
    let mut passed = true;
    let mut report = String::new();
    let cases: [(&str, Vec<f64>, Vec<f64>); 3] = [
        ("distinct-means", vec![1.0, 1.0], vec![1.0, 3.0]),
        (
            "equal-means-equal-size",
            vec![-3.0, -3.0, 3.0, 3.0],
            vec![-3.0, -1.0, 1.0, 3.0],
        ),
        ("figure-mean", vec![1.0], vec![1.0, 1.0, -1.0, -1.0]),
    ];
    for (name, s1, s2) in &cases {
        match mean_separator(s1, s2).map_err(|e| anyhow!("{e}"))? {
            SeparatorOutcome::Separator(s) => {
                let ok = s.exact_gap >= s.guaranteed_gap - 1e-12 && s.exact_gap > 0.0;
                passed &= ok;
                report.push_str(&format!(
                    "{name}: p = {:.4}, tau = {:.4}, exact gap {:.4} >= guarantee {:.4}: {ok}\n",
                    s.p, s.tau, s.exact_gap, s.guaranteed_gap
                ));
                csv.row(&[
                    name.to_string(),
                    format!("{:.6}", s.p),
                    format!("{:.6}", s.tau),
                    format!("{:.6}", s.exact_gap),
                    format!("{:.6}", s.guaranteed_gap),
                ]);
            }
            SeparatorOutcome::Unseparated => {
                passed = false;
                report.push_str(&format!("{name}: unexpectedly unseparated\n"));
            }
        }
    }
    csv.flush()?;
    Ok(VerifyOutcome { passed, report })
}

/// The 0/1-dropout-blind multiset pair.
pub fn verify_mean_counterexample(l: usize, p: f64, out_dir: &Path) -> Result<VerifyOutcome> {
    let c = mean_counterexample(l, p).map_err(|e| anyhow!("{e}"))?;
    let zero_equal = (c.p_zero_s1 - c.p_zero_s2).abs() < 1e-12;
    let gap_matches = (c.plus_one_gap - c.plus_one_gap_closed_form).abs() < 1e-12;
    let mut csv = TaggedCsv::new(
        &out_dir.join(format!("mean-counterexample-l{l}.csv")),
        "dropgnn.mean_counterexample.v1",
        "quantity,s1,s2",
    );
    csv.row(&[
        "p_mean_zero".into(),
        format!("{:.12}", c.p_zero_s1),
        format!("{:.12}", c.p_zero_s2),
    ]);
    csv.row(&[
        "one_dropout_means".into(),
        format!("{:?}", c.one_dropout_means_s1),
        format!("{:?}", c.one_dropout_means_s2),
    ]);
    csv.flush()?;
    let report = format!(
        "S1 = {:?}\nS2 = {:?}\nP(mean = 0 | 0/1-dropouts): {:.10} vs {:.10} (equal: {zero_equal})\n\
         1-dropout mean sets: {:?} vs {:?}\n\
         P(+1) gap {:.3e} vs closed form (l/2) p^2 (1-p)^(l-1) = {:.3e} (match: {gap_matches})\n",
        c.s1, c.s2, c.p_zero_s1, c.p_zero_s2, c.one_dropout_means_s1, c.one_dropout_means_s2,
        c.plus_one_gap, c.plus_one_gap_closed_form
    );
    Ok(VerifyOutcome {
        passed: zero_equal && gap_matches,
        report,
    })
}

/// Monte-Carlo check of the run-count concentration bound.
pub fn verify_chernoff(
    gamma: usize,
    delta: f64,
    t: f64,
    trials: usize,
    k_separated: bool,
    seed: u64,
    out_dir: &Path,
) -> Result<VerifyOutcome> {
    let budget = if k_separated {
        RunBudget::k_separated(gamma, delta, t).map_err(|e| anyhow!("{e}"))?
    } else {
        RunBudget::one_complete(gamma, delta, t).map_err(|e| anyhow!("{e}"))?
    };
    let report = chernoff_validate(gamma, &budget, trials, seed).map_err(|e| anyhow!("{e}"))?;
    let mut csv = TaggedCsv::new(
        &out_dir.join("chernoff.csv"),
        "dropgnn.chernoff.v1",
        "gamma,regime,r,delta,t,trials,pass_fraction,threshold,expected_e1,empirical_e1",
    );
    csv.row(&[
        gamma.to_string(),
        if k_separated { "k_separated" } else { "one_complete" }.to_string(),
        budget.r.to_string(),
        delta.to_string(),
        t.to_string(),
        trials.to_string(),
        format!("{:.4}", report.pass_fraction),
        format!("{:.4}", report.threshold),
        format!("{:.4}", report.expected_e1),
        format!("{:.4}", report.empirical_e1),
    ]);
    csv.flush()?;
    let text = format!(
        "gamma = {gamma}, r = {} ({:?}), {trials} trials\n\
         concentration event held in {:.1}% of trials (threshold {:.1}%): sufficient = {}\n\
         E1 = {:.3} expected vs {:.3} +/- {:.3} observed\n",
        budget.r,
        budget.regime,
        100.0 * report.pass_fraction,
        100.0 * report.threshold,
        report.sufficient,
        report.expected_e1,
        report.empirical_e1,
        3.0 * report.empirical_e1_stderr,
    );
    // The empirical mean must sit within three standard errors of E1.
    let e1_ok =
        (report.empirical_e1 - report.expected_e1).abs() <= 3.0 * report.empirical_e1_stderr;
    Ok(VerifyOutcome {
        passed: report.sufficient && e1_ok,
        report: text,
    })
}

/// Both regime run counts for the bounds command.
pub fn bounds_report(gamma: usize, delta: f64, t: f64) -> Result<String> {
    let one = runs_one_complete(gamma, delta, t).map_err(|e| anyhow!("{e}"))?;
    let multi = dropgnn_core::dropout::runs_k_separated(gamma, delta, t).map_err(|e| anyhow!("{e}"))?;
    let p = dropgnn_core::dropout::optimal_p(gamma).map_err(|e| anyhow!("{e}"))?;
    Ok(format!(
        "gamma = {gamma}, delta = {delta}, t = {t}\n\
         optimal dropout probability p* = 1/(1+gamma) = {p:.6}\n\
         1-complete regime:  r >= (3e/delta^2)(gamma+1) ln(2 gamma t)        = {one}\n\
         k-separated regime: r >= (3e/delta^2)(gamma+1) gamma ln(2 gamma t)  = {multi}\n"
    ))
}
