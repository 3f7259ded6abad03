//! The weak-type tail experiment over configured ensembles.

use anyhow::Result;

use riesz_sim::bellman::weak_type_experiment;

use crate::config::WeakTypeConfig;
use crate::report::{fb, ff, Report};

pub fn run(cfg: &WeakTypeConfig, echo: String) -> Result<Report> {
    let mut report = Report::new("weak-type", echo);
    let mut rows = crate::report::Table::new(
        "weak-type-rows",
        &[
            "ensemble", "dim", "transform", "drift", "n_paths", "lambda", "empirical", "bound",
            "stderr", "combined_sigma", "holds",
        ],
    );
    let mut x_terms =
        crate::report::Table::new("x-terms", &["ensemble", "mean_x_term", "n_paths"]);
    let mut invariants = crate::report::Table::new(
        "invariants",
        &[
            "ensemble",
            "subordination_margin",
            "qv_transfer_ratio",
            "qv_domination_ratio",
            "refoot_excess",
            "homogeneous_excess",
            "drift_sign_max",
            "holds",
        ],
    );

    let mut all_rows_hold = true;
    let mut all_invariants_hold = true;
    let mut total_rows = 0usize;
    for (i, e) in cfg.ensembles.iter().enumerate() {
        let spec = e.spec(cfg.seed.wrapping_add(i as u64))?;
        let default_probes = [0, e.n_steps / 2];
        let probes: &[usize] = cfg.invariant_probes.as_deref().unwrap_or(&default_probes);
        let result = weak_type_experiment(&spec, &cfg.lambdas, cfg.hypothesis_tol, probes)?;
        let label = e.label();
        for row in &result.rows {
            all_rows_hold &= row.holds;
            total_rows += 1;
            rows.push(vec![
                label.clone(),
                e.dim.to_string(),
                e.transform.label().to_string(),
                e.drift.label(),
                row.n_paths.to_string(),
                ff(row.lambda),
                ff(row.empirical),
                ff(row.bound),
                ff(row.stderr),
                ff(row.combined_sigma),
                fb(row.holds),
            ]);
        }
        x_terms.push(vec![label.clone(), ff(result.mean_x_term), e.n_paths.to_string()]);
        let inv = &result.invariants;
        let holds = inv.all_hold(cfg.invariant_tol);
        all_invariants_hold &= holds;
        invariants.push(vec![
            label,
            ff(inv.worst_subordination_margin),
            ff(inv.worst_qv_transfer_ratio),
            ff(inv.worst_qv_domination_ratio),
            ff(inv.worst_refoot_excess),
            ff(inv.worst_homogeneous_excess),
            ff(inv.worst_drift_sign_max),
            fb(holds),
        ]);
    }

    report.tables.push(rows);
    report.tables.push(x_terms);
    report.tables.push(invariants);
    report.verdict(
        "tail-bounds",
        all_rows_hold,
        format!(
            "{total_rows} rows across {} ensembles, every empirical tail within 2 E|X| / lambda + 3 sigma: {all_rows_hold}",
            cfg.ensembles.len()
        ),
    );
    report.verdict(
        "structural-invariants",
        all_invariants_hold,
        format!("per-path margins within {} on every ensemble: {all_invariants_hold}", cfg.invariant_tol),
    );
    Ok(report)
}
