//! Full comparison on the default 20-motor family: meta build on ten
//! configurations, then SMGO / META / VRFT / A-META on the other ten.

use std::time::Instant;

use metaddc::bench::{emit_report, run_bench, ExperimentConfig};

fn main() -> metaddc::Result<()> {
    let cfg = ExperimentConfig::default();
    let start = Instant::now();
    let (meta, cmp) = run_bench(&cfg)?;
    println!("meta-dataset: {} entries ({:.1?})", meta.len(), start.elapsed());
    for e in &meta {
        println!("  {}  Kp={:.4} Ki={:.5}", e.system_label, e.controller.alpha[0], e.controller.alpha[1]);
    }
    println!("{:<7} {:>16} {:>16} {:>14} {:>8} {:>9}", "method", "mismatch", "tracking", "effort", "time", "unstable");
    for r in &cmp.rows {
        println!(
            "{:<7} {:>8.1} ± {:<6.1} {:>8.1} ± {:<6.1} {:>6.3} ± {:<5.3} {:>6.0}s {:>9}",
            r.method.to_string(),
            r.mismatch.mean,
            r.mismatch.std,
            r.tracking.mean,
            r.tracking.std,
            r.input_effort.mean,
            r.input_effort.std,
            r.collection_time,
            r.unstable.len()
        );
    }
    for (id, a) in &cmp.autotune {
        println!("  cfg{id:02}: phi* = {:.5}, J_auto = {:.3e}", a.phi_star, a.j_auto);
    }
    let out = std::env::temp_dir().join("metaddc-bench");
    emit_report(&cmp.rows, &cmp.responses, &cmp.autotune, &out)?;
    println!("report written to {} ({:.1?})", out.display(), start.elapsed());
    Ok(())
}
