//! Meta-controller for a new motor from a meta-dataset of tuned neighbours,
//! then the bi-level reference-model auto-tuning on the same data.

use metaddc::autotune::{autotune, CalibConfig, ReferenceModelSpace};
use metaddc::bench::{build_meta_dataset, ExperimentConfig};
use metaddc::meta::{design_meta_controller, MetaDesignConfig};
use metaddc::motor::{collect_one, default_family, CampaignProtocol};

fn main() -> metaddc::Result<()> {
    let cfg = ExperimentConfig::default();
    let fam = default_family();
    let meta = build_meta_dataset(&cfg, &fam[2..8])?;
    for e in &meta {
        println!("{}: Kp = {:.4}, Ki = {:.5}", e.system_label, e.controller.alpha[0], e.controller.alpha[1]);
    }

    let target = &fam[14];
    let data = collect_one(target, &CampaignProtocol::default())?;
    let second = collect_one(
        target,
        &CampaignProtocol {
            stream: 1,
            ..Default::default()
        },
    )?;
    let fixed = cfg.fixed_model()?;
    let design = design_meta_controller(&meta, &data, Some(&second), &fixed.tf, &MetaDesignConfig::default())?;
    println!("weights {:.4?}", design.weights.alpha_tilde);
    println!("META:   Kp = {:.4}, Ki = {:.5}", design.controller.alpha[0], design.controller.alpha[1]);

    let reference = meta[0].closed_loop_reference.clone();
    let res = autotune(
        &meta,
        &data,
        Some(&second),
        &second,
        &ReferenceModelSpace::default(),
        &CalibConfig::default(),
        &MetaDesignConfig::default(),
        &reference,
    )?;
    println!(
        "A-META: phi* = {:.5}, Kp = {:.4}, Ki = {:.5}, J = {:.3e} + {:.3e}",
        res.phi_star, res.controller.alpha[0], res.controller.alpha[1], res.j_perf, res.j_meta
    );
    Ok(())
}
