//! Budgeted black-box tuning of PI gains on a simulated loop.

use metaddc::autotune::ReferenceModel;
use metaddc::gopt::{tune_pi_gains, OptBudget, SearchSpace};
use metaddc::motor::{default_family, make_plant, run_closed_loop, step_reference, NoiseConfig, SAMPLE_TIME};

fn main() -> metaddc::Result<()> {
    let motor = &default_family()[4];
    let g = make_plant(motor)?;
    let r = step_reference(1500.0, 5.0, SAMPLE_TIME);
    let y_d = ReferenceModel::new(0.9391, SAMPLE_TIME)?.tf.simulate(&r)?;
    let mut k = 0;
    let runner = |c: &metaddc::ControllerParams| {
        let noise = NoiseConfig { sigma: 5.0, seed: k };
        k += 1;
        run_closed_loop(&g, c, &r, &noise).ok().map(|d| d.y)
    };
    let (c, trace) = tune_pi_gains(runner, &y_d, &SearchSpace::pi_default(), &OptBudget::default())?;
    for (i, best) in trace.running_best().iter().enumerate().step_by(5) {
        println!("iteration {i:>2}: best score {best:.4e}");
    }
    println!(
        "{} evaluations, {} unstable; Kp = {:.4}, Ki = {:.5}",
        trace.samples.len(),
        trace.n_infeasible(),
        c.alpha[0],
        c.alpha[1]
    );
    Ok(())
}
