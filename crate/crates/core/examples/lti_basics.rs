//! Transfer functions: construction, simulation, closed loops and the H2
//! distance used for plant similarity.

use metaddc::controller::ControllerBasis;
use metaddc::lti::{check_similarity, feedback, TransferFunction};
use metaddc::motor::{conservative_pi, default_family, make_plant, SAMPLE_TIME};

fn main() -> metaddc::Result<()> {
    let g = TransferFunction::first_order(0.1, 0.9, SAMPLE_TIME)?;
    println!("G: num {:?} den {:?}", g.num(), g.den());
    println!("poles {:?}, stable {}, dc gain {:.3}", g.poles(), g.is_stable(), g.dc_gain());
    println!("||G||_2 = {:.6} (closed form {:.6})", g.l2_norm_default()?, 0.1 / (1.0f64 - 0.81).sqrt());

    let step = g.step_response(50);
    println!("step response after 10/50 samples: {:.4} / {:.4}", step[9], step[49]);

    let c = ControllerBasis::pi(SAMPLE_TIME)?.controller_tf(&conservative_pi())?;
    let t = feedback(&g, &c)?;
    println!("closed loop with the conservative PI: order {}, stable {}", t.den().len() - 1, t.is_stable());

    let fam = default_family();
    let (g1, g2) = (make_plant(&fam[0])?, make_plant(&fam[1])?);
    let rep = check_similarity(&g1, &g2, 1.0)?;
    println!("cfg01 vs cfg02: ||G1 - G2||_2 = {:.4e}, similar at eps = 1: {}", rep.delta_g, rep.is_similar);
    Ok(())
}
