//! Single-plant VRFT on a noisy record: plain least squares against
//! instrumental variables from a second experiment.

use metaddc::autotune::ReferenceModel;
use metaddc::controller::ControllerBasis;
use metaddc::motor::{collect_one, default_family, make_plant, CampaignProtocol, SAMPLE_TIME};
use metaddc::vrft::{build_instruments, vrft_design, FilterSpec, VrftOptions};

fn main() -> metaddc::Result<()> {
    let motor = &default_family()[0];
    let data = collect_one(motor, &CampaignProtocol::default())?;
    let second = collect_one(
        motor,
        &CampaignProtocol {
            stream: 1,
            ..Default::default()
        },
    )?;
    let m = ReferenceModel::new(0.9391, SAMPLE_TIME)?;
    let basis = ControllerBasis::pi(SAMPLE_TIME)?;
    let filter = FilterSpec::default();

    let g = make_plant(motor)?;
    let (a, b) = (-g.den()[1], g.num()[1]);
    println!(
        "ideal PI:  Kp = {:.4}, Ki = {:.5}",
        (1.0 - m.phi) * (1.0 + a) / (2.0 * b),
        (1.0 - m.phi) * (1.0 - a) / (b * SAMPLE_TIME)
    );
    let ls = vrft_design(&data, &m.tf, &basis, &filter, None, VrftOptions::default())?;
    println!("VRFT-LS:   Kp = {:.4}, Ki = {:.5}", ls.alpha[0], ls.alpha[1]);
    let z = build_instruments(&second, &m.tf, &basis, &filter, Default::default())?;
    let iv = vrft_design(&data, &m.tf, &basis, &filter, Some(&z), VrftOptions::default())?;
    println!("VRFT-IV:   Kp = {:.4}, Ki = {:.5}", iv.alpha[0], iv.alpha[1]);
    Ok(())
}
