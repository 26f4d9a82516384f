//! Closed-loop data collection on the simulated family and the CSV/JSON
//! dataset format.

use metaddc::io::{read_dataset, write_dataset};
use metaddc::motor::{collect_campaign, default_family, CampaignProtocol};

fn main() -> metaddc::Result<()> {
    let fam = default_family();
    let protocol = CampaignProtocol::default();
    let records = collect_campaign(&fam[..4], &protocol)?;
    let dir = std::env::temp_dir().join("metaddc-collect");
    for ds in &records {
        let path = dir.join(format!("{}.csv", ds.label));
        write_dataset(&path, ds)?;
        let back = read_dataset(&path)?;
        let peak = ds.y.iter().fold(f64::MIN, |m, v| m.max(*v));
        println!(
            "{}: {} samples ({:.0} s), peak {:.1} rpm, round-trip exact: {}",
            ds.label,
            ds.len(),
            ds.duration(),
            peak,
            back == *ds
        );
    }
    println!("written to {}", dir.display());
    Ok(())
}
