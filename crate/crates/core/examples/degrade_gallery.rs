//! Applies each degradation to a few synthetic images, writes one PGM strip
//! per degradation and prints the mean PSNR against the clean image.
//!
//!     cargo run --release --example degrade_gallery -- [out_dir]

use std::path::PathBuf;

use advtrain::data::{synth_shapes, tile, write_pnm, Split};
use advtrain::degrade::DegradeSpec;
use advtrain::desk;
use advtrain::rng::{stream, Purpose};

const SPECS: [&str; 8] = [
    "lowres:2",
    "lowres:4",
    "saltpepper:0.5",
    "blur:2",
    "gauss-noise:25",
    "occlude:0.2,0.3,0.8,0.5",
    "lowres:2|gauss-noise:25",
    "none",
];

fn main() -> advtrain::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "gallery".into()));
    std::fs::create_dir_all(&out).map_err(|e| advtrain::Error::io(&out, e))?;
    let data = synth_shapes(&desk::synth_params(), 8, 7, Split::Test)?;
    let clean: Vec<_> = (0..data.len()).map(|i| data.image(i)).collect::<Result<_, _>>()?;
    write_pnm(&out.join("clean.pgm"), &tile(&clean)?)?;

    for text in SPECS {
        let spec: DegradeSpec = text.parse()?;
        let mut psnr = 0.0;
        let mut strip = Vec::new();
        for (i, img) in clean.iter().enumerate() {
            let lq = spec.apply(img, &mut stream(7, Purpose::TestDegrade, i as u64))?;
            psnr += lq.psnr(img)?;
            strip.push(lq);
        }
        let name = text.replace([':', '|', ','], "_");
        write_pnm(&out.join(format!("{name}.pgm")), &tile(&strip)?)?;
        println!("{text:<26} PSNR {:6.2} dB", psnr / clean.len() as f64);
    }
    println!("strips written to {}", out.display());
    Ok(())
}
