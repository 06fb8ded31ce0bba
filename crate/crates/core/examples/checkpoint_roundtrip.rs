//! Saves a model, reloads it, checks the predictions agree bit for bit and
//! shows the provenance header.

use advtrain::data::{load_checkpoint, save_checkpoint};
use advtrain::desk;
use advtrain::network::{init_weights, WeightedModel};
use advtrain::Tensor;

fn main() -> advtrain::Result<()> {
    let dir = std::env::temp_dir().join("advtrain-checkpoint-example");
    std::fs::create_dir_all(&dir).map_err(|e| advtrain::Error::io(&dir, e))?;
    let path = dir.join("model.ckpt");

    let mut model: WeightedModel = init_weights(&desk::model_spec(), 42)?;
    model.provenance.stage = "example".into();
    model.provenance.notes.insert("purpose".into(), "round trip".into());
    let id = save_checkpoint(&path, &model)?;
    let (back, back_id) = load_checkpoint::<f64>(&path)?;
    assert_eq!(id, back_id);

    let same = (0..20).all(|s| {
        let x = Tensor::from_fn(&[1, 32, 32], |i| ((i * 31 + s * 7) % 97) as f64 / 97.0);
        model.predict(&x).unwrap().bit_eq(&back.predict(&x).unwrap())
    });
    println!("checkpoint {id}");
    println!("{} parameters, predictions identical: {same}", back.param_count());
    println!("provenance: {:?}", back.provenance);
    Ok(())
}
