//! Builds a small logistic model on the reverse-mode tape, prints the
//! analytic gradient and checks it against central differences.
//!
//! cargo run --release --example autodiff_gradcheck

use std::error::Error;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use taste::tensor::{gradient_check, ParamStore, Tape, Tensor};

fn main() -> Result<(), Box<dyn Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let w1 = store.add_normal("w1", vec![3, 4], 0.5, &mut rng);
    let w2 = store.add_normal("w2", vec![4, 1], 0.5, &mut rng);
    let x = Tensor::new(vec![5, 3], (0..15).map(|i| (i as f64 * 0.37).sin()).collect())?;
    let y = [1.0, 0.0, 1.0, 1.0, 0.0];

    let forward = |tape: &mut Tape<'_>| {
        let input = tape.constant(x.clone())?;
        let a = tape.param(w1)?;
        let b = tape.param(w2)?;
        let h = tape.matmul(input, a)?;
        let h = tape.sigmoid(h)?;
        let logits = tape.matmul(h, b)?;
        let losses = tape.bce_with_logits(logits, &y)?;
        tape.mean(losses)
    };

    let grads = {
        let mut tape = Tape::new(&store);
        let loss = forward(&mut tape)?;
        println!("loss {:.6}", tape.value(loss).data()[0]);
        tape.backward(loss)?
    };
    println!("d loss / d w2 = {:?}", grads.get(w2).map(|g| g.data().to_vec()));

    let report = gradient_check(&mut store, 1e-5, forward)?;
    println!("checked {} components, max relative error {:.2e}", report.checked, report.max_rel_error);
    Ok(())
}
