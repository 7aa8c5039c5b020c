//! The two-layer projection head: forward pass, backward pass and PRJ1 files.

use isorec::model::{backward, forward, init_weights, load_weights, save_weights, HeadDims, ModelMeta};

fn main() -> isorec::Result<()> {
    let dims = HeadDims::new(8, 16, 4);
    let w = init_weights(dims, 42)?;
    println!("{} parameters", w.num_params());

    let x: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin()).collect();
    let trace = forward(&w, &x)?;
    let len: f64 = trace.output.iter().map(|v| v * v).sum::<f64>().sqrt();
    println!("z = {:.4?} (norm {len:.12})", trace.output);
    println!("active hidden units: {}", trace.hidden.iter().filter(|&&h| h > 0.0).count());

    let (grads, grad_x) = backward(&trace, &w, &[1.0, 0.0, 0.0, 0.0]);
    println!("gradient norm {:.4}, input gradient {:.3?}", grads.global_norm(), &grad_x[..3]);

    let meta = ModelMeta { tau: 0.05, lambda: 0.1, seed: 42, epochs: 0, encoder_width: 8 };
    let path = std::env::temp_dir().join("isorec-example.prj1");
    save_weights(&path, &w, &meta)?;
    let (back, back_meta) = load_weights(&path)?;
    println!("round trip equal: {}, meta {:?}", back == w, back_meta);
    std::fs::remove_file(path)?;
    Ok(())
}
