//! Supervised NT-Xent and the isotropy loss on small hand-made batches.

use isorec::linalg::Matrix;
use isorec::objective::{combined_loss, isotropy_loss, ntxent_loss, ViewBatch};

fn main() -> isorec::Result<()> {
    let z = Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])?;
    let (loss, grad) = ntxent_loss(&z, &["A", "A", "B", "B"], 0.5)?;
    let e2 = std::f64::consts::E.powi(2);
    println!("loss {loss:.7}, closed form {:.7}", -(e2 / (e2 + 2.0)).ln());
    println!("grad row 0 {:?}", grad.row(0));

    let d = std::f64::consts::FRAC_1_SQRT_2;
    for tau in [1.0, 0.2, 0.05] {
        let z = Matrix::from_rows(&[[1.0, 0.0], [d, d], [0.0, 1.0], [-d, d]])?;
        let (loss, _) = ntxent_loss(&z, &[0, 0, 1, 1], tau)?;
        println!("tau {tau:<4} loss {loss:.5}");
    }

    let y = Matrix::from_rows(&[[1.0, -1.0], [-1.0, 1.0], [1.0, 1.0], [-1.0, -1.0]])?;
    println!("isotropy of a centred unit-variance batch: {}", isotropy_loss(&y)?.0);
    let shifted = Matrix::from_rows(&[[3.0, -1.0], [1.0, 1.0], [3.0, 1.0], [1.0, -1.0]])?;
    println!("after shifting one axis by 2: {}", isotropy_loss(&shifted)?.0);

    let batch = ViewBatch::new(z, y, vec!["A".into(), "A".into(), "B".into(), "B".into()])?;
    let combined = combined_loss(&batch, 0.5, 0.1)?;
    println!("{:?}", combined.breakdown);
    Ok(())
}
