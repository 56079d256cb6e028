//! Matrices and reproducible random streams.

use gradual_tuning::numerics::{argmax, derive_seed, hash_label};
use gradual_tuning::{Matrix, SeededRng};

fn main() -> gradual_tuning::Result<()> {
    let a = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]])?;
    let b = a.transpose();
    let c = a.matmul(&b)?;
    println!("A·Aᵀ = {:?} {:?}", c.row(0), c.row(1));
    println!("argmax of row 1: {}", argmax(c.row(1))?);

    // Same seed, same stream; derived streams are independent of draw order.
    let mut r1 = SeededRng::new(42);
    let mut r2 = SeededRng::new(42);
    assert_eq!(r1.next_u64(), r2.next_u64());
    let shuffle_seed = derive_seed(42, &[hash_label("shuffle"), 3]);
    let mut order: Vec<usize> = (0..10).collect();
    SeededRng::new(shuffle_seed).shuffle(&mut order);
    println!("epoch 3 order: {order:?}");
    println!("uniform draw in [-1, 1): {:.4}", r1.uniform(-1.0, 1.0)?);
    Ok(())
}
