//! Build the MNIST-04 / MNIST-59 splits from the official IDX files.
//!
//! `cargo run --release --example mnist -- /path/to/mnist`

use gradual_tuning::mnist::{self, MNIST_04, MNIST_59};

fn main() -> gradual_tuning::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "data/mnist".into());
    let labels = mnist::read_labels(mnist::locate(&dir, mnist::TRAIN_LABELS)?)?;
    for range in [MNIST_04, MNIST_59] {
        let n = labels.iter().filter(|&&l| range.contains(l)).count();
        println!("{}: {n} digits in the training file", range.name());
    }
    for range in [MNIST_04, MNIST_59] {
        let data = mnist::load_split(&dir, range, mnist::DEFAULT_SIZES, 1)?;
        println!(
            "{}: train {} valid {} test {}, train class counts {:?}",
            data.task,
            data.train.len(),
            data.valid.len(),
            data.test.len(),
            data.train.class_counts(data.classes())
        );
    }
    Ok(())
}
