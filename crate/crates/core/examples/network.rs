//! Build a network, take one SGD step by hand and save a checkpoint.

use gradual_tuning::net::FreezeMask;
use gradual_tuning::{Architecture, Matrix, Mode, Network, RegConfig, SeededRng};

fn main() -> gradual_tuning::Result<()> {
    let mut rng = SeededRng::new(1);
    let mut net = Network::init(Architecture::new(4, vec![8, 6])?, &mut rng)?;
    let head = net.attach_head(3, &mut rng)?;
    println!("{} parameters, depth {}", net.param_count(), net.depth());

    let x = Matrix::from_rows(&[&[0.1, 0.9, 0.0, 0.3], &[0.7, 0.2, 0.5, 0.0]])?;
    let labels = [1, 2];
    let reg = RegConfig::dropout(net.depth());
    for step in 0..5 {
        let cache = net.forward(head, &x, Mode::Train, &reg, &mut rng)?;
        let loss = net.data_loss(&cache, &labels)?;
        let mask = FreezeMask::all(&net);
        let grads = net.backward(&cache, &labels, &reg, &mask)?;
        net.apply_gradients(&grads, 0.1, &mask)?;
        println!("step {step}: loss {loss:.4}");
    }
    println!("eval probabilities: {:?}", net.predict(head, &x)?.row(0));

    let path = std::env::temp_dir().join("example-net.gtck");
    net.save(&path)?;
    assert_eq!(Network::load(&path)?, net);
    println!("checkpoint written to {}", path.display());
    Ok(())
}
