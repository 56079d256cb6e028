//! Fine vs gradual tuning on two small synthetic tasks, without the
//! experiment runner: train Task-A, attach a Task-B head, tune both ways and
//! compare how much Task-A accuracy survives.

use gradual_tuning::datasynth::{generate_dataset, TaskId};
use gradual_tuning::train::{evaluate, train_single, EpochRecord, TaskRef, TrainObserver};
use gradual_tuning::{Architecture, FreezeMask, Network, SeededRng, TrainConfig, TuningMode};

struct Phases;

impl TrainObserver for Phases {
    fn on_epoch(&mut self, r: &EpochRecord, _net: &Network, mask: &FreezeMask) {
        println!(
            "  epoch {:>3}  trainable layers {}  val {:.2}%  Task-A test {:.2}%",
            r.epoch,
            mask.layers.iter().filter(|&&t| t).count(),
            r.val_errors[0],
            r.test_errors[0]
        );
    }
}

fn main() -> gradual_tuning::Result<()> {
    let sizes = (6000, 1000, 1000);
    let task_a = generate_dataset(TaskId::Cnc, sizes, 1)?;
    let task_b = generate_dataset(TaskId::Sbl, sizes, 2)?;
    let cfg = TrainConfig {
        patience: 5,
        max_epochs: 40,
        ..TrainConfig::default()
    };

    let mut rng = SeededRng::new(3);
    let mut net = Network::init(Architecture::new(1024, vec![100, 100])?, &mut rng)?;
    let head_a = net.attach_head(2, &mut rng)?;
    let a = TaskRef { head: head_a, name: "cnc", data: &task_a };
    let trained = train_single(net, a, &cfg, TuningMode::Fine, &[a], &mut ())?.network;
    let before = evaluate(&trained, head_a, &task_a.test)?;
    println!("Task-A (cnc) test error after training: {before:.2}%");

    for mode in [TuningMode::Fine, TuningMode::Gradual] {
        let mut net = trained.clone();
        let head_b = net.attach_head(2, &mut SeededRng::new(4))?;
        let b = TaskRef { head: head_b, name: "sbl", data: &task_b };
        println!("{mode} tuning on sbl:");
        let out = train_single(net, b, &TrainConfig { seed: 5, ..cfg.clone() }, mode, &[a, b], &mut Phases)?;
        println!(
            "  → Task-B {:.2}%, Task-A {before:.2}% → {:.2}%",
            evaluate(&out.network, head_b, &task_b.test)?,
            evaluate(&out.network, head_a, &task_a.test)?
        );
    }
    Ok(())
}
