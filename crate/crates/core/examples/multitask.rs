//! Round-robin training of one body with five heads.

use gradual_tuning::datasynth::{generate_dataset, TaskId};
use gradual_tuning::train::{round_robin_schedule, train_multitask, EpochRecord, TaskRef, TrainObserver};
use gradual_tuning::{Architecture, FreezeMask, LabeledDataset, Network, SeededRng, TrainConfig};

struct Log;

impl TrainObserver for Log {
    fn on_epoch(&mut self, r: &EpochRecord, _net: &Network, _mask: &FreezeMask) {
        let val: Vec<String> = r.val_errors.iter().map(|v| format!("{v:5.2}")).collect();
        println!("epoch {:>3}  {} batches  val {}{}", r.epoch, r.batches, val.join(" "), if r.stored { "  stored" } else { "" });
    }
}

fn main() -> gradual_tuning::Result<()> {
    let ids = [TaskId::Acl, TaskId::Sb2l, TaskId::Sbl, TaskId::Sbt, TaskId::Cnc];
    let data: Vec<LabeledDataset> = ids
        .iter()
        .enumerate()
        .map(|(i, &t)| generate_dataset(t, (2000, 500, 500), i as u64))
        .collect::<Result<_, _>>()?;

    let schedule = round_robin_schedule(&[2000; 5], 20);
    println!("{} batches per epoch, first six tasks {:?}", schedule.len(), schedule.iter().take(6).map(|b| b.task).collect::<Vec<_>>());

    let mut rng = SeededRng::new(9);
    let mut net = Network::init(Architecture::new(1024, vec![100, 100])?, &mut rng)?;
    let mut tasks = Vec::new();
    for d in &data {
        tasks.push(TaskRef { head: net.attach_head(2, &mut rng)?, name: &d.task, data: d });
    }
    let cfg = TrainConfig { patience: 10, max_epochs: 25, ..TrainConfig::default() };
    let out = train_multitask(net, &tasks, &cfg, &mut Log)?;
    println!("best epoch {} ({:?})", out.state.best_epoch, out.status);
    Ok(())
}
