//! Sample, check and render stimuli for every synthetic task, writing one
//! PGM per task and label.
//!
//! `cargo run --example synthetic -- [out_dir]`

use gradual_tuning::dataset::{quantize, write_pgm};
use gradual_tuning::datasynth::{generate_stimulus, validate_scene, TaskId, BACKGROUND_SPACINGS, IMAGE_SIDE};

fn main() -> gradual_tuning::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("stimuli"), Into::into);
    std::fs::create_dir_all(&out)?;
    for task in TaskId::ALL {
        for label in 0..2u8 {
            let (scene, stim) = generate_stimulus(task, 7, label as u64, label)?;
            validate_scene(&scene).expect("sampled scenes always satisfy their task");
            let kind = task.figure_kind(label)?;
            let pixels: Vec<u8> = stim.pixels.iter().map(|&v| quantize(v)).collect();
            let path = out.join(format!("{task}-{label}.pgm"));
            write_pgm(&path, &pixels, IMAGE_SIDE, IMAGE_SIDE)?;
            println!(
                "{task:5} label {label}: {kind:?}, {} segments, {}-px noise, {:?} strokes, {}",
                scene.segments().len(),
                BACKGROUND_SPACINGS[scene.background_kind as usize],
                scene.polarity,
                path.display()
            );
        }
    }
    Ok(())
}
