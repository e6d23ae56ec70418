//! Focal loss against cross-entropy: per-sample values across confidence
//! levels, then how the loss mass shifts toward the rare class on a 95/5 toy problem.
//!
//! cargo run --release --example focal_loss

use oclfd::gbt::{focal_loss, FocalLossConfig};
use oclfd::model::{ModelConfig, ModelState, Target, TrainingSample};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> oclfd::Result<()> {
    println!("loss of the true class at probability p");
    println!("{:>6}{:>10}{:>10}{:>10}{:>10}", "p", "g=0", "g=1", "g=2", "g=5");
    for p in [0.1, 0.3, 0.5, 0.7, 0.9, 0.99] {
        let row: Vec<f64> = [0.0, 1.0, 2.0, 5.0]
            .iter()
            .map(|&g| focal_loss(&[p, 1.0 - p], 0, g, 1.0).map(|(l, _)| l))
            .collect::<oclfd::Result<_>>()?;
        println!("{p:>6}{:>10.4}{:>10.4}{:>10.4}{:>10.4}", row[0], row[1], row[2], row[3]);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut points = Vec::new();
    for i in 0..400 {
        let label = usize::from(i % 20 == 0);
        let shift = if label == 1 { 2.0 } else { 0.0 };
        let x: Vec<f64> = (0..2)
            .map(|_| StandardNormal.sample(&mut rng))
            .map(|v: f64| v + shift)
            .collect();
        points.push((x, label));
    }
    let samples: Vec<TrainingSample> = points
        .iter()
        .map(|(x, y)| TrainingSample::new(x, Target::Class(*y)))
        .collect();

    // Train once with cross-entropy, then score the same model both ways.
    let cfg = ModelConfig {
        hidden_dims: vec![16],
        dropout_rate: 0.0,
        learning_rate: 0.5,
        ..ModelConfig::default()
    };
    let mut model = ModelState::new(2, 2, &cfg)?;
    for _ in 0..100 {
        model.sgd_step::<ChaCha8Rng>(&samples, &[], &FocalLossConfig::cross_entropy(), None)?;
    }
    println!("\nshare of the total loss carried by the 5% minority class");
    for gamma in [0.0, 1.0, 2.0, 5.0] {
        let (mut minority, mut total) = (0.0, 0.0);
        for (x, y) in &points {
            let (l, _) = focal_loss(&model.predict(x)?, *y, gamma, 1.0)?;
            total += l;
            if *y == 1 {
                minority += l;
            }
        }
        println!("g={gamma}: {:.1}%", 100.0 * minority / total);
    }
    Ok(())
}
