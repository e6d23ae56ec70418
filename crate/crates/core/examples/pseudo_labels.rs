//! MC-dropout pseudo-labeling on a pre-trained model: how many unlabeled
//! samples pass the confidence and uncertainty gates as τ_p and κ move.
//!
//! cargo run --release --example pseudo_labels

use oclfd::cupl::{label_predictions, CuplConfig, Polarity};
use oclfd::model::{ModelConfig, ModelState, Target, TrainingSample};
use oclfd::presets;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> oclfd::Result<()> {
    let data = presets::synth(3, 0, 11)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut rows: Vec<_> = data.samples.iter().collect();
    rows.shuffle(&mut rng);
    let (train, pool) = rows.split_at(300);

    let mut model = ModelState::new(
        data.feature_dim,
        data.class_count,
        &ModelConfig {
            learning_rate: 0.1,
            ..ModelConfig::default()
        },
    )?;
    let loss = Default::default();
    for _ in 0..20 {
        for chunk in train.chunks(16) {
            let batch: Vec<TrainingSample> = chunk
                .iter()
                .map(|s| TrainingSample::new(&s.features, Target::Class(s.label)))
                .collect();
            model.sgd_step(&batch, &[], &loss, Some(&mut rng))?;
        }
    }

    let pool = &pool[..500];
    let features: Vec<&[f64]> = pool.iter().map(|s| s.features.as_slice()).collect();
    let preds = features
        .iter()
        .map(|x| model.mc_predict(x, 10, &mut rng))
        .collect::<oclfd::Result<Vec<_>>>()?;

    println!("{:>6}{:>8}{:>10}{:>10}{:>10}", "tau_p", "kappa", "positive", "negative", "correct");
    for tau_p in [0.6, 0.8, 0.9, 0.95, 0.99] {
        for kappa in [0.001, 0.01, 0.05] {
            let cfg = CuplConfig {
                tau_p,
                kappa,
                ..CuplConfig::default()
            };
            let out = label_predictions(&features, &preds, &cfg);
            let pos: Vec<_> = out.iter().filter(|s| s.accepted && s.polarity == Polarity::Positive).collect();
            let neg = out.iter().filter(|s| s.accepted && s.polarity == Polarity::Negative).count();
            let correct = pos.iter().filter(|s| s.pseudo_label == pool[s.index].label).count();
            println!("{tau_p:>6}{kappa:>8}{:>10}{neg:>10}{:>10}", pos.len(), correct);
        }
    }
    Ok(())
}
