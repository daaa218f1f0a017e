use crvpinn::problems::Problem;
use crvpinn::train::{train, TrainConfig};

#[test]
fn ad_training_ratio_scan() {
    let mut config = TrainConfig::new(Problem::AdvectionDiffusion, 32, 4000);
    config.hidden_layers = 2;
    config.width = 50;
    config.record_stride = 100;
    let outcome = train(&config).unwrap();
    let mut worst: f64 = 0.0;
    for r in &outcome.records {
        let ratio = r.err_discrete / r.sqrt_loss;
        worst = worst.max(ratio);
        if r.iteration % 400 == 0 || ratio > 10.0 {
            println!("iter {:>5}: sqrt_loss {:.4e} err {:.4e} ratio {:.4}", r.iteration, r.sqrt_loss, r.err_discrete, ratio);
        }
    }
    println!("worst ratio along training: {worst:.4}");
}
