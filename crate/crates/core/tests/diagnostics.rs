use hermite_core::data::synth_blobs;
use hermite_core::diagnostics::{
    confidence_profile, default_eta_grid, loss_along_gradient, max_beta_smoothness,
    random_direction, record_trajectory,
};
use hermite_core::models::{train_supervised, Loss};
use hermite_core::rng::SeededRng;
use hermite_core::{Activation, MlpSpec, Model, OptimizerState, TrainConfig};

#[test]
fn landscape_is_finite_on_the_default_grid() {
    let data = synth_blobs(3, 100, 2, 0.5, 1).unwrap();
    let spec = MlpSpec::new(vec![2, 32, 32, 3], Activation::Hermite { degree: 4 });
    let m = Model::mlp(&spec, 1).unwrap();
    let p = loss_along_gradient(
        &m,
        &data.features,
        &data.one_hot(),
        Loss::CrossEntropy,
        &default_eta_grid(20),
    )
    .unwrap();
    assert_eq!(p.losses.len(), 20);
    assert!(p.losses.iter().all(|l| l.is_finite()));
}

#[test]
fn hermite_trajectory_is_smoother_than_relu() {
    let mut smaller = 0;
    for seed in 1..=5u64 {
        let data = synth_blobs(3, 100, 2, 0.5, seed).unwrap();
        let beta: Vec<f64> = [Activation::Hermite { degree: 4 }, Activation::Relu]
            .into_iter()
            .map(|act| {
                let mut m = Model::mlp(&MlpSpec::new(vec![2, 32, 32, 3], act), seed).unwrap();
                let mut opt = OptimizerState::sgd(0.1).unwrap();
                let t = record_trajectory(&mut m, &data, &mut opt, 200, 32, seed).unwrap();
                max_beta_smoothness(&t.weights, &t.grads).unwrap()
            })
            .collect();
        if beta[0] < beta[1] {
            smaller += 1;
        }
    }
    assert!(smaller >= 4, "hermite smoother in {smaller}/5 seeds");
}

#[test]
fn relu_is_overconfident_far_from_the_data() {
    let data = synth_blobs(3, 100, 2, 0.5, 1).unwrap();
    let (train, test) = data.train_test_split(60, 1).unwrap();
    let mut m = Model::mlp(&MlpSpec::new(vec![2, 32, 32, 3], Activation::Relu), 1).unwrap();
    let mut opt = OptimizerState::sgd(0.1).unwrap();
    let cfg = TrainConfig {
        epochs: 30,
        batch_size: 32,
        seed: 1,
        record_timing: false,
    };
    train_supervised(&mut m, &train, &test, &mut opt, &cfg).unwrap();
    let mut rng = SeededRng::new(101);
    let high = (0..20)
        .filter(|_| {
            let dir = random_direction(&mut rng, 2);
            confidence_profile(&m, &dir, &[50.0]).unwrap()[0] >= 0.9
        })
        .count();
    assert!(high >= 10, "{high}/20 directions at or above 0.9");
}
