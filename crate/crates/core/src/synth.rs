//! Seeded random generative models for property tests and benchmarks.

use ndarray::Array2;
use rand::Rng;

use crate::model::{GenerativeModel, ObservationModel, PreferenceMode, PreferenceSchedule, TransitionModel};
use crate::prob::{seeded_rng, Dist, SimRng};

/// Random model with strictly positive entries everywhere, so every
/// observation is possible from every state. Preferences are over
/// observations.
pub fn random_model(seed: u64, num_states: usize, num_actions: usize, num_obs: usize) -> GenerativeModel {
    let mut rng = seeded_rng(seed);
    let a = random_stochastic(&mut rng, num_obs, num_states);
    let b = (0..num_actions)
        .map(|_| random_stochastic(&mut rng, num_states, num_states))
        .collect();
    let c = random_dist(&mut rng, num_obs);
    let d = random_dist(&mut rng, num_states);
    GenerativeModel::new(
        ObservationModel::new(a),
        TransitionModel::new(b),
        PreferenceSchedule::stationary(PreferenceMode::Observations, c),
        d,
    )
    .expect("random model is valid by construction")
}

pub fn random_dist(rng: &mut SimRng, n: usize) -> Dist {
    Dist::new((0..n).map(|_| rng.random_range(0.05..1.0)).collect()).expect("positive weights")
}

/// Column-stochastic `rows x cols` table with entries bounded away from zero.
pub fn random_stochastic(rng: &mut SimRng, rows: usize, cols: usize) -> Array2<f64> {
    let mut t = Array2::zeros((rows, cols));
    for c in 0..cols {
        let col = random_dist(rng, rows);
        for r in 0..rows {
            t[[r, c]] = col[r];
        }
    }
    t
}
