//! KernelSHAP: a weighted least-squares fit of an additive model to coalition
//! values, with the Shapley kernel as weights.
//!
//! The intercept is pinned to `v(∅)` and efficiency
//! (`Σ φ = v(full) − v(∅)`) is imposed by substitution: the last
//! coefficient is eliminated as `φ_G = Δ − Σ_{j<G} φ_j`, leaving an
//! unconstrained problem in `G − 1` unknowns.

use std::collections::HashMap;

use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::Rng as _;

use super::game::Game;
use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::models::Classifier;
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Default coalition budget for `G` groups.
pub fn default_samples(groups: usize) -> usize {
    2 * groups + 2048
}

/// Whether `n_samples` suffices to enumerate every proper coalition.
fn exhaustive(groups: usize, n_samples: usize) -> bool {
    groups < 64 && (n_samples as u128) >= (1u128 << groups) - 2
}

/// Shapley kernel weight of a coalition of size `s`.
fn kernel_weight(g: usize, s: usize) -> f64 {
    let mut binom = 1f64;
    for k in 0..s {
        binom = binom * (g - k) as f64 / (k + 1) as f64;
    }
    (g - 1) as f64 / (binom * s as f64 * (g - s) as f64)
}

/// Coalitions with their regression weights. Each coalition is the sorted
/// list of present players.
fn draw_coalitions(g: usize, n_samples: usize, rng: &mut Rng) -> Vec<(Vec<usize>, f64)> {
    if exhaustive(g, n_samples) {
        return (1..(1u64 << g) - 1)
            .map(|mask| {
                let members: Vec<usize> = (0..g).filter(|&j| mask >> j & 1 == 1).collect();
                let w = kernel_weight(g, members.len());
                (members, w)
            })
            .collect();
    }
    // Sizes in proportion to the total kernel mass of each size, then a
    // uniform subset of that size; each draw carries unit weight.
    let size_mass: Vec<f64> = (1..g).map(|s| 1.0 / (s as f64 * (g - s) as f64)).collect();
    let total: f64 = size_mass.iter().sum();
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut out: Vec<(Vec<usize>, f64)> = Vec::new();
    for _ in 0..n_samples {
        let mut u = rng.random::<f64>() * total;
        let mut s = g - 1;
        for (k, &m) in size_mass.iter().enumerate() {
            if u < m {
                s = k + 1;
                break;
            }
            u -= m;
        }
        let mut members = sample(rng, g, s).into_vec();
        members.sort_unstable();
        match index.get(&members) {
            Some(&k) => out[k].1 += 1.0,
            None => {
                index.insert(members.clone(), out.len());
                out.push((members, 1.0));
            }
        }
    }
    out
}

pub fn kernel_shap<T: Scalar, M: Classifier<T> + ?Sized>(
    game: &Game<'_, T, M>,
    n_samples: usize,
    rng: &mut Rng,
) -> Result<Vec<T>> {
    let g = game.n_players();
    let (full, empty) = game.endpoints()?;
    let delta = full - empty;
    if g == 1 {
        return Ok(vec![delta]);
    }
    if n_samples < g + 2 {
        return Err(Error::Config(format!(
            "kernel_shap needs at least G + 2 = {} samples, got {n_samples}",
            g + 2
        )));
    }
    match solve_once(game, n_samples, empty, delta, rng) {
        Ok(phi) => Ok(phi),
        Err(Error::Numerical(first)) if !exhaustive(g, n_samples) => {
            log::warn!("kernel_shap: {first}; retrying with {} samples", 2 * n_samples);
            solve_once(game, 2 * n_samples, empty, delta, rng).map_err(|e| match e {
                Error::Numerical(m) => Error::Numerical(format!("kernel_shap design stays singular after resampling: {m}")),
                other => other,
            })
        }
        Err(e) => Err(e),
    }
}

fn solve_once<T: Scalar, M: Classifier<T> + ?Sized>(
    game: &Game<'_, T, M>,
    n_samples: usize,
    empty: T,
    delta: T,
    rng: &mut Rng,
) -> Result<Vec<T>> {
    let g = game.n_players();
    let coalitions = draw_coalitions(g, n_samples, rng);
    let values = game.score_with(coalitions.len(), |k, dst| {
        dst.assign(&game.baseline);
        for &j in &coalitions[k].0 {
            game.grouping.copy_group(j, game.x, dst);
        }
    })?;

    // Regressors x_j = z_j − z_last, response y = v − v(∅) − z_last·Δ.
    let m = g - 1;
    let mut ata = Array2::<f64>::zeros((m, m));
    let mut atb = Array1::<f64>::zeros(m);
    let delta = delta.to_f64_lossy();
    let mut row = vec![0f64; m];
    for ((members, w), v) in coalitions.iter().zip(&values) {
        let last = members.last() == Some(&(g - 1));
        let z_last = if last { 1.0 } else { 0.0 };
        row.fill(-z_last);
        for &j in members.iter().filter(|&&j| j < m) {
            row[j] += 1.0;
        }
        let y = v.to_f64_lossy() - empty.to_f64_lossy() - z_last * delta;
        let nz: Vec<usize> = (0..m).filter(|&j| row[j] != 0.0).collect();
        for &a in &nz {
            let wa = w * row[a];
            atb[a] += wa * y;
            for &b in &nz {
                ata[[a, b]] += wa * row[b];
            }
        }
    }
    let coef = solve_spd(ata.view(), atb.view().insert_axis(ndarray::Axis(1)))
        .map_err(|e| Error::Numerical(format!("singular kernel_shap design ({} coalitions): {e}", coalitions.len())))?;
    let mut phi: Vec<f64> = coef.column(0).to_vec();
    let rest: f64 = phi.iter().sum();
    phi.push(delta - rest);
    Ok(phi.into_iter().map(T::from_f64_lossy).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attrib::shapley::exact_shapley;
    use crate::attrib::{make_grouping, ChunkSpec};
    use crate::models::stub::{LinearProb, Logistic};
    use crate::rng::substream;
    use ndarray::{array, Array2};

    #[test]
    fn kernel_weights_are_symmetric() {
        for s in 1..6 {
            assert!((kernel_weight(6, s) - kernel_weight(6, 6 - s)).abs() < 1e-15);
        }
        // (M−1)/(C(M,s)·s·(M−s)) with M=4, s=2: 3 / (6·2·2)
        assert!((kernel_weight(4, 2) - 3.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn additive_two_groups() {
        let m = LinearProb::<f64> {
            weights: array![[0.25, 0.125]],
            bias: 0.0,
        };
        let x = array![[0.5, 1.0]];
        let b = Array2::zeros((1, 2));
        let g = make_grouping(1, 2, ChunkSpec::POINT_WISE).unwrap();
        let game = Game::new(&m, x.view(), b.view(), &g, 1).unwrap();
        let phi = kernel_shap(&game, 4, &mut substream(0, 0, &[])).unwrap();
        assert!((phi[0] - 0.125).abs() < 1e-12 && (phi[1] - 0.125).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_equals_exact_shapley() {
        let w = Array2::from_shape_fn((2, 3), |(c, t)| ((c * 3 + t) as f64 * 1.7).cos());
        let m = Logistic { weights: w, bias: -0.2 };
        let x = Array2::from_shape_fn((2, 3), |(c, t)| ((c * 2 + t * 5) % 7) as f64 / 2.0 - 1.5);
        let b = Array2::from_elem((2, 3), 0.3);
        let g = make_grouping(2, 3, ChunkSpec::POINT_WISE).unwrap();
        let game = Game::new(&m, x.view(), b.view(), &g, 1).unwrap();
        let exact = exact_shapley(&game).unwrap();
        let phi = kernel_shap(&game, 1 << 6, &mut substream(0, 0, &[])).unwrap();
        for (a, e) in phi.iter().zip(&exact) {
            assert!((a - e).abs() < 1e-9, "{phi:?} vs {exact:?}");
        }
    }

    #[test]
    fn sampled_fit_is_efficient() {
        let w = Array2::from_shape_fn((1, 30), |(_, t)| (t as f64 * 0.9).sin());
        let m = Logistic { weights: w, bias: 0.1 };
        let x = Array2::from_shape_fn((1, 30), |(_, t)| (t as f64 * 0.3).cos());
        let b = Array2::zeros((1, 30));
        let g = make_grouping(1, 30, ChunkSpec::POINT_WISE).unwrap();
        let game = Game::new(&m, x.view(), b.view(), &g, 1).unwrap();
        let phi = kernel_shap(&game, default_samples(30), &mut substream(1, 0, &[])).unwrap();
        let (full, empty) = game.endpoints().unwrap();
        assert!((phi.iter().sum::<f64>() - (full - empty)).abs() < 1e-9);
    }

    #[test]
    fn too_few_samples_is_a_config_error() {
        let x = Array2::zeros((1, 5));
        let g = make_grouping(1, 5, ChunkSpec::POINT_WISE).unwrap();
        let m = LinearProb { weights: Array2::zeros((1, 5)), bias: 0.5 };
        let game = Game::new(&m, x.view(), x.view(), &g, 1).unwrap();
        assert!(matches!(kernel_shap(&game, 6, &mut substream(0, 0, &[])), Err(Error::Config(_))));
    }
}
