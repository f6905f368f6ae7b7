use rand::seq::SliceRandom;

use super::game::Game;
use crate::error::{Error, Result};
use crate::models::Classifier;
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Largest game solved by coalition enumeration.
pub const MAX_EXACT_GROUPS: usize = 20;
/// Largest game whose permutations may be enumerated.
pub const MAX_ENUMERATED_GROUPS: usize = 10;

/// Orderings averaged by [`shapley_sampling`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Permutations {
    Sampled(usize),
    /// All `G!` orderings, for small games.
    All,
}

/// Shapley value sampling: the average, over orderings of the groups, of
/// each group's marginal contribution when it joins the groups before it.
///
/// Every ordering telescopes from `v(∅)` to `v(full)`, so the estimate
/// always satisfies efficiency.
pub fn shapley_sampling<T: Scalar, M: Classifier<T> + ?Sized>(
    game: &Game<'_, T, M>,
    permutations: Permutations,
    rng: &mut Rng,
) -> Result<Vec<T>> {
    let g = game.n_players();
    match permutations {
        Permutations::Sampled(0) => Err(Error::Config("n_permutations must be at least 1".into())),
        Permutations::Sampled(p) => {
            let (full, empty) = game.endpoints()?;
            let orders: Vec<Vec<usize>> = (0..p)
                .map(|_| {
                    let mut o: Vec<usize> = (0..g).collect();
                    o.shuffle(rng);
                    o
                })
                .collect();
            // Interior prefixes of every ordering, scored in one stream.
            let steps = g - 1;
            let mut current = game.baseline.to_owned();
            let prefix = game.score_with(p * steps, |k, dst| {
                let (o, j) = (k / steps, k % steps);
                if j == 0 {
                    current.assign(&game.baseline);
                }
                game.grouping.copy_group(orders[o][j], game.x, &mut current.view_mut());
                dst.assign(&current);
            })?;
            let mut phi = vec![T::zero(); g];
            for (o, order) in orders.iter().enumerate() {
                let mut prev = empty;
                for (j, &player) in order.iter().enumerate() {
                    let next = if j + 1 == g { full } else { prefix[o * steps + j] };
                    phi[player] = phi[player] + (next - prev);
                    prev = next;
                }
            }
            let pf = T::from_usize_lossy(p);
            Ok(phi.into_iter().map(|v| v / pf).collect())
        }
        Permutations::All => {
            if g > MAX_ENUMERATED_GROUPS {
                return Err(Error::Config(format!(
                    "enumerating all orderings of {g} groups is refused (limit {MAX_ENUMERATED_GROUPS})"
                )));
            }
            let v = all_coalition_values(game)?;
            let mut order: Vec<usize> = (0..g).collect();
            let mut phi = vec![T::zero(); g];
            let mut count = 0usize;
            loop {
                let mut mask = 0u64;
                for &player in &order {
                    let next = mask | 1 << player;
                    phi[player] = phi[player] + (v[next as usize] - v[mask as usize]);
                    mask = next;
                }
                count += 1;
                if !next_permutation(&mut order) {
                    break;
                }
            }
            let cf = T::from_usize_lossy(count);
            Ok(phi.into_iter().map(|p| p / cf).collect())
        }
    }
}

/// Exact Shapley values by enumerating all `2^G` coalitions.
pub fn exact_shapley<T: Scalar, M: Classifier<T> + ?Sized>(game: &Game<'_, T, M>) -> Result<Vec<T>> {
    let g = game.n_players();
    if g > MAX_EXACT_GROUPS {
        return Err(Error::Config(format!(
            "exact Shapley values for {g} groups refused: at most {MAX_EXACT_GROUPS} groups (2^G model calls)"
        )));
    }
    let v = all_coalition_values(game)?;
    // weight(s) = s! (G − s − 1)! / G! = 1 / (G · C(G−1, s))
    let mut binom = vec![1f64; g];
    for s in 1..g {
        binom[s] = binom[s - 1] * (g - s) as f64 / s as f64;
    }
    let weights: Vec<T> = binom.iter().map(|&b| T::from_f64_lossy(1.0 / (g as f64 * b))).collect();
    let mut phi = vec![T::zero(); g];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        for mask in 0..v.len() {
            if mask & bit == 0 {
                let s = mask.count_ones() as usize;
                *p = *p + weights[s] * (v[mask | bit] - v[mask]);
            }
        }
    }
    Ok(phi)
}

fn all_coalition_values<T: Scalar, M: Classifier<T> + ?Sized>(game: &Game<'_, T, M>) -> Result<Vec<T>> {
    let masks: Vec<u64> = (0..1u64 << game.n_players()).collect();
    game.values_masks(&masks)
}

/// Advance to the next lexicographic permutation; false after the last.
fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = v.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = v.iter().rposition(|&x| x > v[i]).expect("successor exists");
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}
