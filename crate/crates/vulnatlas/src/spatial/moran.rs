//! Global and local Moran statistics with permutation inference.
//!
//! Islands are excluded from the statistic entirely (they contribute
//! neither to the numerator nor to S0) and receive no inferential output;
//! a zero spatial lag would be a statement, not an absence.

use serde::{Deserialize, Serialize};

use super::{SpatialError, SpatialWeights, WeightsMode};
use crate::seed::stream_rng;
use rand::seq::SliceRandom;
use rand::Rng;

/// Global Moran's I: `(n / S0) * sum_ij w_ij z_i z_j / sum_i z_i^2`
/// over non-island tracts.
pub fn morans_i(values: &[f64], w: &SpatialWeights) -> Result<f64, SpatialError> {
    if values.len() != w.len() {
        return Err(SpatialError::LengthMismatch { got: values.len(), want: w.len() });
    }
    let active: Vec<usize> = (0..w.len()).filter(|&i| !w.is_island(i)).collect();
    if active.len() < 2 {
        return Err(SpatialError::AllIslands);
    }
    let n = active.len() as f64;
    let mean = active.iter().map(|&i| values[i]).sum::<f64>() / n;
    let den: f64 = active.iter().map(|&i| (values[i] - mean).powi(2)).sum();
    if den == 0.0 {
        return Err(SpatialError::ZeroVariance);
    }
    let mut num = 0.0;
    for &i in &active {
        let zi = values[i] - mean;
        for &(j, wij) in w.neighbors(i) {
            num += wij * zi * (values[j] - mean);
        }
    }
    Ok(n / w.s0() * num / den)
}

/// Result of the global permutation test.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MoranTest {
    pub i_obs: f64,
    pub pseudo_p: f64,
    pub permutations: usize,
    pub perm_mean: f64,
    pub perm_sd: f64,
    pub perm_min: f64,
    pub perm_max: f64,
    pub seed: u64,
}

/// Permutation test: values are randomly reassigned across non-island
/// tracts per replicate; the pseudo p-value is one-sided toward the
/// observed sign with the usual `(1 + extreme) / (permutations + 1)` floor.
pub fn morans_i_test(
    values: &[f64],
    w: &SpatialWeights,
    permutations: usize,
    seed: u64,
) -> Result<MoranTest, SpatialError> {
    let i_obs = morans_i(values, w)?;
    let active: Vec<usize> = (0..w.len()).filter(|&i| !w.is_island(i)).collect();
    let mut pool: Vec<f64> = active.iter().map(|&i| values[i]).collect();
    let mut scratch = values.to_vec();
    let mut extreme = 0usize;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for rep in 0..permutations {
        let mut rng = stream_rng(seed, rep as u64 + 1);
        pool.shuffle(&mut rng);
        for (slot, &idx) in active.iter().enumerate() {
            scratch[idx] = pool[slot];
        }
        let i_perm = morans_i(&scratch, w)?;
        if (i_obs >= 0.0 && i_perm >= i_obs) || (i_obs < 0.0 && i_perm <= i_obs) {
            extreme += 1;
        }
        sum += i_perm;
        sum_sq += i_perm * i_perm;
        min = min.min(i_perm);
        max = max.max(i_perm);
    }
    let nf = permutations as f64;
    let perm_mean = sum / nf;
    Ok(MoranTest {
        i_obs,
        pseudo_p: (1.0 + extreme as f64) / (nf + 1.0),
        permutations,
        perm_mean,
        perm_sd: (sum_sq / nf - perm_mean * perm_mean).max(0.0).sqrt(),
        perm_min: min,
        perm_max: max,
        seed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quadrant {
    /// high value, high-lag neighborhood (hot spot)
    HH,
    /// low value, low-lag neighborhood (cold spot)
    LL,
    /// high value among low neighbors (spatial outlier)
    HL,
    /// low value among high neighbors (spatial outlier)
    LH,
}

/// Per-tract local Moran output; islands carry `None` everywhere.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LisaResult {
    pub local_i: Vec<Option<f64>>,
    pub quadrant: Vec<Option<Quadrant>>,
    pub pseudo_p: Vec<Option<f64>>,
    pub significant: Vec<bool>,
    pub alpha: f64,
    pub permutations: usize,
    pub seed: u64,
}

/// Local Moran (LISA) with conditional permutation: the value at each tract
/// is held fixed while its neighbors' values are drawn without replacement
/// from the remaining tracts.
pub fn local_moran(
    values: &[f64],
    w: &SpatialWeights,
    permutations: usize,
    seed: u64,
    alpha: f64,
) -> Result<LisaResult, SpatialError> {
    if values.len() != w.len() {
        return Err(SpatialError::LengthMismatch { got: values.len(), want: w.len() });
    }
    if w.mode() != WeightsMode::RowStandardized {
        return Err(SpatialError::NotRowStandardized);
    }
    let n_all = w.len();
    let active: Vec<usize> = (0..n_all).filter(|&i| !w.is_island(i)).collect();
    if active.len() < 2 {
        return Err(SpatialError::AllIslands);
    }
    let n = active.len() as f64;
    let mean = active.iter().map(|&i| values[i]).sum::<f64>() / n;
    let m2 = active.iter().map(|&i| (values[i] - mean).powi(2)).sum::<f64>() / n;
    if m2 == 0.0 {
        return Err(SpatialError::ZeroVariance);
    }
    let z: Vec<f64> = values.iter().map(|v| v - mean).collect();

    let mut local_i = vec![None; n_all];
    let mut quadrant = vec![None; n_all];
    let mut pseudo_p = vec![None; n_all];
    let mut significant = vec![false; n_all];

    for &i in &active {
        let lag: f64 = w.neighbors(i).iter().map(|&(j, wij)| wij * z[j]).sum();
        let ii = z[i] / m2 * lag;
        local_i[i] = Some(ii);
        quadrant[i] = Some(match (z[i] >= 0.0, lag >= 0.0) {
            (true, true) => Quadrant::HH,
            (false, false) => Quadrant::LL,
            (true, false) => Quadrant::HL,
            (false, true) => Quadrant::LH,
        });

        // conditional permutation: draw deg(i) neighbor z-values from the
        // other active tracts
        let pool: Vec<f64> = active.iter().filter(|&&a| a != i).map(|&a| z[a]).collect();
        let deg = w.neighbors(i).len();
        let wgt = w.neighbors(i)[0].1; // row-standardized: uniform weight
        let mut rng = stream_rng(seed, i as u64 + 1);
        let mut extreme = 0usize;
        let mut indices: Vec<usize> = (0..pool.len()).collect();
        for _ in 0..permutations {
            // partial Fisher-Yates for a sample of size deg
            for slot in 0..deg {
                let pick = rng.gen_range(slot..indices.len());
                indices.swap(slot, pick);
            }
            let lag_perm: f64 = indices[..deg].iter().map(|&ix| wgt * pool[ix]).sum();
            let ii_perm = z[i] / m2 * lag_perm;
            if (ii >= 0.0 && ii_perm >= ii) || (ii < 0.0 && ii_perm <= ii) {
                extreme += 1;
            }
        }
        let p = (1.0 + extreme as f64) / (permutations as f64 + 1.0);
        pseudo_p[i] = Some(p);
        significant[i] = p <= alpha;
    }

    Ok(LisaResult {
        local_i,
        quadrant,
        pseudo_p,
        significant,
        alpha,
        permutations,
        seed,
    })
}
