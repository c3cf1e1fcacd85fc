//! Energy thresholding and DOA readout.

use ndarray::ArrayView1;
use num_complex::Complex;

use crate::array_model::AngularGrid;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Keeps the smallest set of most energetic entries whose energy reaches
/// `eta` times the total. Returned most significant first; equal energies
/// are ordered by lower index. An all-zero input keeps nothing.
pub fn threshold_signals<T: Real>(x: ArrayView1<'_, Complex<T>>, eta: T) -> Result<Vec<usize>> {
    if !(eta > T::zero() && eta <= T::one()) {
        return Err(Error::invalid(format!("threshold eta {eta} must lie in (0, 1]")));
    }
    let mut order: Vec<(usize, T)> = x
        .iter()
        .enumerate()
        .map(|(i, z)| (i, z.norm_sqr()))
        .filter(|(_, e)| *e > T::zero())
        .collect();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    let total: T = order.iter().map(|(_, e)| *e).sum();
    if eta == T::one() {
        return Ok(order.into_iter().map(|(i, _)| i).collect());
    }
    let target = eta * total;
    let mut acc = T::zero();
    let mut kept = Vec::new();
    for (i, e) in order {
        kept.push(i);
        acc = acc + e;
        if acc >= target {
            break;
        }
    }
    Ok(kept)
}

/// Grid angles of `kept`, ascending.
pub fn estimate_doas<T: Real>(kept: &[usize], grid: &AngularGrid<T>) -> Vec<T> {
    let mut doas: Vec<T> = kept.iter().map(|&i| grid.angle(i)).collect();
    doas.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    doas
}

/// Index of the largest `|x_n|²` among `kept` (lowest index on ties).
pub fn primary_index<T: Real>(x: ArrayView1<'_, Complex<T>>, kept: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for &i in kept {
        let e = x[i].norm_sqr();
        match best {
            Some((bi, be)) if e < be || (e == be && i > bi) => {}
            _ => best = Some((i, e)),
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    fn from_energies(e: &[f64]) -> Array1<Complex<f64>> {
        e.iter().map(|v| Complex::new(v.sqrt(), 0.0)).collect()
    }

    #[test]
    fn cumulative_energy_cut() {
        // 4/5.25 = 0.762 < 0.8 ≤ 5/5.25 = 0.952
        let x = from_energies(&[1.0, 4.0, 0.25]);
        assert_eq!(threshold_signals(x.view(), 0.8).unwrap(), vec![1, 0]);
    }

    #[test]
    fn full_energy_keeps_all_nonzero() {
        let x = from_energies(&[1.0, 0.0, 0.5, 1e-12]);
        let mut kept = threshold_signals(x.view(), 1.0).unwrap();
        kept.sort();
        assert_eq!(kept, vec![0, 2, 3]);
    }

    #[test]
    fn single_nonzero_is_kept_alone() {
        let mut x = Array1::<Complex<f64>>::zeros(7);
        x[4] = Complex::new(0.0, -3.0);
        for eta in [0.01, 0.5, 1.0] {
            assert_eq!(threshold_signals(x.view(), eta).unwrap(), vec![4]);
        }
    }

    #[test]
    fn all_zero_keeps_nothing() {
        let x = Array1::<Complex<f64>>::zeros(5);
        assert!(threshold_signals(x.view(), 0.9).unwrap().is_empty());
        assert_eq!(primary_index(x.view(), &[]), None);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let x = from_energies(&[0.0, 1.0, 1.0, 1.0]);
        assert_eq!(threshold_signals(x.view(), 0.5).unwrap(), vec![1, 2]);
        assert_eq!(primary_index(x.view(), &[3, 2, 1]), Some(1));
    }

    #[test]
    fn eta_out_of_range() {
        let x = from_energies(&[1.0]);
        assert!(threshold_signals(x.view(), 0.0).is_err());
        assert!(threshold_signals(x.view(), 1.5).is_err());
    }

    #[test]
    fn doa_readout() {
        let grid = AngularGrid::<f64>::default();
        assert_eq!(estimate_doas(&[20], &grid), vec![20.0]);
        assert!(estimate_doas(&[], &grid).is_empty());
        assert_eq!(estimate_doas(&[140, 40], &grid), vec![40.0, 140.0]);
    }
}
