//! SINR, per-user and sum rates, and the PU interference power cap.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::numerics::{CMatrix, Real, C};

/// Receiver noise variances (W). Data symbols are unit power, so transmit
/// power lives entirely in the beamformer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real")]
pub struct NoiseParams<T> {
    /// Passive-mode receiver noise σ_b².
    pub sigma_b_sq: T,
    /// Active-mode receiver noise σ_a².
    pub sigma_a_sq: T,
}

impl<T: Real> NoiseParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_b_sq > T::zero() && self.sigma_a_sq > T::zero()) {
            return Err(Error::Config("noise variances must be > 0".into()));
        }
        Ok(())
    }
}

impl<T: Real> Default for NoiseParams<T> {
    fn default() -> Self {
        Self {
            sigma_b_sq: T::one(),
            sigma_a_sq: T::one(),
        }
    }
}

/// SU power budget and PU interference threshold, both linear watts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerConstraint<T> {
    pub p_t: T,
    pub i_thr: T,
}

impl<T: Real> PowerConstraint<T> {
    pub fn from_db(p_t_db: T, i_thr_db: T) -> Self {
        Self {
            p_t: db_to_linear(p_t_db),
            i_thr: db_to_linear(i_thr_db),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_t > T::zero() && self.i_thr > T::zero()) {
            return Err(Error::Config("P_t and I must be > 0".into()));
        }
        Ok(())
    }
}

impl<T: Real> Default for PowerConstraint<T> {
    /// 10 dB each.
    fn default() -> Self {
        Self {
            p_t: T::lit(10.0),
            i_thr: T::lit(10.0),
        }
    }
}

pub fn db_to_linear<T: Real>(db: T) -> T {
    T::lit(10.0).powf(db / T::lit(10.0))
}

/// Rates of one slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport<T> {
    pub per_user_sinr: Vec<T>,
    /// bits/s/Hz
    pub per_user_rate: Vec<T>,
    pub sum_rate: T,
}

/// Largest admissible `tr(GGᴴ)`: `min{P_t, I / max_i g_sp,i}`.
pub fn power_cap<T: Real>(pc: &PowerConstraint<T>, g_sp: &[T]) -> T {
    let worst = g_sp.iter().copied().fold(T::zero(), T::max);
    if worst <= T::zero() {
        return pc.p_t;
    }
    pc.p_t.min(pc.i_thr / worst)
}

/// Radially rescales `g` onto the power ball `tr(GGᴴ) ≤ cap`.
pub fn project_beamformer<T: Real>(g: &CMatrix<T>, cap: T) -> CMatrix<T> {
    let power = g.frobenius_sq();
    if power <= cap {
        return g.clone();
    }
    let mut scaled = g.scale((cap / power).sqrt());
    // Rounding can leave the rescaled power an ulp above the cap.
    let mut p = scaled.frobenius_sq();
    while p > cap {
        scaled = scaled.scale(T::one() - T::epsilon());
        p = scaled.frobenius_sq();
    }
    scaled
}

/// `h_bᵀ Φ H_s` as a length-A row.
pub fn effective_row<T: Real>(ch: &ChannelSet<T>, refl: &CMatrix<T>, b: usize) -> Result<Vec<C<T>>> {
    let cascaded = ch.h_b[b].transpose().matmul(refl)?.matmul(&ch.h_s)?;
    Ok(cascaded.as_slice().to_vec())
}

fn column_gain<T: Real>(row: &[C<T>], g: &CMatrix<T>, col: usize) -> T {
    let mut acc = C::new(T::zero(), T::zero());
    for (a, v) in row.iter().enumerate() {
        acc += v * g.get(a, col);
    }
    acc.norm_sqr()
}

/// SINR of receiver `b` where only the elements flagged in `amplified`
/// contribute amplifier noise `σ_r²·|(h_bᵀΨ)_r|²`.
pub fn sinr_general<T: Real>(
    ch: &ChannelSet<T>,
    refl: &CMatrix<T>,
    amplified: &[bool],
    g: &CMatrix<T>,
    receiver_noise: T,
    amp_noise_var: T,
    b: usize,
) -> Result<T> {
    if b >= ch.h_b.len() || b >= g.cols() {
        return Err(Error::shape("sinr", format!("receiver index {b} out of range")));
    }
    if g.rows() != ch.h_s.cols() || g.cols() != ch.h_b.len() {
        return Err(Error::shape("sinr", format!("beamformer is {}x{}", g.rows(), g.cols())));
    }
    let row = effective_row(ch, refl, b)?;
    let signal = column_gain(&row, g, b);
    let interference: T = (0..g.cols()).filter(|&r| r != b).map(|r| column_gain(&row, g, r)).sum();
    let amp_noise = if amp_noise_var > T::zero() && amplified.iter().any(|&a| a) {
        let reflected = ch.h_b[b].transpose().matmul(refl)?;
        let power: T = reflected
            .as_slice()
            .iter()
            .zip(amplified)
            .filter(|(_, &a)| a)
            .map(|(z, _)| z.norm_sqr())
            .sum();
        amp_noise_var * power
    } else {
        T::zero()
    };
    Ok(signal / (interference + amp_noise + receiver_noise))
}

/// Passive-mode SINR of receiver `b`.
pub fn sinr_passive<T: Real>(ch: &ChannelSet<T>, refl: &CMatrix<T>, g: &CMatrix<T>, np: &NoiseParams<T>, b: usize) -> Result<T> {
    sinr_general(ch, refl, &[], g, np.sigma_b_sq, T::zero(), b)
}

/// Active-mode SINR of receiver `b`, with every element amplifying.
pub fn sinr_active<T: Real>(
    ch: &ChannelSet<T>,
    refl: &CMatrix<T>,
    g: &CMatrix<T>,
    np: &NoiseParams<T>,
    amp_noise_var: T,
    b: usize,
) -> Result<T> {
    let all = vec![true; refl.cols()];
    sinr_general(ch, refl, &all, g, np.sigma_a_sq, amp_noise_var, b)
}

pub fn rate_report<T: Real>(sinrs: &[T]) -> Result<RateReport<T>> {
    if let Some(bad) = sinrs.iter().find(|s| !(**s >= T::zero())) {
        return Err(Error::Domain(format!("SINR must be non-negative, got {bad}")));
    }
    let per_user_rate: Vec<T> = sinrs.iter().map(|&s| (T::one() + s).log2()).collect();
    let sum_rate = per_user_rate.iter().copied().sum();
    Ok(RateReport {
        per_user_sinr: sinrs.to_vec(),
        per_user_rate,
        sum_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_channel_set, CascadeSpec, Topology};
    use crate::numerics::{sample_cn01, Rng};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_scalar_channel() -> ChannelSet<f64> {
        let one = CMatrix::from_real(1, 1, &[1.0]).unwrap();
        ChannelSet::from_parts(one.clone(), vec![one.clone()], one.clone(), one).unwrap()
    }

    fn random_setup(seed: u64, topo: Topology) -> (ChannelSet<f64>, CMatrix<f64>, CMatrix<f64>) {
        let mut rng = Rng::new(seed);
        let ch = sample_channel_set(
            &mut rng,
            &topo,
            &CascadeSpec {
                kappa_s: 1,
                kappa_b: 2,
                kappa_p: 1,
            },
        )
        .unwrap();
        let phases: Vec<C<f64>> = (0..topo.ris_elements)
            .map(|_| C::from_polar(rng.uniform_in(0.6, 1.0), rng.uniform_in(0.0, std::f64::consts::TAU)))
            .collect();
        let refl = CMatrix::diag(&phases);
        let g = CMatrix::from_fn(topo.tx_antennas, topo.su_receivers, |_, _| sample_cn01(&mut rng));
        (ch, refl, g)
    }

    /// Independent reimplementation of the passive SINR and sum rate with
    /// explicit scalar loops over the diagonal reflection.
    fn naive_sum_rate(ch: &ChannelSet<f64>, refl: &CMatrix<f64>, g: &CMatrix<f64>, noise: f64) -> f64 {
        let (r, a, b_count) = (ch.h_s.rows(), ch.h_s.cols(), ch.h_b.len());
        let mut total = 0.0;
        for b in 0..b_count {
            let gain = |col: usize| {
                let (mut re, mut im) = (0.0, 0.0);
                for ant in 0..a {
                    for e in 0..r {
                        let z = ch.h_b[b].get(e, 0) * refl.get(e, e) * ch.h_s.get(e, ant) * g.get(ant, col);
                        re += z.re;
                        im += z.im;
                    }
                }
                re * re + im * im
            };
            let mut interf = 0.0;
            for col in 0..b_count {
                if col != b {
                    interf += gain(col);
                }
            }
            total += (1.0 + gain(b) / (interf + noise)).ln() / std::f64::consts::LN_2;
        }
        total
    }

    #[test]
    fn cap_examples() {
        let pc = PowerConstraint { p_t: 10.0, i_thr: 10.0 };
        assert_relative_eq!(power_cap(&pc, &[0.5, 2.0]), 5.0);
        assert_eq!(power_cap(&pc, &[0.0, 0.0]), 10.0);
        assert_eq!(
            power_cap(
                &PowerConstraint {
                    p_t: 10.0,
                    i_thr: f64::INFINITY
                },
                &[3.0]
            ),
            10.0
        );
    }

    #[test]
    fn db_conversion() {
        assert_relative_eq!(db_to_linear(10.0), 10.0, epsilon = 1e-12);
        assert_relative_eq!(db_to_linear(30.0), 1000.0, epsilon = 1e-9);
        let pc = PowerConstraint::from_db(20.0, 0.0);
        assert_relative_eq!(pc.p_t, 100.0, epsilon = 1e-9);
        assert_relative_eq!(pc.i_thr, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_examples() {
        let g = CMatrix::<f64>::from_real(2, 2, &[1.0, 1.0, 1.0, 1.0]).unwrap(); // trace 4
        assert_eq!(project_beamformer(&g, 5.0), g);
        let g20 = g.scale(5f64.sqrt()); // trace 20
        let p = project_beamformer(&g20, 5.0);
        assert_relative_eq!(p.frobenius_sq(), 5.0, epsilon = 1e-12);
        assert_relative_eq!(p.get(0, 0).re, g20.get(0, 0).re * 0.5, epsilon = 1e-12);
        let z = CMatrix::<f64>::zeros(2, 2);
        assert_eq!(project_beamformer(&z, 3.0), z);
    }

    #[test]
    fn passive_scalar_example() {
        let ch = unit_scalar_channel();
        let refl = CMatrix::from_real(1, 1, &[1.0]).unwrap();
        let g = CMatrix::from_real(1, 1, &[2.0]).unwrap();
        let s = sinr_passive(&ch, &refl, &g, &NoiseParams::default(), 0).unwrap();
        assert_relative_eq!(s, 4.0, epsilon = 1e-12);
        let rep = rate_report(&[s]).unwrap();
        assert_relative_eq!(rep.sum_rate, 5f64.log2(), epsilon = 1e-12);
        let zero = CMatrix::<f64>::zeros(1, 1);
        assert_eq!(sinr_passive(&ch, &refl, &zero, &NoiseParams::default(), 0).unwrap(), 0.0);
    }

    #[test]
    fn active_scalar_example() {
        let ch = unit_scalar_channel();
        let refl = CMatrix::from_real(1, 1, &[2.0]).unwrap();
        let g = CMatrix::from_real(1, 1, &[1.0]).unwrap();
        let s = sinr_active(&ch, &refl, &g, &NoiseParams::default(), 0.01, 0).unwrap();
        assert_relative_eq!(s, 4.0 / 1.04, epsilon = 1e-12);
        assert!((s - 3.8462).abs() < 5e-5);
    }

    #[test]
    fn rate_report_examples() {
        let r = rate_report(&[0.0, 0.0]).unwrap();
        assert_eq!((r.per_user_rate.clone(), r.sum_rate), (vec![0.0, 0.0], 0.0));
        assert_eq!(rate_report(&[1.0]).unwrap().sum_rate, 1.0);
        let r = rate_report(&[4.0f64, 4.0 / 1.04]).unwrap();
        // 2.3219 + 2.2770 after rounding each term to 4 places.
        assert!((r.sum_rate - 4.5989).abs() < 2e-4);
        assert!(matches!(rate_report(&[-0.1]), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_amp_noise_reduces_to_passive_formula() {
        let (ch, refl, g) = random_setup(3, Topology::default());
        let np = NoiseParams {
            sigma_b_sq: 0.7,
            sigma_a_sq: 0.7,
        };
        for b in 0..2 {
            let a = sinr_active(&ch, &refl, &g, &np, 0.0, b).unwrap();
            let p = sinr_passive(&ch, &refl, &g, &np, b).unwrap();
            assert_relative_eq!(a, p, max_relative = 1e-12);
        }
    }

    #[test]
    fn amp_noise_term_scales_with_gain_squared() {
        let (ch, _, _) = random_setup(5, Topology::default());
        let phases: Vec<C<f64>> = (0..4).map(|i| C::from_polar(1.0, i as f64)).collect();
        let unit = CMatrix::diag(&phases);
        let noise_power = |alpha: f64| {
            let refl = unit.scale(alpha);
            let reflected = ch.h_b[0].transpose().matmul(&refl).unwrap();
            reflected.frobenius_sq()
        };
        assert_relative_eq!(noise_power(1.7), 1.7 * 1.7 * noise_power(1.0), max_relative = 1e-12);
    }

    #[test]
    fn unit_gain_active_equals_ideal_passive() {
        let (ch, _, g) = random_setup(6, Topology::default());
        let phases: Vec<C<f64>> = (0..4).map(|i| C::from_polar(1.0, 0.3 * i as f64)).collect();
        let refl = CMatrix::diag(&phases);
        let np = NoiseParams::default();
        let active: f64 = (0..2)
            .map(|b| (1.0 + sinr_active(&ch, &refl, &g, &np, 0.0, b).unwrap()).log2())
            .sum();
        let passive: f64 = (0..2).map(|b| (1.0 + sinr_passive(&ch, &refl, &g, &np, b).unwrap()).log2()).sum();
        assert!((active - passive).abs() < 1e-12);
    }

    #[test]
    fn sum_rate_matches_naive_oracle() {
        for seed in 0..100 {
            let topo = Topology::new(1 + (seed as usize % 3), 1 + (seed as usize % 4), 2 + (seed as usize % 5), 1).unwrap();
            let (ch, refl, g) = random_setup(seed, topo);
            let np = NoiseParams {
                sigma_b_sq: 0.5,
                sigma_a_sq: 0.5,
            };
            let sinrs: Vec<f64> = (0..topo.su_receivers)
                .map(|b| sinr_passive(&ch, &refl, &g, &np, b).unwrap())
                .collect();
            let got = rate_report(&sinrs).unwrap().sum_rate;
            let want = naive_sum_rate(&ch, &refl, &g, 0.5);
            assert!((got - want).abs() <= 1e-10 * want.max(1.0), "seed {seed}: {got} vs {want}");
        }
    }

    #[test]
    fn aligned_single_user_rate_grows_with_amplitude() {
        // With B=1 and every cascaded path co-phased, each |φ_r| adds constructively.
        let mut rng = Rng::new(12);
        let topo = Topology::new(1, 1, 3, 1).unwrap();
        let ch: ChannelSet<f64> = sample_channel_set(&mut rng, &topo, &CascadeSpec::default()).unwrap();
        let g = CMatrix::from_real(1, 1, &[1.0]).unwrap();
        let align: Vec<f64> = (0..3).map(|r| -(ch.h_b[0].get(r, 0) * ch.h_s.get(r, 0)).arg()).collect();
        let mut prev = 0.0;
        for step in 0..=10 {
            let amp = 0.5 + 0.05 * step as f64;
            let refl = CMatrix::diag(&[
                C::from_polar(amp, align[0]),
                C::from_polar(0.8, align[1]),
                C::from_polar(0.8, align[2]),
            ]);
            let s = sinr_passive(&ch, &refl, &g, &NoiseParams::default(), 0).unwrap();
            assert!(s >= prev);
            prev = s;
        }
    }

    proptest! {
        #[test]
        fn projection_idempotent_and_direction_preserving(seed in any::<u64>(), cap in 0.01f64..50.0, k in 0.1f64..10.0) {
            let mut rng = Rng::new(seed);
            let g = CMatrix::<f64>::from_fn(2, 3, |_, _| sample_cn01(&mut rng));
            let p = project_beamformer(&g, cap);
            prop_assert!(p.frobenius_sq() <= cap + 1e-12);
            prop_assert_eq!(project_beamformer(&p, cap), p.clone());
            let pk = project_beamformer(&g.scale(k), cap);
            let (a, b) = (p.as_slice(), pk.as_slice());
            let argmax = |v: &[C<f64>]| (0..v.len()).max_by(|&i, &j| v[i].norm().partial_cmp(&v[j].norm()).unwrap()).unwrap();
            prop_assert_eq!(argmax(a), argmax(b));
        }

        #[test]
        fn sinr_invariant_under_global_phase(seed in any::<u64>(), theta in 0.0f64..std::f64::consts::TAU, b in 0usize..2) {
            let (ch, refl, g) = random_setup(seed, Topology::default());
            let np = NoiseParams::default();
            let base = sinr_active(&ch, &refl, &g, &np, 0.01, b).unwrap();
            let rot = C::from_polar(1.0, theta);
            let mut ch2 = ch.clone();
            ch2.h_b[b] = ch.h_b[b].map(|z| z * rot);
            prop_assert!((sinr_active(&ch2, &refl, &g, &np, 0.01, b).unwrap() - base).abs() <= 1e-10 * base.max(1.0));
            let p = sinr_passive(&ch, &refl, &g, &np, b).unwrap();
            let p_rot = sinr_passive(&ch, &refl.map(|z| z * rot), &g, &np, b).unwrap();
            prop_assert!((p - p_rot).abs() <= 1e-10 * p.max(1.0));
        }
    }
}
