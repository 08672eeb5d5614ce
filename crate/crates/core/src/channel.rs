//! Cascaded Rayleigh channel realizations for one time slot.
//!
//! A cascaded coefficient is the product of `kappa` independent unit-power
//! circularly-symmetric Gaussian factors, so its mean power is 1 at every
//! cascade level and only the fading shape changes with `kappa`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sample_cn01, CMatrix, Real, Rng, C};

/// Network dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Topology {
    /// SU transmitter antennas (A).
    pub tx_antennas: usize,
    /// Single-antenna SU receivers (B).
    pub su_receivers: usize,
    /// RIS reflecting elements (R).
    pub ris_elements: usize,
    /// PU receivers (W).
    pub pu_receivers: usize,
}

impl Topology {
    pub fn new(tx_antennas: usize, su_receivers: usize, ris_elements: usize, pu_receivers: usize) -> Result<Self> {
        let t = Self {
            tx_antennas,
            su_receivers,
            ris_elements,
            pu_receivers,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tx_antennas == 0 || self.su_receivers == 0 || self.ris_elements == 0 || self.pu_receivers == 0 {
            return Err(Error::Config(format!("topology dimensions must be >= 1, got {self:?}")));
        }
        Ok(())
    }
}

impl Default for Topology {
    fn default() -> Self {
        Self {
            tx_antennas: 2,
            su_receivers: 2,
            ris_elements: 4,
            pu_receivers: 2,
        }
    }
}

/// Cascade levels of the three fading links.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeSpec {
    /// SU transmitter → RIS.
    pub kappa_s: u32,
    /// RIS → SU receivers.
    pub kappa_b: u32,
    /// SU transmitter → PU receivers.
    pub kappa_p: u32,
}

impl CascadeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kappa_s == 0 || self.kappa_b == 0 || self.kappa_p == 0 {
            return Err(Error::Config(format!("cascade levels must be >= 1, got {self:?}")));
        }
        Ok(())
    }
}

impl Default for CascadeSpec {
    fn default() -> Self {
        Self {
            kappa_s: 4,
            kappa_b: 4,
            kappa_p: 1,
        }
    }
}

/// How often channels are redrawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FadingMode {
    /// Steps per independent realization.
    pub block_length: u64,
}

impl FadingMode {
    /// Never redraws after the initial realization.
    pub fn frozen() -> Self {
        Self { block_length: u64::MAX }
    }

    pub fn redraw_at(&self, step: u64) -> bool {
        step.is_multiple_of(self.block_length.max(1))
    }
}

impl Default for FadingMode {
    fn default() -> Self {
        Self { block_length: 1 }
    }
}

/// All channel matrices of one slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet<T> {
    /// SU transmitter → RIS, R×A.
    pub h_s: CMatrix<T>,
    /// RIS → each SU receiver, B vectors of R×1.
    pub h_b: Vec<CMatrix<T>>,
    /// SU transmitter → PU receivers, A×W.
    pub h_p: CMatrix<T>,
    /// Power beacon → RIS, R×1.
    pub h_pb: CMatrix<T>,
    /// Per-PU channel power gains, one per column of `h_p`.
    pub g_sp: Vec<T>,
}

impl<T: Real> ChannelSet<T> {
    /// Assembles a channel set, deriving `g_sp` from `h_p`.
    pub fn from_parts(h_s: CMatrix<T>, h_b: Vec<CMatrix<T>>, h_p: CMatrix<T>, h_pb: CMatrix<T>) -> Result<Self> {
        let r = h_s.rows();
        if h_b.iter().any(|h| h.rows() != r || h.cols() != 1) || h_b.is_empty() {
            return Err(Error::shape("ChannelSet", "every h_b must be R x 1"));
        }
        if h_pb.rows() != r || h_pb.cols() != 1 {
            return Err(Error::shape("ChannelSet", "h_pb must be R x 1"));
        }
        if h_p.rows() != h_s.cols() {
            return Err(Error::shape("ChannelSet", "h_p rows must equal antenna count"));
        }
        let g_sp = pu_gains(&h_p);
        Ok(Self { h_s, h_b, h_p, h_pb, g_sp })
    }

    pub fn topology(&self) -> Topology {
        Topology {
            tx_antennas: self.h_s.cols(),
            su_receivers: self.h_b.len(),
            ris_elements: self.h_s.rows(),
            pu_receivers: self.h_p.cols(),
        }
    }
}

/// Squared norm of each column of `h_p`.
pub fn pu_gains<T: Real>(h_p: &CMatrix<T>) -> Vec<T> {
    (0..h_p.cols()).map(|w| h_p.column(w).iter().map(|z| z.norm_sqr()).sum()).collect()
}

/// Product of the given fading factors.
pub fn cascade_product<T: Real>(factors: &[C<T>]) -> C<T> {
    factors.iter().fold(C::new(T::one(), T::zero()), |acc, &f| acc * f)
}

/// One cascaded Rayleigh coefficient with `kappa` factors.
pub fn sample_cascaded<T: Real>(rng: &mut Rng, kappa: u32) -> Result<C<T>> {
    if kappa == 0 {
        return Err(Error::Domain("cascade level must be >= 1".into()));
    }
    let mut acc = C::new(T::one(), T::zero());
    for _ in 0..kappa {
        acc *= sample_cn01::<T>(rng);
    }
    Ok(acc)
}

/// Draws a full slot.
///
/// Each matrix comes from its own child stream, and `h_p` is filled column by
/// column, so growing W only appends PU columns to the same realization.
pub fn sample_channel_set<T: Real>(rng: &mut Rng, topo: &Topology, spec: &CascadeSpec) -> Result<ChannelSet<T>> {
    topo.validate()?;
    spec.validate()?;
    let (a, b, r, w) = (topo.tx_antennas, topo.su_receivers, topo.ris_elements, topo.pu_receivers);
    let mut rs = rng.split();
    let mut rb = rng.split();
    let mut rp = rng.split();
    let mut rpb = rng.split();

    let h_s = CMatrix::new(
        r,
        a,
        (0..r * a).map(|_| sample_cascaded(&mut rs, spec.kappa_s)).collect::<Result<_>>()?,
    )?;
    let h_b = (0..b)
        .map(|_| CMatrix::column_vector((0..r).map(|_| sample_cascaded(&mut rb, spec.kappa_b)).collect::<Result<_>>()?))
        .collect::<Result<Vec<_>>>()?;
    let mut h_p = CMatrix::zeros(a, w);
    for col in 0..w {
        for row in 0..a {
            h_p.set(row, col, sample_cascaded(&mut rp, spec.kappa_p)?);
        }
    }
    let h_pb = CMatrix::column_vector((0..r).map(|_| sample_cascaded(&mut rpb, 1)).collect::<Result<_>>()?)?;
    ChannelSet::from_parts(h_s, h_b, h_p, h_pb)
}
