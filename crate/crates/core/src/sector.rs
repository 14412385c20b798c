//! Per-channel constraint/uncertainty maps on exchanged relative states and
//! their sector certificates.
//!
//! Every scalar channel is a continuous map with `phi(0) = 0`. A bank holds
//! one channel per edge component (`edge_count * state_dim` in total) and a
//! sector certificate `(phi(s) - s1*s)(phi(s) - s2*s) <= 0` it is claimed to
//! satisfy, with per-component slopes `s1 < s2`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Per-component sector slopes `(sigma1, sigma2)` with `sigma1 < sigma2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorBounds {
    sigma1: Vec<f64>,
    sigma2: Vec<f64>,
}

impl SectorBounds {
    pub fn new(sigma1: Vec<f64>, sigma2: Vec<f64>) -> Result<Self> {
        if sigma1.len() != sigma2.len() || sigma1.is_empty() {
            return Err(Error::InvalidSector(
                "slope lists must be nonempty and of equal length".into(),
            ));
        }
        for (k, (a, b)) in sigma1.iter().zip(&sigma2).enumerate() {
            if !(a < b) {
                return Err(Error::InvalidSector(format!(
                    "component {k}: require sigma1 < sigma2, got [{a}, {b}]"
                )));
            }
        }
        Ok(Self { sigma1, sigma2 })
    }

    /// Same scalar pair for every component.
    pub fn scalar(sigma1: f64, sigma2: f64, dim: usize) -> Result<Self> {
        Self::new(vec![sigma1; dim], vec![sigma2; dim])
    }

    pub fn dim(&self) -> usize {
        self.sigma1.len()
    }

    pub fn sigma1(&self) -> &[f64] {
        &self.sigma1
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    /// True when both slope lists are uniform, i.e. the bounds are scalar
    /// multiples of the identity.
    pub fn is_scalar(&self) -> bool {
        let s1 = self.sigma1[0];
        let s2 = self.sigma2[0];
        self.sigma1.iter().all(|&v| v == s1) && self.sigma2.iter().all(|&v| v == s2)
    }

    pub fn scalar_pair(&self) -> Option<(f64, f64)> {
        self.is_scalar().then(|| (self.sigma1[0], self.sigma2[0]))
    }

    pub fn sigma1_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(self.sigma1.clone()))
    }

    pub fn sigma2_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(self.sigma2.clone()))
    }
}

/// A scalar channel map.
#[derive(Debug, Clone, PartialEq)]
pub enum SectorChannel {
    /// Pass-through.
    Identity,
    /// Symmetric clamp to `[-limit, limit]`.
    Saturation { limit: f64 },
    /// Fixed multiplicative gain (static uncertainty).
    StaticGain { gain: f64 },
    /// Continuous piecewise-linear map through the origin; extrapolates
    /// with the terminal segment slopes outside the table range.
    PiecewiseLinear { points: Vec<(f64, f64)> },
}

impl SectorChannel {
    pub fn piecewise_linear(mut points: Vec<(f64, f64)>) -> Result<Self> {
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        if points.len() < 2 {
            return Err(Error::InvalidSector(
                "piecewise-linear channel needs at least two points".into(),
            ));
        }
        if points.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidSector(
                "piecewise-linear channel has duplicate abscissae".into(),
            ));
        }
        if !points.iter().any(|&(x, y)| x == 0.0 && y == 0.0) {
            points.push((0.0, 0.0));
            points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        }
        Ok(Self::PiecewiseLinear { points })
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            Self::Identity => s,
            Self::Saturation { limit } => s.clamp(-limit, *limit),
            Self::StaticGain { gain } => gain * s,
            Self::PiecewiseLinear { points } => {
                let first = points.first().unwrap();
                let last = points.last().unwrap();
                let segment = |a: &(f64, f64), b: &(f64, f64), x: f64| {
                    let slope = (b.1 - a.1) / (b.0 - a.0);
                    a.1 + slope * (x - a.0)
                };
                if s <= first.0 {
                    return segment(first, &points[1], s);
                }
                if s >= last.0 {
                    return segment(&points[points.len() - 2], last, s);
                }
                let idx = points.partition_point(|&(x, _)| x <= s);
                segment(&points[idx - 1], &points[idx], s)
            }
        }
    }
}

/// One channel per edge component, stored edge-major: the channel for edge
/// `j`, component `k` sits at index `j * dim + k`.
#[derive(Debug, Clone)]
pub struct ChannelBank {
    channels: Vec<SectorChannel>,
    bounds: SectorBounds,
}

impl ChannelBank {
    pub fn new(channels: Vec<SectorChannel>, bounds: SectorBounds) -> Result<Self> {
        if channels.is_empty() || channels.len() % bounds.dim() != 0 {
            return Err(Error::ChannelCountMismatch {
                expected: bounds.dim(),
                got: channels.len(),
            });
        }
        Ok(Self { channels, bounds })
    }

    pub fn identity(edge_count: usize, bounds: SectorBounds) -> Self {
        let dim = bounds.dim();
        Self {
            channels: vec![SectorChannel::Identity; edge_count * dim],
            bounds,
        }
    }

    pub fn saturation(edge_count: usize, limit: f64, bounds: SectorBounds) -> Self {
        let dim = bounds.dim();
        Self {
            channels: vec![SectorChannel::Saturation { limit }; edge_count * dim],
            bounds,
        }
    }

    /// Static gains drawn uniformly from `[lo, hi]` with a fixed seed. When
    /// `per_edge` is set, the `dim` components of an edge share one draw.
    pub fn seeded_static_gains(
        edge_count: usize,
        lo: f64,
        hi: f64,
        seed: u64,
        per_edge: bool,
        bounds: SectorBounds,
    ) -> Self {
        let dim = bounds.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut channels = Vec::with_capacity(edge_count * dim);
        for _ in 0..edge_count {
            if per_edge {
                let gain = rng.random_range(lo..=hi);
                channels.extend(std::iter::repeat_n(SectorChannel::StaticGain { gain }, dim));
            } else {
                for _ in 0..dim {
                    let gain = rng.random_range(lo..=hi);
                    channels.push(SectorChannel::StaticGain { gain });
                }
            }
        }
        Self { channels, bounds }
    }

    /// Static gains given explicitly, one per edge, shared across components.
    pub fn per_edge_static_gains(gains: &[f64], bounds: SectorBounds) -> Self {
        let dim = bounds.dim();
        let channels = gains
            .iter()
            .flat_map(|&gain| std::iter::repeat_n(SectorChannel::StaticGain { gain }, dim))
            .collect();
        Self { channels, bounds }
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[SectorChannel] {
        &self.channels
    }

    pub fn bounds(&self) -> &SectorBounds {
        &self.bounds
    }

    /// Component index (within the per-edge state block) of a flat channel.
    pub fn component_of(&self, channel_index: usize) -> usize {
        channel_index % self.bounds.dim()
    }

    /// Componentwise application to a stacked relative-state vector.
    pub fn apply(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        if z.len() != self.channels.len() {
            return Err(Error::ChannelCountMismatch {
                expected: self.channels.len(),
                got: z.len(),
            });
        }
        Ok(DVector::from_iterator(
            z.len(),
            z.iter()
                .zip(&self.channels)
                .map(|(&s, channel)| channel.eval(s)),
        ))
    }

    /// Certify every channel against its component's declared sector.
    pub fn certify(&self, probe_range: f64, probe_points: usize) -> Vec<SectorCheck> {
        self.channels
            .iter()
            .enumerate()
            .map(|(idx, channel)| {
                let k = self.component_of(idx);
                sector_certificate(
                    channel,
                    self.bounds.sigma1()[k],
                    self.bounds.sigma2()[k],
                    probe_range,
                    probe_points,
                )
            })
            .collect()
    }
}

/// Outcome of probing one channel against a sector.
#[derive(Debug, Clone, Copy)]
pub struct SectorCheck {
    pub pass: bool,
    /// Largest observed value of the sector product (nonpositive when the
    /// channel lies inside the sector).
    pub worst_product: f64,
    /// Probe point attaining the worst product.
    pub worst_point: f64,
}

/// Probe the sector product `(phi(s) - sigma1 s)(phi(s) - sigma2 s)` on a
/// symmetric grid of at least 1000 points spanning `[-range, range]`, plus
/// the origin. Pass requires the maximum product to stay below 1e-12.
pub fn sector_certificate(
    channel: &SectorChannel,
    sigma1: f64,
    sigma2: f64,
    range: f64,
    points: usize,
) -> SectorCheck {
    let points = points.max(1000);
    let mut worst_product = f64::NEG_INFINITY;
    let mut worst_point = 0.0;
    let mut probe = |s: f64| {
        let phi = channel.eval(s);
        let product = (phi - sigma1 * s) * (phi - sigma2 * s);
        if product > worst_product {
            worst_product = product;
            worst_point = s;
        }
    };
    probe(0.0);
    for i in 0..points {
        let s = -range + 2.0 * range * (i as f64) / ((points - 1) as f64);
        probe(s);
    }
    SectorCheck {
        pass: worst_product <= 1e-12,
        worst_product,
        worst_point,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn identity_bank_passes_through() {
        let bounds = SectorBounds::scalar(0.7, 1.3, 1).unwrap();
        let bank = ChannelBank::identity(3, bounds);
        let z = dvector![1.0, -2.0, 0.5];
        assert_eq!(bank.apply(&z).unwrap(), z);
    }

    #[test]
    fn saturation_clamps() {
        let bounds = SectorBounds::scalar(0.0, 1.0, 1).unwrap();
        let bank = ChannelBank::saturation(3, 2.0, bounds);
        let y = bank.apply(&dvector![3.0, -1.0, -5.0]).unwrap();
        assert_eq!(y, dvector![2.0, -1.0, -2.0]);
    }

    #[test]
    fn static_gains_scale_componentwise() {
        let bounds = SectorBounds::scalar(0.7, 1.3, 1).unwrap();
        let bank = ChannelBank::new(
            vec![
                SectorChannel::StaticGain { gain: 1.2789 },
                SectorChannel::StaticGain { gain: 0.7946 },
            ],
            bounds,
        )
        .unwrap();
        let y = bank.apply(&dvector![1.0, 2.0]).unwrap();
        assert!((y[0] - 1.2789).abs() < 1e-15);
        assert!((y[1] - 1.5892).abs() < 1e-15);
    }

    #[test]
    fn channel_count_enforced() {
        let bounds = SectorBounds::scalar(0.0, 1.0, 1).unwrap();
        let bank = ChannelBank::saturation(3, 2.0, bounds);
        assert!(matches!(
            bank.apply(&dvector![1.0, 2.0]),
            Err(Error::ChannelCountMismatch { .. })
        ));
    }

    #[test]
    fn identity_inside_wide_sector() {
        let check = sector_certificate(&SectorChannel::Identity, 0.7, 1.3, 10.0, 1001);
        assert!(check.pass, "worst product {}", check.worst_product);
    }

    #[test]
    fn saturation_is_globally_in_unit_sector() {
        let channel = SectorChannel::Saturation { limit: 2.0 };
        let check = sector_certificate(&channel, 0.0, 1.0, 10.0, 2001);
        assert!(check.pass);
    }

    #[test]
    fn gain_outside_sector_fails_with_positive_product() {
        let channel = SectorChannel::StaticGain { gain: 1.5 };
        let check = sector_certificate(&channel, 0.7, 1.3, 10.0, 1001);
        assert!(!check.pass);
        assert!(check.worst_product > 0.0);
    }

    #[test]
    fn shipped_kinds_vanish_at_origin() {
        let kinds = [
            SectorChannel::Identity,
            SectorChannel::Saturation { limit: 2.0 },
            SectorChannel::StaticGain { gain: 0.9 },
            SectorChannel::piecewise_linear(vec![(-1.0, -0.5), (1.0, 0.8)]).unwrap(),
        ];
        for kind in kinds {
            assert_eq!(kind.eval(0.0), 0.0, "{kind:?}");
        }
    }

    #[test]
    fn seeded_gains_are_reproducible_and_in_range() {
        let bounds = SectorBounds::scalar(0.7, 1.3, 2).unwrap();
        let a = ChannelBank::seeded_static_gains(3, 0.7, 1.3, 42, true, bounds.clone());
        let b = ChannelBank::seeded_static_gains(3, 0.7, 1.3, 42, true, bounds);
        assert_eq!(a.channels(), b.channels());
        for (idx, channel) in a.channels().iter().enumerate() {
            let SectorChannel::StaticGain { gain } = channel else {
                panic!("unexpected kind");
            };
            assert!((0.7..=1.3).contains(gain));
            // Components of one edge share the draw.
            if idx % 2 == 1 {
                assert_eq!(a.channels()[idx - 1], *channel);
            }
        }
    }

    #[test]
    fn piecewise_linear_interpolates_and_extrapolates() {
        let channel =
            SectorChannel::piecewise_linear(vec![(-2.0, -1.0), (0.0, 0.0), (2.0, 1.5)]).unwrap();
        assert!((channel.eval(1.0) - 0.75).abs() < 1e-15);
        assert!((channel.eval(-1.0) + 0.5).abs() < 1e-15);
        // Beyond the table the terminal slope continues.
        assert!((channel.eval(4.0) - 3.0).abs() < 1e-15);
    }
}
